#include "finagent/embed.hpp"

#include "finagent/concurrency.hpp"
#include "finagent/error.hpp"
#include "finagent/http.hpp"
#include "finagent/text.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent {

bool EmbeddingVector::is_zero() const noexcept {
    for (double v : values)
        if (v != 0.0) return false;
    return true;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double l2_norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (double x : v.values) s += x * x;
    return std::sqrt(s);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double d = dot(a, b);
    double na = l2_norm(a);
    double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = d / (na * nb);
    // rounding can push |c| a hair past 1
    if (c > 1.0) return 1.0;
    if (c < -1.0) return -1.0;
    return c;
}

ReferenceEmbedder::ReferenceEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be >= 1");
}

std::size_t ReferenceEmbedder::bucket_of(std::string_view token) const noexcept {
    return static_cast<std::size_t>(fnv1a64(token) % dim_);
}

int ReferenceEmbedder::sign_of(std::string_view token) noexcept {
    return (fnv1a64(token) >> 63) == 0 ? 1 : -1;
}

EmbeddingVector ReferenceEmbedder::embed(std::string_view text) const {
    auto v = EmbeddingVector::zeros(dim_);
    for (const auto& tok : tokenize(text)) {
        v.values[bucket_of(tok.text)] += sign_of(tok.text);
    }
    double n = l2_norm(v);
    if (n > 0.0) {
        for (double& x : v.values) x /= n;
    }
    return v;
}

RemoteEmbedder::RemoteEmbedder(std::string url, std::size_t dim, int timeout_ms, int max_in_flight)
    : url_(std::move(url)), dim_(dim), timeout_ms_(timeout_ms), in_flight_(max_in_flight) {
    if (dim_ == 0) throw Error(ErrorCode::ConfigError, "remote embedder needs embed.dim >= 1");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
    nlohmann::json req = {{"input", std::string(text)}};
    http::Response res;
    try {
        InFlightGuard guard(in_flight_);
        res = http::post(url_, req.dump(), "application/json", timeout_ms_);
    } catch (const Error& e) {
        throw Error(ErrorCode::ProviderError, fmt::format("embedding provider: {}", e.what()));
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorCode::ProviderError,
                    fmt::format("embedding provider returned HTTP {}", res.status));
    }
    std::vector<double> values;
    try {
        auto body = nlohmann::json::parse(res.body);
        values = body.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderError, fmt::format("malformed embedding reply: {}", e.what()));
    }
    if (values.size() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("embedding provider returned {} values, expected {}", values.size(), dim_));
    }
    for (double x : values) {
        if (!std::isfinite(x)) throw Error(ErrorCode::ProviderError, "embedding contains non-finite value");
    }
    return EmbeddingVector(std::move(values));
}

}  // namespace finagent
