#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "finagent/concurrency.hpp"

namespace finagent {

/// Dense vector. Values are kept as doubles so cosine scores are reproducible
/// bit-for-bit between the store and any independent recomputation.
struct EmbeddingVector {
    std::vector<double> values;

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}
    static EmbeddingVector zeros(std::size_t dim) { return EmbeddingVector(std::vector<double>(dim, 0.0)); }

    std::size_t dim() const noexcept { return values.size(); }
    bool is_zero() const noexcept;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double l2_norm(const EmbeddingVector& v);

/// dot(a,b) / (|a||b|), or 0 when either side has zero norm.
/// Throws Error{DimensionMismatch} when the dimensions differ.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::size_t dim() const noexcept = 0;
    virtual std::string name() const = 0;
};

/// Signed feature hashing over the reference tokenizer.
///
/// Each token lands in bucket fnv1a64(token) % dim with sign taken from bit 63
/// of the same hash; bucket values accumulate term frequency and the result
/// is L2-normalised. Empty text (no tokens) embeds to the zero vector.
class ReferenceEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 256;

    explicit ReferenceEmbedder(std::size_t dim = kDefaultDim);

    EmbeddingVector embed(std::string_view text) const override;
    std::size_t dim() const noexcept override { return dim_; }
    std::string name() const override { return "reference"; }

    std::size_t bucket_of(std::string_view token) const noexcept;
    static int sign_of(std::string_view token) noexcept;

private:
    std::size_t dim_;
};

/// HTTP embedding service: POST {"input": text} -> {"embedding": [...]}.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(std::string url, std::size_t dim, int timeout_ms = 10000, int max_in_flight = 4);

    EmbeddingVector embed(std::string_view text) const override;
    std::size_t dim() const noexcept override { return dim_; }
    std::string name() const override { return "remote:" + url_; }

private:
    std::string url_;
    std::size_t dim_;
    int timeout_ms_;
    mutable InFlightLimit in_flight_;
};

}  // namespace finagent
