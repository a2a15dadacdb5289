#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "finagent/error.hpp"
#include "finagent/http.hpp"
#include "finagent/source.hpp"

#include <fmt/format.h>

namespace finagent::http {
namespace {

httplib::Headers to_httplib(const Headers& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) out.emplace(k, v);
    return out;
}

httplib::Client make_client(const UrlParts& parts, int timeout_ms) {
    httplib::Client cli(parts.origin);
    auto sec = timeout_ms / 1000;
    auto usec = (timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    cli.set_follow_location(true);
    return cli;
}

Response convert(const httplib::Result& res, std::string_view url) {
    if (!res) {
        throw Error(ErrorCode::NetworkError,
                    fmt::format("request to {} failed: {}", url, httplib::to_string(res.error())));
    }
    Response out;
    out.status = res->status;
    out.content_type = res->get_header_value("Content-Type");
    out.body = res->body;
    return out;
}

}  // namespace

UrlParts split_url(std::string_view url) {
    if (!is_absolute_url(url)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("not an absolute URL: '{}'", url));
    }
    auto scheme_end = url.find("://") + 3;
    auto path_start = url.find_first_of("/?#", scheme_end);
    UrlParts parts;
    if (path_start == std::string_view::npos) {
        parts.origin = std::string(url);
        parts.target = "/";
    } else {
        parts.origin = std::string(url.substr(0, path_start));
        auto target = url.substr(path_start);
        auto hash = target.find('#');
        if (hash != std::string_view::npos) target = target.substr(0, hash);
        parts.target = target.empty() || target[0] != '/' ? "/" + std::string(target) : std::string(target);
    }
    return parts;
}

Response get(std::string_view url, int timeout_ms, const Headers& headers) {
    auto parts = split_url(url);
    auto cli = make_client(parts, timeout_ms);
    return convert(cli.Get(parts.target, to_httplib(headers)), url);
}

Response post(std::string_view url, std::string_view body, std::string_view content_type,
              int timeout_ms, const Headers& headers) {
    auto parts = split_url(url);
    auto cli = make_client(parts, timeout_ms);
    return convert(cli.Post(parts.target, to_httplib(headers), body.data(), body.size(),
                            std::string(content_type)),
                   url);
}

}  // namespace finagent::http
