#pragma once

#include <map>
#include <string>
#include <string_view>

namespace finagent::http {

struct Response {
    int status = 0;
    std::string content_type;
    std::string body;
};

using Headers = std::multimap<std::string, std::string>;

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string target;  // path + query, at least "/"
};

/// Splits an absolute http(s) URL. Throws Error{InvalidArgument} otherwise.
UrlParts split_url(std::string_view url);

/// Transport failures (DNS, refused, timeout) throw Error{NetworkError}.
/// Any HTTP status is returned as-is; callers decide what counts as failure.
Response get(std::string_view url, int timeout_ms, const Headers& headers = {});
Response post(std::string_view url, std::string_view body, std::string_view content_type,
              int timeout_ms, const Headers& headers = {});

}  // namespace finagent::http
