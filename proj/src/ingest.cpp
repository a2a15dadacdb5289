#include "finagent/ingest.hpp"

#include "finagent/concurrency.hpp"
#include "finagent/error.hpp"
#include "finagent/text.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent {

Document make_document(SourceRef source, std::string text) {
    if (trim(text).empty()) {
        throw Error(ErrorCode::EmptyContent, fmt::format("no text content in '{}'", source.uri));
    }
    Document doc;
    doc.source = std::move(source);
    doc.content_hash = fnv1a64(text);
    doc.text = std::move(text);
    return doc;
}

// ---------------------------------------------------------------------------
// HTML normalisation
// ---------------------------------------------------------------------------
namespace {

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    }
    return true;
}

std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from) {
    if (needle.empty() || hay.size() < needle.size()) return std::string_view::npos;
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
        if (iequals(hay.substr(i, needle.size()), needle)) return i;
    }
    return std::string_view::npos;
}

void append_utf8(std::string& out, unsigned long cp) {
    if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string decode_entities(std::string_view s) {
    static const std::map<std::string_view, std::string_view> named = {
        {"amp", "&"},      {"lt", "<"},        {"gt", ">"},       {"quot", "\""},
        {"apos", "'"},     {"nbsp", " "},      {"ndash", "–"}, {"mdash", "—"},
        {"hellip", "…"}, {"copy", "©"}, {"reg", "®"}, {"euro", "€"},
        {"pound", "£"}, {"yen", "¥"}, {"cent", "¢"}, {"rsquo", "’"},
        {"lsquo", "‘"}, {"rdquo", "”"}, {"ldquo", "“"},
    };
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        auto semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back('&');
            continue;
        }
        auto name = s.substr(i + 1, semi - i - 1);
        if (!name.empty() && name[0] == '#') {
            unsigned long cp = 0;
            bool ok = name.size() > 1;
            bool hex = ok && (name[1] == 'x' || name[1] == 'X');
            auto digits = name.substr(hex ? 2 : 1);
            ok = ok && !digits.empty();
            for (char c : digits) {
                auto uc = static_cast<unsigned char>(c);
                if (hex ? !std::isxdigit(uc) : !std::isdigit(uc)) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                cp = std::stoul(std::string(digits), nullptr, hex ? 16 : 10);
                append_utf8(out, cp);
                i = semi;
                continue;
            }
        } else if (auto it = named.find(name); it != named.end()) {
            out += it->second;
            i = semi;
            continue;
        }
        out.push_back('&');
    }
    return out;
}

std::optional<std::string> attribute(std::string_view tag_body, std::string_view name) {
    std::size_t pos = 0;
    while ((pos = ifind(tag_body, name, pos)) != std::string_view::npos) {
        bool left_ok = pos == 0 || std::isspace(static_cast<unsigned char>(tag_body[pos - 1]));
        std::size_t p = pos + name.size();
        while (p < tag_body.size() && std::isspace(static_cast<unsigned char>(tag_body[p]))) ++p;
        if (!left_ok || p >= tag_body.size() || tag_body[p] != '=') {
            pos += name.size();
            continue;
        }
        ++p;
        while (p < tag_body.size() && std::isspace(static_cast<unsigned char>(tag_body[p]))) ++p;
        if (p >= tag_body.size()) return std::string{};
        if (tag_body[p] == '"' || tag_body[p] == '\'') {
            char q = tag_body[p];
            auto end = tag_body.find(q, p + 1);
            if (end == std::string_view::npos) end = tag_body.size();
            return decode_entities(tag_body.substr(p + 1, end - p - 1));
        }
        auto end = p;
        while (end < tag_body.size() && !std::isspace(static_cast<unsigned char>(tag_body[end])) &&
               tag_body[end] != '>')
            ++end;
        return decode_entities(tag_body.substr(p, end - p));
    }
    return std::nullopt;
}

bool is_skipped_element(std::string_view name) {
    for (std::string_view s : {"script", "style", "nav", "head", "noscript", "template", "svg", "iframe"})
        if (name == s) return true;
    return false;
}

bool is_raw_text_element(std::string_view name) {
    return name == "script" || name == "style" || name == "textarea" || name == "title";
}

bool is_block_element(std::string_view name) {
    for (std::string_view s : {"p", "div", "section", "article", "main", "header", "footer", "aside",
                               "ul", "ol", "table", "thead", "tbody", "tfoot", "tr", "blockquote", "pre",
                               "form", "fieldset", "figure", "figcaption", "dl", "dt", "dd", "hr", "br",
                               "body", "html", "address", "details", "summary", "caption"})
        if (name == s) return true;
    return false;
}

bool is_void_element(std::string_view name) {
    for (std::string_view s : {"br", "hr", "img", "input", "meta", "link", "area", "base", "col", "embed",
                               "source", "track", "wbr", "param"})
        if (name == s) return true;
    return false;
}

class HtmlRenderer {
public:
    NormalizedPage run(std::string_view html) {
        std::size_t i = 0;
        while (i < html.size()) {
            if (html[i] != '<') {
                auto next = html.find('<', i);
                if (next == std::string_view::npos) next = html.size();
                if (skip_depth_ == 0) buffer_ += decode_entities(html.substr(i, next - i));
                i = next;
                continue;
            }
            if (html.substr(i).starts_with("<!--")) {
                auto end = html.find("-->", i + 4);
                i = end == std::string_view::npos ? html.size() : end + 3;
                continue;
            }
            if (i + 1 < html.size() && (html[i + 1] == '!' || html[i + 1] == '?')) {
                auto end = html.find('>', i);
                i = end == std::string_view::npos ? html.size() : end + 1;
                continue;
            }
            bool closing = i + 1 < html.size() && html[i + 1] == '/';
            std::size_t name_start = i + (closing ? 2 : 1);
            std::size_t name_end = name_start;
            while (name_end < html.size() &&
                   (std::isalnum(static_cast<unsigned char>(html[name_end])) || html[name_end] == '-'))
                ++name_end;
            if (name_end == name_start) {
                // a stray '<' in text
                if (skip_depth_ == 0) buffer_.push_back('<');
                ++i;
                continue;
            }
            auto tag_end = find_tag_end(html, name_end);
            std::string name = to_lower_ascii(html.substr(name_start, name_end - name_start));
            auto body = html.substr(name_end, tag_end - name_end);
            bool self_closing = !body.empty() && body.back() == '/';
            i = tag_end < html.size() ? tag_end + 1 : html.size();

            if (!closing && is_raw_text_element(name)) {
                auto close = ifind(html, "</" + name, i);
                auto content = html.substr(i, (close == std::string_view::npos ? html.size() : close) - i);
                if (name == "title" && !title_) {
                    auto t = collapse_whitespace(decode_entities(content));
                    if (!t.empty()) title_ = t;
                }
                if (name == "textarea" && skip_depth_ == 0) buffer_ += content;
                if (close == std::string_view::npos) {
                    i = html.size();
                } else {
                    auto gt = html.find('>', close);
                    i = gt == std::string_view::npos ? html.size() : gt + 1;
                }
                continue;
            }
            if (closing) {
                end_tag(name);
            } else {
                start_tag(name, body, self_closing);
            }
        }
        flush();
        NormalizedPage page;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (b) page.text += "\n\n";
            page.text += blocks_[b];
        }
        page.title = title_;
        return page;
    }

private:
    static std::size_t find_tag_end(std::string_view html, std::size_t from) {
        char quote = 0;
        for (std::size_t j = from; j < html.size(); ++j) {
            char c = html[j];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '>') {
                return j;
            }
        }
        return html.size();
    }

    void start_tag(const std::string& name, std::string_view body, bool self_closing) {
        if (is_skipped_element(name)) {
            if (!self_closing && !is_void_element(name)) ++skip_depth_;
            return;
        }
        if (skip_depth_ > 0) return;
        if (name.size() == 2 && name[0] == 'h' && name[1] >= '1' && name[1] <= '6') {
            flush();
            prefix_ = std::string(static_cast<std::size_t>(name[1] - '0'), '#') + " ";
            return;
        }
        if (name == "li") {
            flush();
            prefix_ = "- ";
            return;
        }
        if (name == "td" || name == "th") {
            if (!collapse_whitespace(buffer_).empty()) buffer_ += " | ";
            return;
        }
        if (name == "a") {
            anchor_href_ = attribute(body, "href");
            anchor_start_ = buffer_.size();
            return;
        }
        if (name == "img") {
            if (auto alt = attribute(body, "alt"); alt && !alt->empty()) buffer_ += " " + *alt + " ";
            return;
        }
        if (is_block_element(name)) flush();
    }

    void end_tag(const std::string& name) {
        if (is_skipped_element(name)) {
            if (skip_depth_ > 0) --skip_depth_;
            return;
        }
        if (skip_depth_ > 0) return;
        if (name == "a") {
            close_anchor();
            return;
        }
        if ((name.size() == 2 && name[0] == 'h' && name[1] >= '1' && name[1] <= '6') || name == "li" ||
            is_block_element(name)) {
            flush();
        }
    }

    void close_anchor() {
        if (!anchor_start_) return;
        auto start = std::min(*anchor_start_, buffer_.size());
        auto text = collapse_whitespace(buffer_.substr(start));
        buffer_.resize(start);
        if (!text.empty()) {
            if (anchor_href_ && !anchor_href_->empty()) {
                buffer_ += fmt::format(" [{}]({}) ", text, *anchor_href_);
            } else {
                buffer_ += " " + text + " ";
            }
        }
        anchor_start_.reset();
        anchor_href_.reset();
    }

    void flush() {
        if (anchor_start_) close_anchor();
        auto text = collapse_whitespace(buffer_);
        buffer_.clear();
        if (!text.empty()) blocks_.push_back(prefix_ + text);
        prefix_.clear();
    }

    std::vector<std::string> blocks_;
    std::string buffer_;
    std::string prefix_;
    int skip_depth_ = 0;
    std::optional<std::size_t> anchor_start_;
    std::optional<std::string> anchor_href_;
    std::optional<std::string> title_;
};

enum class ContentClass { Html, Text, Binary };

ContentClass classify(std::string_view content_type, std::string_view body) {
    auto ct = to_lower_ascii(content_type);
    if (ct.find("html") != std::string::npos) return ContentClass::Html;
    if (ct.starts_with("text/") || ct.find("json") != std::string::npos || ct.find("xml") != std::string::npos ||
        ct.find("markdown") != std::string::npos || ct.find("csv") != std::string::npos)
        return ContentClass::Text;
    if (!ct.empty()) return ContentClass::Binary;
    if (body.find('\0') != std::string_view::npos) return ContentClass::Binary;
    auto head = to_lower_ascii(body.substr(0, 1024));
    if (head.find("<html") != std::string::npos || head.find("<body") != std::string::npos ||
        head.find("<!doctype html") != std::string::npos)
        return ContentClass::Html;
    return ContentClass::Text;
}

}  // namespace

NormalizedPage normalize_html(std::string_view html) { return HtmlRenderer{}.run(html); }

// ---------------------------------------------------------------------------
// Fetching
// ---------------------------------------------------------------------------

http::Response HttpPageSource::get(const std::string& url, int timeout_ms) {
    return http::get(url, timeout_ms, {{"Accept", "text/html, text/plain, application/json;q=0.9, */*;q=0.5"}});
}

Document document_from_response(const std::string& url, const http::Response& res, SourceKind kind) {
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorCode::NetworkError, fmt::format("GET {} returned HTTP {}", url, res.status));
    }
    SourceRef src;
    src.id = make_id("src");
    src.kind = kind;
    src.uri = url;
    src.fetched_at = now_utc();
    std::string text;
    switch (classify(res.content_type, res.body)) {
        case ContentClass::Html: {
            auto page = normalize_html(res.body);
            text = std::move(page.text);
            src.title = std::move(page.title);
            break;
        }
        case ContentClass::Text:
            text = trim(res.body);
            break;
        case ContentClass::Binary:
            throw Error(ErrorCode::NotText,
                        fmt::format("{} has non-text content type '{}'", url, res.content_type));
    }
    return make_document(std::move(src), std::move(text));
}

Document fetch_url(PageSource& pages, const std::string& url, int timeout_ms, SourceKind kind) {
    if (!is_absolute_url(url)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("not an absolute URL: '{}'", url));
    }
    if (timeout_ms <= 0) throw Error(ErrorCode::InvalidArgument, "timeout_ms must be > 0");
    return document_from_response(url, pages.get(url, timeout_ms), kind);
}

Document CachingFetcher::fetch(const std::string& url, int timeout_ms, SourceKind kind) {
    auto key = std::make_pair(url, kind);
    auto now = std::chrono::steady_clock::now();
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end() && now - it->second.first < ttl_) {
            return it->second.second;
        }
    }
    auto doc = fetch_url(pages_, url, timeout_ms, kind);
    if (ttl_.count() > 0) {
        std::lock_guard lock(mu_);
        cache_[key] = {now, doc};
    }
    return doc;
}

void CachingFetcher::clear() {
    std::lock_guard lock(mu_);
    cache_.clear();
}

// ---------------------------------------------------------------------------
// Web search
// ---------------------------------------------------------------------------
namespace {

std::vector<SearchResult> parse_results(const nlohmann::json& arr) {
    if (!arr.is_array()) throw Error(ErrorCode::ProviderError, "search results must be a JSON array");
    std::vector<SearchResult> out;
    for (const auto& item : arr) {
        if (!item.is_object() || !item.contains("url") || !item["url"].is_string()) {
            throw Error(ErrorCode::ProviderError, "search result entries need a string 'url'");
        }
        out.push_back({item["url"].get<std::string>(), item.value("title", std::string{})});
    }
    return out;
}

}  // namespace

std::vector<SearchResult> HttpSearchProvider::search(const std::string& query, std::size_t k) {
    std::string url = url_template_;
    auto pos = url.find("{query}");
    if (pos == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "search url template lacks {query}");
    }
    url.replace(pos, 7, percent_encode(query));
    http::Response res;
    try {
        res = http::get(url, timeout_ms_, {{"Accept", "application/json"}});
    } catch (const Error& e) {
        throw Error(ErrorCode::ProviderError, fmt::format("search provider unreachable: {}", e.what()));
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorCode::ProviderError, fmt::format("search provider returned HTTP {}", res.status));
    }
    std::vector<SearchResult> results;
    try {
        results = parse_results(nlohmann::json::parse(res.body));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderError, fmt::format("malformed search reply: {}", e.what()));
    }
    if (results.size() > k) results.resize(k);
    return results;
}

FixtureSearchProvider::FixtureSearchProvider(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open search fixture {}", path.string()));
    nlohmann::json j;
    try {
        in >> j;
        if (j.is_array()) {
            by_query_["*"] = parse_results(j);
        } else if (j.is_object()) {
            for (const auto& [q, arr] : j.items()) by_query_[q] = parse_results(arr);
        } else {
            throw Error(ErrorCode::ConfigError, "search fixture must be an array or object");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("bad search fixture {}: {}", path.string(), e.what()));
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
}

std::vector<SearchResult> FixtureSearchProvider::search(const std::string& query, std::size_t k) {
    auto it = by_query_.find(query);
    if (it == by_query_.end()) it = by_query_.find("*");
    if (it == by_query_.end()) return {};
    auto out = it->second;
    if (out.size() > k) out.resize(k);
    return out;
}

WebSearchOutcome web_search(SearchProvider& provider, PageSource& pages, const std::string& query,
                            std::size_t k, int timeout_ms, std::size_t max_in_flight) {
    if (trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "search query is empty");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    auto results = provider.search(query, k);
    if (results.size() > k) results.resize(k);

    struct Attempt {
        std::optional<Document> doc;
        std::string error;
    };
    auto attempts = bounded_parallel_map(results.size(), max_in_flight, [&](std::size_t i) {
        Attempt a;
        try {
            auto doc = fetch_url(pages, results[i].url, timeout_ms, SourceKind::WebSearch);
            if (!doc.source.title && !results[i].title.empty()) doc.source.title = results[i].title;
            a.doc = std::move(doc);
        } catch (const Error& e) {
            a.error = fmt::format("{} skipped: {}: {}", results[i].url, to_string(e.code()), e.what());
        } catch (const std::exception& e) {
            a.error = fmt::format("{} skipped: {}", results[i].url, e.what());
        }
        return a;
    });

    WebSearchOutcome out;
    for (auto& a : attempts) {
        if (a.doc) {
            out.documents.push_back(std::move(*a.doc));
        } else {
            out.diagnostics.push_back(std::move(a.error));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local files
// ---------------------------------------------------------------------------
namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view csv) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;
    for (std::size_t i = 0; i < csv.size(); ++i) {
        char c = csv[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < csv.size() && csv[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_has_data = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            row_has_data = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
            if (row_has_data || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            row_has_data = false;
        } else {
            field.push_back(c);
            row_has_data = true;
        }
    }
    if (row_has_data || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string escape_cell(const std::string& cell) {
    std::string out;
    for (char c : collapse_whitespace(cell)) {
        if (c == '|') out += "\\|";
        else out.push_back(c);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out += "'";
    return out;
}

std::string run_converter(const std::string& command, const std::filesystem::path& path) {
    auto cmd = command + " " + shell_quote(path.string());
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error(ErrorCode::ConverterFailed, fmt::format("cannot start converter '{}'", command));
    std::string out;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        throw Error(ErrorCode::ConverterFailed,
                    fmt::format("converter '{}' failed on {} (exit {})", command, path.string(), code));
    }
    return out;
}

}  // namespace

std::string csv_to_markdown(std::string_view csv) {
    auto rows = parse_csv(csv);
    if (rows.empty()) return {};
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.size());
    std::string out;
    auto emit_row = [&](const std::vector<std::string>& r) {
        out += "|";
        for (std::size_t c = 0; c < width; ++c) {
            out += " ";
            if (c < r.size()) out += escape_cell(r[c]);
            out += " |";
        }
    };
    emit_row(rows[0]);
    out += "\n|";
    for (std::size_t c = 0; c < width; ++c) out += " --- |";
    for (std::size_t r = 1; r < rows.size(); ++r) {
        out += "\n";
        emit_row(rows[r]);
    }
    return out;
}

Document parse_local_file(const std::filesystem::path& path, const ConverterMap& converters) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw Error(ErrorCode::FileNotFound, fmt::format("no such file: {}", path.string()));
    }
    auto ext = to_lower_ascii(path.extension().string());
    if (!ext.empty() && ext[0] == '.') ext.erase(0, 1);

    SourceRef src;
    src.id = make_id("file");
    src.kind = SourceKind::LocalFile;
    src.uri = path.string();
    src.title = path.filename().string();
    src.fetched_at = now_utc();

    std::string text;
    if (ext == "txt" || ext == "md" || ext == "markdown") {
        text = read_file(path);
    } else if (ext == "csv") {
        text = csv_to_markdown(read_file(path));
    } else if (auto it = converters.find(ext); it != converters.end()) {
        text = run_converter(it->second, path);
    } else {
        throw Error(ErrorCode::UnsupportedFormat,
                    fmt::format("no handler for '.{}' files ({})", ext, path.string()));
    }
    return make_document(std::move(src), std::move(text));
}

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_tokens, std::size_t overlap_tokens) {
    if (chunk_tokens == 0) throw Error(ErrorCode::InvalidArgument, "chunk_tokens must be >= 1");
    if (overlap_tokens >= chunk_tokens) {
        throw Error(ErrorCode::InvalidArgument, "overlap_tokens must be < chunk_tokens");
    }
    auto tokens = tokenize(doc.text);
    std::vector<Chunk> chunks;
    if (tokens.empty()) return chunks;
    const std::size_t n = tokens.size();
    const std::size_t stride = chunk_tokens - overlap_tokens;
    for (std::size_t start = 0;; start += stride) {
        std::size_t end = std::min(start + chunk_tokens, n);
        Chunk c;
        c.doc_source = doc.source;
        c.seq = chunks.size();
        c.token_begin = start;
        c.token_end = end;
        c.char_begin = start == 0 ? 0 : tokens[start].begin;
        c.char_end = end == n ? doc.text.size() : tokens[end].begin;
        c.text = doc.text.substr(c.char_begin, c.char_end - c.char_begin);
        c.token_count = end - start;
        chunks.push_back(std::move(c));
        if (end == n) break;
    }
    return chunks;
}

}  // namespace finagent
