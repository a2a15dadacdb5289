#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "finagent/generate.hpp"
#include "finagent/ingest.hpp"

namespace testsupport {

/// mkdtemp'd directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "finagent-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// In-memory web: url -> response. Unknown URLs get a 404.
class FixturePages final : public finagent::PageSource {
public:
    void html(const std::string& url, const std::string& body) {
        std::lock_guard l(mu_);
        pages_[url] = {200, "text/html; charset=utf-8", body};
    }
    void set(const std::string& url, finagent::http::Response res) {
        std::lock_guard l(mu_);
        pages_[url] = std::move(res);
    }
    finagent::http::Response get(const std::string& url, int) override {
        std::lock_guard l(mu_);
        ++hits_[url];
        auto it = pages_.find(url);
        if (it == pages_.end()) return {404, "text/plain", "not found"};
        return it->second;
    }
    int hits(const std::string& url) const {
        std::lock_guard l(mu_);
        auto it = hits_.find(url);
        return it == hits_.end() ? 0 : it->second;
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, finagent::http::Response> pages_;
    std::map<std::string, int> hits_;
};

/// Answers like the mock and remembers what it was sent.
class CaptureBackend final : public finagent::ChatBackend {
public:
    std::string reply(const finagent::ChatRequest& req) override {
        std::lock_guard l(mu_);
        requests.push_back(req.messages);
        return req.window ? finagent::mock_reply(*req.window) : "ANSWER: no context available";
    }
    std::vector<std::vector<finagent::ChatMessage>> requests;

private:
    std::mutex mu_;
};

}  // namespace testsupport
