// The only place the HTTP server is compiled; everything else talks to Agent.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "finagent/service.hpp"

#include <fmt/format.h>

namespace finagent {

struct HttpServer::Impl {
    Agent& agent;
    httplib::Server server;

    explicit Impl(Agent& a) : agent(a) {}
};

namespace {

void reply(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                    "application/json; charset=utf-8");
}

}  // namespace

HttpServer::HttpServer(Agent& agent) : impl_(std::make_unique<Impl>(agent)) {
    auto& srv = impl_->server;
    auto threads = std::max<std::size_t>(2, agent.config().server_threads);
    srv.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    srv.set_payload_max_length(64 * 1024 * 1024);

    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> params;
        for (const auto& [k, v] : req.params) params.emplace(k, v);
        reply(res, impl_->agent.dispatch(req.method, req.path, params, req.body));
    };
    for (const auto& r : route_table()) {
        std::string path(r.path);
        if (r.method == "GET") srv.Get(path, handler);
        else srv.Post(path, handler);
    }
    // anything else under /api is a JSON 404/405, never a static file
    srv.Get(R"(/api/.*)", handler);
    srv.Post(R"(/api/.*)", handler);

    const auto& ui = agent.config().ui_dir;
    if (!ui.empty() && std::filesystem::is_directory(ui)) {
        srv.set_mount_point("/", ui.string());
    } else {
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("<!doctype html><title>finagent</title><p>No UI assets configured (ui_dir).</p>",
                            "text/html; charset=utf-8");
        });
    }
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, error_response(500, "InternalError", what));
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    port_ = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::NetworkError, fmt::format("cannot bind {}:{}", host, port));
    thread_ = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port_;
}

void HttpServer::run(const std::string& host, int port) {
    auto& srv = impl_->server;
    port_ = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::NetworkError, fmt::format("cannot bind {}:{}", host, port));
    srv.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace finagent
