#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "stub_server.hpp"

#include <thread>

namespace testsupport {

struct StubServer::Impl {
    httplib::Server server;
    std::thread thread;
    int port = 0;
};

StubServer::StubServer(StubHandler handler) : impl_(std::make_unique<Impl>()) {
    auto h = [handler](const httplib::Request& req, httplib::Response& res) {
        StubRequest r;
        r.method = req.method;
        r.path = req.path;
        auto q = req.target.find('?');
        if (q != std::string::npos) r.query = req.target.substr(q + 1);
        r.body = req.body;
        r.authorization = req.get_header_value("Authorization");
        auto reply = handler(r);
        res.status = reply.status;
        res.set_content(reply.body, reply.content_type);
    };
    impl_->server.Get(".*", h);
    impl_->server.Post(".*", h);
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

StubServer::~StubServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int StubServer::port() const noexcept { return impl_->port; }

std::string StubServer::url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(impl_->port) + path;
}

}  // namespace testsupport
