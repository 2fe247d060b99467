#include "vulnlink/service.hpp"

#include "vulnlink/error.hpp"

#include "httplib.h"

namespace vulnlink {

void serve(ServiceApi& api, const std::string& host, int port, const ServeReady& on_ready) {
    httplib::Server server;
    auto bridge = [&api](const httplib::Request& req, httplib::Response& res) {
        ServiceRequest request;
        request.method = req.method;
        request.path = req.path;
        request.body = req.body;
        for (const auto& [key, value] : req.params) {
            request.query[key] = value;
        }
        if (req.has_header("X-Reviewer-Token")) {
            request.headers["X-Reviewer-Token"] = req.get_header_value("X-Reviewer-Token");
        }
        auto response = api.handle(request);
        res.status = response.status;
        res.set_content(response.body, response.content_type);
    };
    for (const char* path : {"/calibration", "/queue", "/enrichment", "/health"}) {
        server.Get(path, bridge);
    }
    for (const char* path : {"/predict", "/verdict"}) {
        server.Post(path, bridge);
    }
    int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw PreconditionError("cannot listen on " + host + ":" + std::to_string(port));
    }
    if (on_ready) {
        on_ready(bound, [&server] { server.stop(); });
    }
    server.listen_after_bind();
}

}  // namespace vulnlink
