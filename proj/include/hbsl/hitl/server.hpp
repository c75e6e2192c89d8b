#pragma once

#include <map>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hbsl/errors.hpp"
#include "hbsl/hitl/session.hpp"

namespace hbsl::hitl {

/// HTTP + JSON front end of one node's AnnotationSession:
///   GET  /api/v1/feedback/pending?round=R
///   POST /api/v1/feedback/submit
///   GET  /api/v1/status
/// Requests naming a round other than the current one get 409.
class FeedbackServer {
public:
    explicit FeedbackServer(AnnotationSession& session) : session_(session) { install_routes(); }

    FeedbackServer(const FeedbackServer&) = delete;
    FeedbackServer& operator=(const FeedbackServer&) = delete;

    ~FeedbackServer() { stop(); }

    /// Bind and serve on a background thread. Port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        if (port == 0) {
            port_ = server_.bind_to_any_port(host);
        } else {
            port_ = server_.bind_to_port(host, port) ? port : -1;
        }
        if (port_ <= 0) throw IoError("feedback server: cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    int port() const noexcept { return port_; }

private:
    using json = nlohmann::json;

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void conflict(httplib::Response& res, const RoundConflict& e) {
        reply(res, 409, {{"error", e.what()}, {"current_round", e.current_round}});
    }

    void install_routes() {
        server_.Get("/api/v1/feedback/pending", [this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("round")) return reply(res, 400, {{"error", "missing round parameter"}});
            std::uint32_t round = 0;
            try {
                round = static_cast<std::uint32_t>(std::stoul(req.get_param_value("round")));
            } catch (const std::exception&) {
                return reply(res, 400, {{"error", "round must be a non-negative integer"}});
            }
            try {
                json items = json::array();
                for (const auto& it : session_.pending(round)) {
                    items.push_back({{"id", it.example_id},
                                     {"text", it.text},
                                     {"predicted_label", it.predicted_label},
                                     {"probability", it.probability}});
                }
                reply(res, 200, {{"round", round}, {"items", items}});
            } catch (const RoundConflict& e) {
                conflict(res, e);
            }
        });

        server_.Post("/api/v1/feedback/submit", [this](const httplib::Request& req, httplib::Response& res) {
            std::uint32_t round = 0;
            std::map<std::string, int> corrections;
            try {
                const auto body = json::parse(req.body);
                round = body.at("round").get<std::uint32_t>();
                for (const auto& it : body.at("items"))
                    corrections[it.at("id").get<std::string>()] = it.at("corrected_label").get<int>();
            } catch (const json::exception& e) {
                return reply(res, 400, {{"error", std::string("malformed submission: ") + e.what()}});
            }
            try {
                const auto accepted = session_.submit(round, corrections);
                reply(res, 200, {{"accepted", accepted}});
            } catch (const RoundConflict& e) {
                conflict(res, e);
            } catch (const DataError& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const ProtocolError& e) {
                reply(res, 409, {{"error", e.what()}, {"current_round", session_.status().round}});
            }
        });

        server_.Get("/api/v1/status", [this](const httplib::Request&, httplib::Response& res) {
            const auto s = session_.status();
            reply(res, 200,
                  {{"node_id", s.node_id}, {"round", s.round}, {"stage", s.stage}, {"accuracy_history", s.accuracy_history}});
        });
    }

    AnnotationSession& session_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

}  // namespace hbsl::hitl
