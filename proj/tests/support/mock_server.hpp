#pragma once

// Local OpenAI-compatible mock server for wire-format tests. Handlers
// receive the parsed request body and return (status, body). Every
// request body is captured for golden-fixture comparison.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ppcv::testsupport {

class MockOpenAiServer {
public:
    using Handler = std::function<std::pair<int, nlohmann::json>(const nlohmann::json&)>;

    MockOpenAiServer() {
        server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            dispatch(completions, req, res);
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            dispatch(embeddings, req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockOpenAiServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::vector<nlohmann::json> captured() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    Handler completions;
    Handler embeddings;

private:
    void dispatch(const Handler& h, const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::parse(req.body);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            requests_.push_back(body);
        }
        if (!h) {
            res.status = 500;
            res.set_content("{}", "application/json");
            return;
        }
        auto [status, out] = h(body);
        res.status = status;
        res.set_content(out.dump(), "application/json");
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> requests_;
};

}  // namespace ppcv::testsupport
