#pragma once

// Scripted chat-completion server for estimator tests. Each scripted entry
// is consumed by one request, in order.

#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace testutil {

class MockChat {
public:
    struct Scripted {
        int status = 200;
        std::string content;  // assistant message, or raw body for non-200
        bool raw_body = false;  // return content verbatim instead of wrapping
    };

    MockChat() {
        server_.Post("/chat/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
            const std::lock_guard<std::mutex> lock(mutex_);
            requests_.push_back(req.body);
            if (script_.empty()) {
                res.status = 500;
                res.set_content("{\"error\":\"script exhausted\"}", "application/json");
                return;
            }
            const Scripted next = script_.front();
            script_.pop_front();
            res.status = next.status;
            if (next.raw_body || next.status != 200) {
                res.set_content(next.content, "application/json");
                return;
            }
            nlohmann::json reply = {
                {"choices",
                 {{{"message",
                    {{"role", "assistant"}, {"content", next.content}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockChat() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    void script(Scripted entry) {
        const std::lock_guard<std::mutex> lock(mutex_);
        script_.push_back(std::move(entry));
    }

    void script_content(const std::string& content) { script({200, content, false}); }

    std::string base_url() const {
        return "http://127.0.0.1:" + std::to_string(port_);
    }

    std::vector<std::string> requests() {
        const std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    std::size_t remaining_script() {
        const std::lock_guard<std::mutex> lock(mutex_);
        return script_.size();
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mutex_;
    std::deque<Scripted> script_;
    std::vector<std::string> requests_;
};

}  // namespace testutil
