#pragma once

#include "socratic/session.hpp"

#include <memory>
#include <string>

namespace socratic {

// JSON API under /api/v1. Errors come back as {code, message, detail}.
class HttpService {
public:
    explicit HttpService(Engine& engine);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    // Returns the chosen port.
    int bind_to_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    // Blocks until stop().
    bool listen_after_bind();
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace socratic
