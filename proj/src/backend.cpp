#include "socratic/dialogue.hpp"

#include <httplib.h>

#include <cstdlib>
#include <regex>

namespace socratic {

namespace {

struct Endpoint {
    std::string host;
    int port = 80;
    std::string path = "/";
};

Endpoint parse_endpoint(const std::string& url)
{
    static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re))
        throw BackendError(BackendError::Kind::TRANSPORT, "bad endpoint " + url);
    if (m[1] == "https")
        throw BackendError(BackendError::Kind::TRANSPORT, "https endpoints need a TLS-enabled build");
    Endpoint e;
    e.host = m[2];
    if (m[3].matched)
        e.port = std::stoi(m[3]);
    if (m[4].matched)
        e.path = m[4];
    return e;
}

bool is_timeout(httplib::Error e)
{
    return e == httplib::Error::Read || e == httplib::Error::ConnectionTimeout || e == httplib::Error::Write;
}

} // namespace

std::string call_external_backend(const BackendDescriptor& descriptor, const std::string& prompt)
{
    if (descriptor.kind != BackendKind::EXTERNAL || !descriptor.endpoint)
        throw std::invalid_argument("backend is not external");
    auto ep = parse_endpoint(*descriptor.endpoint);

    httplib::Client client(ep.host, ep.port);
    auto sec = descriptor.timeout_ms / 1000;
    auto usec = (descriptor.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    httplib::Headers headers;
    if (const char* token = std::getenv("SOCRATIC_BACKEND_TOKEN"); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);

    Json body = {{"prompt", prompt}};
    body["model"] = descriptor.model_name ? Json(*descriptor.model_name) : Json(nullptr);
    std::string payload = body.dump();

    for (int attempt = 0;; ++attempt) {
        auto res = client.Post(ep.path, headers, payload, "application/json");
        if (!res) {
            auto err = res.error();
            if (!is_timeout(err))
                throw BackendError(BackendError::Kind::TRANSPORT, "backend unreachable: " + httplib::to_string(err));
            if (attempt < descriptor.retries_on_timeout)
                continue;
            throw BackendError(BackendError::Kind::TIMEOUT, "backend timed out");
        }
        if (res->status != 200)
            throw BackendError(BackendError::Kind::TRANSPORT, "backend answered " + std::to_string(res->status));
        Json reply = Json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
            throw BackendError(BackendError::Kind::MALFORMED_RESPONSE, "backend reply lacks a text field");
        return reply["text"].get<std::string>();
    }
}

} // namespace socratic
