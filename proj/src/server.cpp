#include "socratic/server.hpp"

#include <httplib.h>

namespace socratic {

namespace {

void send_json(httplib::Response& res, int status, const Json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                Json detail = Json::object())
{
    send_json(res, status, {{"code", code}, {"message", message}, {"detail", std::move(detail)}});
}

Json body_of(const httplib::Request& req)
{
    if (req.body.empty())
        return Json::object();
    Json j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ServiceError("BAD_REQUEST", 400, "request body must be a JSON object");
    return j;
}

template <typename T>
T field(const Json& j, const char* name)
{
    if (!j.contains(name))
        throw ServiceError("VALIDATION", 400, std::string("missing field ") + name, {{"field", name}});
    try {
        return j[name].get<T>();
    } catch (const Json::exception&) {
        throw ServiceError("VALIDATION", 400, std::string("field ") + name + " has the wrong type", {{"field", name}});
    }
}

// Runs a handler and maps every exception onto the error envelope.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn)
{
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const ServiceError& e) {
            send_error(res, e.status(), e.code(), e.what(), e.detail());
        } catch (const ParseError& e) {
            send_error(res, 422, "PARSE_ERROR", e.what(),
                       {{"line", e.line()}, {"column", e.column()}, {"expected", e.expected()}});
        } catch (const SemanticError& e) {
            send_error(res, 422, "SEMANTIC_ERROR", e.what(), {{"line", e.line()}, {"column", e.column()}});
        } catch (const EmptyAnswer& e) {
            send_error(res, 400, "EMPTY_ANSWER", e.what());
        } catch (const SessionNotFinished& e) {
            send_error(res, 409, "SESSION_NOT_FINISHED", e.what());
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, "VALIDATION", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "INTERNAL", e.what());
        }
    };
}

Json submission_view(const Submission& s)
{
    return {{"submission_id", s.submission_id},
            {"assignment_id", s.assignment_id},
            {"received_at", s.received_at},
            {"functional", to_json(s.functional)},
            {"facts", to_json(s.facts)}};
}

Json assignment_view(const AssignmentConfig& c)
{
    Json tests = Json::array();
    for (const auto& t : c.tests)
        tests.push_back({{"name", t.name}, {"inputs", to_json(t.inputs)}});
    return {{"assignment_id", c.assignment_id},
            {"title", c.title},
            {"question_budget", c.question_budget},
            {"tests", tests}};
}

} // namespace

struct HttpService::Impl {
    Engine& engine;
    httplib::Server server;

    explicit Impl(Engine& e) : engine(e)
    {
        const std::string sid = R"(/api/v1/sessions/([A-Za-z0-9_-]+))";

        server.Get("/api/v1/assignments", guarded([this](const httplib::Request&, httplib::Response& res) {
                       Json list = Json::array();
                       for (const auto& a : engine.assignments())
                           list.push_back(assignment_view(a));
                       send_json(res, 200, {{"assignments", list}});
                   }));

        server.Post("/api/v1/submissions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        auto sub = engine.create_submission(field<std::string>(b, "assignment_id"),
                                                            field<std::string>(b, "source"));
                        send_json(res, 201, submission_view(sub));
                    }));

        server.Post("/api/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        StartRequest sr;
                        sr.submission_id = field<std::string>(b, "submission_id");
                        sr.mode = session_mode_from_string(b.value("mode", std::string("FORMATIVE")));
                        sr.seed = b.contains("seed") ? field<std::uint64_t>(b, "seed") : 0;
                        if (b.contains("question_budget"))
                            sr.question_budget = field<int>(b, "question_budget");
                        if (b.contains("proctor_token") && !b["proctor_token"].is_null())
                            sr.proctor_token = field<std::string>(b, "proctor_token");
                        send_json(res, 201, public_json(engine.start_session(sr)));
                    }));

        server.Get(sid, guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, 200, public_json(engine.session(req.matches[1])));
                   }));

        server.Post(sid + "/tier1", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        auto r = engine.submit_tier1(req.matches[1], field<std::string>(b, "question_id"),
                                                     field<int>(b, "choice_index"));
                        send_json(res, 200, to_json(r));
                    }));

        server.Post(sid + "/tier2", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        send_json(res, 200, to_json(engine.submit_tier2(req.matches[1], field<std::string>(b, "text"))));
                    }));

        server.Post(sid + "/message", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        send_json(res, 200, to_json(engine.message(req.matches[1], field<std::string>(b, "text"))));
                    }));

        server.Post(sid + "/abort", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        Json b = body_of(req);
                        std::string reason = b.value("reason", std::string("requested"));
                        send_json(res, 200, public_json(engine.abort(req.matches[1], reason)));
                    }));

        server.Get(sid + "/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, 200, to_json(engine.report(req.matches[1])));
                   }));

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                std::string code = res.status == 404 ? "NOT_FOUND" : "HTTP_" + std::to_string(res.status);
                send_error(res, res.status, code, "no such route");
            }
        });
    }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}
HttpService::~HttpService() = default;

int HttpService::bind_to_any_port(const std::string& host)
{
    return impl_->server.bind_to_any_port(host);
}

bool HttpService::bind(const std::string& host, int port)
{
    return impl_->server.bind_to_port(host, port);
}

bool HttpService::listen_after_bind()
{
    return impl_->server.listen_after_bind();
}

void HttpService::wait_until_ready() const
{
    impl_->server.wait_until_ready();
}

void HttpService::stop()
{
    impl_->server.stop();
}

} // namespace socratic
