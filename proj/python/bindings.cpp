// Python bindings. Structured values cross the boundary as JSON text; the
// socratic_tutor package decodes them.
#include "socratic/session.hpp"
#include "socratic/text.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace socratic;

namespace {

Program program_of(const std::string& source)
{
    return parse(source);
}

CodeFacts facts_of(const Program& p, std::uint64_t seed, int samples)
{
    return analyze(p, name_input_sets(sample_inputs(p, seed, samples)));
}

StartRequest start_request(const std::string& json)
{
    Json j = Json::parse(json);
    StartRequest r;
    r.submission_id = j.at("submission_id").get<std::string>();
    r.mode = session_mode_from_string(j.value("mode", std::string("FORMATIVE")));
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("question_budget") && !j["question_budget"].is_null())
        r.question_budget = j["question_budget"].get<int>();
    if (j.contains("proctor_token") && !j["proctor_token"].is_null())
        r.proctor_token = j["proctor_token"].get<std::string>();
    return r;
}

} // namespace

PYBIND11_MODULE(_socratic, m)
{
    m.doc() = "Code analysis, two-tier questioning and assessment";

    static py::exception<ParseError> source_error(m, "SourceError", PyExc_ValueError);
    static py::exception<ServiceError> service_error(m, "ServiceError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const ParseError& e) {
            PyErr_SetObject(source_error.ptr(), py::make_tuple(e.what(), e.line(), e.column()).ptr());
        } catch (const SemanticError& e) {
            PyErr_SetObject(source_error.ptr(), py::make_tuple(e.what(), e.line(), e.column()).ptr());
        } catch (const ServiceError& e) {
            PyErr_SetObject(service_error.ptr(), py::make_tuple(e.what(), e.code(), e.status()).ptr());
        } catch (const EmptyAnswer& e) {
            PyErr_SetObject(service_error.ptr(), py::make_tuple(e.what(), "EMPTY_ANSWER", 400).ptr());
        } catch (const SessionNotFinished& e) {
            PyErr_SetObject(service_error.ptr(), py::make_tuple(e.what(), "SESSION_NOT_FINISHED", 409).ptr());
        }
    });

    m.def("resource_dir", &resource_dir);

    m.def(
        "analyze",
        [](const std::string& source, std::uint64_t seed, int samples) {
            Program p = program_of(source);
            return to_json(facts_of(p, seed, samples)).dump();
        },
        py::arg("source"), py::arg("seed") = 0, py::arg("samples") = 3);

    m.def(
        "execute",
        [](const std::string& source, const std::string& inputs, int step_budget) {
            Program p = program_of(source);
            return to_json(execute(p, inputs_from_json(Json::parse(inputs)), step_budget)).dump();
        },
        py::arg("source"), py::arg("inputs") = "{}", py::arg("step_budget") = kDefaultStepBudget);

    m.def(
        "generate_question",
        [](const std::string& source, const std::string& kc, std::uint64_t seed, std::uint64_t input_seed) {
            Program p = program_of(source);
            auto g = generate_question(p, facts_of(p, input_seed, 3), kc_from_string(kc), seed);
            return Json{{"question", to_json(g.question)}, {"reference", to_json(g.reference)}}.dump();
        },
        py::arg("source"), py::arg("kc"), py::arg("seed") = 0, py::arg("input_seed") = 0);

    m.def(
        "verify_explanation",
        [](const std::string& reference, const std::string& text, bool tier1_correct, int attempts_used) {
            return to_json(verify_explanation(reference_from_json(Json::parse(reference)), text, tier1_correct,
                                              attempts_used))
                .dump();
        },
        py::arg("reference"), py::arg("text"), py::arg("tier1_correct"), py::arg("attempts_used") = 0);

    m.def(
        "guard_turn",
        [](const std::string& source, const std::string& question, const std::string& text) {
            Program p = program_of(source);
            std::optional<Question> q;
            if (!question.empty())
                q = question_from_json(Json::parse(question));
            auto r = guard_turn(text, session_vocabulary(p, q ? &*q : nullptr), q ? q->question_id : "");
            return Json{{"classification", to_string(r.classification)}, {"reply", r.reply}}.dump();
        },
        py::arg("source"), py::arg("question"), py::arg("text"));

    m.def("score_for", &score_for, py::arg("similarity"), py::arg("tier1_correct"));
    m.def("unproductive_success", &unproductive_success, py::arg("functional_score"), py::arg("dialogue_score"));
    m.def(
        "fuse_grade",
        [](int f, int d, double wf, double wd) { return fuse_grade(f, d, FusionWeights{wf, wd}); },
        py::arg("functional_score"), py::arg("dialogue_score"), py::arg("w_f") = 0.5, py::arg("w_d") = 0.5);

    m.def("replay_session", [](const std::string& dir) {
        auto r = replay_session(dir);
        return Json{{"ok", r.ok}, {"events", r.events}, {"verdicts_checked", r.verdicts_checked},
                    {"mismatches", r.mismatches}, {"report", r.report}}
            .dump();
    });
    m.def("grade_session_dir", [](const std::string& dir) { return to_json(grade_session_dir(dir)).dump(); });

    py::class_<Engine>(m, "Engine")
        .def(py::init([](const std::string& data_dir, bool from_environment) {
                 EngineOptions o = from_environment ? EngineOptions::from_environment(data_dir) : EngineOptions{};
                 o.data_dir = data_dir;
                 return std::make_unique<Engine>(std::move(o));
             }),
             py::arg("data_dir") = "", py::arg("from_environment") = true)
        .def("put_assignment",
             [](Engine& e, const std::string& config) { e.put_assignment(assignment_from_json(Json::parse(config))); })
        .def("assignments",
             [](const Engine& e) {
                 Json out = Json::array();
                 for (const auto& a : e.assignments())
                     out.push_back(to_json(a));
                 return out.dump();
             })
        .def(
            "create_submission",
            [](Engine& e, const std::string& assignment_id, const std::string& source) {
                py::gil_scoped_release release;
                return to_json(e.create_submission(assignment_id, source)).dump();
            },
            py::arg("assignment_id"), py::arg("source"))
        .def("start_session",
             [](Engine& e, const std::string& request) {
                 auto r = start_request(request);
                 py::gil_scoped_release release;
                 return public_json(e.start_session(r)).dump();
             })
        .def("session", [](const Engine& e, const std::string& id) { return public_json(e.session(id)).dump(); })
        .def("submit_tier1",
             [](Engine& e, const std::string& id, const std::string& question_id, int choice) {
                 py::gil_scoped_release release;
                 return to_json(e.submit_tier1(id, question_id, choice)).dump();
             })
        .def("submit_tier2",
             [](Engine& e, const std::string& id, const std::string& text) {
                 py::gil_scoped_release release;
                 return to_json(e.submit_tier2(id, text)).dump();
             })
        .def("message",
             [](Engine& e, const std::string& id, const std::string& text) {
                 py::gil_scoped_release release;
                 return to_json(e.message(id, text)).dump();
             })
        .def(
            "abort", [](Engine& e, const std::string& id, const std::string& reason) {
                return public_json(e.abort(id, reason)).dump();
            },
            py::arg("session_id"), py::arg("reason") = "requested")
        .def("report", [](const Engine& e, const std::string& id) { return to_json(e.report(id)).dump(); })
        .def("session_dir", &Engine::session_dir);
}
