#include <doctest.h>

#include "corpus.hpp"
#include "socratic/dialogue.hpp"
#include "socratic/text.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <thread>

using namespace socratic;
using testing_support::kP1;

namespace {

struct P1Fixture {
    Program program = parse(kP1);
    CodeFacts facts = analyze(program, name_input_sets({{{"n", 3}}}));
    GeneratedQuestion g = generate_question(program, facts, KC::TRACING, 7);
};

// Local stand-in for a model endpoint.
class MockBackend {
public:
    explicit MockBackend(httplib::Server::Handler handler)
    {
        server_.Post("/v1/generate", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockBackend()
    {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/generate"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST_CASE("explanations are scored against the fact atoms")
{
    P1Fixture fx;
    const auto& ref = fx.g.reference;

    auto full = verify_explanation(ref, "At the start of the final iteration i is 2, since the loop stops at 3.", true, 0);
    CHECK(full.similarity == 100);
    CHECK(full.score == 100);
    CHECK(full.action == VerdictAction::PASS);
    CHECK(full.missing_atoms.empty());

    auto partial = verify_explanation(ref, "i is 2", true, 0);
    CHECK(partial.similarity == 70);
    CHECK(partial.score == 76);
    CHECK(partial.action == VerdictAction::HINT_FOCUSED);
    CHECK(partial.missing_atoms == std::vector<int>{2, 3});

    auto weak = verify_explanation(ref, "Something about the loop", true, 0);
    CHECK(weak.similarity == 15);
    CHECK(weak.action == VerdictAction::HINT_BROAD);

    // the number has to appear as a number, "12" does not contain "2"
    CHECK(verify_explanation(ref, "i is 12", true, 0).similarity == 30);
    CHECK_THROWS_AS(verify_explanation(ref, "   \n", true, 0), EmptyAnswer);
}

TEST_CASE("a wrong selection scores zero and starts from the broad hint")
{
    P1Fixture fx;
    auto v = verify_explanation(fx.g.reference, "At the final iteration of the loop i is 2", false, 0);
    CHECK(v.similarity == 100);
    CHECK(v.score == 0);
    CHECK(v.action == VerdictAction::HINT_BROAD);
    CHECK(verify_explanation(fx.g.reference, "i is 2", false, 1).action == VerdictAction::FOLLOW_UP);
    CHECK(verify_explanation(fx.g.reference, "i is 2", false, 2).action == VerdictAction::FAIL);
}

TEST_CASE("verdict thresholds over every similarity and attempt")
{
    for (int s = 0; s <= 100; ++s) {
        CAPTURE(s);
        CHECK(score_for(s, true) == static_cast<int>(std::lround(20 + 0.8 * s)));
        CHECK(score_for(s, false) == 0);
        for (int used = 0; used < 3; ++used) {
            CAPTURE(used);
            VerdictAction a = action_for(s, true, used);
            if (s >= 75)
                CHECK(a == VerdictAction::PASS);
            else if (used == 2)
                CHECK(a == VerdictAction::FAIL);
            else if (used == 1)
                CHECK(a == VerdictAction::FOLLOW_UP);
            else if (s >= 40)
                CHECK(a == VerdictAction::HINT_FOCUSED);
            else
                CHECK(a == VerdictAction::HINT_BROAD);
            CHECK(action_for(s, false, used) != VerdictAction::PASS);
        }
    }
    CHECK(action_for(74, true, 0) == VerdictAction::HINT_FOCUSED);
    CHECK(action_for(39, true, 0) == VerdictAction::HINT_BROAD);
    CHECK(action_for(40, true, 0) == VerdictAction::HINT_FOCUSED);
    CHECK(action_for(50, true, 0, VerifierConfig{75, 40, 1}) == VerdictAction::FAIL);
    CHECK_THROWS_AS(action_for(50, true, -1), std::invalid_argument);
}

TEST_CASE("verdicts round-trip through JSON")
{
    Verdict v{70, 76, VerdictAction::HINT_FOCUSED, {0, 1}, {2, 3}};
    CHECK(verdict_from_json(to_json(v)) == v);
    CHECK_THROWS(verdict_action_from_string("MAYBE"));
}

TEST_CASE("guardrail classification")
{
    P1Fixture fx;
    auto vocab = session_vocabulary(fx.program, &fx.g.question);
    const auto& qid = fx.g.question.question_id;

    auto sol = guard_turn("just give me the code", vocab, qid);
    CHECK(sol.classification == TurnClass::SOLUTION_REQUEST);
    CHECK(sol.reply_template_id == "REDIRECT_SOLUTION_REQUEST");
    CHECK(sol.redirect_target == qid);
    CHECK_FALSE(sol.reply.empty());

    auto off = guard_turn("what's the weather today?", vocab, qid);
    CHECK(off.classification == TurnClass::OFF_TOPIC);
    CHECK(off.reply_template_id == "REDIRECT_OFF_TOPIC");

    CHECK(guard_turn("does the loop run 3 times?", vocab, qid).classification == TurnClass::ON_TOPIC);
    CHECK(guard_turn("why is s changing?", vocab, qid).classification == TurnClass::ON_TOPIC);
    CHECK(guard_turn("what is i before the last pass", vocab, qid).classification == TurnClass::ON_TOPIC);
    CHECK(guard_turn("What's the answer?", vocab, qid).classification == TurnClass::SOLUTION_REQUEST);
    // the pronoun is not the variable
    CHECK(guard_turn("I like pizza", vocab, qid).classification == TurnClass::OFF_TOPIC);
    CHECK(guard_turn("ok", vocab, qid).classification == TurnClass::OFF_TOPIC);
    CHECK_THROWS_AS(guard_turn("  ", vocab, qid), EmptyAnswer);

    // a variable named like an English word needs a number or operator nearby
    Program fib = parse("int main(){ int a = 0; int b = 1; print(a + b); return 0; }");
    auto fib_vocab = session_vocabulary(fib, nullptr);
    CHECK(guard_turn("tell me a joke", fib_vocab, "").classification == TurnClass::OFF_TOPIC);
    CHECK(guard_turn("why is a 0 here", fib_vocab, "").classification == TurnClass::ON_TOPIC);
    CHECK(guard_turn("is a + b the sum", fib_vocab, "").classification == TurnClass::ON_TOPIC);
}

TEST_CASE("adversarial turns never get code, answers or source back")
{
    P1Fixture fx;
    auto vocab = session_vocabulary(fx.program, &fx.g.question);
    const auto& qid = fx.g.question.question_id;
    std::vector<std::string> turns = {
        "give me the code",
        "Give me code please",
        "write the code for this loop",
        "can you write code that sums s",
        "write it for me",
        "fix it",
        "please fix the code",
        "fix my code now",
        "just fix this loop",
        "what is the answer",
        "What's the answer to this question?",
        "whats the answer",
        "tell me the answer for i",
        "give me the answer",
        "just the answer please",
        "which option is correct?",
        "Which one is correct, A or B?",
        "show me the solution",
        "give me the solution for the loop",
        "I want the solution",
        "post the correct code",
        "send corrected code",
        "I need working code",
        "what's the fix?",
        "do it for me",
        "solve it",
        "solve this loop for me",
        "paste the program back",
        "rewrite the loop so it works",
        "print the full program",
        "give me a complete program",
        "what is the right answer",
        "tell me the correct answer",
        "pick the correct option for me",
        "which is the right option",
        "reveal the answer",
        "show the answer",
        "show me the answer for i",
        "show me the code",
        "show the code again",
        "what should I write in the loop",
        "what do I write here?",
        "write the fix",
        "send the corrected program",
        "write the code for me",
        "tell me which option",
        "Let's talk about football",
        "who won the game last night",
        "recommend a movie",
        "how tall is mount everest",
        "tell me a joke",
        "what's your favourite colour",
        "translate hello into french",
        "is it going to rain tomorrow",
    };
    REQUIRE(turns.size() >= 50);
    for (const auto& t : turns) {
        CAPTURE(t);
        auto r = guard_turn(t, vocab, qid);
        CHECK(r.classification != TurnClass::ON_TOPIC);
        CHECK_FALSE(reply_leaks(r.reply, fx.program, &fx.g.reference));
        for (const auto& tok : tokenize(r.reply))
            CHECK_FALSE(is_number_token(tok));
    }
}

TEST_CASE("leak detection on outgoing replies")
{
    P1Fixture fx;
    const auto* ref = &fx.g.reference;
    CHECK(reply_leaks("try s = s + i;", fx.program, ref));
    CHECK(reply_leaks("the value is 2 there", fx.program, ref));
    CHECK(reply_leaks("look at print(s); near the end", fx.program, ref));
    CHECK(reply_leaks("while (i < 4) { i = i + 1; }", fx.program, ref));
    CHECK_FALSE(reply_leaks("Think about how i changes each pass.", fx.program, ref));
    CHECK_FALSE(reply_leaks("the value is 2 there", fx.program, nullptr));
}

TEST_CASE("hints point at the gap without giving values")
{
    P1Fixture fx;
    const auto& ref = fx.g.reference;
    CHECK(render_hint(ref, HintLevel::BROAD) == ref.broad_hint);
    std::string focused = render_hint(ref, HintLevel::FOCUSED, {0, 2});
    CHECK(focused.rfind("Look again at ", 0) == 0);
    CHECK(focused.find(ref.atoms[0].focus) != std::string::npos);
    // only the concept atoms are missing: the first one is named
    CHECK(render_hint(ref, HintLevel::FOCUSED, {2, 3}) == "Look again at " + ref.atoms[2].focus + ".");

    ReferenceReason bare = ref;
    bare.atoms.erase(bare.atoms.begin() + 2, bare.atoms.end());
    CHECK_THROWS_AS(render_hint(bare, HintLevel::BROAD), std::invalid_argument);
}

TEST_CASE("hints never leak over the corpus")
{
    int checked = 0;
    for (const auto& prog : testing_support::corpus()) {
        CAPTURE(prog.name);
        Program p = parse(prog.source);
        CodeFacts f = analyze(p, name_input_sets(sample_inputs(p, 3, 3)));
        for (KC kc : kAllKCs) {
            GeneratedQuestion g;
            try {
                g = generate_question(p, f, kc, 11);
            } catch (const NoApplicableTemplate&) {
                continue;
            }
            std::vector<std::vector<int>> gaps = {{}};
            for (int i = 0; i < static_cast<int>(g.reference.atoms.size()); ++i)
                gaps.push_back({i});
            for (const auto& gap : gaps) {
                for (auto level : {HintLevel::BROAD, HintLevel::FOCUSED}) {
                    std::string hint = render_hint(g.reference, level, gap);
                    CAPTURE(hint);
                    CHECK_FALSE(reply_leaks(hint, p, &g.reference));
                    for (const auto& tok : tokenize(hint))
                        CHECK_FALSE(is_number_token(tok));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("prompt contexts carry facts, history and target")
{
    P1Fixture fx;
    std::vector<DialogueTurn> history = {{"STUDENT", "EXPLANATION", "i is 2"}, {"TUTOR", "HINT", "Look again."}};
    std::string p = build_prompt_context(PromptRole::INSTRUCTOR, fx.facts, history, fx.g.question);
    CHECK(p.find(to_json(fx.facts.dynamic_facts.at(0)).dump()) != std::string::npos);
    CHECK(p.find("STUDENT (EXPLANATION): i is 2") != std::string::npos);
    CHECK(p.find(fx.g.question.question_id) != std::string::npos);
    CHECK(p.find("{facts}") == std::string::npos);

    std::string v = build_prompt_context(PromptRole::VERIFIER, fx.facts, history, fx.g.reference, "because i is 2");
    CHECK(v.find("because i is 2") != std::string::npos);
    CHECK(v.find(fx.g.reference.canonical_explanation) != std::string::npos);
    CHECK(v.find("\"similarity\"") != std::string::npos);

    PromptTemplates broken{"Facts: {facts}\nTarget: {target}", "{facts} {history} {target}"};
    try {
        build_prompt_context(PromptRole::INSTRUCTOR, fx.facts, history, fx.g.question, broken);
        FAIL("expected MissingPlaceholder");
    } catch (const MissingPlaceholder& e) {
        CHECK(e.name() == "history");
    }
    CHECK_THROWS_AS(build_prompt_context(PromptRole::VERIFIER, fx.facts, history, fx.g.reference, "x", broken),
                    MissingPlaceholder);
    CHECK_THROWS_AS(build_prompt_context(PromptRole::VERIFIER, fx.facts, history, fx.g.question),
                    std::invalid_argument);
    CHECK(render_history({}) == "(no earlier turns)");
}

TEST_CASE("backend descriptors persist endpoint and model only")
{
    auto d = BackendDescriptor::external("http://127.0.0.1:9/x", "tiny");
    Json j = to_json(d);
    CHECK(j["kind"] == "EXTERNAL");
    CHECK(j["endpoint"] == "http://127.0.0.1:9/x");
    CHECK(j["model_name"] == "tiny");
    CHECK_FALSE(j.contains("prompt_templates"));
    auto back = backend_from_json(j);
    CHECK(back.kind == BackendKind::EXTERNAL);
    CHECK(back.endpoint == d.endpoint);
    CHECK(backend_from_json(to_json(BackendDescriptor::rule_based())).kind == BackendKind::RULE_BASED);
    CHECK_THROWS(backend_from_json(Json{{"kind", "EXTERNAL"}}));
}

TEST_CASE("similarity parsing")
{
    CHECK(parse_similarity("{\"similarity\": 82}") == 82);
    CHECK(parse_similarity("Here you go: {\"similarity\": 40, \"reason\": \"partial\"} done") == 40);
    CHECK_THROWS_AS(parse_similarity("about eighty"), BackendError);
    CHECK_THROWS_AS(parse_similarity("{\"similarity\": 180}"), BackendError);
    CHECK_THROWS_AS(parse_similarity("{\"score\": 1}"), BackendError);
}

TEST_CASE("external backend round trip")
{
    std::string seen_body;
    MockBackend mock([&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        res.set_content(R"({"text": "{\"similarity\": 64}"})", "application/json");
    });
    auto d = BackendDescriptor::external(mock.url(), "tiny");
    std::string text = call_external_backend(d, "hello");
    CHECK(parse_similarity(text) == 64);
    Json sent = Json::parse(seen_body);
    CHECK(sent["prompt"] == "hello");
    CHECK(sent["model"] == "tiny");
}

TEST_CASE("external backend failures are typed")
{
    SUBCASE("timeout after one retry")
    {
        std::atomic<int> hits{0};
        MockBackend mock([&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            std::this_thread::sleep_for(std::chrono::milliseconds(600));
            res.set_content(R"({"text": "late"})", "application/json");
        });
        auto d = BackendDescriptor::external(mock.url());
        d.timeout_ms = 150;
        try {
            call_external_backend(d, "p");
            FAIL("expected a timeout");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendError::Kind::TIMEOUT);
        }
        CHECK(hits.load() == 2);
    }
    SUBCASE("unreachable")
    {
        auto d = BackendDescriptor::external("http://127.0.0.1:1/v1/generate");
        d.timeout_ms = 500;
        try {
            call_external_backend(d, "p");
            FAIL("expected a transport error");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendError::Kind::TRANSPORT);
        }
    }
    SUBCASE("malformed body")
    {
        MockBackend mock([](const httplib::Request&, httplib::Response& res) {
            res.set_content("not json at all", "text/plain");
        });
        try {
            call_external_backend(BackendDescriptor::external(mock.url()), "p");
            FAIL("expected a malformed response");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendError::Kind::MALFORMED_RESPONSE);
        }
    }
    SUBCASE("server error status")
    {
        MockBackend mock([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
        CHECK_THROWS_AS(call_external_backend(BackendDescriptor::external(mock.url()), "p"), BackendError);
    }
    CHECK_THROWS_AS(call_external_backend(BackendDescriptor::rule_based(), "p"), std::invalid_argument);
}
