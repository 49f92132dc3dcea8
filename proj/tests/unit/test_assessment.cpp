#include <doctest.h>

#include "corpus.hpp"
#include "socratic/assessment.hpp"

#include <random>

using namespace socratic;
using testing_support::kP1;
using testing_support::kP2;

namespace {

Verdict with_score(int score, VerdictAction action = VerdictAction::FOLLOW_UP)
{
    Verdict v;
    v.score = score;
    v.action = action;
    return v;
}

std::string joined(const std::vector<std::string>& lines)
{
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i)
        out += (i ? "\n" : "") + lines[i];
    return out;
}

} // namespace

TEST_CASE("mastery follows an exponential moving average")
{
    auto s = KnowledgeState::initial();
    CHECK(update_mastery(s, KC::LOOPS, with_score(100)).mastery.at(KC::LOOPS) == doctest::Approx(0.65));
    CHECK(update_mastery(s, KC::LOOPS, with_score(20)).mastery.at(KC::LOOPS) == doctest::Approx(0.41));
    auto next = update_mastery(s, KC::LOOPS, with_score(20), Misconception::NONE, "q1");
    REQUIRE(next.history.size() == 1);
    CHECK(next.history[0] == MasteryEvent{"q1", KC::LOOPS, 20, 0});
    CHECK(update_mastery(next, KC::TRACING, with_score(0)).history.back().timestamp == 1);
    CHECK(s.mastery.at(KC::LOOPS) == 0.5); // input untouched

    CHECK_THROWS_AS(update_mastery(s, "POINTERS", with_score(50)), UnknownKC);
    KnowledgeState empty;
    CHECK_THROWS_AS(update_mastery(empty, KC::LOOPS, with_score(50)), UnknownKC);
    CHECK_THROWS_AS(update_mastery(s, KC::LOOPS, with_score(101)), std::invalid_argument);
}

TEST_CASE("misconception flags are set by distractors and cleared by a pass")
{
    auto s = KnowledgeState::initial();
    s = update_mastery(s, KC::TRACING, with_score(0), Misconception::OFF_BY_ONE, "q1");
    CHECK(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE));
    s = update_mastery(s, KC::LOOPS, with_score(100, VerdictAction::PASS), Misconception::NONE, "q2");
    CHECK(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE)); // other KCs keep theirs
    s = update_mastery(s, KC::TRACING, with_score(60), Misconception::NONE, "q3");
    CHECK(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE));
    s = update_mastery(s, KC::TRACING, with_score(90, VerdictAction::PASS), Misconception::NONE, "q4");
    CHECK_FALSE(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE));
    // cleared flags only come back with a new distractor choice
    s = update_mastery(s, KC::TRACING, with_score(30), Misconception::NONE, "q5");
    CHECK_FALSE(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE));
    s = update_mastery(s, KC::TRACING, with_score(0), Misconception::OFF_BY_ONE, "q6");
    CHECK(s.flagged(KC::TRACING, Misconception::OFF_BY_ONE));
    CHECK(knowledge_from_json(to_json(s)) == s);
}

TEST_CASE("mastery stays bounded over random update sequences")
{
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> score(0, 100);
    std::uniform_int_distribution<int> kc_pick(0, 6);
    std::uniform_int_distribution<int> len(1, 40);
    int updates = 0;
    for (int seq = 0; seq < 10000; ++seq) {
        auto s = KnowledgeState::initial(std::uniform_real_distribution<double>(0, 1)(rng));
        int n = len(rng);
        for (int i = 0; i < n; ++i) {
            KC kc = kAllKCs[kc_pick(rng)];
            int sc = score(rng);
            auto action = sc >= 80 ? VerdictAction::PASS : VerdictAction::FOLLOW_UP;
            double before = s.mastery.at(kc);
            s = update_mastery(s, kc, with_score(sc, action));
            double after = s.mastery.at(kc);
            REQUIRE(after >= 0.0);
            REQUIRE(after <= 1.0);
            if (action == VerdictAction::PASS && before <= sc / 100.0)
                REQUIRE(after >= before);
            ++updates;
        }
    }
    CHECK(updates > 10000);
}

TEST_CASE("select_next picks the weakest applicable KC")
{
    Program p = parse(kP1);
    CodeFacts f = analyze(p, name_input_sets({{{"n", 3}}}));
    auto s = KnowledgeState::initial();

    auto first = select_next(s, p, f, {}, 0, 5);
    REQUIRE(first);
    CHECK(first->kc == KC::LOOPS);

    s.mastery[KC::LOOPS] = 0.9;
    s.mastery[KC::TRACING] = 0.3;
    CHECK(select_next(s, p, f, {}, 0, 5)->kc == KC::TRACING);
    CHECK_FALSE(select_next(s, p, f, {}, 5, 5));
}

TEST_CASE("select_next agrees with an exhaustive scan over the corpus")
{
    std::mt19937_64 rng(99);
    int checked = 0;
    for (const auto& prog : testing_support::corpus()) {
        CAPTURE(prog.name);
        Program p = parse(prog.source);
        CodeFacts f = analyze(p, name_input_sets(sample_inputs(p, 1, 2)));
        auto units = applicable_units(p, f);
        for (int trial = 0; trial < 30; ++trial) {
            auto s = KnowledgeState::initial();
            for (KC kc : kAllKCs) // coarse values force plenty of ties
                s.mastery[kc] = static_cast<double>(rng() % 5) / 4.0;
            auto pick = select_next(s, p, f, {}, 0, 5);
            if (units.empty()) {
                CHECK_FALSE(pick);
                continue;
            }
            REQUIRE(pick);
            double lowest = 2;
            for (const auto& [kc, us] : units)
                if (!us.empty())
                    lowest = std::min(lowest, s.mastery.at(kc));
            CHECK(s.mastery.at(pick->kc) == lowest);
            // the first KC in fixed order reaching the minimum
            for (KC kc : kAllKCs) {
                if (units.count(kc) && !units.at(kc).empty() && s.mastery.at(kc) == lowest) {
                    CHECK(pick->kc == kc);
                    break;
                }
            }
            const auto& us = units.at(pick->kc);
            CHECK(std::find(us.begin(), us.end(), pick->unit_id) != us.end());
            ++checked;
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("select_next prefers the least-asked unit")
{
    Program p = parse(testing_support::corpus_program("c16_nested_loops").source);
    CodeFacts f = analyze(p, name_input_sets(sample_inputs(p, 1, 2)));
    auto units = applicable_units(p, f);
    REQUIRE(units.at(KC::LOOPS).size() >= 2);
    auto s = KnowledgeState::initial();
    auto first = select_next(s, p, f, {}, 0, 5);
    REQUIRE(first);
    QuestionHistory h = {{"x", "LOOP-INIT", first->unit_id}};
    auto second = select_next(s, p, f, h, 1, 5);
    REQUIRE(second);
    CHECK(second->kc == KC::LOOPS);
    CHECK(second->unit_id != first->unit_id);
}

TEST_CASE("functional tests compare printed output exactly")
{
    Program p1 = parse(kP1);
    // expected text comes from the independent evaluator
    auto oracle = [&](std::int64_t n) { return joined(reference::run(kP1, {{"n", {false, n, {}}}}).outputs); };
    REQUIRE(oracle(3) == "3");
    REQUIRE(oracle(4) == "6");

    auto one = run_functional_tests(p1, {{"n3", {{"n", 3}}, oracle(3)}});
    CHECK(one.passed() == 1);
    CHECK(one.pass_fraction() == 1.0);
    CHECK(one.score() == 100);

    auto two = run_functional_tests(p1, {{"n3", {{"n", 3}}, "3"}, {"n4", {{"n", 4}}, "7"}});
    CHECK(two.passed() == 1);
    CHECK(two.score() == 50);
    CHECK(two.tests[1].actual_output == "6");
    CHECK(run_functional_tests(p1, {{"n3", {{"n", 3}}, "3"}, {"n4", {{"n", 4}}, "6"}}).passed() == 2);

    auto stuck = run_functional_tests(parse(kP2), {{"any", {}, "0\n1\n2\n3\n4"}});
    CHECK(stuck.passed() == 0);
    CHECK(stuck.tests[0].termination == Termination::STEP_BUDGET_EXCEEDED);

    auto bad_input = run_functional_tests(p1, {{"missing", {}, "0"}});
    CHECK_FALSE(bad_input.tests[0].passed);
    CHECK_THROWS_AS(run_functional_tests(p1, {}), std::invalid_argument);
    CHECK(functional_from_json(to_json(two)) == two);

    FunctionalResult thirds;
    thirds.tests = {{"a", {}, "", "", Termination::NORMAL, true}, {"b", {}, "", "", Termination::NORMAL, true},
                    {"c", {}, "", "", Termination::NORMAL, false}};
    CHECK(thirds.score() == 67);
}

TEST_CASE("grade fusion and the unproductive-success flag")
{
    CHECK(fuse_grade(100, 100) == 100);
    CHECK(fuse_grade(100, 20) == 60);
    CHECK(fuse_grade(40, 90) == 65);
    for (int f = 0; f <= 100; ++f)
        for (int d = 0; d <= 100; ++d)
            REQUIRE(fuse_grade(f, d) == static_cast<int>(std::lround((f + d) / 2.0)));
    for (int f : {79, 80, 81})
        for (int d : {49, 50, 51})
            CHECK(unproductive_success(f, d) == (f >= 80 && d < 50));
    CHECK(unproductive_success(100, 20));
    CHECK_FALSE(unproductive_success(40, 90));
    CHECK(fuse_grade(100, 0, {0.8, 0.2}) == 80);
}

TEST_CASE("dialogue score counts unanswered slots as zero")
{
    CHECK(dialogue_score({}, 3) == 0);
    CHECK(dialogue_score({100, 100, 100}, 3) == 100);
    CHECK(dialogue_score({100}, 3) == 33);
    CHECK(dialogue_score({100, 50}, 3) == 50);
    CHECK(dialogue_score({}, 0) == 0);
}

TEST_CASE("reports need a finished session and are stable")
{
    ReportInput in;
    in.session_id = "s1";
    in.submission_id = "sub1";
    in.state = "TIER1_PENDING";
    in.functional.tests = {{"n3", {{"n", 3}}, "3", "3", Termination::NORMAL, true}};
    in.knowledge = KnowledgeState::initial();
    CHECK_THROWS_AS(compile_report(in), SessionNotFinished);

    in.state = "ABORTED";
    in.aborted = true;
    in.question_budget = 3;
    auto r = compile_report(in);
    CHECK(r.functional_score == 100);
    CHECK(r.dialogue_score == 0);
    CHECK(r.required_questions == 3);
    CHECK(r.final_grade == 50);
    CHECK(r.unproductive_success);

    in.state = "COMPLETED";
    in.aborted = false;
    QuestionRecord q{{"q1"}, "LOOP-INIT", KC::LOOPS, "U0", {Verdict{100, 100, VerdictAction::PASS, {0}, {}}}, 100};
    in.questions = {q, q};
    auto done = compile_report(in);
    CHECK(done.dialogue_score == 100);
    CHECK(done.final_grade == 100);
    CHECK_FALSE(done.unproductive_success);
    CHECK(to_json(compile_report(in)).dump() == to_json(done).dump());
    CHECK(question_record_from_json(to_json(q)) == q);
}

TEST_CASE("assignment config round-trips and validates")
{
    Json j = Json::parse(R"({
        "assignment_id": "sum-to-n",
        "title": "Sum below n",
        "tests": [{"name": "n3", "inputs": {"n": 3}, "expected_output": "3"}],
        "input_domains": {"n": {"lo": 0, "hi": 6}},
        "question_budget": 3,
        "weights": {"functional": 0.6, "dialogue": 0.4}
    })");
    auto c = assignment_from_json(j);
    CHECK(c.question_budget == 3);
    CHECK(c.weights.functional == 0.6);
    CHECK(c.verifier.max_attempts == 3);
    CHECK(c.input_domains.at("n") == InputDomain{0, 6});
    CHECK(assignment_from_json(to_json(c)) == c);

    Json no_tests = j;
    no_tests["tests"] = Json::array();
    CHECK_THROWS(assignment_from_json(no_tests));
    Json zero = j;
    zero["question_budget"] = 0;
    CHECK_THROWS(assignment_from_json(zero));
}
