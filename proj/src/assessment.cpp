#include "socratic/assessment.hpp"

#include <algorithm>
#include <cmath>

namespace socratic {

std::string_view to_string(SessionMode m)
{
    return m == SessionMode::FORMATIVE ? "FORMATIVE" : "SUMMATIVE";
}

SessionMode session_mode_from_string(std::string_view s)
{
    if (s == "FORMATIVE")
        return SessionMode::FORMATIVE;
    if (s == "SUMMATIVE")
        return SessionMode::SUMMATIVE;
    throw std::invalid_argument("unknown mode " + std::string(s));
}

KnowledgeState KnowledgeState::initial(double mastery)
{
    KnowledgeState s;
    for (KC kc : kAllKCs)
        s.mastery[kc] = mastery;
    return s;
}

bool KnowledgeState::flagged(KC kc, Misconception m) const
{
    auto it = misconceptions.find({kc, m});
    return it != misconceptions.end() && it->second;
}

Json to_json(const KnowledgeState& s)
{
    Json mastery = Json::object();
    for (const auto& [kc, m] : s.mastery)
        mastery[std::string(to_string(kc))] = m;
    Json flags = Json::array();
    for (const auto& [key, on] : s.misconceptions)
        flags.push_back({{"kc", std::string(to_string(key.first))},
                         {"tag", std::string(to_string(key.second))},
                         {"flag", on}});
    Json history = Json::array();
    for (const auto& e : s.history)
        history.push_back({{"question_id", e.question_id},
                           {"kc", std::string(to_string(e.kc))},
                           {"score", e.score},
                           {"timestamp", e.timestamp}});
    return {{"mastery", mastery}, {"misconceptions", flags}, {"history", history}};
}

KnowledgeState knowledge_from_json(const Json& j)
{
    KnowledgeState s;
    for (const auto& [k, v] : j.at("mastery").items())
        s.mastery[kc_from_string(k)] = v.get<double>();
    for (const auto& f : j.at("misconceptions"))
        s.misconceptions[{kc_from_string(f.at("kc").get<std::string>()),
                          misconception_from_string(f.at("tag").get<std::string>())}] = f.at("flag").get<bool>();
    for (const auto& e : j.at("history"))
        s.history.push_back({e.at("question_id").get<std::string>(), kc_from_string(e.at("kc").get<std::string>()),
                             e.at("score").get<int>(), e.at("timestamp").get<std::int64_t>()});
    return s;
}

KnowledgeState update_mastery(const KnowledgeState& state, KC kc, const Verdict& verdict, Misconception chosen_tag,
                              const std::string& question_id, double alpha)
{
    auto it = state.mastery.find(kc);
    if (it == state.mastery.end())
        throw UnknownKC(std::string(to_string(kc)));
    if (verdict.score < 0 || verdict.score > 100)
        throw std::invalid_argument("score outside 0..100");
    if (alpha < 0 || alpha > 1)
        throw std::invalid_argument("alpha outside 0..1");

    KnowledgeState next = state;
    double m = (1 - alpha) * it->second + alpha * (verdict.score / 100.0);
    next.mastery[kc] = std::clamp(m, 0.0, 1.0);
    if (chosen_tag != Misconception::NONE)
        next.misconceptions[{kc, chosen_tag}] = true;
    if (verdict.action == VerdictAction::PASS)
        for (auto& [key, on] : next.misconceptions)
            if (key.first == kc)
                on = false;
    next.history.push_back({question_id, kc, verdict.score, static_cast<std::int64_t>(state.history.size())});
    return next;
}

KnowledgeState update_mastery(const KnowledgeState& state, std::string_view kc, const Verdict& verdict,
                              Misconception chosen_tag, const std::string& question_id, double alpha)
{
    KC parsed;
    try {
        parsed = kc_from_string(kc);
    } catch (const std::exception&) {
        throw UnknownKC(std::string(kc));
    }
    return update_mastery(state, parsed, verdict, chosen_tag, question_id, alpha);
}

std::optional<Selection> select_next(const KnowledgeState& state, const Program& program, const CodeFacts& facts,
                                     const QuestionHistory& history, int questions_closed, int question_budget,
                                     const TemplateLibrary& library)
{
    if (questions_closed >= question_budget)
        return std::nullopt;
    auto units = applicable_units(program, facts, history, library);
    std::optional<KC> best;
    double best_mastery = 2;
    for (KC kc : kAllKCs) { // fixed order, so strict < keeps the earliest tie
        auto u = units.find(kc);
        if (u == units.end() || u->second.empty())
            continue;
        auto m = state.mastery.find(kc);
        if (m == state.mastery.end())
            throw UnknownKC(std::string(to_string(kc)));
        if (m->second < best_mastery) {
            best_mastery = m->second;
            best = kc;
        }
    }
    if (!best)
        return std::nullopt;

    std::string pick;
    long fewest = -1;
    for (const auto& unit_id : units.at(*best)) {
        long asked = std::count_if(history.begin(), history.end(),
                                   [&](const AskedQuestion& a) { return a.unit_id == unit_id; });
        if (fewest < 0 || asked < fewest) {
            fewest = asked;
            pick = unit_id;
        }
    }
    return Selection{*best, pick};
}

int FunctionalResult::passed() const
{
    return static_cast<int>(std::count_if(tests.begin(), tests.end(), [](const FunctionalCase& c) { return c.passed; }));
}

double FunctionalResult::pass_fraction() const
{
    return tests.empty() ? 0.0 : static_cast<double>(passed()) / static_cast<double>(tests.size());
}

int FunctionalResult::score() const
{
    if (tests.empty())
        return 0;
    // integer arithmetic keeps the rounding exact
    long n = static_cast<long>(tests.size());
    return static_cast<int>((200L * passed() + n) / (2 * n));
}

namespace {

Termination termination_from_string(std::string_view s)
{
    for (auto t : {Termination::NORMAL, Termination::STEP_BUDGET_EXCEEDED, Termination::RUNTIME_FAULT})
        if (to_string(t) == s)
            return t;
    throw std::invalid_argument("unknown termination " + std::string(s));
}

} // namespace

Json to_json(const FunctionalTest& t)
{
    return {{"name", t.name}, {"inputs", to_json(t.inputs)}, {"expected_output", t.expected_output}};
}

FunctionalTest functional_test_from_json(const Json& j)
{
    FunctionalTest t;
    t.name = j.at("name").get<std::string>();
    t.inputs = inputs_from_json(j.value("inputs", Json::object()));
    t.expected_output = j.at("expected_output").get<std::string>();
    return t;
}

Json to_json(const FunctionalResult& r)
{
    Json tests = Json::array();
    for (const auto& c : r.tests)
        tests.push_back({{"name", c.name},
                         {"inputs", to_json(c.inputs)},
                         {"expected_output", c.expected_output},
                         {"actual_output", c.actual_output},
                         {"termination", std::string(to_string(c.termination))},
                         {"passed", c.passed}});
    return {{"tests", tests}, {"passed", r.passed()}, {"total", r.tests.size()}, {"score", r.score()}};
}

FunctionalResult functional_from_json(const Json& j)
{
    FunctionalResult r;
    for (const auto& c : j.at("tests"))
        r.tests.push_back({c.at("name").get<std::string>(), inputs_from_json(c.at("inputs")),
                           c.at("expected_output").get<std::string>(), c.at("actual_output").get<std::string>(),
                           termination_from_string(c.at("termination").get<std::string>()),
                           c.at("passed").get<bool>()});
    return r;
}

FunctionalResult run_functional_tests(const Program& program, const std::vector<FunctionalTest>& tests,
                                      int step_budget)
{
    if (tests.empty())
        throw std::invalid_argument("an assignment needs at least one functional test");
    FunctionalResult r;
    for (const auto& t : tests) {
        FunctionalCase c{t.name, t.inputs, t.expected_output, "", Termination::NORMAL, false};
        try {
            TraceLog log = execute(program, t.inputs, step_budget);
            c.actual_output = log.output();
            c.termination = log.termination;
            c.passed = log.termination == Termination::NORMAL && c.actual_output == t.expected_output;
        } catch (const InvalidInputs& e) {
            // a test the program cannot even accept is a failed test
            c.termination = Termination::RUNTIME_FAULT;
            c.actual_output = e.what();
        }
        r.tests.push_back(std::move(c));
    }
    return r;
}

int fuse_grade(int functional_score, int dialogue_score, const FusionWeights& w)
{
    return static_cast<int>(std::lround(w.functional * functional_score + w.dialogue * dialogue_score));
}

bool unproductive_success(int functional_score, int dialogue_score)
{
    return functional_score >= 80 && dialogue_score < 50;
}

int dialogue_score(const std::vector<int>& closed_scores, int required)
{
    int slots = std::max<int>(required, static_cast<int>(closed_scores.size()));
    if (slots == 0)
        return 0;
    long sum = 0;
    for (int s : closed_scores)
        sum += s;
    return static_cast<int>((2 * sum + slots) / (2L * slots));
}

Json to_json(const QuestionRecord& r)
{
    Json verdicts = Json::array();
    for (const auto& v : r.verdicts)
        verdicts.push_back(to_json(v));
    Json j = {{"question_ids", r.question_ids},
              {"template_id", r.template_id},
              {"kc", std::string(to_string(r.kc))},
              {"unit_id", r.unit_id},
              {"verdicts", verdicts}};
    j["score"] = r.score ? Json(*r.score) : Json(nullptr);
    return j;
}

QuestionRecord question_record_from_json(const Json& j)
{
    QuestionRecord r;
    r.question_ids = j.at("question_ids").get<std::vector<std::string>>();
    r.template_id = j.at("template_id").get<std::string>();
    r.kc = kc_from_string(j.at("kc").get<std::string>());
    r.unit_id = j.at("unit_id").get<std::string>();
    for (const auto& v : j.at("verdicts"))
        r.verdicts.push_back(verdict_from_json(v));
    if (!j.at("score").is_null())
        r.score = j["score"].get<int>();
    return r;
}

AssessmentReport compile_report(const ReportInput& in)
{
    if (in.state != "COMPLETED" && in.state != "ABORTED")
        throw SessionNotFinished(in.state);
    AssessmentReport r;
    r.session_id = in.session_id;
    r.submission_id = in.submission_id;
    r.mode = in.mode;
    r.state = in.state;
    r.functional = in.functional;
    r.functional_score = in.functional.score();

    std::vector<int> closed;
    for (const auto& q : in.questions)
        if (q.score)
            closed.push_back(*q.score);
    r.required_questions = in.aborted ? in.question_budget : static_cast<int>(in.questions.size());
    r.dialogue_score = dialogue_score(closed, r.required_questions);
    r.final_grade = fuse_grade(r.functional_score, r.dialogue_score, in.weights);
    r.unproductive_success = unproductive_success(r.functional_score, r.dialogue_score);
    r.per_kc = in.knowledge.mastery;
    for (const auto& [key, on] : in.knowledge.misconceptions)
        if (on)
            r.misconceptions.push_back(key);
    r.per_question = in.questions;
    return r;
}

Json to_json(const AssessmentReport& r)
{
    Json per_kc = Json::object();
    for (const auto& [kc, m] : r.per_kc)
        per_kc[std::string(to_string(kc))] = m;
    Json flags = Json::array();
    for (const auto& [kc, tag] : r.misconceptions)
        flags.push_back({{"kc", std::string(to_string(kc))}, {"tag", std::string(to_string(tag))}});
    Json questions = Json::array();
    for (const auto& q : r.per_question)
        questions.push_back(to_json(q));
    return {{"session_id", r.session_id},
            {"submission_id", r.submission_id},
            {"mode", std::string(to_string(r.mode))},
            {"state", r.state},
            {"functional_score", r.functional_score},
            {"dialogue_score", r.dialogue_score},
            {"final_grade", r.final_grade},
            {"unproductive_success", r.unproductive_success},
            {"required_questions", r.required_questions},
            {"per_kc", per_kc},
            {"misconceptions", flags},
            {"per_question", questions},
            {"functional", to_json(r.functional)}};
}

Json to_json(const AssignmentConfig& c)
{
    Json tests = Json::array();
    for (const auto& t : c.tests)
        tests.push_back(to_json(t));
    Json domains = Json::object();
    for (const auto& [name, d] : c.input_domains)
        domains[name] = {{"lo", d.lo}, {"hi", d.hi}};
    return {{"assignment_id", c.assignment_id},
            {"title", c.title},
            {"tests", tests},
            {"input_domains", domains},
            {"sample_seed", c.sample_seed},
            {"sample_count", c.sample_count},
            {"question_budget", c.question_budget},
            {"step_budget", c.step_budget},
            {"thresholds",
             {{"pass", c.verifier.pass_threshold},
              {"focused", c.verifier.focused_threshold},
              {"max_attempts", c.verifier.max_attempts}}},
            {"weights", {{"functional", c.weights.functional}, {"dialogue", c.weights.dialogue}}},
            {"alpha", c.alpha},
            {"followup_cap", c.followup_cap},
            {"summative_time_limit_s", c.summative_time_limit_s}};
}

AssignmentConfig assignment_from_json(const Json& j)
{
    AssignmentConfig c;
    c.assignment_id = j.at("assignment_id").get<std::string>();
    c.title = j.value("title", c.assignment_id);
    for (const auto& t : j.at("tests"))
        c.tests.push_back(functional_test_from_json(t));
    if (c.tests.empty())
        throw std::invalid_argument("assignment " + c.assignment_id + " has no tests");
    Json domains = j.value("input_domains", Json::object());
    for (const auto& [name, d] : domains.items()) {
        InputDomain dom{d.at("lo").get<std::int64_t>(), d.at("hi").get<std::int64_t>()};
        if (dom.lo > dom.hi)
            throw std::invalid_argument("empty input domain for " + name);
        c.input_domains[name] = dom;
    }
    c.sample_seed = j.value("sample_seed", c.sample_seed);
    c.sample_count = j.value("sample_count", c.sample_count);
    c.question_budget = j.value("question_budget", c.question_budget);
    c.step_budget = j.value("step_budget", c.step_budget);
    if (j.contains("thresholds")) {
        const auto& t = j["thresholds"];
        c.verifier.pass_threshold = t.value("pass", c.verifier.pass_threshold);
        c.verifier.focused_threshold = t.value("focused", c.verifier.focused_threshold);
        c.verifier.max_attempts = t.value("max_attempts", c.verifier.max_attempts);
    }
    if (j.contains("weights")) {
        c.weights.functional = j["weights"].value("functional", c.weights.functional);
        c.weights.dialogue = j["weights"].value("dialogue", c.weights.dialogue);
    }
    c.alpha = j.value("alpha", c.alpha);
    c.followup_cap = j.value("followup_cap", c.followup_cap);
    c.summative_time_limit_s = j.value("summative_time_limit_s", c.summative_time_limit_s);

    if (c.question_budget < 1 || c.sample_count < 1 || c.step_budget < 1 || c.verifier.max_attempts < 1)
        throw std::invalid_argument("assignment " + c.assignment_id + " has a non-positive budget");
    if (c.followup_cap < 0 || c.alpha < 0 || c.alpha > 1)
        throw std::invalid_argument("assignment " + c.assignment_id + " has an invalid tracker setting");
    return c;
}

} // namespace socratic
