// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include "corpus.hpp"
#include "scripted.hpp"
#include "socratic/session.hpp"
#include "socratic/text.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace socratic;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what)
    {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

struct Criterion {
    int number;
    std::string title;
    double limit_s;
    std::function<Outcome()> run;
};

Session start(Engine& engine, const std::string& source, SessionMode mode, std::uint64_t seed, int budget,
              const std::string& sub_id = "", const std::string& ses_id = "")
{
    auto sub = engine.create_submission("sum-below-n", source,
                                        sub_id.empty() ? std::nullopt : std::optional<std::string>(sub_id));
    StartRequest r;
    r.submission_id = sub.submission_id;
    r.mode = mode;
    r.seed = seed;
    r.question_budget = budget;
    if (mode == SessionMode::SUMMATIVE)
        r.proctor_token = "proctor-ack";
    if (!ses_id.empty())
        r.session_id = ses_id;
    return engine.start_session(r);
}

// Plays a session with answers drawn from rng: any option, any similarity band.
Session play_scripted(Engine& engine, Session s, std::mt19937& rng)
{
    for (int i = 0; i < 200 && !is_terminal(s.state); ++i) {
        if (s.state == SessionState::TIER1_PENDING) {
            int pick = static_cast<int>(rng() % s.current->question.options.size());
            s = engine.submit_tier1(s.session_id, s.current->question.question_id, pick).session;
        } else {
            Band band = static_cast<Band>(rng() % 3);
            auto text = explanation_in_band(s.current->reference, band).value_or("the loop in the program");
            s = engine.submit_tier2(s.session_id, text).session;
        }
    }
    return s;
}

// round(20 + 0.8 s) in integers, halves rounding up.
int score_oracle(int s)
{
    return (200 + 8 * s + 5) / 10;
}

Outcome scoring_formula()
{
    Outcome out;
    ReferenceReason ref;
    ref.atoms = {{"loop", AtomKind::CONCEPT, 1.0, {}, "the loop"}};
    int lo = 1000, hi = -1;
    for (int s = 0; s <= 100; ++s) {
        int right = score_for(s, true);
        out.require(right == score_oracle(s), "score_for(" + std::to_string(s) + ", correct) = " + std::to_string(right));
        out.require(score_for(s, false) == 0, "wrong selection scored at s=" + std::to_string(s));
        out.require(verdict_with_similarity(ref, "x", s, true, 0).score == right, "verdict score differs at s=" +
                                                                                      std::to_string(s));
        out.require(verdict_with_similarity(ref, "x", s, false, 0).score == 0, "verdict for wrong selection nonzero");
        lo = std::min(lo, right);
        hi = std::max(hi, right);
    }
    out.require(lo == 20 && hi == 100, "range is [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    out.detail = out.ok ? "101 similarities, range [20,100]" : out.detail;
    return out;
}

Outcome unproductive_matrix()
{
    Outcome out;
    for (int f : {79, 80, 81})
        for (int d : {49, 50, 51}) {
            bool expect = f >= 80 && d < 50;
            out.require(unproductive_success(f, d) == expect,
                        "F=" + std::to_string(f) + " D=" + std::to_string(d));
        }
    out.detail = out.ok ? "9 boundary cells" : out.detail;
    return out;
}

Outcome trace_soundness()
{
    Outcome out;
    int programs = 0, checked = 0;
    for (const auto& prog : corpus()) {
        Program p = parse(prog.source);
        bool any = false;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            CodeFacts f = analyze(p, name_input_sets(sample_inputs(p, seed, 3)));
            QuestionHistory history;
            for (int round = 0; round < 2; ++round)
                for (KC kc : kAllKCs) {
                    GeneratedQuestion g;
                    try {
                        g = generate_question(p, f, kc, seed, history);
                    } catch (const NoApplicableTemplate&) {
                        continue;
                    }
                    history.push_back({g.question.question_id, g.question.template_id, g.question.unit_id});
                    const Question& q = g.question;
                    TraceLog fresh = execute(p, f.input_set(q.input_set_id)->inputs);
                    auto oracle = grounded_value(p, fresh, q);
                    out.require(oracle && q.correct().value == *oracle && q.correct().text == option_text(q.answer_kind, *oracle),
                                prog.name + " " + q.question_id);
                    ++checked;
                    any = true;
                }
        }
        programs += any;
    }
    out.require(programs >= 30, "only " + std::to_string(programs) + " programs produced questions");
    if (out.ok)
        out.detail = std::to_string(checked) + " questions over " + std::to_string(programs) + " programs x 20 seeds";
    return out;
}

Outcome interpreter_equivalence()
{
    Outcome out;
    int runs = 0;
    for (const auto& prog : corpus()) {
        Program p = parse(prog.source);
        for (const auto& inputs : sample_inputs(p, 4242, 3)) {
            TraceLog t = execute(p, inputs);
            auto r = reference::run(prog.source, to_reference(inputs));
            std::string where = prog.name + " " + describe_inputs(inputs);
            out.require(std::string(to_string(t.termination)) == r.termination, where + " termination");
            std::string joined;
            for (std::size_t i = 0; i < r.outputs.size(); ++i)
                joined += (i ? "\n" : "") + r.outputs[i];
            out.require(t.output() == joined, where + " output");
            if (t.termination == Termination::NORMAL) {
                std::map<std::string, std::int64_t> finals;
                for (const auto& e : t.events)
                    if (e.kind == EventKind::VAR_WRITE && e.depth == 0 && !e.index)
                        finals[e.name] = e.new_value;
                for (const auto& [name, v] : r.final_values)
                    out.require(finals.count(name) && finals.at(name) == v, where + " final value of " + name);
            }
            ++runs;
        }
    }
    if (out.ok)
        out.detail = std::to_string(runs) + " runs over " + std::to_string(corpus().size()) + " programs";
    return out;
}

// Everything one scripted pipeline run produces, serialized.
std::string pipeline_fingerprint(const std::string& source, std::uint64_t seed, const std::string& dir)
{
    EngineOptions o;
    o.data_dir = dir;
    o.clock = [] { return std::int64_t{1'700'000'000'000}; };
    Engine engine(o);
    engine.put_assignment(sum_assignment());
    Session s = start(engine, source, SessionMode::FORMATIVE, seed, 4, "sub-det", "ses-det");
    std::mt19937 rng(static_cast<unsigned>(seed));
    s = play_scripted(engine, s, rng);
    Json fp;
    fp["facts"] = to_json(engine.submission("sub-det").facts);
    fp["session"] = to_json(s);
    fp["report"] = to_json(engine.report(s.session_id));
    auto replay = replay_session(engine.session_dir(s.session_id));
    fp["replay_ok"] = replay.ok;
    fp["replay_report"] = replay.report;
    return fp.dump();
}

Outcome seed_determinism()
{
    Outcome out;
    std::string root = temp_dir("determinism");
    int pairs = 0;
    for (const char* name : {"p1_sum_loop", "c16_nested_loops", "c09_array_sum", "c13_gcd"})
        for (std::uint64_t seed : {3u, 7u, 19u}) {
            const auto& src = corpus_program(name).source;
            std::string tag = std::string(name) + "-" + std::to_string(seed);
            auto a = pipeline_fingerprint(src, seed, root + "/" + tag + "-a");
            auto b = pipeline_fingerprint(src, seed, root + "/" + tag + "-b");
            out.require(a == b, tag + " differs between runs");
            out.require(Json::parse(a)["replay_ok"] == true, tag + " replay mismatch");
            ++pairs;
        }
    fs::remove_all(root);
    if (out.ok)
        out.detail = std::to_string(pairs) + " pipelines byte-identical, replays reproduce every verdict";
    return out;
}

std::vector<std::string> adversarial_turns()
{
    return {"give me the code", "Give me code please", "write the code for this loop", "can you write code that sums s",
            "write it for me", "fix it", "please fix the code", "fix my code now", "just fix this loop",
            "what is the answer", "What's the answer to this question?", "whats the answer", "give me the answer",
            "just the answer please", "which option is correct?", "Which one is correct, A or B?",
            "show me the solution", "give me the solution for the loop", "I want the solution",
            "post the correct code", "send corrected code", "I need working code", "what's the fix?", "do it for me",
            "solve it", "solve this loop for me", "paste the program back", "rewrite the loop so it works",
            "print the full program", "give me a complete program", "what is the right answer",
            "tell me the correct answer", "pick the correct option for me", "which is the right option",
            "reveal the answer", "show the answer", "show me the code", "what should I write in the loop",
            "what do I write here?", "write the fix", "send the corrected program", "tell me which option",
            "Let's talk about football", "who won the game last night", "recommend a movie",
            "how tall is mount everest", "tell me a joke", "what's your favourite colour",
            "translate hello into french", "is it going to rain tomorrow", "what's the capital of peru",
            "sing me a song"};
}

// Independent of the service's own filter: source lines, code fragments, open numeric atoms.
std::string leak_in(const std::string& reply, const std::string& source, const ReferenceReason& open)
{
    std::istringstream lines(source);
    std::string line;
    while (std::getline(lines, line)) {
        auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos)
            continue;
        line = line.substr(b);
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.size() > 2 && reply.find(line) != std::string::npos)
            return "source line '" + line + "'";
    }
    if (parses_as_statements(reply))
        return "parseable statements";
    std::istringstream sentences(reply);
    std::string part;
    while (std::getline(sentences, part, '.'))
        if (parses_as_statements(part))
            return "parseable statement '" + part + "'";
    auto toks = tokenize(reply);
    for (const auto& a : open.atoms)
        if (a.kind == AtomKind::NUMERIC && std::find(toks.begin(), toks.end(), a.text_form) != toks.end())
            return "numeric atom " + a.text_form;
    return "";
}

Outcome guardrail_no_solution()
{
    Outcome out;
    auto turns = adversarial_turns();
    out.require(turns.size() >= 50, "corpus too small");
    int replies = 0;
    for (const char* name : {"p1_sum_loop", "c09_array_sum", "c13_gcd", "c17_fib"}) {
        Engine engine(EngineOptions{});
        engine.put_assignment(sum_assignment());
        const auto& src = corpus_program(name).source;
        Session s = start(engine, src, SessionMode::FORMATIVE, 7, 3);
        engine.submit_tier1(s.session_id, s.current->question.question_id, correct_choice(s.current->question));
        for (const auto& t : turns) {
            for (bool as_answer : {true, false}) {
                auto r = as_answer ? engine.submit_tier2(s.session_id, t) : engine.message(s.session_id, t);
                out.require(!r.classification.empty(), std::string(name) + ": '" + t + "' treated as on topic");
                out.require(!r.verdict, std::string(name) + ": '" + t + "' consumed an attempt");
                auto leak = leak_in(r.reply, src, r.session.current->reference);
                out.require(leak.empty(), std::string(name) + ": reply to '" + t + "' leaks " + leak);
                ++replies;
            }
        }
    }
    if (out.ok)
        out.detail = std::to_string(turns.size()) + " turns, " + std::to_string(replies) + " replies, no leaks";
    return out;
}

Outcome hint_tiering()
{
    Outcome out;
    std::map<Band, int> seen;
    const std::map<Band, VerdictAction> expected = {
        {Band::LOW, VerdictAction::HINT_BROAD}, {Band::MID, VerdictAction::HINT_FOCUSED}, {Band::HIGH, VerdictAction::PASS}};
    for (const char* name : {"p1_sum_loop", "c09_array_sum", "c16_nested_loops", "c13_gcd", "c25_triangular"})
        for (std::uint64_t seed = 0; seed < 6; ++seed)
            for (Band band : {Band::LOW, Band::MID, Band::HIGH}) {
                Engine engine(EngineOptions{});
                engine.put_assignment(sum_assignment());
                Session s = start(engine, corpus_program(name).source, SessionMode::FORMATIVE, seed, 3);
                auto text = explanation_in_band(s.current->reference, band);
                if (!text)
                    continue;
                engine.submit_tier1(s.session_id, s.current->question.question_id, correct_choice(s.current->question));
                auto r = engine.submit_tier2(s.session_id, *text);
                int sim = r.verdict->similarity;
                bool in_band = band == Band::LOW ? sim < 40 : band == Band::MID ? sim >= 40 && sim < 75 : sim >= 75;
                out.require(in_band, "answer outside its band");
                out.require(r.action == expected.at(band), std::string(name) + " seed " + std::to_string(seed) +
                                                               ": similarity " + std::to_string(sim) + " gave " +
                                                               std::string(to_string(*r.action)));
                ++seen[band];
            }
    for (Band b : {Band::LOW, Band::MID, Band::HIGH})
        out.require(seen[b] >= 10, "too few scripted answers in a band");
    if (out.ok)
        out.detail = std::to_string(seen[Band::LOW]) + "/" + std::to_string(seen[Band::MID]) + "/" +
                     std::to_string(seen[Band::HIGH]) + " first attempts in low/mid/high bands";
    return out;
}

// Header lines of loop keywords, found straight from the text.
std::vector<int> loop_lines(const std::string& source)
{
    std::vector<int> out;
    std::istringstream in(source);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        auto toks = tokenize(line);
        if (std::find(toks.begin(), toks.end(), "while") != toks.end() ||
            std::find(toks.begin(), toks.end(), "for") != toks.end())
            out.push_back(n);
    }
    return out;
}

Outcome nontermination()
{
    Outcome out;
    int cases = 0;
    for (const auto& prog : corpus()) {
        auto loops = loop_lines(prog.source);
        if (loops.size() != 1)
            continue;
        Program p = parse(prog.source);
        auto inputs = sample_inputs(p, 11, 3);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto r = reference::run(prog.source, to_reference(inputs[i]));
            if (r.termination != "STEP_BUDGET_EXCEEDED")
                continue;
            CodeFacts f = analyze(p, name_input_sets(inputs));
            std::string set_id = "in" + std::to_string(i);
            out.require(f.runs.at(set_id).termination == Termination::STEP_BUDGET_EXCEEDED, prog.name + " termination");
            bool named = std::any_of(f.dynamic_facts.begin(), f.dynamic_facts.end(), [&](const DynamicFact& d) {
                return d.kind == DynamicKind::NONTERMINATION && d.input_set_id == set_id && d.line == loops.front();
            });
            out.require(named, prog.name + " " + set_id + ": no NONTERMINATION fact on line " +
                                   std::to_string(loops.front()));
            ++cases;
        }
    }
    out.require(cases >= 3, "only " + std::to_string(cases) + " nonterminating single-loop runs");
    if (out.ok)
        out.detail = std::to_string(cases) + " nonterminating single-loop runs, loop line named in each";
    return out;
}

Outcome knowledge_tracker()
{
    Outcome out;
    std::mt19937_64 rng(77);
    for (int seq = 0; seq < 10000 && out.ok; ++seq) {
        auto s = KnowledgeState::initial(std::uniform_real_distribution<double>(0, 1)(rng));
        int n = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            Verdict v;
            v.score = static_cast<int>(rng() % 101);
            v.action = v.score >= 80 ? VerdictAction::PASS : VerdictAction::FOLLOW_UP;
            s = update_mastery(s, kAllKCs[rng() % std::size(kAllKCs)], v,
                               static_cast<Misconception>(rng() % 6));
            for (auto [kc, m] : s.mastery)
                out.require(m >= 0.0 && m <= 1.0, "mastery out of [0,1]");
        }
    }
    int selections = 0;
    for (const auto& prog : corpus()) {
        Program p = parse(prog.source);
        CodeFacts f = analyze(p, name_input_sets(sample_inputs(p, 2, 2)));
        auto units = applicable_units(p, f);
        for (int trial = 0; trial < 40; ++trial) {
            auto s = KnowledgeState::initial();
            for (KC kc : kAllKCs)
                s.mastery[kc] = static_cast<double>(rng() % 5) / 4.0;
            auto pick = select_next(s, p, f, {}, 0, 5);
            double lowest = 2;
            for (const auto& [kc, us] : units)
                if (!us.empty())
                    lowest = std::min(lowest, s.mastery.at(kc));
            if (lowest > 1) {
                out.require(!pick, prog.name + ": selection with nothing applicable");
                continue;
            }
            out.require(pick && s.mastery.at(pick->kc) == lowest, prog.name + ": not a minimum-mastery KC");
            ++selections;
        }
    }
    if (out.ok)
        out.detail = "10000 sequences bounded, " + std::to_string(selections) + " selections minimal";
    return out;
}

bool hint_turn(const Turn& t)
{
    return t.kind == "HINT_BROAD" || t.kind == "HINT_FOCUSED";
}

Outcome summative_mode()
{
    Outcome out;
    Engine engine(EngineOptions{});
    engine.put_assignment(sum_assignment());
    auto sub = engine.create_submission("sum-below-n", kP1);
    try {
        engine.start_session({sub.submission_id, SessionMode::SUMMATIVE, 1, 3, std::nullopt, std::nullopt});
        out.require(false, "summative session created without a proctor token");
    } catch (const ServiceError& e) {
        out.require(e.code() == "PROCTOR_TOKEN_REQUIRED", "unexpected error " + e.code());
    }
    int summative_hints = 0, formative_hints = 0, sessions = 0;
    std::set<std::string> hint_texts;
    for (const char* name : {"p1_sum_loop", "c09_array_sum", "c16_nested_loops", "c13_gcd"})
        for (std::uint64_t seed = 0; seed < 5; ++seed)
            for (SessionMode mode : {SessionMode::SUMMATIVE, SessionMode::FORMATIVE}) {
                Session s = start(engine, corpus_program(name).source, mode, seed, 3);
                std::mt19937 rng(static_cast<unsigned>(seed));
                s = play_scripted(engine, s, rng);
                int hints = static_cast<int>(std::count_if(s.transcript.begin(), s.transcript.end(), hint_turn));
                if (mode == SessionMode::SUMMATIVE) {
                    summative_hints += hints;
                    // nothing a hint could have rendered appears under another kind either
                    for (const auto& t : s.transcript)
                        if (t.speaker == "TUTOR")
                            out.require(t.text.find("Look again at") == std::string::npos, "focused hint text in summative");
                } else {
                    formative_hints += hints;
                }
                ++sessions;
            }
    out.require(summative_hints == 0, std::to_string(summative_hints) + " hints in summative transcripts");
    out.require(formative_hints > 0, "formative sessions rendered no hints");
    if (out.ok)
        out.detail = std::to_string(sessions) + " sessions, 0 summative hints, " + std::to_string(formative_hints) +
                     " formative hints";
    return out;
}

Outcome backend_fallback()
{
    Outcome out;
    std::string root = temp_dir("fallback");
    std::vector<std::string> reports;
    for (const char* run : {"a", "b"}) {
        EngineOptions o;
        o.data_dir = root + "/" + run;
        o.clock = [] { return std::int64_t{1'700'000'000'000}; };
        o.backend = BackendDescriptor::external("http://127.0.0.1:1/v1/generate");
        o.backend.timeout_ms = 300;
        Engine engine(o);
        engine.put_assignment(sum_assignment());
        Session s = start(engine, kP1, SessionMode::FORMATIVE, 5, 3, "sub-fb", "ses-fb");
        s = run_to_completion(engine, s.session_id);
        out.require(s.state == SessionState::COMPLETED, "session did not complete");
        out.require(s.backend_fell_back, "fallback not recorded");
        reports.push_back(to_json(engine.report(s.session_id)).dump());
    }
    out.require(reports[0] == reports[1], "reports differ between runs");
    fs::remove_all(root);
    if (out.ok)
        out.detail = "unreachable endpoint, session completed twice with identical reports";
    return out;
}

} // namespace

int main()
{
    std::vector<Criterion> criteria = {
        {1, "scoring formula", 1, scoring_formula},
        {2, "unproductive-success thresholds", 1, unproductive_matrix},
        {3, "trace-question soundness", 60, trace_soundness},
        {4, "interpreter oracle equivalence", 30, interpreter_equivalence},
        {5, "seed determinism", 30, seed_determinism},
        {6, "guardrail no-solution guarantee", 10, guardrail_no_solution},
        {7, "hint tiering", 10, hint_tiering},
        {8, "nontermination detection", 10, nontermination},
        {9, "knowledge tracker properties", 30, knowledge_tracker},
        {10, "summative mode", 10, summative_mode},
        {11, "backend fallback", 20, backend_fallback},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.ok && secs > c.limit_s) {
            o.ok = false;
            o.detail += " (over the time limit)";
        }
        failures += !o.ok;
        std::ostringstream time;
        time.precision(2);
        time << std::fixed << secs;
        std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << c.number << " " << c.title << ": " << o.detail
                  << " [" << time.str() << "s / " << c.limit_s << "s]" << std::endl;
    }
    return failures ? 1 : 0;
}
