#pragma once

#include "socratic/dialogue.hpp"
#include "socratic/questions.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace socratic {

enum class SessionMode { FORMATIVE, SUMMATIVE };
std::string_view to_string(SessionMode m);
SessionMode session_mode_from_string(std::string_view s);

class UnknownKC : public std::invalid_argument {
public:
    explicit UnknownKC(const std::string& kc) : std::invalid_argument("unknown knowledge component " + kc) {}
};

struct MasteryEvent {
    std::string question_id;
    KC kc = KC::LOOPS;
    int score = 0;
    std::int64_t timestamp = 0; // logical: position in the history

    bool operator==(const MasteryEvent&) const = default;
};

struct KnowledgeState {
    std::map<KC, double> mastery;
    std::map<std::pair<KC, Misconception>, bool> misconceptions;
    std::vector<MasteryEvent> history;

    // Every KC at the given mastery, no flags.
    static KnowledgeState initial(double mastery = 0.5);
    bool flagged(KC kc, Misconception m) const;

    bool operator==(const KnowledgeState&) const = default;
};

Json to_json(const KnowledgeState& s);
KnowledgeState knowledge_from_json(const Json& j);

constexpr double kDefaultAlpha = 0.3;

// Exponential moving average toward score/100. A chosen distractor sets its
// flag; a PASS clears every flag of the KC.
KnowledgeState update_mastery(const KnowledgeState& state, KC kc, const Verdict& verdict,
                              Misconception chosen_tag = Misconception::NONE, const std::string& question_id = "",
                              double alpha = kDefaultAlpha);
// String form for callers holding external data; throws UnknownKC.
KnowledgeState update_mastery(const KnowledgeState& state, std::string_view kc, const Verdict& verdict,
                              Misconception chosen_tag = Misconception::NONE, const std::string& question_id = "",
                              double alpha = kDefaultAlpha);

struct Selection {
    KC kc = KC::LOOPS;
    std::string unit_id;

    bool operator==(const Selection&) const = default;
};

// Weakest applicable KC (ties in KC order), then its least-asked unit. Empty
// when the budget is spent or nothing is left to ask.
std::optional<Selection> select_next(const KnowledgeState& state, const Program& program, const CodeFacts& facts,
                                     const QuestionHistory& history, int questions_closed, int question_budget,
                                     const TemplateLibrary& library = TemplateLibrary::builtin());

struct FunctionalTest {
    std::string name;
    InputMap inputs;
    std::string expected_output; // printed lines joined by '\n'

    bool operator==(const FunctionalTest&) const = default;
};

struct FunctionalCase {
    std::string name;
    InputMap inputs;
    std::string expected_output;
    std::string actual_output;
    Termination termination = Termination::NORMAL;
    bool passed = false;

    bool operator==(const FunctionalCase&) const = default;
};

struct FunctionalResult {
    std::vector<FunctionalCase> tests;

    int passed() const;
    double pass_fraction() const;
    // F = round(100 * pass_fraction)
    int score() const;
    bool operator==(const FunctionalResult&) const = default;
};

Json to_json(const FunctionalTest& t);
FunctionalTest functional_test_from_json(const Json& j);
Json to_json(const FunctionalResult& r);
FunctionalResult functional_from_json(const Json& j);

// A test passes when the run ends normally and its output matches exactly.
FunctionalResult run_functional_tests(const Program& program, const std::vector<FunctionalTest>& tests,
                                      int step_budget = kDefaultStepBudget);

struct FusionWeights {
    double functional = 0.5;
    double dialogue = 0.5;

    bool operator==(const FusionWeights&) const = default;
};

int fuse_grade(int functional_score, int dialogue_score, const FusionWeights& w = {});
bool unproductive_success(int functional_score, int dialogue_score);
// Mean over `required` slots; slots without a score count as 0.
int dialogue_score(const std::vector<int>& closed_scores, int required);

// One budget slot: the original question plus any follow-ups that replaced it.
struct QuestionRecord {
    std::vector<std::string> question_ids;
    std::string template_id;
    KC kc = KC::LOOPS;
    std::string unit_id;
    std::vector<Verdict> verdicts;
    std::optional<int> score; // set when the slot closes

    bool operator==(const QuestionRecord&) const = default;
};

Json to_json(const QuestionRecord& r);
QuestionRecord question_record_from_json(const Json& j);

class SessionNotFinished : public std::logic_error {
public:
    explicit SessionNotFinished(const std::string& state)
        : std::logic_error("session is " + state + ", not finished")
    {
    }
};

struct ReportInput {
    std::string session_id;
    std::string submission_id;
    SessionMode mode = SessionMode::FORMATIVE;
    std::string state; // COMPLETED or ABORTED
    bool aborted = false;
    int question_budget = 5;
    FunctionalResult functional;
    std::vector<QuestionRecord> questions;
    KnowledgeState knowledge;
    FusionWeights weights;
};

struct AssessmentReport {
    std::string session_id;
    std::string submission_id;
    SessionMode mode = SessionMode::FORMATIVE;
    std::string state;
    int functional_score = 0;
    int dialogue_score = 0;
    int final_grade = 0;
    bool unproductive_success = false;
    int required_questions = 0;
    std::map<KC, double> per_kc;
    std::vector<std::pair<KC, Misconception>> misconceptions;
    std::vector<QuestionRecord> per_question;
    FunctionalResult functional;

    bool operator==(const AssessmentReport&) const = default;
};

// An aborted session owes its whole budget; a completed one owes what it asked.
AssessmentReport compile_report(const ReportInput& input);
Json to_json(const AssessmentReport& r);

struct AssignmentConfig {
    std::string assignment_id;
    std::string title;
    std::vector<FunctionalTest> tests;
    std::map<std::string, InputDomain> input_domains;
    std::uint64_t sample_seed = 0;
    int sample_count = 3;
    int question_budget = 5;
    int step_budget = kDefaultStepBudget;
    VerifierConfig verifier;
    FusionWeights weights;
    double alpha = kDefaultAlpha;
    int followup_cap = 2;
    int summative_time_limit_s = 30 * 60;

    bool operator==(const AssignmentConfig&) const = default;
};

Json to_json(const AssignmentConfig& c);
AssignmentConfig assignment_from_json(const Json& j);

} // namespace socratic
