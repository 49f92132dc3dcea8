#pragma once

#include "socratic/facts.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace socratic {

enum class Misconception {
    NONE,
    OFF_BY_ONE,
    WRONG_BRANCH,
    INIT_VALUE_CONFUSION,
    ITER_COUNT_CONFUSION,
    BOUNDS_CONFUSION,
};
std::string_view to_string(Misconception m);
Misconception misconception_from_string(std::string_view s);

// INT and LINE answers are numbers; BOOL_PAIR packs two outcomes as 2*first + second.
enum class AnswerKind { INT, LINE, BOOL_PAIR };
std::string_view to_string(AnswerKind k);

struct Choice {
    std::string text;
    Misconception tag = Misconception::NONE;
    std::int64_t value = 0;

    bool operator==(const Choice&) const = default;
};

struct Question {
    std::string question_id;
    std::string template_id;
    std::string unit_id;
    KC kc = KC::TRACING;
    std::string stem;
    std::vector<Choice> options;
    int correct_index = 0;
    std::vector<std::string> grounding; // fact ids
    // How the answer was read: queries against the run of input_set_id.
    std::vector<TraceQuery> queries;
    std::string input_set_id;
    AnswerKind answer_kind = AnswerKind::INT;
    NodeId node_id = -1; // loop, if, declaration or print the question is about
    std::string var;
    int iteration = -1; // NEXT-VALUE only
    int trace_step = -1;
    std::uint64_t seed = 0;

    const Choice& correct() const { return options.at(correct_index); }
    bool operator==(const Question&) const = default;
};

enum class AtomKind { NUMERIC, IDENTIFIER, CONCEPT };
std::string_view to_string(AtomKind k);

struct FactAtom {
    std::string text_form;
    AtomKind kind = AtomKind::CONCEPT;
    double weight = 0;
    std::vector<std::string> synonyms;
    // Value-free description of where the atom lives, for focused hints.
    std::string focus;

    bool operator==(const FactAtom&) const = default;
};

struct ReferenceReason {
    std::string question_id;
    std::string template_id;
    KC kc = KC::TRACING;
    std::vector<FactAtom> atoms;
    std::string canonical_explanation;
    std::string broad_hint;

    bool operator==(const ReferenceReason&) const = default;
};

struct GeneratedQuestion {
    Question question;
    ReferenceReason reference;

    bool operator==(const GeneratedQuestion&) const = default;
};

struct StepChain {
    std::string chain_id;
    std::vector<GeneratedQuestion> steps;
};

// Raw material for the perturbation rules.
struct DistractorContext {
    std::vector<std::int64_t> iteration_values; // same quantity at other iterations
    std::optional<std::int64_t> initializer;
    std::optional<std::int64_t> boundary;
    std::int64_t min_value = INT64_MIN;
    std::int64_t max_value = INT64_MAX; // soft: ignored if it leaves too few values
};

struct ConceptSpec {
    std::string text;
    std::vector<std::string> synonyms;
    std::string hint; // value-free focus phrase
};

struct TemplateSpec {
    std::string template_id;
    std::string strategy;
    std::vector<KC> kcs;
    bool selectable = true; // false: only reachable through chains and follow-ups
    std::string pattern;
    std::string alt_pattern; // NEXT-VALUE when the variable is not written in the loop
    std::string explanation;
    std::string broad_hint;
    std::string focus; // focus phrase for the numeric atom
    std::vector<Misconception> perturbations;
    std::vector<ConceptSpec> concepts;
    std::vector<std::string> followup; // REGROUND and/or STEP, in preference order
};

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TemplateLibrary {
public:
    // One JSON document per template in the directory.
    static TemplateLibrary load(const std::string& dir);
    static TemplateLibrary from_json(const std::vector<Json>& docs);
    // Templates shipped in the data directory, loaded once.
    static const TemplateLibrary& builtin();

    const TemplateSpec& get(std::string_view template_id) const;
    const TemplateSpec* find(std::string_view template_id) const;
    const std::vector<TemplateSpec>& all() const { return templates_; }

private:
    std::vector<TemplateSpec> templates_; // sorted by template_id
};

TemplateSpec template_from_json(const Json& j);

// What a session has asked so far, oldest first.
struct AskedQuestion {
    std::string question_id;
    std::string template_id;
    std::string unit_id;
};
using QuestionHistory = std::vector<AskedQuestion>;

class NoApplicableTemplate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientIterations : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Exhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

GeneratedQuestion generate_question(const Program& program, const CodeFacts& facts, KC kc, std::uint64_t seed,
                                    const QuestionHistory& history = {}, const std::string& preferred_unit = "",
                                    const TemplateLibrary& library = TemplateLibrary::builtin());

StepChain generate_step_chain(const Program& program, const CodeFacts& facts, NodeId loop_id,
                              const std::string& input_set_id, std::uint64_t seed,
                              const TemplateLibrary& library = TemplateLibrary::builtin());

// A narrower question on the same unit after a FOLLOW_UP verdict.
GeneratedQuestion generate_followup(const Program& program, const CodeFacts& facts, const Question& question,
                                    std::uint64_t seed, const QuestionHistory& history = {},
                                    const TemplateLibrary& library = TemplateLibrary::builtin());

// Three distractors for `fact_value`, in rule order: the template's perturbation
// rules, then the +-2, +-3 fallback.
std::vector<Choice> render_distractors(std::int64_t fact_value, const std::string& template_id, std::uint64_t seed,
                                       const DistractorContext& context = {},
                                       const TemplateLibrary& library = TemplateLibrary::builtin());

// KCs that still have at least one unasked question, with the units that can host one.
std::map<KC, std::vector<std::string>> applicable_units(const Program& program, const CodeFacts& facts,
                                                        const QuestionHistory& history = {},
                                                        const TemplateLibrary& library = TemplateLibrary::builtin());

// Re-evaluates a question's grounding queries on a trace; the result is what the
// correct option's value must be.
std::optional<std::int64_t> grounded_value(const Program& program, const TraceLog& trace, const Question& question);

std::string option_text(AnswerKind kind, std::int64_t value);

Json to_json(const Choice& c);
Json to_json(const Question& q);
Json to_json(const FactAtom& a);
Json to_json(const ReferenceReason& r);
Question question_from_json(const Json& j);
ReferenceReason reference_from_json(const Json& j);

// What a student may see: no correct index, no tags, no grounding.
Json public_json(const Question& q);

} // namespace socratic
