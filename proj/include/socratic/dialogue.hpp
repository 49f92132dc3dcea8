#pragma once

#include "socratic/questions.hpp"

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace socratic {

enum class VerdictAction { PASS, HINT_BROAD, HINT_FOCUSED, FOLLOW_UP, FAIL };
std::string_view to_string(VerdictAction a);
VerdictAction verdict_action_from_string(std::string_view s);

struct Verdict {
    int similarity = 0;
    int score = 0;
    VerdictAction action = VerdictAction::HINT_BROAD;
    std::vector<int> matched_atoms;
    std::vector<int> missing_atoms;

    bool operator==(const Verdict&) const = default;
};

Json to_json(const Verdict& v);
Verdict verdict_from_json(const Json& j);

struct VerifierConfig {
    int pass_threshold = 75;
    int focused_threshold = 40;
    int max_attempts = 3;

    bool operator==(const VerifierConfig&) const = default;
};

class EmptyAnswer : public std::invalid_argument {
public:
    EmptyAnswer() : std::invalid_argument("answer is empty") {}
};

// round(20 + 0.8 * similarity) after a correct selection, 0 otherwise.
int score_for(int similarity, bool tier1_correct);

// attempts_used counts attempts before this one.
VerdictAction action_for(int similarity, bool tier1_correct, int attempts_used, const VerifierConfig& config = {});

// Indices of atoms whose text or a synonym appears in the answer.
std::vector<int> matched_atoms(const ReferenceReason& reference, const std::string& answer_text);

Verdict verify_explanation(const ReferenceReason& reference, const std::string& answer_text, bool tier1_correct,
                           int attempts_used, const VerifierConfig& config = {});

// Same contract, with the similarity supplied by an external judge.
Verdict verdict_with_similarity(const ReferenceReason& reference, const std::string& answer_text, int similarity,
                                bool tier1_correct, int attempts_used, const VerifierConfig& config = {});

enum class TurnClass { ON_TOPIC, SOLUTION_REQUEST, OFF_TOPIC };
std::string_view to_string(TurnClass c);

struct GuardrailRuling {
    TurnClass classification = TurnClass::ON_TOPIC;
    std::string reply_template_id; // empty when ON_TOPIC
    std::string redirect_target;   // current question id
    std::string reply;
};

struct GuardrailConfig {
    std::vector<std::string> solution_phrases;
    std::set<std::string> stopwords;
    std::set<std::string> domain_words; // always on topic
    std::map<std::string, std::string> replies; // keyed by classification name

    static GuardrailConfig from_json(const Json& j);
    static GuardrailConfig load(const std::string& path);
    static const GuardrailConfig& builtin();
};

// Program identifiers plus the content words of the current question.
std::set<std::string> session_vocabulary(const Program& program, const Question* current,
                                         const GuardrailConfig& config = GuardrailConfig::builtin());

GuardrailRuling guard_turn(const std::string& turn_text, const std::set<std::string>& vocabulary,
                           const std::string& current_question_id = "",
                           const GuardrailConfig& config = GuardrailConfig::builtin());

// True when an outgoing reply would give something away: a source line, text
// that parses as MiniLang statements, or a numeric atom of the open question.
bool reply_leaks(const std::string& reply, const Program& program, const ReferenceReason* open_reference);

enum class HintLevel { BROAD, FOCUSED };

// FOCUSED names where the highest-weight missing atom lives, never its value.
std::string render_hint(const ReferenceReason& reference, HintLevel level, const std::vector<int>& missing = {});

enum class PromptRole { INSTRUCTOR, VERIFIER };

struct PromptTemplates {
    std::string instructor;
    std::string verifier;

    static PromptTemplates load(const std::string& dir);
    static const PromptTemplates& builtin();
};

struct DialogueTurn {
    std::string speaker; // STUDENT or TUTOR
    std::string kind;
    std::string text;
};

std::string render_history(const std::vector<DialogueTurn>& history);

std::string build_prompt_context(PromptRole role, const CodeFacts& facts, const std::vector<DialogueTurn>& history,
                                 const Question& target, const PromptTemplates& templates = PromptTemplates::builtin());
std::string build_prompt_context(PromptRole role, const CodeFacts& facts, const std::vector<DialogueTurn>& history,
                                 const ReferenceReason& target, const std::string& answer_text,
                                 const PromptTemplates& templates = PromptTemplates::builtin());

enum class BackendKind { RULE_BASED, EXTERNAL };
std::string_view to_string(BackendKind k);

struct BackendDescriptor {
    BackendKind kind = BackendKind::RULE_BASED;
    std::optional<std::string> endpoint;
    std::optional<std::string> model_name;
    PromptTemplates prompt_templates;
    int timeout_ms = 5000;
    int retries_on_timeout = 1;

    static BackendDescriptor rule_based();
    static BackendDescriptor external(std::string endpoint, std::optional<std::string> model = std::nullopt);
    // SOCRATIC_BACKEND_URL selects EXTERNAL; otherwise RULE_BASED.
    static BackendDescriptor from_environment();
};

// Endpoint and model only; prompts and credentials are never persisted.
Json to_json(const BackendDescriptor& d);
BackendDescriptor backend_from_json(const Json& j);

class BackendError : public std::runtime_error {
public:
    enum class Kind { TIMEOUT, TRANSPORT, MALFORMED_RESPONSE };
    BackendError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};
std::string_view to_string(BackendError::Kind k);

// POST {"prompt", "model"} to the endpoint, expecting {"text"}. The bearer token
// comes from SOCRATIC_BACKEND_TOKEN when set.
std::string call_external_backend(const BackendDescriptor& descriptor, const std::string& prompt);

// The verifier's reply is JSON carrying an integer "similarity" in 0..100.
int parse_similarity(const std::string& backend_text);

} // namespace socratic
