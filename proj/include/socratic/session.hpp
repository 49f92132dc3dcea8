#pragma once

#include "socratic/assessment.hpp"
#include "socratic/dialogue.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace socratic {

enum class SessionState { CREATED, ANALYZED, TIER1_PENDING, TIER2_PENDING, SCAFFOLDING, COMPLETED, ABORTED };
std::string_view to_string(SessionState s);
SessionState session_state_from_string(std::string_view s);
bool is_terminal(SessionState s);

// Operations the state machine accepts; used by the transition table.
enum class SessionOp { ANALYZE, DELIVER, TIER1, TIER2_CLOSE, TIER2_RETRY, TIER2_FOLLOW_UP, TIER2_REDIRECT, MESSAGE, FINISH, ABORT };
// The state after applying op, or nothing when the op is not allowed there.
std::optional<SessionState> next_state(SessionState from, SessionOp op);

// Service errors carry a stable code and an HTTP status.
class ServiceError : public std::runtime_error {
public:
    ServiceError(std::string code, int status, const std::string& message, Json detail = Json::object())
        : std::runtime_error(message), code_(std::move(code)), status_(status), detail_(std::move(detail))
    {
    }
    const std::string& code() const { return code_; }
    int status() const { return status_; }
    const Json& detail() const { return detail_; }

private:
    std::string code_;
    int status_;
    Json detail_;
};

struct Turn {
    int index = 0;
    std::string speaker; // STUDENT or TUTOR
    std::string kind;
    std::string text;
    std::string question_id;

    bool operator==(const Turn&) const = default;
};

struct Submission {
    std::string submission_id;
    std::string assignment_id;
    std::string source;
    CodeFacts facts;
    FunctionalResult functional;
    std::string received_at;
};

struct Session {
    std::string session_id;
    std::string submission_id;
    SessionMode mode = SessionMode::FORMATIVE;
    std::uint64_t seed = 0;
    SessionState state = SessionState::CREATED;
    std::optional<GeneratedQuestion> current;
    int attempts_used = 0;  // explanation attempts on the open slot
    int followups_used = 0; // follow-up questions swapped into the open slot
    std::optional<int> tier1_choice;
    bool tier1_correct = false;
    Misconception pending_tag = Misconception::NONE; // first distractor chosen in the slot
    QuestionHistory asked;
    std::vector<QuestionRecord> records;
    KnowledgeState knowledge;
    std::vector<Turn> transcript;
    int question_budget = 5;
    BackendDescriptor backend;
    bool backend_fell_back = false;
    std::int64_t started_at_ms = 0;
    std::int64_t version = 0;
};

Json to_json(const Session& s);
Session session_from_json(const Json& j);
// What a student may see: no reference reasons and no correct index.
Json public_json(const Session& s);

Json to_json(const Submission& s);

struct TransitionResult {
    Session session;
    std::optional<Verdict> verdict;
    std::optional<VerdictAction> action; // after mode conversion
    std::optional<bool> tier1_correct;
    std::string reply;          // tutor text shown to the student
    std::string classification; // guardrail class of a redirected turn
};

Json to_json(const TransitionResult& r);

struct EngineOptions {
    // Empty keeps everything in memory.
    std::string data_dir;
    // Milliseconds; injectable so time limits can be tested.
    std::function<std::int64_t()> clock;
    // Backend for new sessions.
    BackendDescriptor backend = BackendDescriptor::rule_based();
    // When set, SUMMATIVE sessions must present exactly this token; otherwise
    // any non-empty token counts as the proctor's acknowledgment.
    std::optional<std::string> proctor_secret;
    const TemplateLibrary* library = nullptr;

    // Data dir, backend and proctor secret from the environment.
    static EngineOptions from_environment(const std::string& data_dir);
};

struct StartRequest {
    std::string submission_id;
    SessionMode mode = SessionMode::FORMATIVE;
    std::uint64_t seed = 0;
    std::optional<int> question_budget; // assignment default when absent
    std::optional<std::string> proctor_token;
    std::optional<std::string> session_id; // replay pins the id
};

class Engine {
public:
    explicit Engine(EngineOptions options);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    void put_assignment(const AssignmentConfig& config);
    std::vector<AssignmentConfig> assignments() const;
    AssignmentConfig assignment(const std::string& assignment_id) const;

    Submission create_submission(const std::string& assignment_id, const std::string& source,
                                 const std::optional<std::string>& submission_id = std::nullopt);
    Submission submission(const std::string& submission_id) const;

    Session start_session(const StartRequest& request);
    Session session(const std::string& session_id) const;

    TransitionResult submit_tier1(const std::string& session_id, const std::string& question_id, int choice_index);
    TransitionResult submit_tier2(const std::string& session_id, const std::string& text);
    TransitionResult message(const std::string& session_id, const std::string& text);
    Session abort(const std::string& session_id, const std::string& reason = "requested");
    AssessmentReport report(const std::string& session_id) const;

    // Directory holding the session's event log and snapshot.
    std::string session_dir(const std::string& session_id) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ReplayResult {
    bool ok = true;
    int events = 0;
    int verdicts_checked = 0;
    std::vector<std::string> mismatches;
    Json report; // regenerated report when the session finished
};

// Re-runs a persisted session against a fresh in-memory engine with the
// rule-based backend and compares every recorded verdict and the final state.
ReplayResult replay_session(const std::string& session_dir);

// A session directory's report, read from its snapshot and the submission
// stored beside it.
AssessmentReport grade_session_dir(const std::string& session_dir);

} // namespace socratic
