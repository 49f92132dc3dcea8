#include "socratic/session.hpp"
#include "socratic/text.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace socratic {

std::string_view to_string(SessionState s)
{
    switch (s) {
    case SessionState::CREATED: return "CREATED";
    case SessionState::ANALYZED: return "ANALYZED";
    case SessionState::TIER1_PENDING: return "TIER1_PENDING";
    case SessionState::TIER2_PENDING: return "TIER2_PENDING";
    case SessionState::SCAFFOLDING: return "SCAFFOLDING";
    case SessionState::COMPLETED: return "COMPLETED";
    case SessionState::ABORTED: return "ABORTED";
    }
    return "?";
}

SessionState session_state_from_string(std::string_view s)
{
    for (auto st : {SessionState::CREATED, SessionState::ANALYZED, SessionState::TIER1_PENDING,
                    SessionState::TIER2_PENDING, SessionState::SCAFFOLDING, SessionState::COMPLETED,
                    SessionState::ABORTED})
        if (to_string(st) == s)
            return st;
    throw std::invalid_argument("unknown session state " + std::string(s));
}

bool is_terminal(SessionState s)
{
    return s == SessionState::COMPLETED || s == SessionState::ABORTED;
}

std::optional<SessionState> next_state(SessionState from, SessionOp op)
{
    using S = SessionState;
    if (is_terminal(from))
        return std::nullopt;
    if (op == SessionOp::ABORT)
        return S::ABORTED;
    switch (from) {
    case S::CREATED:
        if (op == SessionOp::ANALYZE)
            return S::ANALYZED;
        break;
    case S::ANALYZED:
        if (op == SessionOp::DELIVER)
            return S::TIER1_PENDING;
        if (op == SessionOp::FINISH)
            return S::COMPLETED;
        break;
    case S::TIER1_PENDING:
        if (op == SessionOp::TIER1)
            return S::TIER2_PENDING;
        if (op == SessionOp::MESSAGE)
            return S::TIER1_PENDING;
        break;
    case S::TIER2_PENDING:
    case S::SCAFFOLDING:
        switch (op) {
        case SessionOp::TIER2_CLOSE: return S::ANALYZED; // then DELIVER or FINISH
        case SessionOp::TIER2_RETRY: return S::SCAFFOLDING;
        case SessionOp::TIER2_FOLLOW_UP: return S::TIER1_PENDING;
        case SessionOp::TIER2_REDIRECT:
        case SessionOp::MESSAGE: return from;
        default: break;
        }
        break;
    default:
        break;
    }
    return std::nullopt;
}

namespace {

ServiceError wrong_state(SessionState s, std::string_view op)
{
    return ServiceError("WRONG_STATE", 409, std::string(op) + " is not allowed while the session is " + std::string(to_string(s)),
                        {{"state", std::string(to_string(s))}});
}

void transition(Session& s, SessionOp op, std::string_view what)
{
    auto next = next_state(s.state, op);
    if (!next)
        throw wrong_state(s.state, what);
    s.state = *next;
}

Json to_json(const Turn& t)
{
    return {{"index", t.index}, {"speaker", t.speaker}, {"kind", t.kind}, {"text", t.text},
            {"question_id", t.question_id}};
}

Turn turn_from_json(const Json& j)
{
    return {j.at("index").get<int>(), j.at("speaker").get<std::string>(), j.at("kind").get<std::string>(),
            j.at("text").get<std::string>(), j.at("question_id").get<std::string>()};
}

Json to_json(const GeneratedQuestion& g)
{
    return {{"question", to_json(g.question)}, {"reference", to_json(g.reference)}};
}

std::string question_text(const Question& q)
{
    std::string out = q.stem;
    const char* letters = "ABCD";
    for (std::size_t i = 0; i < q.options.size(); ++i)
        out += std::string("\n") + letters[i % 4] + ") " + q.options[i].text;
    return out;
}

} // namespace

Json to_json(const Session& s)
{
    Json asked = Json::array();
    for (const auto& a : s.asked)
        asked.push_back({{"question_id", a.question_id}, {"template_id", a.template_id}, {"unit_id", a.unit_id}});
    Json records = Json::array();
    for (const auto& r : s.records)
        records.push_back(to_json(r));
    Json transcript = Json::array();
    for (const auto& t : s.transcript)
        transcript.push_back(to_json(t));
    Json j = {{"session_id", s.session_id},
              {"submission_id", s.submission_id},
              {"mode", std::string(to_string(s.mode))},
              {"seed", s.seed},
              {"state", std::string(to_string(s.state))}};
    j["current"] = s.current ? to_json(*s.current) : Json(nullptr);
    j["attempts_used"] = s.attempts_used;
    j["followups_used"] = s.followups_used;
    j["tier1_choice"] = s.tier1_choice ? Json(*s.tier1_choice) : Json(nullptr);
    j["tier1_correct"] = s.tier1_correct;
    j["pending_tag"] = std::string(to_string(s.pending_tag));
    j["asked"] = asked;
    j["records"] = records;
    j["knowledge"] = to_json(s.knowledge);
    j["transcript"] = transcript;
    j["question_budget"] = s.question_budget;
    j["backend"] = to_json(s.backend);
    j["backend_fell_back"] = s.backend_fell_back;
    j["started_at_ms"] = s.started_at_ms;
    j["version"] = s.version;
    return j;
}

Session session_from_json(const Json& j)
{
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.submission_id = j.at("submission_id").get<std::string>();
    s.mode = session_mode_from_string(j.at("mode").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.state = session_state_from_string(j.at("state").get<std::string>());
    if (!j.at("current").is_null())
        s.current = GeneratedQuestion{question_from_json(j["current"].at("question")),
                                      reference_from_json(j["current"].at("reference"))};
    s.attempts_used = j.at("attempts_used").get<int>();
    s.followups_used = j.at("followups_used").get<int>();
    if (!j.at("tier1_choice").is_null())
        s.tier1_choice = j["tier1_choice"].get<int>();
    s.tier1_correct = j.at("tier1_correct").get<bool>();
    s.pending_tag = misconception_from_string(j.at("pending_tag").get<std::string>());
    for (const auto& a : j.at("asked"))
        s.asked.push_back({a.at("question_id").get<std::string>(), a.at("template_id").get<std::string>(),
                           a.at("unit_id").get<std::string>()});
    for (const auto& r : j.at("records"))
        s.records.push_back(question_record_from_json(r));
    s.knowledge = knowledge_from_json(j.at("knowledge"));
    for (const auto& t : j.at("transcript"))
        s.transcript.push_back(turn_from_json(t));
    s.question_budget = j.at("question_budget").get<int>();
    s.backend = backend_from_json(j.at("backend"));
    s.backend_fell_back = j.at("backend_fell_back").get<bool>();
    s.started_at_ms = j.at("started_at_ms").get<std::int64_t>();
    s.version = j.at("version").get<std::int64_t>();
    return s;
}

Json public_json(const Session& s)
{
    Json transcript = Json::array();
    for (const auto& t : s.transcript)
        transcript.push_back(to_json(t));
    Json mastery = Json::object();
    for (const auto& [kc, m] : s.knowledge.mastery)
        mastery[std::string(to_string(kc))] = m;
    Json j = {{"session_id", s.session_id},
              {"submission_id", s.submission_id},
              {"mode", std::string(to_string(s.mode))},
              {"seed", s.seed},
              {"state", std::string(to_string(s.state))}};
    j["question"] = s.current && !is_terminal(s.state) ? public_json(s.current->question) : Json(nullptr);
    j["attempts_used"] = s.attempts_used;
    j["questions_closed"] = std::count_if(s.records.begin(), s.records.end(),
                                          [](const QuestionRecord& r) { return r.score.has_value(); });
    j["question_budget"] = s.question_budget;
    j["mastery"] = mastery;
    j["backend"] = std::string(to_string(s.backend_fell_back ? BackendKind::RULE_BASED : s.backend.kind));
    j["transcript"] = transcript;
    j["version"] = s.version;
    return j;
}

Json to_json(const Submission& s)
{
    return {{"submission_id", s.submission_id}, {"assignment_id", s.assignment_id}, {"source", s.source},
            {"received_at", s.received_at},     {"facts", to_json(s.facts)},       {"functional", to_json(s.functional)}};
}

Json to_json(const TransitionResult& r)
{
    Json j = {{"session", public_json(r.session)}};
    j["verdict"] = r.verdict ? to_json(*r.verdict) : Json(nullptr);
    j["action"] = r.action ? Json(std::string(to_string(*r.action))) : Json(nullptr);
    j["tier1_correct"] = r.tier1_correct ? Json(*r.tier1_correct) : Json(nullptr);
    j["reply"] = r.reply;
    j["classification"] = r.classification.empty() ? Json(nullptr) : Json(r.classification);
    return j;
}

EngineOptions EngineOptions::from_environment(const std::string& data_dir)
{
    EngineOptions o;
    o.data_dir = data_dir;
    o.backend = BackendDescriptor::from_environment();
    if (const char* t = std::getenv("SOCRATIC_PROCTOR_TOKEN"); t && *t)
        o.proctor_secret = t;
    return o;
}

namespace {

const char* const kSolutionFallbackReply = "Let's keep working through the current question together.";

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t n)
{
    // splitmix64 step, so consecutive questions get unrelated seeds
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (n + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string iso_time(std::int64_t ms)
{
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string random_id(const std::string& prefix)
{
    static std::atomic<std::uint64_t> counter{0};
    static const std::uint64_t base = std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32);
    std::uint64_t v = mix_seed(base, counter++);
    std::ostringstream out;
    out << prefix << std::hex << (v & 0xffffffffffffULL);
    return out.str();
}

bool safe_id(const std::string& id)
{
    if (id.empty() || id.size() > 128)
        return false;
    for (char c : id)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
            return false;
    return true;
}

void write_atomic(const fs::path& path, const std::string& content)
{
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

void append_line(const fs::path& path, const std::string& line)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out)
        throw std::runtime_error("cannot append to " + path.string());
    out << line << '\n';
}

struct SubmissionEntry {
    Submission submission;
    Program program;
    AssignmentConfig config;
};

struct SessionSlot {
    std::mutex mu;
    std::shared_ptr<const Session> snap; // read with atomic_load
    bool in_flight = false;
};

} // namespace

struct Engine::Impl {
    EngineOptions options;
    const TemplateLibrary& library;
    mutable std::mutex registry_mu;
    std::map<std::string, AssignmentConfig> assignments;
    mutable std::map<std::string, std::shared_ptr<const SubmissionEntry>> submissions;
    mutable std::map<std::string, std::shared_ptr<SessionSlot>> sessions;

    explicit Impl(EngineOptions o)
        : options(std::move(o)), library(options.library ? *options.library : TemplateLibrary::builtin())
    {
        if (!options.clock)
            options.clock = [] {
                return std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                    .count();
            };
        if (persistent()) {
            fs::create_directories(root() / "assignments");
            for (const auto& entry : fs::directory_iterator(root() / "assignments")) {
                if (entry.path().extension() != ".json")
                    continue;
                auto cfg = assignment_from_json(Json::parse(read_text_file(entry.path().string())));
                assignments[cfg.assignment_id] = cfg;
            }
        }
    }

    bool persistent() const { return !options.data_dir.empty(); }
    fs::path root() const { return fs::path(options.data_dir); }
    fs::path session_path(const std::string& id) const { return root() / "sessions" / id; }
    fs::path submission_path(const std::string& id) const { return root() / "submissions" / id / "submission.json"; }

    std::int64_t now() const { return options.clock(); }

    // ---- submissions

    std::shared_ptr<const SubmissionEntry> build_entry(const AssignmentConfig& cfg, Submission sub) const
    {
        auto entry = std::make_shared<SubmissionEntry>();
        entry->program = parse(sub.source);
        auto inputs = sample_inputs(entry->program, cfg.sample_seed, cfg.sample_count, cfg.input_domains);
        sub.facts = analyze(entry->program, name_input_sets(inputs), cfg.step_budget);
        sub.functional = run_functional_tests(entry->program, cfg.tests, cfg.step_budget);
        entry->submission = std::move(sub);
        entry->config = cfg;
        return entry;
    }

    AssignmentConfig find_assignment(const std::string& id) const
    {
        std::lock_guard lock(registry_mu);
        auto it = assignments.find(id);
        if (it == assignments.end())
            throw ServiceError("UNKNOWN_ASSIGNMENT", 404, "no assignment " + id);
        return it->second;
    }

    std::shared_ptr<const SubmissionEntry> find_submission(const std::string& id) const
    {
        {
            std::lock_guard lock(registry_mu);
            if (auto it = submissions.find(id); it != submissions.end())
                return it->second;
        }
        if (!persistent() || !safe_id(id) || !fs::exists(submission_path(id)))
            throw ServiceError("UNKNOWN_SUBMISSION", 404, "no submission " + id);
        Json stored = Json::parse(read_text_file(submission_path(id).string()));
        Submission sub;
        sub.submission_id = stored.at("submission_id").get<std::string>();
        sub.assignment_id = stored.at("assignment_id").get<std::string>();
        sub.source = stored.at("source").get<std::string>();
        sub.received_at = stored.at("received_at").get<std::string>();
        auto entry = build_entry(find_assignment(sub.assignment_id), sub);
        // stored facts are for audit; they must match a fresh analysis
        if (to_json(entry->submission).dump() != stored.dump())
            throw ServiceError("CORRUPT_SUBMISSION", 500, "stored facts for " + id + " do not match the source");
        std::lock_guard lock(registry_mu);
        return submissions.emplace(id, entry).first->second;
    }

    // ---- sessions

    std::shared_ptr<SessionSlot> find_slot(const std::string& id) const
    {
        std::lock_guard lock(registry_mu);
        if (auto it = sessions.find(id); it != sessions.end())
            return it->second;
        if (!persistent() || !safe_id(id) || !fs::exists(session_path(id) / "snapshot.json"))
            throw ServiceError("UNKNOWN_SESSION", 404, "no session " + id);
        auto slot = std::make_shared<SessionSlot>();
        slot->snap = std::make_shared<const Session>(
            session_from_json(Json::parse(read_text_file((session_path(id) / "snapshot.json").string()))));
        sessions.emplace(id, slot);
        return slot;
    }

    std::shared_ptr<const Session> snapshot(const SessionSlot& slot) const { return std::atomic_load(&slot.snap); }

    void log_event(const Session& s, const std::string& type, Json payload)
    {
        if (!persistent())
            return;
        payload["type"] = type;
        payload["version"] = s.version;
        payload["at_ms"] = now();
        append_line(session_path(s.session_id) / "events.jsonl", payload.dump());
    }

    // Publishes the new state: version bump, snapshot file, then the in-memory pointer.
    void commit(SessionSlot& slot, Session s)
    {
        s.version += 1;
        if (persistent())
            write_atomic(session_path(s.session_id) / "snapshot.json", to_json(s).dump(2) + "\n");
        std::atomic_store(&slot.snap, std::shared_ptr<const Session>(std::make_shared<Session>(std::move(s))));
    }

    void add_turn(Session& s, std::string speaker, std::string kind, std::string text)
    {
        std::string qid = s.current ? s.current->question.question_id : "";
        s.transcript.push_back({static_cast<int>(s.transcript.size()), std::move(speaker), std::move(kind),
                                std::move(text), qid});
    }

    // Tutor replies other than question text pass through the leak filter.
    void add_tutor_reply(Session& s, const Program& program, std::string kind, std::string text)
    {
        if (reply_leaks(text, program, s.current ? &s.current->reference : nullptr))
            text = kSolutionFallbackReply;
        add_turn(s, "TUTOR", std::move(kind), std::move(text));
    }

    int closed(const Session& s) const
    {
        return static_cast<int>(std::count_if(s.records.begin(), s.records.end(),
                                              [](const QuestionRecord& r) { return r.score.has_value(); }));
    }

    // From ANALYZED: the next question, or COMPLETED when nothing is left.
    void deliver_next(Session& s, const SubmissionEntry& e)
    {
        s.current.reset();
        s.attempts_used = 0;
        s.followups_used = 0;
        s.tier1_choice.reset();
        s.tier1_correct = false;
        s.pending_tag = Misconception::NONE;
        for (;;) {
            auto pick = select_next(s.knowledge, e.program, e.submission.facts, s.asked, closed(s), s.question_budget,
                                    library);
            if (!pick)
                break;
            try {
                auto g = generate_question(e.program, e.submission.facts, pick->kc,
                                           mix_seed(s.seed, s.asked.size()), s.asked, pick->unit_id, library);
                s.asked.push_back({g.question.question_id, g.question.template_id, g.question.unit_id});
                s.records.push_back({{g.question.question_id}, g.question.template_id, g.question.kc,
                                     g.question.unit_id, {}, std::nullopt});
                s.current = std::move(g);
                transition(s, SessionOp::DELIVER, "deliver");
                add_turn(s, "TUTOR", "QUESTION", question_text(s.current->question));
                return;
            } catch (const NoApplicableTemplate&) {
                break;
            }
        }
        transition(s, SessionOp::FINISH, "finish");
        add_turn(s, "TUTOR", "CLOSE", "That is every question for this session.");
    }

    bool expired(const Session& s, const SubmissionEntry& e) const
    {
        return s.mode == SessionMode::SUMMATIVE &&
               now() - s.started_at_ms >= static_cast<std::int64_t>(e.config.summative_time_limit_s) * 1000;
    }

    // Aborts a summative session past its limit before any other change.
    void enforce_time_limit(SessionSlot& slot, const Session& s, const SubmissionEntry& e)
    {
        if (is_terminal(s.state) || !expired(s, e))
            return;
        Session next = s;
        apply_abort(next, "time_limit");
        log_event(next, "session_aborted", {{"reason", "time_limit"}});
        commit(slot, std::move(next));
        throw ServiceError("SESSION_EXPIRED", 409, "the session time limit has passed",
                           {{"state", "ABORTED"}});
    }

    void apply_abort(Session& s, const std::string& reason)
    {
        transition(s, SessionOp::ABORT, "abort");
        add_turn(s, "TUTOR", "CLOSE", "Session ended (" + reason + ").");
    }

    void close_slot(Session& s, const SubmissionEntry& e, const Verdict& v)
    {
        auto& rec = s.records.back();
        rec.score = v.score;
        s.knowledge = update_mastery(s.knowledge, rec.kc, v, s.pending_tag, rec.question_ids.front(), e.config.alpha);
        transition(s, SessionOp::TIER2_CLOSE, "close");
        deliver_next(s, e);
    }
};

Engine::Engine(EngineOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Engine::~Engine() = default;

void Engine::put_assignment(const AssignmentConfig& config)
{
    if (!safe_id(config.assignment_id))
        throw ServiceError("VALIDATION", 400, "assignment ids use letters, digits, '-' and '_'");
    if (config.tests.empty())
        throw ServiceError("VALIDATION", 400, "an assignment needs at least one test");
    if (impl_->persistent())
        write_atomic(impl_->root() / "assignments" / (config.assignment_id + ".json"), to_json(config).dump(2) + "\n");
    std::lock_guard lock(impl_->registry_mu);
    impl_->assignments[config.assignment_id] = config;
}

std::vector<AssignmentConfig> Engine::assignments() const
{
    std::lock_guard lock(impl_->registry_mu);
    std::vector<AssignmentConfig> out;
    for (const auto& [id, c] : impl_->assignments)
        out.push_back(c);
    return out;
}

AssignmentConfig Engine::assignment(const std::string& assignment_id) const
{
    return impl_->find_assignment(assignment_id);
}

Submission Engine::create_submission(const std::string& assignment_id, const std::string& source,
                                     const std::optional<std::string>& submission_id)
{
    auto cfg = impl_->find_assignment(assignment_id);
    Submission sub;
    sub.submission_id = submission_id ? *submission_id : random_id("sub-");
    if (!safe_id(sub.submission_id))
        throw ServiceError("VALIDATION", 400, "bad submission id");
    sub.assignment_id = assignment_id;
    sub.source = source;
    sub.received_at = iso_time(impl_->now());
    // parse errors propagate before anything touches the disk
    auto entry = impl_->build_entry(cfg, std::move(sub));
    {
        std::lock_guard lock(impl_->registry_mu);
        if (impl_->submissions.count(entry->submission.submission_id))
            throw ServiceError("CONFLICT", 409, "submission " + entry->submission.submission_id + " exists");
    }
    if (impl_->persistent())
        write_atomic(impl_->submission_path(entry->submission.submission_id),
                     to_json(entry->submission).dump(2) + "\n");
    std::lock_guard lock(impl_->registry_mu);
    impl_->submissions[entry->submission.submission_id] = entry;
    return entry->submission;
}

Submission Engine::submission(const std::string& submission_id) const
{
    return impl_->find_submission(submission_id)->submission;
}

Session Engine::start_session(const StartRequest& req)
{
    auto entry = impl_->find_submission(req.submission_id);
    int budget = req.question_budget.value_or(entry->config.question_budget);
    if (budget < 1)
        throw ServiceError("VALIDATION", 400, "question_budget must be at least 1", {{"question_budget", budget}});
    if (req.mode == SessionMode::SUMMATIVE) {
        bool ok = req.proctor_token && !req.proctor_token->empty() &&
                  (!impl_->options.proctor_secret || *req.proctor_token == *impl_->options.proctor_secret);
        if (!ok)
            throw ServiceError("PROCTOR_TOKEN_REQUIRED", 403, "summative sessions need a proctor token");
    }

    Session s;
    s.session_id = req.session_id ? *req.session_id : random_id("ses-");
    if (!safe_id(s.session_id))
        throw ServiceError("VALIDATION", 400, "bad session id");
    s.submission_id = req.submission_id;
    s.mode = req.mode;
    s.seed = req.seed;
    s.question_budget = budget;
    s.knowledge = KnowledgeState::initial();
    s.backend = impl_->options.backend;
    s.started_at_ms = impl_->now();
    transition(s, SessionOp::ANALYZE, "analyze");
    impl_->deliver_next(s, *entry);

    auto slot = std::make_shared<SessionSlot>();
    {
        std::lock_guard lock(impl_->registry_mu);
        if (impl_->sessions.count(s.session_id) ||
            (impl_->persistent() && fs::exists(impl_->session_path(s.session_id))))
            throw ServiceError("CONFLICT", 409, "session " + s.session_id + " exists");
        impl_->sessions[s.session_id] = slot;
    }
    std::lock_guard write(slot->mu);
    impl_->log_event(s, "session_started",
                     {{"session_id", s.session_id},
                      {"submission_id", s.submission_id},
                      {"assignment", to_json(entry->config)},
                      {"source", entry->submission.source},
                      {"mode", std::string(to_string(s.mode))},
                      {"seed", s.seed},
                      {"question_budget", s.question_budget},
                      {"backend", to_json(s.backend)},
                      {"proctor_token_present", req.proctor_token.has_value()},
                      {"started_at_ms", s.started_at_ms}});
    impl_->commit(*slot, s);
    return *impl_->snapshot(*slot);
}

Session Engine::session(const std::string& session_id) const
{
    return *impl_->snapshot(*impl_->find_slot(session_id));
}

std::string Engine::session_dir(const std::string& session_id) const
{
    return impl_->session_path(session_id).string();
}

TransitionResult Engine::submit_tier1(const std::string& session_id, const std::string& question_id, int choice_index)
{
    auto slot = impl_->find_slot(session_id);
    std::lock_guard write(slot->mu);
    if (slot->in_flight)
        throw ServiceError("CONFLICT", 409, "another request for this session is in progress");
    auto cur = impl_->snapshot(*slot);
    auto entry = impl_->find_submission(cur->submission_id);
    impl_->enforce_time_limit(*slot, *cur, *entry);
    if (cur->state != SessionState::TIER1_PENDING)
        throw wrong_state(cur->state, "tier1");
    if (!cur->current || cur->current->question.question_id != question_id)
        throw ServiceError("STALE_QUESTION", 409, "question " + question_id + " is not the open question",
                           {{"open_question", cur->current ? cur->current->question.question_id : ""}});
    const auto& q = cur->current->question;
    if (choice_index < 0 || choice_index >= static_cast<int>(q.options.size()))
        throw ServiceError("VALIDATION", 400, "choice_index must be between 0 and 3");

    Session s = *cur;
    s.tier1_choice = choice_index;
    s.tier1_correct = choice_index == q.correct_index;
    auto tag = q.options[choice_index].tag;
    if (tag != Misconception::NONE && s.pending_tag == Misconception::NONE)
        s.pending_tag = tag;
    impl_->add_turn(s, "STUDENT", "TIER1_CHOICE", q.options[choice_index].text);
    transition(s, SessionOp::TIER1, "tier1");
    std::string reply = "Now explain, in your own words, why you chose that answer.";
    impl_->add_turn(s, "TUTOR", "PROMPT", reply);
    impl_->log_event(s, "tier1", {{"question_id", question_id}, {"choice_index", choice_index},
                                  {"tier1_correct", s.tier1_correct}});
    impl_->commit(*slot, std::move(s));

    TransitionResult r;
    r.session = *impl_->snapshot(*slot);
    r.tier1_correct = r.session.tier1_correct;
    r.reply = reply;
    return r;
}

TransitionResult Engine::submit_tier2(const std::string& session_id, const std::string& text)
{
    auto slot = impl_->find_slot(session_id);
    std::unique_lock write(slot->mu);
    if (slot->in_flight)
        throw ServiceError("CONFLICT", 409, "another request for this session is in progress");
    auto cur = impl_->snapshot(*slot);
    auto entry = impl_->find_submission(cur->submission_id);
    impl_->enforce_time_limit(*slot, *cur, *entry);
    if (cur->state != SessionState::TIER2_PENDING && cur->state != SessionState::SCAFFOLDING)
        throw wrong_state(cur->state, "tier2");
    if (std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        throw ServiceError("EMPTY_ANSWER", 400, "the explanation is empty");

    const auto& q = cur->current->question;
    const auto& ref = cur->current->reference;
    const auto& program = entry->program;
    TransitionResult r;

    auto ruling = guard_turn(text, session_vocabulary(program, &q), q.question_id);
    if (ruling.classification != TurnClass::ON_TOPIC) {
        Session s = *cur;
        impl_->add_turn(s, "STUDENT", "EXPLANATION", text);
        transition(s, SessionOp::TIER2_REDIRECT, "redirect");
        impl_->add_tutor_reply(s, program, "REDIRECT", ruling.reply);
        r.reply = s.transcript.back().text;
        r.classification = std::string(to_string(ruling.classification));
        impl_->log_event(s, "tier2", {{"text", text}, {"classification", r.classification}});
        impl_->commit(*slot, std::move(s));
        r.session = *impl_->snapshot(*slot);
        return r;
    }

    const VerifierConfig& vcfg = entry->config.verifier;
    std::optional<int> similarity;
    std::optional<BackendError> failure;
    bool external = cur->backend.kind == BackendKind::EXTERNAL && !cur->backend_fell_back;
    if (external) {
        // the network call happens without the session lock
        std::vector<DialogueTurn> history;
        for (const auto& t : cur->transcript)
            history.push_back({t.speaker, t.kind, t.text});
        std::string prompt = build_prompt_context(PromptRole::VERIFIER, entry->submission.facts, history, ref, text,
                                                  cur->backend.prompt_templates);
        std::int64_t version = cur->version;
        BackendDescriptor desc = cur->backend;
        slot->in_flight = true;
        write.unlock();
        try {
            similarity = parse_similarity(call_external_backend(desc, prompt));
        } catch (const BackendError& e) {
            failure = e;
        }
        write.lock();
        slot->in_flight = false;
        cur = impl_->snapshot(*slot);
        if (cur->version != version)
            throw ServiceError("CONFLICT", 409, "the session changed while the explanation was being judged");
    }

    Session s = *cur;
    if (failure) {
        s.backend_fell_back = true;
        impl_->log_event(s, "backend_fallback",
                         {{"error", std::string(to_string(failure->kind()))}, {"message", failure->what()}});
    }
    Verdict v = similarity ? verdict_with_similarity(ref, text, *similarity, s.tier1_correct, s.attempts_used, vcfg)
                           : verify_explanation(ref, text, s.tier1_correct, s.attempts_used, vcfg);
    std::string judge = similarity ? "EXTERNAL" : "RULE_BASED";
    VerdictAction action = v.action;
    if (s.mode == SessionMode::SUMMATIVE &&
        (action == VerdictAction::HINT_BROAD || action == VerdictAction::HINT_FOCUSED))
        action = VerdictAction::FOLLOW_UP;
    v.action = action; // the record shows what the student actually got

    impl_->add_turn(s, "STUDENT", "EXPLANATION", text);
    s.records.back().verdicts.push_back(v);
    s.attempts_used += 1;

    switch (action) {
    case VerdictAction::PASS:
    case VerdictAction::FAIL:
        impl_->add_tutor_reply(s, program, "VERDICT",
                               action == VerdictAction::PASS ? "That explanation covers it."
                                                             : "Let's leave this question here and move on.");
        r.reply = s.transcript.back().text;
        impl_->close_slot(s, *entry, v);
        if (s.current && s.state == SessionState::TIER1_PENDING)
            r.reply += "\n" + question_text(s.current->question);
        break;
    case VerdictAction::HINT_BROAD:
    case VerdictAction::HINT_FOCUSED: {
        auto level = action == VerdictAction::HINT_BROAD ? HintLevel::BROAD : HintLevel::FOCUSED;
        transition(s, SessionOp::TIER2_RETRY, "hint");
        impl_->add_tutor_reply(s, program, std::string(to_string(action)), render_hint(ref, level, v.missing_atoms));
        r.reply = s.transcript.back().text;
        break;
    }
    case VerdictAction::FOLLOW_UP: {
        std::optional<GeneratedQuestion> next;
        if (s.followups_used < entry->config.followup_cap) {
            try {
                next = generate_followup(program, entry->submission.facts, q, mix_seed(s.seed, s.asked.size()),
                                         s.asked, impl_->library);
            } catch (const Exhausted&) {
            }
        }
        if (next) {
            s.followups_used += 1;
            s.asked.push_back({next->question.question_id, next->question.template_id, next->question.unit_id});
            s.records.back().question_ids.push_back(next->question.question_id);
            s.current = std::move(next);
            s.tier1_choice.reset();
            s.tier1_correct = false;
            transition(s, SessionOp::TIER2_FOLLOW_UP, "follow-up");
            std::string text_out = "Let's look at a smaller piece first.\n" + question_text(s.current->question);
            impl_->add_turn(s, "TUTOR", "FOLLOW_UP", text_out);
            r.reply = text_out;
        } else {
            transition(s, SessionOp::TIER2_RETRY, "retry");
            impl_->add_tutor_reply(s, program, "RETRY",
                                   "Try once more: walk through the program step by step and say why your choice follows.");
            r.reply = s.transcript.back().text;
        }
        break;
    }
    }

    impl_->log_event(s, "tier2",
                     {{"text", text}, {"judge", judge}, {"verdict", to_json(v)},
                      {"action", std::string(to_string(action))}});
    impl_->commit(*slot, std::move(s));
    r.session = *impl_->snapshot(*slot);
    r.verdict = v;
    r.action = action;
    return r;
}

TransitionResult Engine::message(const std::string& session_id, const std::string& text)
{
    auto slot = impl_->find_slot(session_id);
    std::unique_lock write(slot->mu);
    if (slot->in_flight)
        throw ServiceError("CONFLICT", 409, "another request for this session is in progress");
    auto cur = impl_->snapshot(*slot);
    auto entry = impl_->find_submission(cur->submission_id);
    impl_->enforce_time_limit(*slot, *cur, *entry);
    if (!next_state(cur->state, SessionOp::MESSAGE))
        throw wrong_state(cur->state, "message");
    if (std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        throw ServiceError("EMPTY_ANSWER", 400, "the message is empty");

    const auto& program = entry->program;
    const Question* q = cur->current ? &cur->current->question : nullptr;
    auto ruling = guard_turn(text, session_vocabulary(program, q), q ? q->question_id : "");
    TransitionResult r;
    std::string reply;
    std::string kind = "CHAT";
    std::optional<BackendError> failure;
    if (ruling.classification != TurnClass::ON_TOPIC) {
        reply = ruling.reply;
        kind = "REDIRECT";
        r.classification = std::string(to_string(ruling.classification));
    } else if (cur->backend.kind == BackendKind::EXTERNAL && !cur->backend_fell_back && q) {
        std::vector<DialogueTurn> history;
        for (const auto& t : cur->transcript)
            history.push_back({t.speaker, t.kind, t.text});
        history.push_back({"STUDENT", "MESSAGE", text});
        std::string prompt = build_prompt_context(PromptRole::INSTRUCTOR, entry->submission.facts, history, *q,
                                                  cur->backend.prompt_templates);
        std::int64_t version = cur->version;
        BackendDescriptor desc = cur->backend;
        slot->in_flight = true;
        write.unlock();
        try {
            reply = call_external_backend(desc, prompt);
        } catch (const BackendError& e) {
            failure = e;
        }
        write.lock();
        slot->in_flight = false;
        cur = impl_->snapshot(*slot);
        if (cur->version != version)
            throw ServiceError("CONFLICT", 409, "the session changed while the reply was being written");
    }
    if (reply.empty())
        reply = "Good question to ask yourself. Which statement runs next, and what does it change?";

    Session s = *cur;
    if (failure) {
        s.backend_fell_back = true;
        impl_->log_event(s, "backend_fallback",
                         {{"error", std::string(to_string(failure->kind()))}, {"message", failure->what()}});
    }
    transition(s, SessionOp::MESSAGE, "message");
    impl_->add_turn(s, "STUDENT", "MESSAGE", text);
    impl_->add_tutor_reply(s, program, kind, reply);
    r.reply = s.transcript.back().text;
    impl_->log_event(s, "message", {{"text", text}, {"classification", r.classification}});
    impl_->commit(*slot, std::move(s));
    r.session = *impl_->snapshot(*slot);
    return r;
}

Session Engine::abort(const std::string& session_id, const std::string& reason)
{
    auto slot = impl_->find_slot(session_id);
    std::lock_guard write(slot->mu);
    if (slot->in_flight)
        throw ServiceError("CONFLICT", 409, "another request for this session is in progress");
    Session s = *impl_->snapshot(*slot);
    impl_->apply_abort(s, reason);
    impl_->log_event(s, "session_aborted", {{"reason", reason}});
    impl_->commit(*slot, std::move(s));
    return *impl_->snapshot(*slot);
}

namespace {

ReportInput report_input(const Session& s, const Submission& sub, const AssignmentConfig& cfg)
{
    ReportInput in;
    in.session_id = s.session_id;
    in.submission_id = s.submission_id;
    in.mode = s.mode;
    in.state = std::string(to_string(s.state));
    in.aborted = s.state == SessionState::ABORTED;
    in.question_budget = s.question_budget;
    in.functional = sub.functional;
    in.questions = s.records;
    in.knowledge = s.knowledge;
    in.weights = cfg.weights;
    return in;
}

} // namespace

AssessmentReport Engine::report(const std::string& session_id) const
{
    auto s = impl_->snapshot(*impl_->find_slot(session_id));
    if (!is_terminal(s->state))
        throw ServiceError("SESSION_NOT_FINISHED", 409, "the session is " + std::string(to_string(s->state)));
    auto entry = impl_->find_submission(s->submission_id);
    auto r = compile_report(report_input(*s, entry->submission, entry->config));
    if (impl_->persistent())
        write_atomic(impl_->session_path(session_id) / "report.json", to_json(r).dump(2) + "\n");
    return r;
}

namespace {

std::vector<Json> read_events(const fs::path& dir)
{
    std::ifstream in(dir / "events.jsonl");
    if (!in)
        throw std::runtime_error("no event log in " + dir.string());
    std::vector<Json> events;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            events.push_back(Json::parse(line));
    return events;
}

} // namespace

ReplayResult replay_session(const std::string& session_dir)
{
    fs::path dir(session_dir);
    auto events = read_events(dir);
    if (events.empty() || events[0].at("type") != "session_started")
        throw std::runtime_error("event log does not begin with session_started");
    const Json& start = events[0];

    std::int64_t clock_ms = start.at("at_ms").get<std::int64_t>();
    EngineOptions opts;
    opts.clock = [&clock_ms] { return clock_ms; };
    Engine engine(opts);
    auto cfg = assignment_from_json(start.at("assignment"));
    engine.put_assignment(cfg);
    engine.create_submission(cfg.assignment_id, start.at("source").get<std::string>(),
                             start.at("submission_id").get<std::string>());

    ReplayResult result;
    auto mismatch = [&](const std::string& what) {
        result.ok = false;
        result.mismatches.push_back(what);
    };
    StartRequest req;
    req.submission_id = start.at("submission_id").get<std::string>();
    req.mode = session_mode_from_string(start.at("mode").get<std::string>());
    req.seed = start.at("seed").get<std::uint64_t>();
    req.question_budget = start.at("question_budget").get<int>();
    if (start.value("proctor_token_present", false))
        req.proctor_token = "replay";
    req.session_id = start.at("session_id").get<std::string>();
    clock_ms = start.value("started_at_ms", clock_ms);
    engine.start_session(req);
    result.events = 1;

    for (std::size_t i = 1; i < events.size(); ++i) {
        const Json& e = events[i];
        std::string type = e.at("type").get<std::string>();
        clock_ms = e.at("at_ms").get<std::int64_t>();
        ++result.events;
        try {
            if (type == "tier1") {
                auto r = engine.submit_tier1(req.session_id.value(), e.at("question_id").get<std::string>(),
                                             e.at("choice_index").get<int>());
                if (r.tier1_correct != e.at("tier1_correct").get<bool>())
                    mismatch("event " + std::to_string(i) + ": tier-1 correctness differs");
            } else if (type == "tier2") {
                if (e.value("judge", std::string("RULE_BASED")) == "EXTERNAL") {
                    mismatch("event " + std::to_string(i) + ": verdict came from an external judge");
                    break;
                }
                auto r = engine.submit_tier2(req.session_id.value(), e.at("text").get<std::string>());
                if (e.contains("verdict")) {
                    ++result.verdicts_checked;
                    if (!r.verdict || to_json(*r.verdict) != e["verdict"])
                        mismatch("event " + std::to_string(i) + ": verdict differs");
                } else if (r.verdict) {
                    mismatch("event " + std::to_string(i) + ": turn was redirected before, judged now");
                }
            } else if (type == "message") {
                engine.message(req.session_id.value(), e.at("text").get<std::string>());
            } else if (type == "session_aborted") {
                engine.abort(req.session_id.value(), e.at("reason").get<std::string>());
            } else if (type == "backend_fallback") {
                // the replay engine is rule-based from the start
            } else {
                mismatch("event " + std::to_string(i) + ": unknown type " + type);
            }
        } catch (const std::exception& ex) {
            mismatch("event " + std::to_string(i) + " (" + type + ") failed: " + ex.what());
        }
    }

    Session replayed = engine.session(req.session_id.value());
    if (fs::exists(dir / "snapshot.json")) {
        Session stored = session_from_json(Json::parse(read_text_file((dir / "snapshot.json").string())));
        if (replayed.state != stored.state)
            mismatch("final state differs");
        auto records_json = [](const Session& x) {
            Json out = Json::array();
            for (const auto& r : x.records)
                out.push_back(to_json(r));
            return out;
        };
        if (records_json(replayed) != records_json(stored))
            mismatch("question records differ");
        Json a = Json::array(), b = Json::array();
        for (const auto& q : replayed.asked)
            a.push_back(q.question_id);
        for (const auto& q : stored.asked)
            b.push_back(q.question_id);
        if (a != b)
            mismatch("asked questions differ");
    }
    if (is_terminal(replayed.state))
        result.report = to_json(engine.report(req.session_id.value()));
    return result;
}

AssessmentReport grade_session_dir(const std::string& session_dir)
{
    fs::path dir = fs::absolute(fs::path(session_dir)).lexically_normal();
    if (dir.filename().empty())
        dir = dir.parent_path();
    fs::path data_dir = dir.parent_path().parent_path();
    EngineOptions opts;
    opts.data_dir = data_dir.string();
    Engine engine(opts);
    return engine.report(dir.filename().string());
}

} // namespace socratic
