#include "socratic/dialogue.hpp"
#include "socratic/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace socratic {

std::string_view to_string(VerdictAction a)
{
    switch (a) {
    case VerdictAction::PASS: return "PASS";
    case VerdictAction::HINT_BROAD: return "HINT_BROAD";
    case VerdictAction::HINT_FOCUSED: return "HINT_FOCUSED";
    case VerdictAction::FOLLOW_UP: return "FOLLOW_UP";
    case VerdictAction::FAIL: return "FAIL";
    }
    return "?";
}

VerdictAction verdict_action_from_string(std::string_view s)
{
    for (auto a : {VerdictAction::PASS, VerdictAction::HINT_BROAD, VerdictAction::HINT_FOCUSED,
                   VerdictAction::FOLLOW_UP, VerdictAction::FAIL})
        if (to_string(a) == s)
            return a;
    throw std::invalid_argument("unknown verdict action " + std::string(s));
}

Json to_json(const Verdict& v)
{
    return {{"similarity", v.similarity},
            {"score", v.score},
            {"action", std::string(to_string(v.action))},
            {"matched_atoms", v.matched_atoms},
            {"missing_atoms", v.missing_atoms}};
}

Verdict verdict_from_json(const Json& j)
{
    Verdict v;
    v.similarity = j.at("similarity").get<int>();
    v.score = j.at("score").get<int>();
    v.action = verdict_action_from_string(j.at("action").get<std::string>());
    v.matched_atoms = j.value("matched_atoms", std::vector<int>{});
    v.missing_atoms = j.value("missing_atoms", std::vector<int>{});
    return v;
}

int score_for(int similarity, bool tier1_correct)
{
    if (!tier1_correct)
        return 0;
    return static_cast<int>(std::lround(20.0 + 0.8 * std::clamp(similarity, 0, 100)));
}

VerdictAction action_for(int similarity, bool tier1_correct, int attempts_used, const VerifierConfig& config)
{
    if (attempts_used < 0)
        throw std::invalid_argument("attempts_used is negative");
    bool first = attempts_used == 0;
    bool last = attempts_used + 1 >= config.max_attempts;
    if (tier1_correct && similarity >= config.pass_threshold)
        return VerdictAction::PASS;
    if (last)
        return VerdictAction::FAIL;
    // a wrong selection always starts from the broad hint
    if (!tier1_correct)
        return first ? VerdictAction::HINT_BROAD : VerdictAction::FOLLOW_UP;
    if (!first)
        return VerdictAction::FOLLOW_UP;
    return similarity >= config.focused_threshold ? VerdictAction::HINT_FOCUSED : VerdictAction::HINT_BROAD;
}

std::vector<int> matched_atoms(const ReferenceReason& reference, const std::string& answer_text)
{
    auto tokens = tokenize(answer_text);
    std::vector<int> out;
    for (std::size_t i = 0; i < reference.atoms.size(); ++i) {
        const auto& atom = reference.atoms[i];
        bool hit = contains_sequence(tokens, tokenize(atom.text_form));
        // numbers have to be stated, not paraphrased
        if (!hit && atom.kind != AtomKind::NUMERIC)
            hit = std::any_of(atom.synonyms.begin(), atom.synonyms.end(),
                              [&](const std::string& s) { return contains_sequence(tokens, tokenize(s)); });
        if (hit)
            out.push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

bool blank(const std::string& s)
{
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

Verdict make_verdict(const ReferenceReason& reference, const std::string& answer_text, std::vector<int> matched,
                     int similarity, bool tier1_correct, int attempts_used, const VerifierConfig& config)
{
    Verdict v;
    v.similarity = std::clamp(similarity, 0, 100);
    v.score = score_for(v.similarity, tier1_correct);
    v.action = action_for(v.similarity, tier1_correct, attempts_used, config);
    for (int i = 0; i < static_cast<int>(reference.atoms.size()); ++i)
        if (std::find(matched.begin(), matched.end(), i) == matched.end())
            v.missing_atoms.push_back(i);
    v.matched_atoms = std::move(matched);
    return v;
}

std::set<std::string> raw_words(const std::string& text)
{
    std::set<std::string> out;
    std::string cur;
    for (char c : text + " ") {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += c;
        } else {
            if (!cur.empty())
                out.insert(cur);
            cur.clear();
        }
    }
    return out;
}

} // namespace

Verdict verify_explanation(const ReferenceReason& reference, const std::string& answer_text, bool tier1_correct,
                           int attempts_used, const VerifierConfig& config)
{
    if (blank(answer_text))
        throw EmptyAnswer();
    auto matched = matched_atoms(reference, answer_text);
    double total = 0;
    for (int i : matched)
        total += reference.atoms[i].weight;
    int similarity = static_cast<int>(std::lround(100.0 * total));
    return make_verdict(reference, answer_text, std::move(matched), similarity, tier1_correct, attempts_used, config);
}

Verdict verdict_with_similarity(const ReferenceReason& reference, const std::string& answer_text, int similarity,
                                bool tier1_correct, int attempts_used, const VerifierConfig& config)
{
    if (blank(answer_text))
        throw EmptyAnswer();
    return make_verdict(reference, answer_text, matched_atoms(reference, answer_text), similarity, tier1_correct,
                        attempts_used, config);
}

std::string_view to_string(TurnClass c)
{
    switch (c) {
    case TurnClass::ON_TOPIC: return "ON_TOPIC";
    case TurnClass::SOLUTION_REQUEST: return "SOLUTION_REQUEST";
    case TurnClass::OFF_TOPIC: return "OFF_TOPIC";
    }
    return "?";
}

GuardrailConfig GuardrailConfig::from_json(const Json& j)
{
    GuardrailConfig c;
    c.solution_phrases = j.at("solution_phrases").get<std::vector<std::string>>();
    for (const auto& w : j.at("stopwords"))
        c.stopwords.insert(w.get<std::string>());
    for (const auto& w : j.value("domain_words", Json::array()))
        c.domain_words.insert(w.get<std::string>());
    c.replies = j.at("replies").get<std::map<std::string, std::string>>();
    for (const char* key : {"SOLUTION_REQUEST", "OFF_TOPIC"})
        if (!c.replies.count(key))
            throw std::invalid_argument(std::string("guardrail config has no reply for ") + key);
    return c;
}

GuardrailConfig GuardrailConfig::load(const std::string& path)
{
    return from_json(Json::parse(read_text_file(path)));
}

const GuardrailConfig& GuardrailConfig::builtin()
{
    static const GuardrailConfig config = load(resource_dir() + "/config/guardrails.json");
    return config;
}

std::set<std::string> session_vocabulary(const Program& program, const Question* current,
                                         const GuardrailConfig& config)
{
    std::set<std::string> vocab = config.domain_words;
    auto add_name = [&](const std::string& name) {
        for (auto& t : tokenize(name))
            vocab.insert(t);
    };
    for (const auto& f : program.functions) {
        add_name(f.name);
        for (const auto& p : f.params)
            add_name(p.name);
        walk(f, [&](const Node& n) {
            if (!n.name.empty())
                add_name(n.name);
        });
    }
    auto add_words = [&](const std::string& text) {
        for (auto& t : tokenize(text, true))
            if (!config.stopwords.count(t) && !is_number_token(t))
                vocab.insert(t);
    };
    if (current) {
        add_words(current->stem);
        for (const auto& o : current->options)
            add_words(o.text);
        if (const auto* spec = TemplateLibrary::builtin().find(current->template_id))
            for (const auto& c : spec->concepts)
                add_words(c.text); // synonyms like "time" are too common to count
    }
    return vocab;
}

GuardrailRuling guard_turn(const std::string& turn_text, const std::set<std::string>& vocabulary,
                           const std::string& current_question_id, const GuardrailConfig& config)
{
    if (blank(turn_text))
        throw EmptyAnswer();
    auto tokens = tokenize(turn_text, true);
    GuardrailRuling r;
    r.redirect_target = current_question_id;
    for (const auto& phrase : config.solution_phrases) {
        if (contains_sequence(tokens, tokenize(phrase, true))) {
            r.classification = TurnClass::SOLUTION_REQUEST;
            break;
        }
    }
    if (r.classification == TurnClass::ON_TOPIC) {
        // A variable spelled like a stopword only counts when typed exactly as
        // spelled, so the pronoun "I" stays out. Real English words ("a", "it")
        // also need a number or an operator nearby, or "tell me a joke" would
        // look like a question about variable a.
        auto raw = raw_words(turn_text);
        bool code_context = std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) { return is_number_token(t); }) ||
                            turn_text.find_first_of("=<>+-*/%[]") != std::string::npos;
        bool overlap = std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
            if (!vocabulary.count(t))
                return false;
            if (!config.stopwords.count(t))
                return true;
            bool english = t.size() > 1 || t == "a";
            return raw.count(t) > 0 && (!english || code_context);
        });
        if (!overlap)
            r.classification = TurnClass::OFF_TOPIC;
    }
    if (r.classification != TurnClass::ON_TOPIC) {
        std::string key(to_string(r.classification));
        r.reply_template_id = "REDIRECT_" + key;
        r.reply = config.replies.at(key);
    }
    return r;
}

bool reply_leaks(const std::string& reply, const Program& program, const ReferenceReason* open_reference)
{
    // every MiniLang statement ends in ';' or '}', so text without them cannot hold one
    if (reply.find_first_of(";{}") != std::string::npos || parses_as_statements(reply))
        return true;
    for (std::size_t i = 0; i < program.source_lines.size(); ++i) {
        std::string line = program.line_text(static_cast<int>(i + 1));
        bool has_word = std::any_of(line.begin(), line.end(),
                                    [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
        if (has_word && reply.find(line) != std::string::npos)
            return true;
    }
    if (open_reference) {
        auto tokens = tokenize(reply);
        for (const auto& atom : open_reference->atoms)
            if (atom.kind == AtomKind::NUMERIC && contains_sequence(tokens, tokenize(atom.text_form)))
                return true;
    }
    return false;
}

std::string render_hint(const ReferenceReason& reference, HintLevel level, const std::vector<int>& missing)
{
    bool has_concept = std::any_of(reference.atoms.begin(), reference.atoms.end(),
                                   [](const FactAtom& a) { return a.kind == AtomKind::CONCEPT; });
    if (!has_concept)
        throw std::invalid_argument("reference " + reference.question_id + " has no concept atom");
    if (level == HintLevel::BROAD)
        return reference.broad_hint;

    std::vector<int> pool = missing;
    if (pool.empty())
        for (int i = 0; i < static_cast<int>(reference.atoms.size()); ++i)
            pool.push_back(i);
    const FactAtom* best = nullptr;
    for (int i : pool) {
        const auto& a = reference.atoms.at(i);
        if (!best || a.weight > best->weight)
            best = &a;
    }
    auto tokens = tokenize(best->focus);
    // focus phrases are digit free by construction; fall back rather than risk a value
    if (best->focus.empty() || std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) { return is_number_token(t); }))
        return reference.broad_hint;
    return "Look again at " + best->focus + ".";
}

PromptTemplates PromptTemplates::load(const std::string& dir)
{
    return {read_text_file(dir + "/instructor.txt"), read_text_file(dir + "/verifier.txt")};
}

const PromptTemplates& PromptTemplates::builtin()
{
    static const PromptTemplates t = load(resource_dir() + "/prompts");
    return t;
}

std::string render_history(const std::vector<DialogueTurn>& history)
{
    if (history.empty())
        return "(no earlier turns)";
    std::ostringstream out;
    for (const auto& t : history) {
        out << t.speaker;
        if (!t.kind.empty())
            out << " (" << t.kind << ")";
        out << ": " << t.text << "\n";
    }
    return out.str();
}

namespace {

std::string render_prompt(PromptRole role, const CodeFacts& facts, const std::vector<DialogueTurn>& history,
                          const std::string& target, const std::string* answer, const PromptTemplates& templates)
{
    const std::string& pattern = role == PromptRole::INSTRUCTOR ? templates.instructor : templates.verifier;
    std::vector<std::string> required = {"facts", "history", "target"};
    if (role == PromptRole::VERIFIER)
        required.push_back("answer");
    auto present = placeholders(pattern);
    for (const auto& name : required)
        if (std::find(present.begin(), present.end(), name) == present.end())
            throw MissingPlaceholder(name);

    std::map<std::string, std::string> slots = {
        {"facts", to_json(facts).dump()}, {"history", render_history(history)}, {"target", target}};
    if (answer)
        slots["answer"] = *answer;
    return fill(pattern, slots);
}

} // namespace

std::string build_prompt_context(PromptRole role, const CodeFacts& facts, const std::vector<DialogueTurn>& history,
                                 const Question& target, const PromptTemplates& templates)
{
    if (role == PromptRole::VERIFIER)
        throw std::invalid_argument("the verifier prompt needs a reference and an answer");
    return render_prompt(role, facts, history, public_json(target).dump(), nullptr, templates);
}

std::string build_prompt_context(PromptRole role, const CodeFacts& facts, const std::vector<DialogueTurn>& history,
                                 const ReferenceReason& target, const std::string& answer_text,
                                 const PromptTemplates& templates)
{
    return render_prompt(role, facts, history, to_json(target).dump(), &answer_text, templates);
}

std::string_view to_string(BackendKind k)
{
    return k == BackendKind::RULE_BASED ? "RULE_BASED" : "EXTERNAL";
}

BackendDescriptor BackendDescriptor::rule_based()
{
    BackendDescriptor d;
    d.prompt_templates = PromptTemplates::builtin();
    return d;
}

BackendDescriptor BackendDescriptor::external(std::string endpoint, std::optional<std::string> model)
{
    BackendDescriptor d = rule_based();
    d.kind = BackendKind::EXTERNAL;
    d.endpoint = std::move(endpoint);
    d.model_name = std::move(model);
    return d;
}

BackendDescriptor BackendDescriptor::from_environment()
{
    const char* url = std::getenv("SOCRATIC_BACKEND_URL");
    if (!url || !*url)
        return rule_based();
    std::optional<std::string> model;
    if (const char* m = std::getenv("SOCRATIC_BACKEND_MODEL"); m && *m)
        model = m;
    auto d = external(url, model);
    if (const char* t = std::getenv("SOCRATIC_BACKEND_TIMEOUT_MS"); t && *t)
        d.timeout_ms = std::max(1, std::atoi(t));
    return d;
}

Json to_json(const BackendDescriptor& d)
{
    Json j = {{"kind", std::string(to_string(d.kind))}, {"timeout_ms", d.timeout_ms}};
    j["endpoint"] = d.endpoint ? Json(*d.endpoint) : Json(nullptr);
    j["model_name"] = d.model_name ? Json(*d.model_name) : Json(nullptr);
    return j;
}

BackendDescriptor backend_from_json(const Json& j)
{
    auto kind = j.value("kind", std::string("RULE_BASED"));
    if (kind == "RULE_BASED")
        return BackendDescriptor::rule_based();
    if (kind != "EXTERNAL")
        throw std::invalid_argument("unknown backend kind " + kind);
    if (!j.contains("endpoint") || !j["endpoint"].is_string())
        throw std::invalid_argument("external backend needs an endpoint");
    std::optional<std::string> model;
    if (j.contains("model_name") && j["model_name"].is_string())
        model = j["model_name"].get<std::string>();
    auto d = BackendDescriptor::external(j["endpoint"].get<std::string>(), model);
    d.timeout_ms = j.value("timeout_ms", d.timeout_ms);
    return d;
}

std::string_view to_string(BackendError::Kind k)
{
    switch (k) {
    case BackendError::Kind::TIMEOUT: return "TIMEOUT";
    case BackendError::Kind::TRANSPORT: return "TRANSPORT";
    case BackendError::Kind::MALFORMED_RESPONSE: return "MALFORMED_RESPONSE";
    }
    return "?";
}

int parse_similarity(const std::string& backend_text)
{
    auto open = backend_text.find('{');
    auto close = backend_text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw BackendError(BackendError::Kind::MALFORMED_RESPONSE, "verifier reply holds no JSON object");
    Json j = Json::parse(backend_text.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("similarity") || !j["similarity"].is_number())
        throw BackendError(BackendError::Kind::MALFORMED_RESPONSE, "verifier reply has no numeric similarity");
    double s = j["similarity"].get<double>();
    if (!std::isfinite(s) || s < 0 || s > 100)
        throw BackendError(BackendError::Kind::MALFORMED_RESPONSE, "similarity out of range");
    return static_cast<int>(std::lround(s));
}

} // namespace socratic
