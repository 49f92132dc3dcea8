#include "socratic/questions.hpp"

#include "socratic/text.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <set>

namespace socratic {

std::string_view to_string(Misconception m)
{
    switch (m) {
    case Misconception::NONE: return "NONE";
    case Misconception::OFF_BY_ONE: return "OFF_BY_ONE";
    case Misconception::WRONG_BRANCH: return "WRONG_BRANCH";
    case Misconception::INIT_VALUE_CONFUSION: return "INIT_VALUE_CONFUSION";
    case Misconception::ITER_COUNT_CONFUSION: return "ITER_COUNT_CONFUSION";
    case Misconception::BOUNDS_CONFUSION: return "BOUNDS_CONFUSION";
    }
    return "NONE";
}

Misconception misconception_from_string(std::string_view s)
{
    for (auto m : {Misconception::NONE, Misconception::OFF_BY_ONE, Misconception::WRONG_BRANCH,
                   Misconception::INIT_VALUE_CONFUSION, Misconception::ITER_COUNT_CONFUSION,
                   Misconception::BOUNDS_CONFUSION})
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown misconception tag " + std::string(s));
}

std::string_view to_string(AnswerKind k)
{
    switch (k) {
    case AnswerKind::INT: return "INT";
    case AnswerKind::LINE: return "LINE";
    case AnswerKind::BOOL_PAIR: return "BOOL_PAIR";
    }
    return "INT";
}

namespace {

AnswerKind answer_kind_from_string(std::string_view s)
{
    for (auto k : {AnswerKind::INT, AnswerKind::LINE, AnswerKind::BOOL_PAIR})
        if (to_string(k) == s)
            return k;
    throw std::invalid_argument("unknown answer kind " + std::string(s));
}

} // namespace

std::string_view to_string(AtomKind k)
{
    switch (k) {
    case AtomKind::NUMERIC: return "NUMERIC";
    case AtomKind::IDENTIFIER: return "IDENTIFIER";
    case AtomKind::CONCEPT: return "CONCEPT";
    }
    return "CONCEPT";
}

namespace {

AtomKind atom_kind_from_string(std::string_view s)
{
    for (auto k : {AtomKind::NUMERIC, AtomKind::IDENTIFIER, AtomKind::CONCEPT})
        if (to_string(k) == s)
            return k;
    throw std::invalid_argument("unknown atom kind " + std::string(s));
}

const std::set<std::string> kStrategies = {
    "LOOP_INIT",     "LOOP_COND",        "LOOP_UPDATE",           "LOOP_TERM",  "ITER_COUNT",
    "WHY_TERMINATES", "NONTERMINATION_LINE", "VAR_BEFORE_FINAL_ITER", "NEXT_VALUE", "LAST_VALID_INDEX",
    "BRANCH_NEXT_LINE", "BRANCH_PAIR",   "FINAL_VALUE",           "OUTPUT",
};

AnswerKind answer_kind_of(const std::string& strategy)
{
    if (strategy == "LOOP_COND" || strategy == "BRANCH_PAIR")
        return AnswerKind::BOOL_PAIR;
    if (strategy == "WHY_TERMINATES" || strategy == "NONTERMINATION_LINE" || strategy == "BRANCH_NEXT_LINE")
        return AnswerKind::LINE;
    return AnswerKind::INT;
}

bool has_number_token(const std::string& text)
{
    auto toks = tokenize(text);
    return std::any_of(toks.begin(), toks.end(), [](const std::string& t) { return is_number_token(t); });
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Fisher-Yates with modulo draws, so the order is identical on every platform.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng() % i]);
}

std::int64_t wrap_add(std::int64_t a, std::int64_t b)
{
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}

} // namespace

TemplateSpec template_from_json(const Json& j)
{
    TemplateSpec t;
    try {
        t.template_id = j.at("template_id").get<std::string>();
        t.strategy = j.at("strategy").get<std::string>();
        for (const auto& k : j.at("kcs"))
            t.kcs.push_back(kc_from_string(k.get<std::string>()));
        t.selectable = j.value("selectable", true);
        t.pattern = j.at("pattern").get<std::string>();
        t.alt_pattern = j.value("alt_pattern", std::string());
        t.explanation = j.at("explanation").get<std::string>();
        t.broad_hint = j.at("broad_hint").get<std::string>();
        t.focus = j.value("focus", std::string());
        for (const auto& p : j.at("perturbations"))
            t.perturbations.push_back(misconception_from_string(p.get<std::string>()));
        for (const auto& c : j.at("concepts")) {
            ConceptSpec cs;
            cs.text = c.at("text").get<std::string>();
            cs.synonyms = c.value("synonyms", std::vector<std::string>{});
            cs.hint = c.value("hint", "the idea of " + cs.text);
            t.concepts.push_back(cs);
        }
        t.followup = j.value("followup", std::vector<std::string>{"REGROUND"});
    } catch (const nlohmann::json::exception& e) {
        throw TemplateError("malformed template: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
        throw TemplateError("malformed template: " + std::string(e.what()));
    }

    const std::string& id = t.template_id;
    if (!kStrategies.count(t.strategy))
        throw TemplateError(id + ": unknown strategy " + t.strategy);
    if (t.kcs.empty())
        throw TemplateError(id + ": no knowledge components");
    // Hints render from the concept atoms, so a template without one is unusable.
    if (t.concepts.empty())
        throw TemplateError(id + ": at least one concept is required");
    if (t.perturbations.empty())
        throw TemplateError(id + ": no perturbation rules");
    bool pair = answer_kind_of(t.strategy) == AnswerKind::BOOL_PAIR;
    if (!pair && t.focus.empty())
        throw TemplateError(id + ": numeric answers need a focus phrase");
    if (t.strategy == "NEXT_VALUE" && t.alt_pattern.empty())
        throw TemplateError(id + ": NEXT_VALUE needs alt_pattern");
    for (const auto& f : t.followup)
        if (f != "REGROUND" && f != "STEP")
            throw TemplateError(id + ": unknown follow-up kind " + f);

    const std::set<std::string> text_slots = {"inputs", "var",     "line",           "loop",   "answer",
                                              "iteration", "outcome", "next_iteration"};
    for (const auto* pattern : {&t.pattern, &t.alt_pattern, &t.explanation})
        for (const auto& slot : placeholders(*pattern))
            if (!text_slots.count(slot))
                throw TemplateError(id + ": unknown placeholder {" + slot + "}");
    for (const auto& slot : placeholders(t.focus))
        if (slot != "var" && slot != "loop")
            throw TemplateError(id + ": focus may only use {var} and {loop}");
    std::vector<std::string> hint_texts = {t.broad_hint, t.focus};
    for (const auto& c : t.concepts)
        hint_texts.push_back(c.hint);
    for (const auto& h : hint_texts)
        if (has_number_token(h))
            throw TemplateError(id + ": hint text must not contain numbers");
    if (!placeholders(t.broad_hint).empty())
        throw TemplateError(id + ": broad hints take no placeholders");
    return t;
}

TemplateLibrary TemplateLibrary::from_json(const std::vector<Json>& docs)
{
    TemplateLibrary lib;
    for (const auto& d : docs)
        lib.templates_.push_back(template_from_json(d));
    std::sort(lib.templates_.begin(), lib.templates_.end(),
              [](const TemplateSpec& a, const TemplateSpec& b) { return a.template_id < b.template_id; });
    for (std::size_t i = 1; i < lib.templates_.size(); ++i)
        if (lib.templates_[i].template_id == lib.templates_[i - 1].template_id)
            throw TemplateError("duplicate template " + lib.templates_[i].template_id);
    return lib;
}

TemplateLibrary TemplateLibrary::load(const std::string& dir)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw TemplateError("template directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<Json> docs;
    for (const auto& f : files) {
        try {
            docs.push_back(Json::parse(read_text_file(f.string())));
        } catch (const nlohmann::json::exception& e) {
            throw TemplateError(f.string() + ": " + e.what());
        }
    }
    if (docs.empty())
        throw TemplateError("no templates in " + dir);
    return from_json(docs);
}

const TemplateLibrary& TemplateLibrary::builtin()
{
    static const TemplateLibrary lib = load(resource_dir() + "/templates");
    return lib;
}

const TemplateSpec* TemplateLibrary::find(std::string_view template_id) const
{
    for (const auto& t : templates_)
        if (t.template_id == template_id)
            return &t;
    return nullptr;
}

const TemplateSpec& TemplateLibrary::get(std::string_view template_id) const
{
    if (const auto* t = find(template_id))
        return *t;
    throw TemplateError("unknown template " + std::string(template_id));
}

std::string option_text(AnswerKind kind, std::int64_t value)
{
    switch (kind) {
    case AnswerKind::INT: return std::to_string(value);
    case AnswerKind::LINE: return "line " + std::to_string(value);
    case AnswerKind::BOOL_PAIR:
        return std::string(value & 2 ? "true" : "false") + ", " + (value & 1 ? "true" : "false");
    }
    return std::to_string(value);
}

std::vector<Choice> render_distractors(std::int64_t fact_value, const std::string& template_id, std::uint64_t seed,
                                       const DistractorContext& ctx, const TemplateLibrary& library)
{
    const TemplateSpec& spec = library.get(template_id);
    AnswerKind kind = answer_kind_of(spec.strategy);
    std::vector<Choice> out;

    if (kind == AnswerKind::BOOL_PAIR) {
        for (std::int64_t v = 0; v < 4; ++v)
            if (v != fact_value)
                out.push_back({option_text(kind, v), Misconception::WRONG_BRANCH, v});
        seeded_shuffle(out, seed ^ fnv1a(template_id));
        return out;
    }

    std::set<std::int64_t> used = {fact_value};
    auto offer = [&](std::int64_t v, Misconception tag, bool respect_max) {
        if (out.size() >= 3 || used.count(v) || v < ctx.min_value || (respect_max && v > ctx.max_value))
            return;
        used.insert(v);
        out.push_back({option_text(kind, v), tag, v});
    };

    for (Misconception rule : spec.perturbations) {
        switch (rule) {
        case Misconception::OFF_BY_ONE:
            offer(wrap_add(fact_value, -1), rule, true);
            offer(wrap_add(fact_value, 1), rule, true);
            break;
        case Misconception::ITER_COUNT_CONFUSION:
            for (auto v : ctx.iteration_values)
                offer(v, rule, true);
            break;
        case Misconception::INIT_VALUE_CONFUSION:
            if (ctx.initializer)
                offer(*ctx.initializer, rule, true);
            break;
        case Misconception::BOUNDS_CONFUSION:
            if (ctx.boundary)
                offer(*ctx.boundary, rule, true);
            break;
        default:
            break;
        }
    }
    // Fallback: +-2, +-3, and further out only when a range bound got in the way.
    for (std::int64_t k = 2; out.size() < 3; ++k) {
        bool respect_max = k <= 64;
        offer(wrap_add(fact_value, -k), Misconception::OFF_BY_ONE, respect_max);
        offer(wrap_add(fact_value, k), Misconception::OFF_BY_ONE, respect_max);
    }
    seeded_shuffle(out, seed ^ fnv1a(template_id));
    return out;
}

namespace {

struct LoopScan {
    std::vector<int> checks; // BRANCH steps of the loop condition
    std::vector<bool> outcomes;
    std::vector<int> starts; // LOOP_ITER_START steps
};

LoopScan scan_loop(const TraceLog& t, NodeId loop)
{
    LoopScan s;
    for (const auto& e : t.events) {
        if (e.node_id != loop)
            continue;
        if (e.kind == EventKind::BRANCH) {
            s.checks.push_back(e.step);
            s.outcomes.push_back(e.flag);
        } else if (e.kind == EventKind::LOOP_ITER_START) {
            s.starts.push_back(e.step);
        }
    }
    return s;
}

const Node& condition_of(const Node& n)
{
    return n.kind == NodeKind::FOR ? n.child(1) : n.child(0);
}

std::vector<std::string> vars_in_order(const Node& expr)
{
    std::vector<std::string> names;
    walk(expr, [&](const Node& x) {
        if (x.kind == NodeKind::VAR && std::find(names.begin(), names.end(), x.name) == names.end())
            names.push_back(x.name);
    });
    return names;
}

// The variable a loop counts with: the for-init target, else the first condition
// variable the loop writes, else the first condition variable.
std::string control_var(const Node& loop)
{
    LoopParts parts = loop_parts(loop);
    auto cond_vars = vars_in_order(condition_of(loop));
    if (loop.kind == NodeKind::FOR) {
        const Node& init = loop.child(0);
        if ((init.kind == NodeKind::ASSIGN || init.kind == NodeKind::DECL) && parts.cond_reads.count(init.name))
            return init.name;
    }
    for (const auto& v : cond_vars)
        if (parts.writes.count(v))
            return v;
    return cond_vars.empty() ? "" : cond_vars.front();
}

std::optional<std::int64_t> const_value(const Node& e)
{
    if (e.kind == NodeKind::CONST)
        return e.value;
    if (e.kind == NodeKind::UNOP && e.op == Op::NEG && e.child(0).kind == NodeKind::CONST)
        return wrap_add(0, -e.child(0).value);
    return std::nullopt;
}

// Literal starting value of a scalar: the for-init of `loop` or its declaration.
std::optional<std::int64_t> initializer_of(const Program& p, const std::string& var, const Node* loop)
{
    if (loop && loop->kind == NodeKind::FOR) {
        const Node& init = loop->child(0);
        if ((init.kind == NodeKind::ASSIGN || init.kind == NodeKind::DECL) && init.name == var && !init.children.empty())
            return const_value(init.child(0));
    }
    const FunctionDef* fn = loop ? p.owner_of(loop->id) : &p.main();
    if (!fn)
        return std::nullopt;
    std::optional<std::int64_t> out;
    bool found = false;
    walk(*fn, [&](const Node& n) {
        if (!found && n.kind == NodeKind::DECL && n.name == var && !n.array_size && !n.children.empty()) {
            found = true;
            out = const_value(n.child(0));
        }
    });
    return out;
}

std::optional<std::int64_t> value_at(const Program& p, const TraceLog& t, const std::string& var, int step)
{
    TraceAnswer a = query_trace(p, t, TraceQuery{QueryKind::VALUE_AT_STEP, -1, var, step});
    if (!a.applicable)
        return std::nullopt;
    return a.value;
}

// The value the control variable is compared against at a given check.
std::optional<std::int64_t> bound_at(const Program& p, const TraceLog& t, const Node& loop, const std::string& cv,
                                     int step)
{
    const Node& cond = condition_of(loop);
    if (cond.kind != NodeKind::BINOP || cond.children.size() != 2)
        return std::nullopt;
    for (int side = 0; side < 2; ++side) {
        const Node& me = cond.child(side);
        const Node& other = cond.child(1 - side);
        if (me.kind != NodeKind::VAR || me.name != cv)
            continue;
        if (auto c = const_value(other))
            return c;
        if (other.kind == NodeKind::VAR)
            return value_at(p, t, other.name, step);
    }
    return std::nullopt;
}

// A few sample positions: the first three and the last two.
std::vector<int> sample_positions(std::size_t n)
{
    std::vector<int> out;
    for (std::size_t i = 0; i < n; ++i)
        if (i < 3 || i + 2 >= n)
            out.push_back(static_cast<int>(i));
    return out;
}

std::vector<std::int64_t> values_at_steps(const Program& p, const TraceLog& t, const std::string& var,
                                          const std::vector<int>& steps)
{
    std::vector<std::int64_t> out;
    for (int pos : sample_positions(steps.size()))
        if (auto v = value_at(p, t, var, steps[pos]))
            out.push_back(*v);
    return out;
}

std::string ordinal(std::size_t i)
{
    static const char* words[] = {"first", "second", "third", "fourth", "fifth",
                                  "sixth", "seventh", "eighth", "ninth", "tenth"};
    return i < 10 ? words[i] : "a later";
}

// Digit-free way to name a loop in hints.
std::string loop_descriptor(const Program& p, const Node& loop)
{
    const FunctionDef* fn = p.owner_of(loop.id);
    std::string fname = fn ? fn->name : "main";
    std::vector<const Node*> loops;
    if (fn)
        walk(*fn, [&](const Node& n) {
            if (is_loop(n.kind))
                loops.push_back(&n);
        });
    std::string kind = loop.kind == NodeKind::FOR ? "for" : "while";
    if (loops.size() <= 1)
        return "the " + kind + " loop in " + fname;
    std::size_t idx = std::find(loops.begin(), loops.end(), &loop) - loops.begin();
    return "the " + ordinal(idx) + " loop in " + fname;
}

std::int64_t array_size_of(const Program& p, const std::string& name)
{
    for (const auto& fn : p.functions) {
        for (const auto& prm : fn.params)
            if (prm.name == name && prm.array_size)
                return *prm.array_size;
        std::int64_t size = -1;
        walk(fn, [&](const Node& n) {
            if (size < 0 && n.kind == NodeKind::DECL && n.name == name && n.array_size)
                size = *n.array_size;
        });
        if (size >= 0)
            return size;
    }
    return -1;
}

struct Candidate {
    const TemplateSpec* spec = nullptr;
    std::string question_id;
    std::string unit_id;
    std::string input_set_id;
    AnswerKind kind = AnswerKind::INT;
    std::int64_t value = 0;
    std::vector<TraceQuery> queries;
    std::vector<std::string> grounding;
    NodeId node = -1;
    int line = 0;
    std::string var;
    int iteration = -1;
    int trace_step = -1;
    bool alt = false;
    std::string loop_text;
    std::string outcome;
    std::vector<std::string> identifiers;
    std::function<DistractorContext()> context;
};

class Enumerator {
public:
    Enumerator(const Program& p, const CodeFacts& f) : p_(p), f_(f)
    {
        walk(p, [&](const Node& n) {
            if (is_loop(n.kind))
                loops_.push_back(&n);
            if (n.kind == NodeKind::IF)
                ifs_.push_back(&n);
        });
        line_count_ = static_cast<int>(p.source_lines.size());
    }

    std::vector<Candidate> run(const TemplateSpec& spec, int next_value_iterations = 4)
    {
        std::vector<Candidate> out;
        const std::string& s = spec.strategy;
        for (const auto& set : f_.input_sets) {
            const TraceLog& t = f_.runs.at(set.id);
            if (s == "NONTERMINATION_LINE") {
                nontermination(spec, set.id, t, out);
            } else if (s == "LAST_VALID_INDEX") {
                last_valid(spec, set.id, t, out);
            } else if (s == "BRANCH_NEXT_LINE" || s == "BRANCH_PAIR") {
                for (const Node* n : ifs_)
                    branch(spec, set.id, t, *n, out);
            } else if (s == "FINAL_VALUE") {
                final_value(spec, set.id, t, out);
            } else if (s == "OUTPUT") {
                output(spec, set.id, t, out);
            } else {
                for (const Node* loop : loops_)
                    loop_question(spec, set.id, t, *loop, next_value_iterations, out);
            }
        }
        return out;
    }

private:
    const Program& p_;
    const CodeFacts& f_;
    std::vector<const Node*> loops_;
    std::vector<const Node*> ifs_;
    int line_count_ = 0;

    const DynamicFact* fact(DynamicKind kind, const std::string& in, NodeId node, const std::string& var = "",
                            int occurrence = 0) const
    {
        for (const auto& d : f_.dynamic_facts)
            if (d.kind == kind && d.input_set_id == in && (node < 0 || d.node_id == node) &&
                (var.empty() || d.var == var) && d.occurrence == occurrence)
                return &d;
        return nullptr;
    }

    std::string function_unit(NodeId id) const
    {
        const FunctionDef* fn = p_.owner_of(id);
        std::string name = fn ? fn->name : p_.main().name;
        if (!fn)
            for (const auto& f : p_.functions)
                if (f.id == id)
                    name = f.name;
        for (const auto& u : f_.logic_units)
            if (u.kind == UnitKind::FUNCTION_BODY && u.function == name)
                return u.unit_id;
        return f_.logic_units.empty() ? "" : f_.logic_units.front().unit_id;
    }

    std::string unit_for_statement(NodeId id) const
    {
        if (const LogicUnit* u = f_.unit_of(id))
            return u->unit_id;
        return function_unit(id);
    }

    std::string loop_unit(NodeId loop) const
    {
        for (const auto& u : f_.logic_units)
            if (u.kind == UnitKind::LOOP_BODY && u.owner == loop)
                return u.unit_id;
        return unit_for_statement(loop);
    }

    static std::string make_id(const TemplateSpec& spec, const std::string& in, NodeId node, const std::string& var,
                               int extra = -1)
    {
        std::string id = spec.template_id + "/" + in + "/n" + std::to_string(node);
        if (!var.empty())
            id += "/" + var;
        if (extra >= 0)
            id += "/k" + std::to_string(extra);
        return id;
    }

    Candidate base(const TemplateSpec& spec, const std::string& in, const Node& node, const std::string& var) const
    {
        Candidate c;
        c.spec = &spec;
        c.input_set_id = in;
        c.kind = answer_kind_of(spec.strategy);
        c.node = node.id;
        c.line = node.line;
        c.var = var;
        c.question_id = make_id(spec, in, node.id, var);
        if (!var.empty())
            c.identifiers.push_back(var);
        return c;
    }

    void loop_question(const TemplateSpec& spec, const std::string& in, const TraceLog& t, const Node& loop,
                       int next_value_iterations, std::vector<Candidate>& out) const
    {
        const std::string& s = spec.strategy;
        std::string cv = control_var(loop);
        if (cv.empty())
            return;
        LoopScan scan = scan_loop(t, loop.id);
        bool normal = t.termination == Termination::NORMAL;
        std::string unit = loop_unit(loop.id);
        std::string desc = loop_descriptor(p_, loop);
        const Program* p = &p_;
        const TraceLog* tp = &t;
        const Node* lp = &loop;

        auto finish = [&](Candidate c, const TraceAnswer& a, std::function<DistractorContext()> ctx) {
            c.unit_id = unit;
            c.loop_text = desc;
            if (c.kind == AnswerKind::LINE) {
                c.value = a.line;
            } else if (c.kind == AnswerKind::INT) {
                c.value = a.value;
            }
            if (c.trace_step < 0)
                c.trace_step = a.step;
            c.context = std::move(ctx);
            out.push_back(std::move(c));
        };

        if (s == "LOOP_INIT") {
            if (scan.checks.empty())
                return;
            TraceQuery q{QueryKind::VALUE_AT_STEP, -1, cv, scan.checks[0]};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            c.trace_step = scan.checks[0];
            std::vector<int> later(scan.checks.begin() + 1, scan.checks.end());
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.iteration_values = values_at_steps(*p, *tp, cv, later);
                ctx.boundary = bound_at(*p, *tp, *lp, cv, scan.checks[0]);
                return ctx;
            });
        } else if (s == "LOOP_COND") {
            if (scan.checks.size() < 2)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {TraceQuery{QueryKind::BRANCH_OUTCOME, loop.id, "", 0, 0},
                         TraceQuery{QueryKind::BRANCH_OUTCOME, loop.id, "", 0, 1}};
            c.value = (scan.outcomes[0] ? 2 : 0) + (scan.outcomes[1] ? 1 : 0);
            c.trace_step = scan.checks[0];
            finish(std::move(c), TraceAnswer{}, [] { return DistractorContext{}; });
        } else if (s == "LOOP_UPDATE") {
            if (scan.starts.empty())
                return;
            TraceQuery q{QueryKind::NEXT_WRITE_AFTER, -1, cv, scan.starts[0]};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            std::vector<int> later(scan.starts.begin() + 1, scan.starts.end());
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.initializer = initializer_of(*p, cv, lp);
                ctx.iteration_values = values_at_steps(*p, *tp, cv, later);
                return ctx;
            });
        } else if (s == "LOOP_TERM") {
            int exit_step = -1;
            for (std::size_t i = scan.checks.size(); i-- > 0;)
                if (!scan.outcomes[i]) {
                    exit_step = scan.checks[i];
                    break;
                }
            if (exit_step < 0)
                return;
            TraceQuery q{QueryKind::VALUE_AT_STEP, -1, cv, exit_step};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            c.trace_step = exit_step;
            std::vector<int> starts = scan.starts;
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.iteration_values = values_at_steps(*p, *tp, cv, starts);
                ctx.boundary = bound_at(*p, *tp, *lp, cv, exit_step);
                ctx.initializer = initializer_of(*p, cv, lp);
                return ctx;
            });
        } else if (s == "ITER_COUNT") {
            const DynamicFact* d = normal ? fact(DynamicKind::ITERATIONS, in, loop.id) : nullptr;
            if (!d)
                return;
            TraceQuery q{QueryKind::ITER_COUNT, loop.id};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            c.grounding = {d->id};
            c.trace_step = scan.checks.empty() ? -1 : scan.checks.back();
            int first_check = scan.checks.empty() ? -1 : scan.checks[0];
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.min_value = 0;
                ctx.initializer = initializer_of(*p, cv, lp);
                if (first_check >= 0)
                    ctx.boundary = bound_at(*p, *tp, *lp, cv, first_check);
                return ctx;
            });
        } else if (s == "WHY_TERMINATES") {
            if (!normal || scan.starts.empty())
                return;
            if (std::find(scan.outcomes.begin(), scan.outcomes.end(), false) == scan.outcomes.end())
                return;
            if (!loop_parts(loop).writes.count(cv))
                return;
            TraceQuery q{QueryKind::NEXT_WRITE_AFTER, -1, cv, scan.starts[0]};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable || a.line <= 0)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            int lines = line_count_;
            int loop_line = loop.line;
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.boundary = loop_line;
                ctx.min_value = 1;
                ctx.max_value = lines;
                return ctx;
            });
        } else if (s == "VAR_BEFORE_FINAL_ITER") {
            const DynamicFact* d = normal ? fact(DynamicKind::VAR_BEFORE_FINAL_ITER, in, loop.id, cv) : nullptr;
            if (!d || scan.starts.empty())
                return;
            TraceQuery q{QueryKind::VAR_BEFORE_FINAL_ITER, loop.id, cv};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                return;
            Candidate c = base(spec, in, loop, cv);
            c.queries = {q};
            c.grounding = {d->id};
            c.trace_step = scan.starts.back();
            std::vector<int> earlier(scan.starts.begin(), scan.starts.end() - 1);
            int first_check = scan.checks.empty() ? -1 : scan.checks[0];
            finish(std::move(c), a, [=] {
                DistractorContext ctx;
                ctx.iteration_values = values_at_steps(*p, *tp, cv, earlier);
                ctx.initializer = initializer_of(*p, cv, lp);
                if (first_check >= 0)
                    ctx.boundary = bound_at(*p, *tp, *lp, cv, first_check);
                return ctx;
            });
        } else if (s == "NEXT_VALUE") {
            std::string var = next_value_var(loop, cv);
            bool written = loop_parts(loop).writes.count(var) > 0;
            int limit = std::min<int>(next_value_iterations, static_cast<int>(scan.starts.size()));
            for (int k = 0; k < limit; ++k) {
                TraceQuery q;
                if (written) {
                    q = TraceQuery{QueryKind::NEXT_WRITE_AFTER, -1, var, scan.starts[k]};
                } else {
                    if (k + 1 >= static_cast<int>(scan.starts.size()))
                        break;
                    q = TraceQuery{QueryKind::VALUE_AT_STEP, -1, var, scan.starts[k + 1]};
                }
                TraceAnswer a = query_trace(p_, t, q);
                if (!a.applicable)
                    break;
                Candidate c = base(spec, in, loop, var);
                c.question_id = make_id(spec, in, loop.id, var, k);
                c.queries = {q};
                c.iteration = k;
                c.alt = !written;
                c.trace_step = scan.starts[k];
                std::vector<int> starts = scan.starts;
                finish(std::move(c), a, [=] {
                    DistractorContext ctx;
                    ctx.iteration_values = values_at_steps(*p, *tp, var, starts);
                    ctx.initializer = initializer_of(*p, var, lp);
                    return ctx;
                });
            }
        }
    }

    // Chains follow an accumulator when the body has one, else the counter.
    static std::string next_value_var(const Node& loop, const std::string& cv)
    {
        std::string pick;
        for (const auto& s : loop.body)
            walk(*s, [&](const Node& n) {
                if (pick.empty() && n.name != cv &&
                    (n.kind == NodeKind::ASSIGN || (n.kind == NodeKind::DECL && !n.array_size)))
                    pick = n.name;
            });
        return pick.empty() ? cv : pick;
    }

    void nontermination(const TemplateSpec& spec, const std::string& in, const TraceLog& t,
                        std::vector<Candidate>& out) const
    {
        if (t.termination != Termination::STEP_BUDGET_EXCEEDED)
            return;
        const DynamicFact* d = fact(DynamicKind::NONTERMINATION, in, -1);
        if (!d)
            return;
        const Node* loop = p_.find_node(d->node_id);
        if (!loop)
            return;
        TraceQuery q{QueryKind::NONTERMINATING_LOOP_LINE};
        TraceAnswer a = query_trace(p_, t, q);
        if (!a.applicable)
            return;
        std::vector<std::string> ids = d->unwritten;
        if (ids.empty())
            ids = vars_in_order(condition_of(*loop));
        Candidate c = base(spec, in, *loop, ids.empty() ? "" : ids.front());
        c.identifiers = ids;
        c.queries = {q};
        c.grounding = {d->id};
        c.value = a.line;
        c.trace_step = a.step;
        c.unit_id = loop_unit(loop->id);
        c.loop_text = loop_descriptor(p_, *loop);
        int lines = line_count_;
        c.context = [=] {
            DistractorContext ctx;
            ctx.min_value = 1;
            ctx.max_value = lines;
            return ctx;
        };
        out.push_back(std::move(c));
    }

    void last_valid(const TemplateSpec& spec, const std::string& in, const TraceLog& t,
                    std::vector<Candidate>& out) const
    {
        for (const auto& d : f_.dynamic_facts) {
            if (d.kind != DynamicKind::LAST_VALID_INDEX || d.input_set_id != in)
                continue;
            TraceQuery q{QueryKind::LAST_VALID_ARRAY_INDEX, -1, d.var};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                continue;
            NodeId stmt = -1;
            for (int s = a.step; s >= 0 && stmt < 0; --s)
                if (t.events[s].kind == EventKind::STMT)
                    stmt = t.events[s].node_id;
            Candidate c;
            c.spec = &spec;
            c.input_set_id = in;
            c.kind = AnswerKind::INT;
            c.node = d.node_id;
            c.line = d.line;
            c.var = d.var;
            c.identifiers = {d.var};
            c.question_id = make_id(spec, in, d.node_id, d.var);
            c.queries = {q};
            c.grounding = {d.id};
            c.value = a.value;
            c.trace_step = a.step;
            c.unit_id = stmt >= 0 ? unit_for_statement(stmt) : function_unit(d.node_id);
            std::int64_t size = array_size_of(p_, d.var);
            const TraceLog* tp = &t;
            std::string name = d.var;
            int upto = a.step;
            c.context = [=] {
                DistractorContext ctx;
                if (size >= 0)
                    ctx.boundary = size;
                std::vector<std::int64_t> seen;
                for (int s = 0; s < upto && seen.size() < 4; ++s) {
                    const auto& e = tp->events[s];
                    if (e.kind == EventKind::ARRAY_ACCESS && e.name == name && e.flag && e.index &&
                        std::find(seen.begin(), seen.end(), *e.index) == seen.end())
                        seen.push_back(*e.index);
                }
                if (!seen.empty())
                    ctx.initializer = seen.front();
                ctx.iteration_values = seen;
                return ctx;
            };
            out.push_back(std::move(c));
        }
    }

    void branch(const TemplateSpec& spec, const std::string& in, const TraceLog& t, const Node& n,
                std::vector<Candidate>& out) const
    {
        const DynamicFact* first = fact(DynamicKind::BRANCH_TAKEN, in, n.id, "", 0);
        if (!first)
            return;
        auto cond_vars = vars_in_order(n.child(0));
        Candidate c = base(spec, in, n, cond_vars.empty() ? "" : cond_vars.front());
        if (cond_vars.size() > 1)
            c.identifiers.push_back(cond_vars[1]);
        c.unit_id = unit_for_statement(n.id);
        if (spec.strategy == "BRANCH_PAIR") {
            const DynamicFact* second = fact(DynamicKind::BRANCH_TAKEN, in, n.id, "", 1);
            if (!second)
                return;
            c.queries = {TraceQuery{QueryKind::BRANCH_OUTCOME, n.id, "", 0, 0},
                         TraceQuery{QueryKind::BRANCH_OUTCOME, n.id, "", 0, 1}};
            c.grounding = {first->id, second->id};
            c.value = (first->taken ? 2 : 0) + (second->taken ? 1 : 0);
            c.trace_step = query_trace(p_, t, c.queries[0]).step;
            c.context = [] { return DistractorContext{}; };
        } else {
            TraceQuery q{QueryKind::BRANCH_OUTCOME, n.id, "", 0, 0};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable || a.line <= 0)
                return;
            c.queries = {q};
            c.grounding = {first->id};
            c.value = a.line;
            c.trace_step = a.step;
            c.outcome = a.value ? "true" : "false";
            int lines = line_count_;
            int if_line = n.line;
            c.context = [=] {
                DistractorContext ctx;
                ctx.boundary = if_line;
                ctx.min_value = 1;
                ctx.max_value = lines;
                return ctx;
            };
        }
        out.push_back(std::move(c));
    }

    std::vector<std::int64_t> written_values(const TraceLog& t, const std::string& var, int depth) const
    {
        std::vector<std::int64_t> vals;
        for (const auto& e : t.events)
            if (e.kind == EventKind::VAR_WRITE && !e.index && e.name == var && e.depth == depth &&
                std::find(vals.begin(), vals.end(), e.new_value) == vals.end() && vals.size() < 6)
                vals.push_back(e.new_value);
        return vals;
    }

    void final_value(const TemplateSpec& spec, const std::string& in, const TraceLog& t,
                     std::vector<Candidate>& out) const
    {
        if (t.termination != Termination::NORMAL || t.events.empty())
            return;
        int last = static_cast<int>(t.events.size()) - 1;
        for (const auto& d : f_.dynamic_facts) {
            if (d.kind != DynamicKind::FINAL_VALUE || d.input_set_id != in)
                continue;
            TraceQuery q{QueryKind::VALUE_AT_STEP, -1, d.var, last};
            TraceAnswer a = query_trace(p_, t, q);
            if (!a.applicable)
                continue;
            Candidate c;
            c.spec = &spec;
            c.input_set_id = in;
            c.node = d.node_id;
            c.line = d.line;
            c.var = d.var;
            c.identifiers = {d.var};
            c.question_id = make_id(spec, in, d.node_id, d.var);
            c.queries = {q};
            c.grounding = {d.id};
            c.value = a.value;
            c.trace_step = last;
            c.unit_id = p_.find_node(d.node_id) ? unit_for_statement(d.node_id) : function_unit(d.node_id);
            auto vals = written_values(t, d.var, 0);
            auto init = initializer_of(p_, d.var, nullptr);
            c.context = [=] {
                DistractorContext ctx;
                ctx.iteration_values = vals;
                ctx.initializer = init;
                return ctx;
            };
            out.push_back(std::move(c));
        }
    }

    void output(const TemplateSpec& spec, const std::string& in, const TraceLog& t,
                std::vector<Candidate>& out) const
    {
        const DynamicFact* d = fact(DynamicKind::OUTPUT, in, -1);
        if (!d || d->text.empty() || d->text.find('\n') != std::string::npos)
            return;
        TraceQuery q{QueryKind::FINAL_OUTPUT};
        TraceAnswer a = query_trace(p_, t, q);
        if (!a.applicable)
            return;
        const Node* print = p_.find_node(d->node_id);
        Candidate c;
        c.spec = &spec;
        c.input_set_id = in;
        c.node = d->node_id;
        c.line = d->line;
        c.question_id = make_id(spec, in, d->node_id, "");
        c.queries = {q};
        c.grounding = {d->id};
        c.value = std::stoll(a.text);
        c.trace_step = a.step;
        c.unit_id = print ? unit_for_statement(print->id) : function_unit(d->node_id);
        std::vector<std::int64_t> vals;
        std::optional<std::int64_t> init;
        if (print) {
            c.identifiers = vars_in_order(print->child(0));
            if (c.identifiers.size() > 2)
                c.identifiers.resize(2);
            if (!c.identifiers.empty())
                c.var = c.identifiers.front();
            if (print->child(0).kind == NodeKind::VAR) {
                const FunctionDef* fn = p_.owner_of(print->id);
                if (fn && fn->name == p_.main().name) {
                    vals = written_values(t, c.var, 0);
                    init = initializer_of(p_, c.var, nullptr);
                }
            }
        }
        c.context = [=] {
            DistractorContext ctx;
            ctx.iteration_values = vals;
            ctx.initializer = init;
            return ctx;
        };
        out.push_back(std::move(c));
    }
};

const InputSet& input_set_or_throw(const CodeFacts& f, const std::string& id)
{
    if (const InputSet* s = f.input_set(id))
        return *s;
    throw std::invalid_argument("unknown input set " + id);
}

std::vector<FactAtom> build_atoms(const TemplateSpec& spec, const Candidate& c,
                                  const std::map<std::string, std::string>& focus_slots)
{
    std::vector<FactAtom> numeric, idents, concepts;
    if (c.kind != AnswerKind::BOOL_PAIR) {
        FactAtom a;
        a.text_form = std::to_string(c.value);
        a.kind = AtomKind::NUMERIC;
        a.focus = fill(spec.focus, focus_slots);
        numeric.push_back(a);
    }
    std::set<std::string> seen;
    for (const auto& id : c.identifiers) {
        if (id.empty() || !seen.insert(id).second)
            continue;
        FactAtom a;
        a.text_form = id;
        a.kind = AtomKind::IDENTIFIER;
        a.focus = "how " + id + " changes as the program runs";
        idents.push_back(a);
    }
    for (const auto& cs : spec.concepts) {
        FactAtom a;
        a.text_form = cs.text;
        a.kind = AtomKind::CONCEPT;
        a.synonyms = cs.synonyms;
        a.focus = cs.hint;
        concepts.push_back(a);
    }

    // 0.4 / 0.3 / 0.3 by kind, renormalized over the kinds present, split evenly.
    double total = (numeric.empty() ? 0 : 0.4) + (idents.empty() ? 0 : 0.3) + (concepts.empty() ? 0 : 0.3);
    std::vector<FactAtom> atoms;
    auto add = [&](std::vector<FactAtom>& group, double share) {
        for (auto& a : group) {
            a.weight = share / total / static_cast<double>(group.size());
            atoms.push_back(a);
        }
    };
    add(numeric, 0.4);
    add(idents, 0.3);
    add(concepts, 0.3);
    return atoms;
}

GeneratedQuestion build(const Program& program, const CodeFacts& facts, const Candidate& c, KC kc,
                        std::uint64_t seed, const TemplateLibrary& library)
{
    const TemplateSpec& spec = *c.spec;
    const InputSet& set = input_set_or_throw(facts, c.input_set_id);

    GeneratedQuestion g;
    Question& q = g.question;
    q.question_id = c.question_id;
    q.template_id = spec.template_id;
    q.unit_id = c.unit_id;
    q.kc = kc;
    q.grounding = c.grounding;
    q.queries = c.queries;
    q.input_set_id = c.input_set_id;
    q.answer_kind = c.kind;
    q.node_id = c.node;
    q.var = c.var;
    q.iteration = c.iteration;
    q.trace_step = c.trace_step;
    q.seed = seed;

    std::map<std::string, std::string> slots = {
        {"inputs", describe_inputs(set.inputs)},
        {"var", c.var.empty() ? "the condition" : c.var},
        {"line", std::to_string(c.line)},
        {"loop", c.loop_text.empty() ? "the loop" : c.loop_text},
        {"answer", option_text(c.kind, c.value)},
        {"iteration", std::to_string(std::max(c.iteration, 0))},
        {"next_iteration", std::to_string(std::max(c.iteration, 0) + 1)},
        {"outcome", c.outcome},
    };
    if (c.kind == AnswerKind::LINE)
        slots["answer"] = std::to_string(c.value);
    q.stem = fill(c.alt ? spec.alt_pattern : spec.pattern, slots);

    DistractorContext ctx = c.context ? c.context() : DistractorContext{};
    std::vector<Choice> options =
        render_distractors(c.value, spec.template_id, seed ^ fnv1a(c.question_id), ctx, library);
    options.push_back({option_text(c.kind, c.value), Misconception::NONE, c.value});
    seeded_shuffle(options, seed ^ fnv1a(c.question_id) ^ 0x9e3779b97f4a7c15ull);
    q.options = options;
    for (std::size_t i = 0; i < options.size(); ++i)
        if (options[i].tag == Misconception::NONE)
            q.correct_index = static_cast<int>(i);

    ReferenceReason& r = g.reference;
    r.question_id = q.question_id;
    r.template_id = spec.template_id;
    r.kc = kc;
    std::map<std::string, std::string> focus_slots = {{"var", slots["var"]}, {"loop", slots["loop"]}};
    r.atoms = build_atoms(spec, c, focus_slots);
    r.canonical_explanation = fill(spec.explanation, slots);
    r.broad_hint = spec.broad_hint;
    return g;
}

std::set<std::string> asked_ids(const QuestionHistory& history)
{
    std::set<std::string> ids;
    for (const auto& h : history)
        ids.insert(h.question_id);
    return ids;
}

bool has_kc(const TemplateSpec& t, KC kc)
{
    return std::find(t.kcs.begin(), t.kcs.end(), kc) != t.kcs.end();
}

} // namespace

GeneratedQuestion generate_question(const Program& program, const CodeFacts& facts, KC kc, std::uint64_t seed,
                                    const QuestionHistory& history, const std::string& preferred_unit,
                                    const TemplateLibrary& library)
{
    // Least recently used first; never-used templates rank oldest, ties by id.
    std::map<std::string, int> last_use;
    for (std::size_t i = 0; i < history.size(); ++i)
        last_use[history[i].template_id] = static_cast<int>(i);
    std::vector<const TemplateSpec*> order;
    for (const auto& t : library.all())
        if (t.selectable && has_kc(t, kc))
            order.push_back(&t);
    std::stable_sort(order.begin(), order.end(), [&](const TemplateSpec* a, const TemplateSpec* b) {
        auto ua = last_use.count(a->template_id) ? last_use[a->template_id] : -1;
        auto ub = last_use.count(b->template_id) ? last_use[b->template_id] : -1;
        return ua < ub;
    });

    auto asked = asked_ids(history);
    Enumerator en(program, facts);
    std::vector<std::pair<const TemplateSpec*, std::vector<Candidate>>> options;
    for (const TemplateSpec* t : order) {
        std::vector<Candidate> cands;
        for (auto& c : en.run(*t))
            if (!asked.count(c.question_id))
                cands.push_back(std::move(c));
        if (!cands.empty())
            options.emplace_back(t, std::move(cands));
    }
    if (options.empty())
        throw NoApplicableTemplate("no question for " + std::string(to_string(kc)));

    auto pick = [&](const TemplateSpec* t, std::vector<Candidate>& cands) {
        std::mt19937_64 rng(seed ^ fnv1a(t->template_id));
        return build(program, facts, cands[rng() % cands.size()], kc, seed, library);
    };
    if (!preferred_unit.empty()) {
        for (auto& [t, cands] : options) {
            std::vector<Candidate> in_unit;
            for (const auto& c : cands)
                if (c.unit_id == preferred_unit)
                    in_unit.push_back(c);
            if (!in_unit.empty())
                return pick(t, in_unit);
        }
    }
    return pick(options.front().first, options.front().second);
}

StepChain generate_step_chain(const Program& program, const CodeFacts& facts, NodeId loop_id,
                              const std::string& input_set_id, std::uint64_t seed, const TemplateLibrary& library)
{
    const Node* loop = program.find_node(loop_id);
    if (!loop || !is_loop(loop->kind))
        throw std::invalid_argument("node " + std::to_string(loop_id) + " is not a loop");
    const TraceLog* trace = nullptr;
    if (auto it = facts.runs.find(input_set_id); it != facts.runs.end())
        trace = &it->second;
    if (!trace)
        throw std::invalid_argument("unknown input set " + input_set_id);
    LoopScan scan = scan_loop(*trace, loop_id);
    if (scan.starts.size() < 2)
        throw InsufficientIterations("the loop on line " + std::to_string(loop->line) + " ran " +
                                     std::to_string(scan.starts.size()) + " iteration(s)");

    const TemplateSpec* spec = nullptr;
    for (const auto& t : library.all())
        if (t.strategy == "NEXT_VALUE")
            spec = &t;
    if (!spec)
        throw TemplateError("no NEXT_VALUE template in the library");

    Enumerator en(program, facts);
    std::vector<Candidate> steps;
    for (auto& c : en.run(*spec, 4))
        if (c.node == loop_id && c.input_set_id == input_set_id)
            steps.push_back(std::move(c));
    if (steps.size() < 2)
        throw InsufficientIterations("fewer than two traceable iterations");
    std::size_t length = std::min<std::size_t>(steps.size(), 2 + seed % 3);

    StepChain chain;
    chain.chain_id = "CHAIN/" + input_set_id + "/n" + std::to_string(loop_id);
    KC kc = spec->kcs.front();
    for (std::size_t i = 0; i < length; ++i)
        chain.steps.push_back(build(program, facts, steps[i], kc, seed, library));
    return chain;
}

GeneratedQuestion generate_followup(const Program& program, const CodeFacts& facts, const Question& question,
                                    std::uint64_t seed, const QuestionHistory& history,
                                    const TemplateLibrary& library)
{
    const TemplateSpec& spec = library.get(question.template_id);
    auto asked = asked_ids(history);
    asked.insert(question.question_id);
    Enumerator en(program, facts);

    for (const auto& mode : spec.followup) {
        if (mode == "REGROUND") {
            std::vector<Candidate> cands;
            for (auto& c : en.run(spec))
                if (c.node == question.node_id && c.var == question.var && c.input_set_id != question.input_set_id &&
                    c.iteration == question.iteration && !asked.count(c.question_id))
                    cands.push_back(std::move(c));
            if (!cands.empty()) {
                std::mt19937_64 rng(seed ^ fnv1a(question.question_id));
                return build(program, facts, cands[rng() % cands.size()], question.kc, seed, library);
            }
        } else if (mode == "STEP") {
            const Node* loop = program.find_node(question.node_id);
            if (!loop || !is_loop(loop->kind))
                continue;
            for (const auto& t : library.all()) {
                if (t.strategy != "NEXT_VALUE")
                    continue;
                std::vector<Candidate> cands;
                for (auto& c : en.run(t))
                    if (c.node == loop->id && !asked.count(c.question_id))
                        cands.push_back(std::move(c));
                // Same run first, then by iteration.
                std::stable_sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
                    bool sa = a.input_set_id == question.input_set_id;
                    bool sb = b.input_set_id == question.input_set_id;
                    return sa != sb ? sa : false;
                });
                if (!cands.empty())
                    return build(program, facts, cands.front(), question.kc, seed, library);
            }
        }
    }
    throw Exhausted("no narrower question left for " + question.question_id);
}

std::map<KC, std::vector<std::string>> applicable_units(const Program& program, const CodeFacts& facts,
                                                        const QuestionHistory& history,
                                                        const TemplateLibrary& library)
{
    auto asked = asked_ids(history);
    Enumerator en(program, facts);
    std::map<KC, std::set<std::string>> units;
    for (const auto& t : library.all()) {
        if (!t.selectable)
            continue;
        for (const auto& c : en.run(t)) {
            if (asked.count(c.question_id))
                continue;
            for (KC kc : t.kcs)
                units[kc].insert(c.unit_id);
        }
    }
    std::map<KC, std::vector<std::string>> out;
    for (auto& [kc, set] : units) {
        std::vector<std::string> v(set.begin(), set.end());
        // Unit ids are "U<n>": order numerically.
        std::sort(v.begin(), v.end(), [](const std::string& a, const std::string& b) {
            return a.size() != b.size() ? a.size() < b.size() : a < b;
        });
        out[kc] = v;
    }
    return out;
}

std::optional<std::int64_t> grounded_value(const Program& program, const TraceLog& trace, const Question& question)
{
    if (question.queries.empty())
        return std::nullopt;
    if (question.answer_kind == AnswerKind::BOOL_PAIR) {
        if (question.queries.size() != 2)
            return std::nullopt;
        TraceAnswer a = query_trace(program, trace, question.queries[0]);
        TraceAnswer b = query_trace(program, trace, question.queries[1]);
        if (!a.applicable || !b.applicable)
            return std::nullopt;
        return (a.value ? 2 : 0) + (b.value ? 1 : 0);
    }
    TraceAnswer a = query_trace(program, trace, question.queries[0]);
    if (!a.applicable)
        return std::nullopt;
    if (question.answer_kind == AnswerKind::LINE)
        return a.line;
    if (question.queries[0].kind == QueryKind::FINAL_OUTPUT) {
        try {
            std::size_t used = 0;
            std::int64_t v = std::stoll(a.text, &used);
            if (used != a.text.size())
                return std::nullopt;
            return v;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return a.value;
}

Json to_json(const Choice& c)
{
    return Json{{"text", c.text}, {"misconception_tag", to_string(c.tag)}, {"value", c.value}};
}

Json to_json(const Question& q)
{
    Json opts = Json::array();
    for (const auto& o : q.options)
        opts.push_back(to_json(o));
    Json queries = Json::array();
    for (const auto& qq : q.queries)
        queries.push_back(to_json(qq));
    return Json{
        {"question_id", q.question_id},
        {"template_id", q.template_id},
        {"unit_id", q.unit_id},
        {"kc", to_string(q.kc)},
        {"stem", q.stem},
        {"options", opts},
        {"correct_index", q.correct_index},
        {"grounding", q.grounding},
        {"queries", queries},
        {"input_set_id", q.input_set_id},
        {"answer_kind", to_string(q.answer_kind)},
        {"node_id", q.node_id},
        {"var", q.var},
        {"iteration", q.iteration},
        {"trace_step", q.trace_step},
        {"seed", q.seed},
    };
}

Json to_json(const FactAtom& a)
{
    return Json{{"text_form", a.text_form},
                {"kind", to_string(a.kind)},
                {"weight", a.weight},
                {"synonyms", a.synonyms},
                {"focus", a.focus}};
}

Json to_json(const ReferenceReason& r)
{
    Json atoms = Json::array();
    for (const auto& a : r.atoms)
        atoms.push_back(to_json(a));
    return Json{{"question_id", r.question_id},
                {"template_id", r.template_id},
                {"kc", to_string(r.kc)},
                {"atoms", atoms},
                {"canonical_explanation", r.canonical_explanation},
                {"broad_hint", r.broad_hint}};
}

Question question_from_json(const Json& j)
{
    Question q;
    q.question_id = j.at("question_id").get<std::string>();
    q.template_id = j.at("template_id").get<std::string>();
    q.unit_id = j.at("unit_id").get<std::string>();
    q.kc = kc_from_string(j.at("kc").get<std::string>());
    q.stem = j.at("stem").get<std::string>();
    for (const auto& o : j.at("options"))
        q.options.push_back({o.at("text").get<std::string>(),
                             misconception_from_string(o.at("misconception_tag").get<std::string>()),
                             o.at("value").get<std::int64_t>()});
    q.correct_index = j.at("correct_index").get<int>();
    q.grounding = j.at("grounding").get<std::vector<std::string>>();
    for (const auto& qq : j.at("queries"))
        q.queries.push_back(query_from_json(qq));
    q.input_set_id = j.at("input_set_id").get<std::string>();
    q.answer_kind = answer_kind_from_string(j.at("answer_kind").get<std::string>());
    q.node_id = j.at("node_id").get<NodeId>();
    q.var = j.at("var").get<std::string>();
    q.iteration = j.at("iteration").get<int>();
    q.trace_step = j.at("trace_step").get<int>();
    q.seed = j.at("seed").get<std::uint64_t>();
    return q;
}

ReferenceReason reference_from_json(const Json& j)
{
    ReferenceReason r;
    r.question_id = j.at("question_id").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.kc = kc_from_string(j.at("kc").get<std::string>());
    for (const auto& a : j.at("atoms")) {
        FactAtom fa;
        fa.text_form = a.at("text_form").get<std::string>();
        fa.kind = atom_kind_from_string(a.at("kind").get<std::string>());
        fa.weight = a.at("weight").get<double>();
        fa.synonyms = a.at("synonyms").get<std::vector<std::string>>();
        fa.focus = a.at("focus").get<std::string>();
        r.atoms.push_back(fa);
    }
    r.canonical_explanation = j.at("canonical_explanation").get<std::string>();
    r.broad_hint = j.at("broad_hint").get<std::string>();
    return r;
}

Json public_json(const Question& q)
{
    Json opts = Json::array();
    for (const auto& o : q.options)
        opts.push_back(o.text);
    return Json{{"question_id", q.question_id},
                {"template_id", q.template_id},
                {"kc", to_string(q.kc)},
                {"stem", q.stem},
                {"options", opts}};
}

} // namespace socratic
