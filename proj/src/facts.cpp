#include "socratic/facts.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <tuple>

namespace socratic {

std::string_view to_string(KC kc)
{
    switch (kc) {
    case KC::LOOPS: return "LOOPS";
    case KC::CONDITIONALS: return "CONDITIONALS";
    case KC::ARRAYS: return "ARRAYS";
    case KC::ARITHMETIC: return "ARITHMETIC";
    case KC::TRACING: return "TRACING";
    case KC::TERMINATION: return "TERMINATION";
    case KC::FUNCTIONS: return "FUNCTIONS";
    }
    return "?";
}

KC kc_from_string(std::string_view s)
{
    for (KC kc : kAllKCs)
        if (to_string(kc) == s)
            return kc;
    throw std::invalid_argument("unknown knowledge component " + std::string(s));
}

std::string_view to_string(StaticKind k)
{
    switch (k) {
    case StaticKind::LOOP: return "LOOP";
    case StaticKind::CONDITIONAL: return "CONDITIONAL";
    case StaticKind::DECL: return "DECL";
    case StaticKind::FUNCTION: return "FUNCTION";
    case StaticKind::ARRAY: return "ARRAY";
    }
    return "?";
}

std::string_view to_string(DynamicKind k)
{
    switch (k) {
    case DynamicKind::ITERATIONS: return "ITERATIONS";
    case DynamicKind::FINAL_VALUE: return "FINAL_VALUE";
    case DynamicKind::VAR_BEFORE_FINAL_ITER: return "VAR_BEFORE_FINAL_ITER";
    case DynamicKind::BRANCH_TAKEN: return "BRANCH_TAKEN";
    case DynamicKind::LAST_VALID_INDEX: return "LAST_VALID_INDEX";
    case DynamicKind::OUTPUT: return "OUTPUT";
    case DynamicKind::NONTERMINATION: return "NONTERMINATION";
    case DynamicKind::FAULT: return "FAULT";
    }
    return "?";
}

std::string_view to_string(UnitKind k)
{
    switch (k) {
    case UnitKind::FUNCTION_BODY: return "FUNCTION_BODY";
    case UnitKind::LOOP_BODY: return "LOOP_BODY";
    case UnitKind::BRANCH_ARM: return "BRANCH_ARM";
    }
    return "?";
}

const InputSet* CodeFacts::input_set(std::string_view id) const
{
    for (const auto& s : input_sets)
        if (s.id == id)
            return &s;
    return nullptr;
}

const LogicUnit* CodeFacts::unit(std::string_view id) const
{
    for (const auto& u : logic_units)
        if (u.unit_id == id)
            return &u;
    return nullptr;
}

const LogicUnit* CodeFacts::unit_of(NodeId stmt) const
{
    for (const auto& u : logic_units)
        if (std::find(u.node_ids.begin(), u.node_ids.end(), stmt) != u.node_ids.end())
            return &u;
    return nullptr;
}

const StaticFact* CodeFacts::static_fact(std::string_view id) const
{
    for (const auto& f : static_facts)
        if (f.id == id)
            return &f;
    return nullptr;
}

const DynamicFact* CodeFacts::dynamic_fact(std::string_view id) const
{
    for (const auto& f : dynamic_facts)
        if (f.id == id)
            return &f;
    return nullptr;
}

namespace {

void collect_reads(const Node& n, std::set<std::string>& out)
{
    walk(n, [&](const Node& x) {
        if (x.kind == NodeKind::VAR)
            out.insert(x.name);
    });
}

// Scalar names assigned anywhere inside the statements (nested bodies included).
void collect_writes(const std::vector<NodePtr>& stmts, std::set<std::string>& out)
{
    for (const auto& s : stmts)
        walk(*s, [&](const Node& x) {
            if (x.kind == NodeKind::ASSIGN || (x.kind == NodeKind::DECL && !x.array_size))
                out.insert(x.name);
        });
}

} // namespace

LoopParts loop_parts(const Node& loop)
{
    LoopParts parts;
    const Node& cond = loop.kind == NodeKind::FOR ? loop.child(1) : loop.child(0);
    collect_reads(cond, parts.cond_reads);
    collect_writes(loop.body, parts.writes);
    if (loop.kind == NodeKind::FOR) {
        const Node& upd = loop.child(2);
        if (upd.kind == NodeKind::ASSIGN)
            parts.writes.insert(upd.name);
    }
    return parts;
}

namespace {

std::string type_name(const std::optional<std::int64_t>& size)
{
    return size ? "int[" + std::to_string(*size) + "]" : "int";
}

// Node that declares `name` in `fn` (DECL node id, or the function id for parameters).
std::pair<NodeId, int> declaration_of(const FunctionDef& fn, const std::string& name)
{
    for (const auto& prm : fn.params)
        if (prm.name == name)
            return {fn.id, prm.line};
    std::pair<NodeId, int> hit{-1, 0};
    walk(fn, [&](const Node& n) {
        if (n.kind == NodeKind::DECL && n.name == name && hit.first < 0)
            hit = {n.id, n.line};
    });
    return hit;
}

std::vector<std::string> scalars_of(const FunctionDef& fn)
{
    std::vector<std::string> names;
    for (const auto& prm : fn.params)
        if (!prm.array_size)
            names.push_back(prm.name);
    walk(fn, [&](const Node& n) {
        if (n.kind == NodeKind::DECL && !n.array_size)
            names.push_back(n.name);
    });
    return names;
}

std::vector<std::string> arrays_of(const Program& p)
{
    std::vector<std::string> names;
    for (const auto& fn : p.functions) {
        for (const auto& prm : fn.params)
            if (prm.array_size)
                names.push_back(prm.name);
        walk(fn, [&](const Node& n) {
            if (n.kind == NodeKind::DECL && n.array_size)
                names.push_back(n.name);
        });
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

std::pair<NodeId, int> array_declaration(const Program& p, const std::string& name)
{
    for (const auto& fn : p.functions) {
        auto d = declaration_of(fn, name);
        if (d.first >= 0)
            return d;
    }
    return {-1, 0};
}

constexpr int kBranchOccurrences = 4;

auto dynamic_key(const DynamicFact& f)
{
    return std::tie(f.line, f.kind, f.input_set_id, f.node_id, f.var, f.occurrence);
}

} // namespace

std::vector<NodeId> statement_ids(const Program& program)
{
    std::vector<NodeId> ids;
    std::function<void(const std::vector<NodePtr>&)> visit = [&](const std::vector<NodePtr>& stmts) {
        for (const auto& s : stmts) {
            ids.push_back(s->id);
            if (s->kind == NodeKind::FOR) {
                ids.push_back(s->child(0).id);
                ids.push_back(s->child(2).id);
            }
            visit(s->body);
            visit(s->else_body);
        }
    };
    for (const auto& fn : program.functions)
        visit(fn.body);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<StaticFact> extract_static(const Program& program)
{
    std::vector<StaticFact> facts;
    for (const auto& fn : program.functions) {
        StaticFact f;
        f.kind = StaticKind::FUNCTION;
        f.node_id = fn.id;
        f.line = fn.line;
        f.name = fn.name;
        f.arity = static_cast<int>(fn.params.size());
        facts.push_back(f);

        walk(fn, [&](const Node& n) {
            StaticFact s;
            s.node_id = n.id;
            s.line = n.line;
            switch (n.kind) {
            case NodeKind::FOR:
                s.kind = StaticKind::LOOP;
                s.init_node = n.child(0).id;
                s.cond_node = n.child(1).id;
                s.update_node = n.child(2).id;
                facts.push_back(s);
                break;
            case NodeKind::WHILE:
                s.kind = StaticKind::LOOP;
                s.cond_node = n.child(0).id;
                facts.push_back(s);
                break;
            case NodeKind::IF:
                s.kind = StaticKind::CONDITIONAL;
                s.cond_node = n.child(0).id;
                s.has_else = n.has_else;
                facts.push_back(s);
                break;
            case NodeKind::DECL:
                s.kind = StaticKind::DECL;
                s.name = n.name;
                s.type = type_name(n.array_size);
                facts.push_back(s);
                if (n.array_size) {
                    StaticFact a = s;
                    a.kind = StaticKind::ARRAY;
                    a.type.clear();
                    a.size = *n.array_size;
                    facts.push_back(a);
                }
                break;
            default:
                break;
            }
        });
    }
    std::stable_sort(facts.begin(), facts.end(), [](const StaticFact& a, const StaticFact& b) {
        return std::tie(a.line, a.kind, a.node_id) < std::tie(b.line, b.kind, b.node_id);
    });
    for (std::size_t i = 0; i < facts.size(); ++i)
        facts[i].id = "S" + std::to_string(i);
    return facts;
}

std::vector<DynamicFact> facts_for_run(const Program& program, const std::string& input_set_id,
                                       const TraceLog& trace)
{
    std::vector<DynamicFact> out;
    auto base = [&](DynamicKind kind, NodeId node, int line) {
        DynamicFact f;
        f.kind = kind;
        f.input_set_id = input_set_id;
        f.node_id = node;
        f.line = line;
        return f;
    };
    const bool normal = trace.termination == Termination::NORMAL;

    std::vector<const Node*> loops;
    std::vector<const Node*> ifs;
    walk(program, [&](const Node& n) {
        if (is_loop(n.kind))
            loops.push_back(&n);
        if (n.kind == NodeKind::IF)
            ifs.push_back(&n);
    });

    if (normal) {
        for (const Node* loop : loops) {
            TraceQuery q{QueryKind::ITER_COUNT, loop->id};
            TraceAnswer count = query_trace(program, trace, q);
            if (!count.applicable)
                continue;
            auto f = base(DynamicKind::ITERATIONS, loop->id, loop->line);
            f.value = count.value;
            out.push_back(f);

            const FunctionDef* owner = program.owner_of(loop->id);
            std::set<std::string> names;
            collect_reads(*loop, names);
            for (const auto& s : loop->body)
                collect_reads(*s, names);
            for (const auto& name : scalars_of(*owner)) {
                if (!names.count(name))
                    continue;
                TraceQuery vq{QueryKind::VAR_BEFORE_FINAL_ITER, loop->id, name};
                TraceAnswer v = query_trace(program, trace, vq);
                if (!v.applicable)
                    continue;
                auto vf = base(DynamicKind::VAR_BEFORE_FINAL_ITER, loop->id, loop->line);
                vf.var = name;
                vf.value = v.value;
                out.push_back(vf);
            }
        }

        const FunctionDef& main_fn = program.main();
        int last = static_cast<int>(trace.events.size()) - 1;
        std::set<std::string> seen;
        for (const auto& name : scalars_of(main_fn)) {
            if (!seen.insert(name).second)
                continue;
            TraceAnswer v = query_trace(program, trace, TraceQuery{QueryKind::VALUE_AT_STEP, -1, name, last});
            if (!v.applicable)
                continue;
            auto [decl, line] = declaration_of(main_fn, name);
            auto f = base(DynamicKind::FINAL_VALUE, decl, line);
            f.var = name;
            f.value = v.value;
            out.push_back(f);
        }

        for (std::size_t i = 0; i < trace.events.size(); ++i) {
            if (trace.events[i].kind != EventKind::OUTPUT)
                continue;
            // The print statement is the nearest preceding PRINT STMT event.
            const Node* print = nullptr;
            for (std::size_t k = i; k-- > 0 && !print;) {
                if (trace.events[k].kind != EventKind::STMT)
                    continue;
                const Node* n = program.find_node(trace.events[k].node_id);
                if (n && n->kind == NodeKind::PRINT)
                    print = n;
            }
            auto f = base(DynamicKind::OUTPUT, print ? print->id : -1, print ? print->line : trace.events[i].line);
            f.text = trace.output();
            out.push_back(f);
            break;
        }
    }

    for (const Node* n : ifs) {
        for (int k = 0; k < kBranchOccurrences; ++k) {
            TraceAnswer a = query_trace(program, trace, TraceQuery{QueryKind::BRANCH_OUTCOME, n->id, "", 0, k});
            if (!a.applicable)
                break;
            auto f = base(DynamicKind::BRANCH_TAKEN, n->id, n->line);
            f.occurrence = k;
            f.taken = a.value != 0;
            out.push_back(f);
        }
    }

    for (const auto& name : arrays_of(program)) {
        TraceAnswer a = query_trace(program, trace, TraceQuery{QueryKind::LAST_VALID_ARRAY_INDEX, -1, name});
        if (!a.applicable)
            continue;
        auto [decl, line] = array_declaration(program, name);
        auto f = base(DynamicKind::LAST_VALID_INDEX, decl, line);
        f.var = name;
        f.value = a.value;
        out.push_back(f);
    }

    if (trace.termination == Termination::RUNTIME_FAULT) {
        const TraceEvent& fault = trace.events.back();
        NodeId stmt = -1;
        for (auto it = trace.events.rbegin(); it != trace.events.rend(); ++it)
            if (it->kind == EventKind::STMT) {
                stmt = it->node_id;
                break;
            }
        auto f = base(DynamicKind::FAULT, stmt, fault.line);
        f.text = fault.text;
        out.push_back(f);
    }

    if (trace.termination == Termination::STEP_BUDGET_EXCEEDED) {
        TraceAnswer a = query_trace(program, trace, TraceQuery{QueryKind::NONTERMINATING_LOOP_LINE});
        if (a.applicable) {
            const Node* loop = program.find_node(trace.events[a.step].node_id);
            if (loop) {
                auto f = base(DynamicKind::NONTERMINATION, loop->id, loop->line);
                LoopParts parts = loop_parts(*loop);
                for (const auto& v : parts.cond_reads)
                    if (!parts.writes.count(v))
                        f.unwritten.push_back(v);
                out.push_back(f);
            }
        }
    }
    return out;
}

std::vector<DynamicFact> extract_dynamic(const Program& program, const std::vector<InputSet>& input_sets,
                                         int step_budget)
{
    std::vector<DynamicFact> out;
    for (const auto& set : input_sets) {
        TraceLog trace = execute(program, set.inputs, step_budget);
        auto facts = facts_for_run(program, set.id, trace);
        out.insert(out.end(), facts.begin(), facts.end());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const DynamicFact& a, const DynamicFact& b) { return dynamic_key(a) < dynamic_key(b); });
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i].id = "D" + std::to_string(i);
    return out;
}

namespace {

bool counter_step(const Node& n)
{
    if (n.op != Op::ADD && n.op != Op::SUB)
        return false;
    const Node& a = n.child(0);
    const Node& b = n.child(1);
    return (a.kind == NodeKind::VAR && b.kind == NodeKind::CONST) ||
           (a.kind == NodeKind::CONST && b.kind == NodeKind::VAR);
}

// KC tags contributed by one statement's own expressions (not nested bodies).
void tag_statement(const Node& s, std::set<KC>& kcs)
{
    switch (s.kind) {
    case NodeKind::FOR:
    case NodeKind::WHILE:
        kcs.insert(KC::LOOPS);
        break;
    case NodeKind::IF:
        kcs.insert(KC::CONDITIONALS);
        break;
    case NodeKind::ARRAY_ASSIGN:
        kcs.insert(KC::ARRAYS);
        break;
    case NodeKind::DECL:
        if (s.array_size)
            kcs.insert(KC::ARRAYS);
        break;
    default:
        break;
    }
    for (const auto& c : s.children) {
        if (!c || (s.kind == NodeKind::FOR && c.get() != s.children[1].get()))
            continue;
        walk(*c, [&](const Node& x) {
            if (x.kind == NodeKind::INDEX)
                kcs.insert(KC::ARRAYS);
            if (x.kind == NodeKind::CALL)
                kcs.insert(KC::FUNCTIONS);
            if (x.kind == NodeKind::BINOP && is_arithmetic(x.op) && !counter_step(x))
                kcs.insert(KC::ARITHMETIC);
        });
    }
    if (s.kind == NodeKind::CALL)
        kcs.insert(KC::FUNCTIONS);
}

class Decomposer {
public:
    std::vector<LogicUnit> units;

    void function(const FunctionDef& fn)
    {
        LogicUnit u;
        u.kind = UnitKind::FUNCTION_BODY;
        u.owner = fn.id;
        u.function = fn.name;
        u.line = fn.line;
        if (fn.name != "main")
            u.kcs.insert(KC::FUNCTIONS);
        std::size_t idx = open(std::move(u));
        statements(fn.body, idx, fn.name);
    }

private:
    std::size_t open(LogicUnit u)
    {
        u.unit_id = "U" + std::to_string(units.size());
        units.push_back(std::move(u));
        return units.size() - 1;
    }

    void own(std::size_t unit, const Node& s)
    {
        units[unit].node_ids.push_back(s.id);
        tag_statement(s, units[unit].kcs);
    }

    void statements(const std::vector<NodePtr>& stmts, std::size_t unit, const std::string& fn)
    {
        for (const auto& s : stmts) {
            own(unit, *s);
            if (is_loop(s->kind)) {
                LogicUnit u;
                u.kind = UnitKind::LOOP_BODY;
                u.owner = s->id;
                u.parent = units[unit].unit_id;
                u.function = fn;
                u.line = s->line;
                u.kcs = {KC::LOOPS, KC::TRACING};
                LoopParts parts = loop_parts(*s);
                // nothing the condition reads ever changes inside the loop
                bool stuck = std::none_of(parts.cond_reads.begin(), parts.cond_reads.end(),
                                          [&](const std::string& v) { return parts.writes.count(v) > 0; });
                if (stuck)
                    u.kcs.insert(KC::TERMINATION);
                std::size_t idx = open(std::move(u));
                if (s->kind == NodeKind::FOR) {
                    own(idx, s->child(0));
                    own(idx, s->child(2));
                }
                statements(s->body, idx, fn);
            } else if (s->kind == NodeKind::IF) {
                for (const auto* arm : {&s->body, &s->else_body}) {
                    if (arm->empty())
                        continue;
                    LogicUnit u;
                    u.kind = UnitKind::BRANCH_ARM;
                    u.owner = s->id;
                    u.parent = units[unit].unit_id;
                    u.function = fn;
                    u.line = arm->front()->line;
                    u.kcs = {KC::CONDITIONALS, KC::TRACING};
                    std::size_t idx = open(std::move(u));
                    statements(*arm, idx, fn);
                }
            }
        }
    }
};

} // namespace

std::vector<LogicUnit> decompose(const Program& program)
{
    Decomposer d;
    for (const auto& fn : program.functions)
        d.function(fn);
    for (auto& u : d.units)
        std::sort(u.node_ids.begin(), u.node_ids.end());
    return d.units;
}

std::vector<InputMap> sample_inputs(const Program& program, std::uint64_t seed, int count,
                                    const std::map<std::string, InputDomain>& domains, InputDomain fallback)
{
    if (count < 1)
        throw std::invalid_argument("input set count must be at least 1");
    std::mt19937_64 rng(seed);
    auto draw = [&](const InputDomain& d) {
        auto span = static_cast<std::uint64_t>(d.hi - d.lo) + 1;
        return d.lo + static_cast<std::int64_t>(rng() % span);
    };
    std::vector<InputMap> out;
    for (int k = 0; k < count; ++k) {
        InputMap m;
        for (const auto& prm : program.main().params) {
            auto it = domains.find(prm.name);
            const InputDomain& d = it == domains.end() ? fallback : it->second;
            if (d.hi < d.lo)
                throw std::invalid_argument("empty input domain for " + prm.name);
            if (prm.array_size) {
                std::vector<std::int64_t> arr;
                for (std::int64_t i = 0; i < *prm.array_size; ++i)
                    arr.push_back(draw(d));
                m[prm.name] = std::move(arr);
            } else {
                m[prm.name] = draw(d);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<InputSet> name_input_sets(const std::vector<InputMap>& maps)
{
    std::vector<InputSet> sets;
    for (std::size_t i = 0; i < maps.size(); ++i)
        sets.push_back({"in" + std::to_string(i), maps[i]});
    return sets;
}

CodeFacts analyze(const Program& program, const std::vector<InputSet>& input_sets, int step_budget)
{
    CodeFacts facts;
    facts.static_facts = extract_static(program);
    facts.dynamic_facts = extract_dynamic(program, input_sets, step_budget);
    facts.logic_units = decompose(program);
    facts.input_sets = input_sets;
    for (const auto& set : input_sets)
        facts.runs.emplace(set.id, execute(program, set.inputs, step_budget));
    return facts;
}

Json to_json(const StaticFact& f)
{
    Json j;
    j["id"] = f.id;
    j["kind"] = to_string(f.kind);
    j["node_id"] = f.node_id;
    j["line"] = f.line;
    switch (f.kind) {
    case StaticKind::LOOP:
        j["init_node"] = f.init_node < 0 ? Json(nullptr) : Json(f.init_node);
        j["cond_node"] = f.cond_node;
        j["update_node"] = f.update_node < 0 ? Json(nullptr) : Json(f.update_node);
        break;
    case StaticKind::CONDITIONAL:
        j["cond_node"] = f.cond_node;
        j["has_else"] = f.has_else;
        break;
    case StaticKind::DECL:
        j["name"] = f.name;
        j["type"] = f.type;
        break;
    case StaticKind::FUNCTION:
        j["name"] = f.name;
        j["arity"] = f.arity;
        break;
    case StaticKind::ARRAY:
        j["name"] = f.name;
        j["size"] = f.size;
        break;
    }
    return j;
}

Json to_json(const DynamicFact& f)
{
    Json j;
    j["id"] = f.id;
    j["kind"] = to_string(f.kind);
    j["input_set_id"] = f.input_set_id;
    j["node_id"] = f.node_id;
    j["line"] = f.line;
    switch (f.kind) {
    case DynamicKind::ITERATIONS:
        j["loop_id"] = f.node_id;
        j["count"] = f.value;
        break;
    case DynamicKind::FINAL_VALUE:
        j["var"] = f.var;
        j["value"] = f.value;
        break;
    case DynamicKind::VAR_BEFORE_FINAL_ITER:
        j["loop_id"] = f.node_id;
        j["var"] = f.var;
        j["value"] = f.value;
        break;
    case DynamicKind::BRANCH_TAKEN:
        j["occurrence"] = f.occurrence;
        j["taken"] = f.taken;
        break;
    case DynamicKind::LAST_VALID_INDEX:
        j["array"] = f.var;
        j["index"] = f.value;
        break;
    case DynamicKind::OUTPUT:
        j["text"] = f.text;
        break;
    case DynamicKind::NONTERMINATION:
        j["loop_id"] = f.node_id;
        j["unwritten_condition_vars"] = f.unwritten;
        break;
    case DynamicKind::FAULT:
        j["reason"] = f.text;
        break;
    }
    return j;
}

Json to_json(const LogicUnit& u)
{
    Json j;
    j["unit_id"] = u.unit_id;
    j["kind"] = to_string(u.kind);
    j["owner_node"] = u.owner;
    j["parent"] = u.parent.empty() ? Json(nullptr) : Json(u.parent);
    j["function"] = u.function;
    j["line"] = u.line;
    j["node_ids"] = u.node_ids;
    Json kcs = Json::array();
    for (KC kc : u.kcs)
        kcs.push_back(to_string(kc));
    j["knowledge_components"] = std::move(kcs);
    return j;
}

Json to_json(const CodeFacts& facts)
{
    Json j;
    Json st = Json::array();
    for (const auto& f : facts.static_facts)
        st.push_back(to_json(f));
    Json dy = Json::array();
    for (const auto& f : facts.dynamic_facts)
        dy.push_back(to_json(f));
    Json units = Json::array();
    for (const auto& u : facts.logic_units)
        units.push_back(to_json(u));
    Json runs = Json::object();
    for (const auto& set : facts.input_sets) {
        const TraceLog& t = facts.runs.at(set.id);
        Json r;
        r["inputs"] = to_json(set.inputs);
        r["termination"] = to_string(t.termination);
        r["step_budget"] = t.step_budget;
        r["steps_used"] = t.steps_used;
        r["event_count"] = t.events.size();
        runs[set.id] = std::move(r);
    }
    j["static_facts"] = std::move(st);
    j["dynamic_facts"] = std::move(dy);
    j["logic_units"] = std::move(units);
    j["per_input_runs"] = std::move(runs);
    return j;
}

} // namespace socratic
