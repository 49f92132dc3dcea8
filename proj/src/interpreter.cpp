#include "socratic/trace.hpp"

#include <limits>
#include <sstream>

namespace socratic {

std::string_view to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::STMT: return "STMT";
    case EventKind::VAR_WRITE: return "VAR_WRITE";
    case EventKind::BRANCH: return "BRANCH";
    case EventKind::LOOP_ITER_START: return "LOOP_ITER_START";
    case EventKind::ARRAY_ACCESS: return "ARRAY_ACCESS";
    case EventKind::CALL: return "CALL";
    case EventKind::RETURN: return "RETURN";
    case EventKind::OUTPUT: return "OUTPUT";
    case EventKind::FAULT: return "FAULT";
    }
    return "?";
}

std::string_view to_string(Termination t)
{
    switch (t) {
    case Termination::NORMAL: return "NORMAL";
    case Termination::STEP_BUDGET_EXCEEDED: return "STEP_BUDGET_EXCEEDED";
    case Termination::RUNTIME_FAULT: return "RUNTIME_FAULT";
    }
    return "?";
}

std::string TraceLog::output() const
{
    std::string out;
    bool first = true;
    for (const auto& e : events) {
        if (e.kind != EventKind::OUTPUT)
            continue;
        if (!first)
            out += '\n';
        out += e.text;
        first = false;
    }
    return out;
}

namespace {

struct BudgetExhausted {};
struct Faulted {};

struct Slot {
    bool is_array = false;
    std::int64_t scalar = 0;
    std::vector<std::int64_t> elems;
};

struct Frame {
    const FunctionDef* fn = nullptr;
    int depth = 0;
    std::vector<std::map<std::string, Slot, std::less<>>> scopes;

    Slot& at(const std::string& name)
    {
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
            auto hit = it->find(name);
            if (hit != it->end())
                return hit->second;
        }
        throw std::logic_error("unresolved name after semantic check: " + name);
    }
};

std::int64_t wrap_add(std::int64_t a, std::int64_t b)
{
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
std::int64_t wrap_sub(std::int64_t a, std::int64_t b)
{
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
std::int64_t wrap_mul(std::int64_t a, std::int64_t b)
{
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

class Machine {
public:
    Machine(const Program& p, TraceLog& log) : program_(p), log_(log) {}

    void run()
    {
        const FunctionDef& main_fn = program_.main();
        std::vector<Slot> args;
        std::vector<std::int64_t> scalar_args;
        for (const auto& prm : main_fn.params) {
            const InputValue& v = log_.inputs.at(prm.name);
            Slot s;
            if (prm.array_size) {
                s.is_array = true;
                s.elems = std::get<std::vector<std::int64_t>>(v);
            } else {
                s.scalar = std::get<std::int64_t>(v);
                scalar_args.push_back(s.scalar);
            }
            args.push_back(std::move(s));
        }
        invoke(main_fn, std::move(args), scalar_args, main_fn.line, 0);
    }

private:
    const Program& program_;
    TraceLog& log_;
    std::vector<Frame> frames_;
    std::map<NodeId, int> iterations_;

    Frame& frame() { return frames_.back(); }

    TraceEvent& emit(EventKind kind, int line)
    {
        TraceEvent e;
        e.step = static_cast<int>(log_.events.size());
        e.line = line;
        e.kind = kind;
        log_.events.push_back(std::move(e));
        return log_.events.back();
    }

    void tick()
    {
        if (log_.steps_used >= log_.step_budget)
            throw BudgetExhausted{};
        ++log_.steps_used;
    }

    [[noreturn]] void fault(int line, std::string reason)
    {
        emit(EventKind::FAULT, line).text = std::move(reason);
        throw Faulted{};
    }

    void stmt_event(const Node& n)
    {
        tick();
        emit(EventKind::STMT, n.line).node_id = n.id;
    }

    void write_var(const Node& at, const std::string& name, std::optional<std::int64_t> old_value,
                   std::int64_t new_value)
    {
        auto& e = emit(EventKind::VAR_WRITE, at.line);
        e.name = name;
        e.old_value = old_value;
        e.new_value = new_value;
        e.depth = frame().depth;
    }

    std::int64_t invoke(const FunctionDef& fn, std::vector<Slot> args, const std::vector<std::int64_t>& scalar_args,
                        int call_line, int depth)
    {
        if (depth > kMaxCallDepth)
            fault(call_line, "call depth exceeded");

        auto& call = emit(EventKind::CALL, call_line);
        call.name = fn.name;
        call.args = scalar_args;
        call.depth = depth;

        Frame f;
        f.fn = &fn;
        f.depth = depth;
        f.scopes.emplace_back();
        frames_.push_back(std::move(f));

        for (std::size_t i = 0; i < fn.params.size(); ++i) {
            const Param& prm = fn.params[i];
            if (!args[i].is_array) {
                auto& e = emit(EventKind::VAR_WRITE, prm.line);
                e.name = prm.name;
                e.new_value = args[i].scalar;
                e.depth = depth;
            }
            frame().scopes.back().emplace(prm.name, std::move(args[i]));
        }

        std::optional<std::int64_t> ret = exec_block(fn.body, false);
        int ret_line = ret ? last_return_line_ : fn.end_line;
        std::int64_t value = ret.value_or(0);
        frames_.pop_back();

        auto& e = emit(EventKind::RETURN, ret_line);
        e.name = fn.name;
        e.new_value = value;
        e.depth = depth;
        return value;
    }

    int last_return_line_ = 0;

    std::optional<std::int64_t> exec_block(const std::vector<NodePtr>& stmts, bool new_scope = true)
    {
        if (new_scope)
            frame().scopes.emplace_back();
        std::optional<std::int64_t> ret;
        for (const auto& s : stmts) {
            ret = exec(*s);
            if (ret)
                break;
        }
        if (new_scope)
            frame().scopes.pop_back();
        return ret;
    }

    std::optional<std::int64_t> run_loop(const Node& loop, const Node& cond, const Node* update)
    {
        for (;;) {
            tick();
            bool taken = eval(cond) != 0;
            auto& br = emit(EventKind::BRANCH, loop.line);
            br.node_id = loop.id;
            br.flag = taken;
            if (!taken)
                return std::nullopt;
            auto& it = emit(EventKind::LOOP_ITER_START, loop.line);
            it.node_id = loop.id;
            it.iteration = iterations_[loop.id]++;
            it.depth = frame().depth;
            if (auto ret = exec_block(loop.body))
                return ret;
            if (update)
                exec(*update);
        }
    }

    std::optional<std::int64_t> exec(const Node& n)
    {
        switch (n.kind) {
        case NodeKind::DECL: {
            stmt_event(n);
            Slot s;
            if (n.array_size) {
                s.is_array = true;
                s.elems.assign(static_cast<std::size_t>(*n.array_size), 0);
                frame().scopes.back().emplace(n.name, std::move(s));
            } else {
                s.scalar = eval(n.child(0));
                frame().scopes.back().emplace(n.name, s);
                write_var(n, n.name, std::nullopt, s.scalar);
            }
            return std::nullopt;
        }
        case NodeKind::ASSIGN: {
            stmt_event(n);
            std::int64_t v = eval(n.child(0));
            Slot& s = frame().at(n.name);
            std::int64_t old = s.scalar;
            s.scalar = v;
            write_var(n, n.name, old, v);
            return std::nullopt;
        }
        case NodeKind::ARRAY_ASSIGN: {
            stmt_event(n);
            std::int64_t idx = eval(n.child(0));
            std::int64_t v = eval(n.child(1));
            Slot& s = frame().at(n.name);
            check_access(n, s, idx, true);
            std::int64_t& cell = s.elems[static_cast<std::size_t>(idx)];
            auto& e = emit(EventKind::VAR_WRITE, n.line);
            e.name = n.name;
            e.index = idx;
            e.old_value = cell;
            e.new_value = v;
            e.depth = frame().depth;
            cell = v;
            return std::nullopt;
        }
        case NodeKind::IF: {
            stmt_event(n);
            bool taken = eval(n.child(0)) != 0;
            auto& br = emit(EventKind::BRANCH, n.line);
            br.node_id = n.id;
            br.flag = taken;
            return exec_block(taken ? n.body : n.else_body);
        }
        case NodeKind::WHILE:
            stmt_event(n);
            return run_loop(n, n.child(0), nullptr);
        case NodeKind::FOR: {
            stmt_event(n);
            frame().scopes.emplace_back();
            exec(n.child(0));
            auto ret = run_loop(n, n.child(1), &n.child(2));
            frame().scopes.pop_back();
            return ret;
        }
        case NodeKind::PRINT: {
            stmt_event(n);
            std::int64_t v = eval(n.child(0));
            emit(EventKind::OUTPUT, n.line).text = std::to_string(v);
            return std::nullopt;
        }
        case NodeKind::RETURN: {
            stmt_event(n);
            std::int64_t v = eval(n.child(0));
            last_return_line_ = n.line;
            return v;
        }
        case NodeKind::CALL:
            stmt_event(n);
            eval(n);
            return std::nullopt;
        default:
            throw std::logic_error("not a statement");
        }
    }

    void check_access(const Node& n, const Slot& s, std::int64_t idx, bool is_write)
    {
        bool ok = idx >= 0 && idx < static_cast<std::int64_t>(s.elems.size());
        auto& e = emit(EventKind::ARRAY_ACCESS, n.line);
        e.name = n.name;
        e.index = idx;
        e.flag = ok;
        e.write = is_write;
        if (!ok)
            fault(n.line, "index out of bounds");
    }

    std::int64_t eval(const Node& n)
    {
        switch (n.kind) {
        case NodeKind::CONST:
            return n.value;
        case NodeKind::VAR:
            return frame().at(n.name).scalar;
        case NodeKind::INDEX: {
            std::int64_t idx = eval(n.child(0));
            Slot& s = frame().at(n.name);
            check_access(n, s, idx, false);
            return s.elems[static_cast<std::size_t>(idx)];
        }
        case NodeKind::UNOP: {
            std::int64_t v = eval(n.child(0));
            return n.op == Op::NOT ? static_cast<std::int64_t>(v == 0) : wrap_sub(0, v);
        }
        case NodeKind::BINOP: {
            if (n.op == Op::AND)
                return eval(n.child(0)) != 0 && eval(n.child(1)) != 0;
            if (n.op == Op::OR)
                return eval(n.child(0)) != 0 || eval(n.child(1)) != 0;
            std::int64_t a = eval(n.child(0));
            std::int64_t b = eval(n.child(1));
            switch (n.op) {
            case Op::ADD: return wrap_add(a, b);
            case Op::SUB: return wrap_sub(a, b);
            case Op::MUL: return wrap_mul(a, b);
            case Op::DIV:
            case Op::MOD:
                if (b == 0)
                    fault(n.line, "division by zero");
                if (a == std::numeric_limits<std::int64_t>::min() && b == -1)
                    return n.op == Op::DIV ? a : 0;
                return n.op == Op::DIV ? a / b : a % b;
            case Op::EQ: return a == b;
            case Op::NE: return a != b;
            case Op::LT: return a < b;
            case Op::LE: return a <= b;
            case Op::GT: return a > b;
            case Op::GE: return a >= b;
            default: throw std::logic_error("bad binary operator");
            }
        }
        case NodeKind::CALL: {
            const FunctionDef& fn = *program_.find_function(n.name);
            std::vector<Slot> args;
            std::vector<std::int64_t> scalars;
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                Slot s;
                if (fn.params[i].array_size) {
                    s = frame().at(n.child(i).name);
                } else {
                    s.scalar = eval(n.child(i));
                    scalars.push_back(s.scalar);
                }
                args.push_back(std::move(s));
            }
            return invoke(fn, std::move(args), scalars, n.line, frame().depth + 1);
        }
        default:
            throw std::logic_error("not an expression");
        }
    }
};

void validate_inputs(const Program& program, const InputMap& inputs)
{
    const FunctionDef& main_fn = program.main();
    for (const auto& prm : main_fn.params) {
        auto it = inputs.find(prm.name);
        if (it == inputs.end())
            throw InvalidInputs("missing input for parameter " + prm.name);
        if (prm.array_size) {
            const auto* arr = std::get_if<std::vector<std::int64_t>>(&it->second);
            if (!arr || static_cast<std::int64_t>(arr->size()) != *prm.array_size)
                throw InvalidInputs("parameter " + prm.name + " needs an array of " +
                                    std::to_string(*prm.array_size) + " integers");
        } else if (!std::holds_alternative<std::int64_t>(it->second)) {
            throw InvalidInputs("parameter " + prm.name + " needs an integer");
        }
    }
    for (const auto& [name, _] : inputs) {
        bool known = false;
        for (const auto& prm : main_fn.params)
            known = known || prm.name == name;
        if (!known)
            throw InvalidInputs("unknown input " + name);
    }
}

} // namespace

TraceLog execute(const Program& program, const InputMap& inputs, int step_budget)
{
    if (step_budget < 1)
        throw std::invalid_argument("step budget must be at least 1");
    validate_inputs(program, inputs);

    TraceLog log;
    log.inputs = inputs;
    log.step_budget = step_budget;
    Machine m(program, log);
    try {
        m.run();
        log.termination = Termination::NORMAL;
    } catch (const BudgetExhausted&) {
        log.termination = Termination::STEP_BUDGET_EXCEEDED;
    } catch (const Faulted&) {
        log.termination = Termination::RUNTIME_FAULT;
    }
    return log;
}

std::string input_to_string(const InputValue& v)
{
    if (const auto* s = std::get_if<std::int64_t>(&v))
        return std::to_string(*s);
    std::string out = "[";
    const auto& arr = std::get<std::vector<std::int64_t>>(v);
    for (std::size_t i = 0; i < arr.size(); ++i)
        out += (i ? ", " : "") + std::to_string(arr[i]);
    return out + "]";
}

std::string describe_inputs(const InputMap& inputs)
{
    if (inputs.empty())
        return "no inputs";
    std::string out;
    for (const auto& [name, v] : inputs) {
        if (!out.empty())
            out += ", ";
        out += name + " = " + input_to_string(v);
    }
    return out;
}

Json to_json(const InputMap& inputs)
{
    Json j = Json::object();
    for (const auto& [name, v] : inputs) {
        if (const auto* s = std::get_if<std::int64_t>(&v))
            j[name] = *s;
        else
            j[name] = std::get<std::vector<std::int64_t>>(v);
    }
    return j;
}

InputMap inputs_from_json(const Json& j)
{
    if (!j.is_object())
        throw InvalidInputs("inputs must be a JSON object");
    InputMap m;
    for (const auto& [name, v] : j.items()) {
        if (v.is_number_integer())
            m[name] = v.get<std::int64_t>();
        else if (v.is_array())
            m[name] = v.get<std::vector<std::int64_t>>();
        else
            throw InvalidInputs("input " + name + " must be an integer or integer array");
    }
    return m;
}

Json to_json(const TraceEvent& e)
{
    Json j;
    j["step"] = e.step;
    j["line"] = e.line;
    j["kind"] = to_string(e.kind);
    Json p = Json::object();
    switch (e.kind) {
    case EventKind::STMT:
        p["node_id"] = e.node_id;
        break;
    case EventKind::VAR_WRITE:
        p["name"] = e.name;
        if (e.index)
            p["index"] = *e.index;
        p["old_value"] = e.old_value ? Json(*e.old_value) : Json(nullptr);
        p["new_value"] = e.new_value;
        p["depth"] = e.depth;
        break;
    case EventKind::BRANCH:
        p["node_id"] = e.node_id;
        p["taken"] = e.flag;
        break;
    case EventKind::LOOP_ITER_START:
        p["node_id"] = e.node_id;
        p["iteration_index"] = e.iteration;
        p["depth"] = e.depth;
        break;
    case EventKind::ARRAY_ACCESS:
        p["name"] = e.name;
        p["index"] = e.index.value_or(0);
        p["in_bounds"] = e.flag;
        p["write"] = e.write;
        break;
    case EventKind::CALL:
        p["function"] = e.name;
        p["args"] = e.args;
        p["depth"] = e.depth;
        break;
    case EventKind::RETURN:
        p["function"] = e.name;
        p["value"] = e.new_value;
        p["depth"] = e.depth;
        break;
    case EventKind::OUTPUT:
        p["text"] = e.text;
        break;
    case EventKind::FAULT:
        p["reason"] = e.text;
        break;
    }
    j["payload"] = std::move(p);
    return j;
}

Json to_json(const TraceLog& log)
{
    Json j;
    Json events = Json::array();
    for (const auto& e : log.events)
        events.push_back(to_json(e));
    j["events"] = std::move(events);
    j["termination"] = to_string(log.termination);
    j["inputs"] = to_json(log.inputs);
    j["step_budget"] = log.step_budget;
    return j;
}

} // namespace socratic
