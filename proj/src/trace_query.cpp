#include "socratic/trace.hpp"

#include <algorithm>

namespace socratic {

std::string_view to_string(QueryKind k)
{
    switch (k) {
    case QueryKind::VAR_BEFORE_FINAL_ITER: return "VAR_BEFORE_FINAL_ITER";
    case QueryKind::ITER_COUNT: return "ITER_COUNT";
    case QueryKind::VALUE_AT_STEP: return "VALUE_AT_STEP";
    case QueryKind::NEXT_WRITE_AFTER: return "NEXT_WRITE_AFTER";
    case QueryKind::LAST_VALID_ARRAY_INDEX: return "LAST_VALID_ARRAY_INDEX";
    case QueryKind::BRANCH_OUTCOME: return "BRANCH_OUTCOME";
    case QueryKind::FINAL_OUTPUT: return "FINAL_OUTPUT";
    case QueryKind::NONTERMINATING_LOOP_LINE: return "NONTERMINATING_LOOP_LINE";
    }
    return "?";
}

QueryKind query_kind_from_string(std::string_view s)
{
    for (auto k : {QueryKind::VAR_BEFORE_FINAL_ITER, QueryKind::ITER_COUNT, QueryKind::VALUE_AT_STEP,
                   QueryKind::NEXT_WRITE_AFTER, QueryKind::LAST_VALID_ARRAY_INDEX, QueryKind::BRANCH_OUTCOME,
                   QueryKind::FINAL_OUTPUT, QueryKind::NONTERMINATING_LOOP_LINE})
        if (to_string(k) == s)
            return k;
    throw InvalidQuery("unknown query kind " + std::string(s));
}

Json to_json(const TraceQuery& q)
{
    Json j;
    j["kind"] = to_string(q.kind);
    switch (q.kind) {
    case QueryKind::VAR_BEFORE_FINAL_ITER:
        j["loop_id"] = q.node_id;
        j["var"] = q.var;
        break;
    case QueryKind::ITER_COUNT:
        j["loop_id"] = q.node_id;
        break;
    case QueryKind::VALUE_AT_STEP:
    case QueryKind::NEXT_WRITE_AFTER:
        j["var"] = q.var;
        j["step"] = q.step;
        break;
    case QueryKind::LAST_VALID_ARRAY_INDEX:
        j["name"] = q.var;
        break;
    case QueryKind::BRANCH_OUTCOME:
        j["node_id"] = q.node_id;
        j["occurrence"] = q.occurrence;
        break;
    case QueryKind::FINAL_OUTPUT:
    case QueryKind::NONTERMINATING_LOOP_LINE:
        break;
    }
    return j;
}

TraceQuery query_from_json(const Json& j)
{
    TraceQuery q;
    q.kind = query_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("loop_id"))
        q.node_id = j["loop_id"].get<int>();
    if (j.contains("node_id"))
        q.node_id = j["node_id"].get<int>();
    if (j.contains("var"))
        q.var = j["var"].get<std::string>();
    if (j.contains("name"))
        q.var = j["name"].get<std::string>();
    if (j.contains("step"))
        q.step = j["step"].get<int>();
    if (j.contains("occurrence"))
        q.occurrence = j["occurrence"].get<int>();
    return q;
}

std::vector<int> frame_depths(const TraceLog& trace)
{
    std::vector<int> depths;
    depths.reserve(trace.events.size());
    int depth = 0;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::CALL)
            depth = e.depth;
        depths.push_back(depth);
        if (e.kind == EventKind::RETURN)
            depth = e.depth - 1;
    }
    return depths;
}

namespace {

bool declares_scalar(const Program& p, const std::string& var)
{
    bool found = false;
    for (const auto& f : p.functions)
        for (const auto& prm : f.params)
            found = found || (prm.name == var && !prm.array_size);
    walk(p, [&](const Node& n) {
        found = found || (n.kind == NodeKind::DECL && n.name == var && !n.array_size);
    });
    return found;
}

bool declares_array(const Program& p, const std::string& var)
{
    bool found = false;
    for (const auto& f : p.functions)
        for (const auto& prm : f.params)
            found = found || (prm.name == var && prm.array_size);
    walk(p, [&](const Node& n) {
        found = found || (n.kind == NodeKind::DECL && n.name == var && n.array_size);
    });
    return found;
}

const Node& require_node(const Program& p, NodeId id, bool loop_only)
{
    const Node* n = p.find_node(id);
    if (!n)
        throw InvalidQuery("no node with id " + std::to_string(id));
    if (loop_only && !is_loop(n->kind))
        throw InvalidQuery("node " + std::to_string(id) + " is not a loop");
    if (!loop_only && n->kind != NodeKind::IF && !is_loop(n->kind))
        throw InvalidQuery("node " + std::to_string(id) + " is not a branch");
    return *n;
}

void require_scalar(const Program& p, const std::string& var)
{
    if (!declares_scalar(p, var))
        throw InvalidQuery("no scalar variable named " + var);
}

// Latest write to var in the frame at `depth`, at or before `step`.
TraceAnswer value_before(const TraceLog& t, const std::vector<int>& depths, const std::string& var, int depth,
                         int step)
{
    for (int s = std::min(step, static_cast<int>(t.events.size()) - 1); s >= 0; --s) {
        const auto& e = t.events[s];
        if (e.kind == EventKind::CALL && e.depth == depth)
            break; // start of the invocation; nothing earlier belongs to it
        if (e.kind == EventKind::VAR_WRITE && !e.index && e.name == var && depths[s] == depth) {
            TraceAnswer a;
            a.applicable = true;
            a.value = e.new_value;
            a.line = e.line;
            a.step = e.step;
            return a;
        }
    }
    return TraceAnswer::not_applicable();
}

} // namespace

TraceAnswer query_trace(const Program& program, const TraceLog& trace, const TraceQuery& q)
{
    const auto& ev = trace.events;
    switch (q.kind) {
    case QueryKind::VAR_BEFORE_FINAL_ITER: {
        require_node(program, q.node_id, true);
        require_scalar(program, q.var);
        for (auto it = ev.rbegin(); it != ev.rend(); ++it) {
            if (it->kind == EventKind::LOOP_ITER_START && it->node_id == q.node_id) {
                auto depths = frame_depths(trace);
                return value_before(trace, depths, q.var, it->depth, it->step);
            }
        }
        return TraceAnswer::not_applicable();
    }
    case QueryKind::ITER_COUNT: {
        const Node& loop = require_node(program, q.node_id, true);
        bool reached = false;
        int count = 0;
        for (const auto& e : ev) {
            reached = reached || (e.kind == EventKind::BRANCH && e.node_id == q.node_id);
            if (e.kind == EventKind::LOOP_ITER_START && e.node_id == q.node_id)
                ++count;
        }
        if (!reached)
            return TraceAnswer::not_applicable();
        TraceAnswer a;
        a.applicable = true;
        a.value = count;
        a.line = loop.line;
        return a;
    }
    case QueryKind::VALUE_AT_STEP: {
        require_scalar(program, q.var);
        if (q.step < 0 || q.step >= static_cast<int>(ev.size()))
            return TraceAnswer::not_applicable();
        auto depths = frame_depths(trace);
        return value_before(trace, depths, q.var, depths[q.step], q.step);
    }
    case QueryKind::NEXT_WRITE_AFTER: {
        require_scalar(program, q.var);
        if (q.step < 0 || q.step >= static_cast<int>(ev.size()))
            return TraceAnswer::not_applicable();
        auto depths = frame_depths(trace);
        int depth = depths[q.step];
        for (std::size_t s = q.step + 1; s < ev.size(); ++s) {
            const auto& e = ev[s];
            if (e.kind == EventKind::RETURN && e.depth == depth)
                break;
            if (e.kind == EventKind::VAR_WRITE && !e.index && e.name == q.var && depths[s] == depth) {
                TraceAnswer a;
                a.applicable = true;
                a.value = e.new_value;
                a.line = e.line;
                a.step = e.step;
                return a;
            }
        }
        return TraceAnswer::not_applicable();
    }
    case QueryKind::LAST_VALID_ARRAY_INDEX: {
        if (!declares_array(program, q.var))
            throw InvalidQuery("no array named " + q.var);
        for (auto it = ev.rbegin(); it != ev.rend(); ++it) {
            if (it->kind == EventKind::ARRAY_ACCESS && it->name == q.var && it->flag) {
                TraceAnswer a;
                a.applicable = true;
                a.value = it->index.value_or(0);
                a.line = it->line;
                a.step = it->step;
                return a;
            }
        }
        return TraceAnswer::not_applicable();
    }
    case QueryKind::BRANCH_OUTCOME: {
        require_node(program, q.node_id, false);
        int seen = 0;
        for (std::size_t s = 0; s < ev.size(); ++s) {
            const auto& e = ev[s];
            if (e.kind != EventKind::BRANCH || e.node_id != q.node_id)
                continue;
            if (seen++ != q.occurrence)
                continue;
            TraceAnswer a;
            a.applicable = true;
            a.value = e.flag ? 1 : 0;
            a.step = e.step;
            // The line that runs next: the first statement or return after the decision.
            for (std::size_t k = s + 1; k < ev.size(); ++k) {
                if (ev[k].kind == EventKind::STMT || ev[k].kind == EventKind::RETURN) {
                    a.line = ev[k].line;
                    break;
                }
            }
            return a;
        }
        return TraceAnswer::not_applicable();
    }
    case QueryKind::FINAL_OUTPUT: {
        if (trace.termination != Termination::NORMAL)
            return TraceAnswer::not_applicable();
        TraceAnswer a;
        a.applicable = true;
        a.text = trace.output();
        a.step = ev.empty() ? -1 : ev.back().step;
        return a;
    }
    case QueryKind::NONTERMINATING_LOOP_LINE: {
        if (trace.termination != Termination::STEP_BUDGET_EXCEEDED)
            return TraceAnswer::not_applicable();
        constexpr int kWindow = 100;
        std::map<NodeId, std::pair<int, int>> freq; // node -> (count, last step)
        int begin = std::max(0, static_cast<int>(ev.size()) - kWindow);
        for (int s = begin; s < static_cast<int>(ev.size()); ++s) {
            if (ev[s].kind == EventKind::LOOP_ITER_START) {
                auto& f = freq[ev[s].node_id];
                ++f.first;
                f.second = s;
            }
        }
        if (freq.empty()) {
            for (auto it = ev.rbegin(); it != ev.rend(); ++it)
                if (it->kind == EventKind::LOOP_ITER_START) {
                    freq[it->node_id] = {1, it->step};
                    break;
                }
        }
        if (freq.empty())
            return TraceAnswer::not_applicable();
        auto best = std::max_element(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
            return a.second < b.second;
        });
        const Node* loop = program.find_node(best->first);
        TraceAnswer a;
        a.applicable = true;
        a.line = loop ? loop->line : 0;
        a.value = a.line;
        a.step = best->second.second;
        return a;
    }
    }
    return TraceAnswer::not_applicable();
}

} // namespace socratic
