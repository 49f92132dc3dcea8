#pragma once

#include "socratic/lang.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace socratic {

using Json = nlohmann::ordered_json;

// A main() argument: a scalar or a fixed-size array.
using InputValue = std::variant<std::int64_t, std::vector<std::int64_t>>;
using InputMap = std::map<std::string, InputValue>;

constexpr int kDefaultStepBudget = 10'000;
constexpr int kMaxCallDepth = 64;

enum class EventKind {
    STMT,
    VAR_WRITE,
    BRANCH,
    LOOP_ITER_START,
    ARRAY_ACCESS,
    CALL,
    RETURN,
    OUTPUT,
    FAULT,
};

enum class Termination {
    NORMAL,
    STEP_BUDGET_EXCEEDED,
    RUNTIME_FAULT,
};

std::string_view to_string(EventKind kind);
std::string_view to_string(Termination t);

// Flat record; which fields are meaningful depends on kind.
//   STMT             node_id
//   VAR_WRITE        name, old_value (absent on declaration), new_value, depth, index (array elements)
//   BRANCH           node_id, taken
//   LOOP_ITER_START  node_id, iteration, depth
//   ARRAY_ACCESS     name, index, in_bounds, write
//   CALL             name, args, depth (callee)
//   RETURN           name, new_value, depth
//   OUTPUT           text
//   FAULT            text (reason)
struct TraceEvent {
    int step = 0;
    int line = 0;
    EventKind kind = EventKind::STMT;
    NodeId node_id = -1;
    std::string name;
    std::optional<std::int64_t> old_value;
    std::int64_t new_value = 0;
    std::optional<std::int64_t> index;
    bool flag = false; // taken / in_bounds
    bool write = false;
    int iteration = 0;
    int depth = 0;
    std::vector<std::int64_t> args;
    std::string text;

    bool operator==(const TraceEvent&) const = default;
};

struct TraceLog {
    std::vector<TraceEvent> events;
    Termination termination = Termination::NORMAL;
    InputMap inputs;
    int step_budget = kDefaultStepBudget;
    // Statement executions plus loop-condition evaluations consumed.
    int steps_used = 0;

    // Printed lines joined by '\n'.
    std::string output() const;
    bool operator==(const TraceLog&) const = default;
};

TraceLog execute(const Program& program, const InputMap& inputs, int step_budget = kDefaultStepBudget);

Json to_json(const TraceEvent& e);
Json to_json(const TraceLog& log);
Json to_json(const InputMap& inputs);
InputMap inputs_from_json(const Json& j);
std::string input_to_string(const InputValue& v);
// "n = 3, k = 1" style rendering for question text.
std::string describe_inputs(const InputMap& inputs);

enum class QueryKind {
    VAR_BEFORE_FINAL_ITER,
    ITER_COUNT,
    VALUE_AT_STEP,
    NEXT_WRITE_AFTER,
    LAST_VALID_ARRAY_INDEX,
    BRANCH_OUTCOME,
    FINAL_OUTPUT,
    NONTERMINATING_LOOP_LINE,
};

std::string_view to_string(QueryKind k);
QueryKind query_kind_from_string(std::string_view s);

struct TraceQuery {
    QueryKind kind = QueryKind::FINAL_OUTPUT;
    NodeId node_id = -1;
    std::string var;
    int step = 0;
    int occurrence = 0;

    bool operator==(const TraceQuery&) const = default;
};

Json to_json(const TraceQuery& q);
TraceQuery query_from_json(const Json& j);

// value holds the numeric answer (0/1 for branch outcomes); line is the source
// line the answer points at; step is the trace event the answer was read from.
struct TraceAnswer {
    bool applicable = false;
    std::int64_t value = 0;
    int line = 0;
    int step = -1;
    std::string text;

    static TraceAnswer not_applicable() { return {}; }
    bool operator==(const TraceAnswer&) const = default;
};

class InvalidQuery : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

TraceAnswer query_trace(const Program& program, const TraceLog& trace, const TraceQuery& query);

// Frame depth that was executing each event.
std::vector<int> frame_depths(const TraceLog& trace);

} // namespace socratic
