#pragma once

#include "socratic/lang.hpp"
#include "socratic/trace.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace socratic {

// Knowledge components, in the fixed tie-break order used by question selection.
enum class KC {
    LOOPS,
    CONDITIONALS,
    ARRAYS,
    ARITHMETIC,
    TRACING,
    TERMINATION,
    FUNCTIONS,
};

inline constexpr KC kAllKCs[] = {KC::LOOPS,   KC::CONDITIONALS, KC::ARRAYS,   KC::ARITHMETIC,
                                 KC::TRACING, KC::TERMINATION,  KC::FUNCTIONS};

std::string_view to_string(KC kc);
KC kc_from_string(std::string_view s);

enum class StaticKind { LOOP, CONDITIONAL, DECL, FUNCTION, ARRAY };
std::string_view to_string(StaticKind k);

struct StaticFact {
    std::string id;
    StaticKind kind = StaticKind::DECL;
    NodeId node_id = -1;
    int line = 0;
    // LOOP: init/update are -1 for while loops.
    NodeId init_node = -1;
    NodeId cond_node = -1;
    NodeId update_node = -1;
    bool has_else = false;
    std::string name;
    std::string type;
    int arity = 0;
    std::int64_t size = 0;

    bool operator==(const StaticFact&) const = default;
};

enum class DynamicKind {
    ITERATIONS,
    FINAL_VALUE,
    VAR_BEFORE_FINAL_ITER,
    BRANCH_TAKEN,
    LAST_VALID_INDEX,
    OUTPUT,
    NONTERMINATION,
    FAULT,
};
std::string_view to_string(DynamicKind k);

struct DynamicFact {
    std::string id;
    DynamicKind kind = DynamicKind::OUTPUT;
    std::string input_set_id;
    NodeId node_id = -1;
    int line = 0;
    std::string var; // variable or array name
    std::int64_t value = 0;
    int occurrence = 0;
    bool taken = false;
    std::string text; // output text or fault reason
    // NONTERMINATION: variables read by the condition but never written in the loop.
    std::vector<std::string> unwritten;

    bool operator==(const DynamicFact&) const = default;
};

enum class UnitKind { FUNCTION_BODY, LOOP_BODY, BRANCH_ARM };
std::string_view to_string(UnitKind k);

struct LogicUnit {
    std::string unit_id;
    UnitKind kind = UnitKind::FUNCTION_BODY;
    NodeId owner = -1; // function, loop or if node
    std::string parent; // empty for function bodies
    std::string function;
    int line = 0;
    std::vector<NodeId> node_ids;
    std::set<KC> kcs;

    bool operator==(const LogicUnit&) const = default;
};

struct InputDomain {
    std::int64_t lo = -8;
    std::int64_t hi = 8;

    bool operator==(const InputDomain&) const = default;
};

struct InputSet {
    std::string id;
    InputMap inputs;
};

struct CodeFacts {
    std::vector<StaticFact> static_facts;
    std::vector<DynamicFact> dynamic_facts;
    std::vector<LogicUnit> logic_units;
    std::vector<InputSet> input_sets;
    std::map<std::string, TraceLog> runs;

    const InputSet* input_set(std::string_view id) const;
    const LogicUnit* unit(std::string_view id) const;
    // Innermost unit whose node_ids contain the statement.
    const LogicUnit* unit_of(NodeId stmt) const;
    const StaticFact* static_fact(std::string_view id) const;
    const DynamicFact* dynamic_fact(std::string_view id) const;
};

struct LoopParts {
    std::set<std::string> cond_reads; // scalars read by the condition
    std::set<std::string> writes;     // scalars assigned in the body (and a for update)
};

LoopParts loop_parts(const Node& loop);

std::vector<StaticFact> extract_static(const Program& program);

std::vector<DynamicFact> extract_dynamic(const Program& program, const std::vector<InputSet>& input_sets,
                                         int step_budget = kDefaultStepBudget);

// Facts for one recorded run, as extract_dynamic emits them (ids unassigned).
std::vector<DynamicFact> facts_for_run(const Program& program, const std::string& input_set_id,
                                       const TraceLog& trace);

std::vector<LogicUnit> decompose(const Program& program);

std::vector<InputMap> sample_inputs(const Program& program, std::uint64_t seed, int count,
                                    const std::map<std::string, InputDomain>& domains = {},
                                    InputDomain fallback = {});

// Full analysis: static facts, one run per input set, dynamic facts and logic units.
CodeFacts analyze(const Program& program, const std::vector<InputSet>& input_sets,
                  int step_budget = kDefaultStepBudget);

// Input sets named in0, in1, ... in sampling order.
std::vector<InputSet> name_input_sets(const std::vector<InputMap>& maps);

// Every statement node id in the program, including for-loop init/update.
std::vector<NodeId> statement_ids(const Program& program);

Json to_json(const StaticFact& f);
Json to_json(const DynamicFact& f);
Json to_json(const LogicUnit& u);
Json to_json(const CodeFacts& facts);

} // namespace socratic
