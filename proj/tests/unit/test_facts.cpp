#include <doctest.h>

#include "corpus.hpp"
#include "socratic/facts.hpp"

#include <algorithm>
#include <set>

using namespace socratic;
using testing_support::kP1;
using testing_support::kP2;
using testing_support::kP3;

namespace {

template <typename Pred>
const DynamicFact* find_dynamic(const std::vector<DynamicFact>& facts, Pred pred)
{
    auto it = std::find_if(facts.begin(), facts.end(), pred);
    return it == facts.end() ? nullptr : &*it;
}

bool has_static(const std::vector<StaticFact>& facts, StaticKind kind, const std::string& name = "",
                const std::string& type = "")
{
    return std::any_of(facts.begin(), facts.end(), [&](const StaticFact& f) {
        return f.kind == kind && (name.empty() || f.name == name) && (type.empty() || f.type == type);
    });
}

} // namespace

TEST_CASE("extract_static on P1, an empty main, and P3")
{
    auto p1 = extract_static(parse(kP1));
    CHECK(has_static(p1, StaticKind::LOOP));
    CHECK(has_static(p1, StaticKind::DECL, "s", "int"));
    CHECK(has_static(p1, StaticKind::DECL, "i", "int"));
    auto loop = std::find_if(p1.begin(), p1.end(), [](const StaticFact& f) { return f.kind == StaticKind::LOOP; });
    CHECK(loop->init_node >= 0);
    CHECK(loop->update_node >= 0);

    auto empty = extract_static(parse("int main() { return 0; }"));
    REQUIRE(empty.size() == 1);
    CHECK(empty[0].kind == StaticKind::FUNCTION);
    CHECK(empty[0].name == "main");
    CHECK(empty[0].arity == 0);

    auto p3 = extract_static(parse(kP3));
    auto arr = std::find_if(p3.begin(), p3.end(), [](const StaticFact& f) { return f.kind == StaticKind::ARRAY; });
    REQUIRE(arr != p3.end());
    CHECK(arr->name == "a");
    CHECK(arr->size == 4);
}

TEST_CASE("extract_dynamic on P1, P2 and P3")
{
    Program p1 = parse(kP1);
    auto d1 = extract_dynamic(p1, {{"in0", {{"n", std::int64_t{3}}}}});
    auto iters = find_dynamic(d1, [](const auto& f) { return f.kind == DynamicKind::ITERATIONS; });
    REQUIRE(iters);
    CHECK(iters->value == 3);
    CHECK(iters->input_set_id == "in0");
    auto fs = find_dynamic(d1, [](const auto& f) { return f.kind == DynamicKind::FINAL_VALUE && f.var == "s"; });
    REQUIRE(fs);
    CHECK(fs->value == 3);
    auto before = find_dynamic(
        d1, [](const auto& f) { return f.kind == DynamicKind::VAR_BEFORE_FINAL_ITER && f.var == "i"; });
    REQUIRE(before);
    CHECK(before->value == 2);
    auto out = find_dynamic(d1, [](const auto& f) { return f.kind == DynamicKind::OUTPUT; });
    REQUIRE(out);
    CHECK(out->text == "3");

    Program p2 = parse(testing_support::corpus_program("p2_stuck_while").source);
    auto d2 = extract_dynamic(p2, {{"in0", {}}});
    auto nonterm = find_dynamic(d2, [](const auto& f) { return f.kind == DynamicKind::NONTERMINATION; });
    REQUIRE(nonterm);
    CHECK(nonterm->line == 3);
    CHECK(nonterm->unwritten == std::vector<std::string>{"i"});

    Program p3 = parse(testing_support::corpus_program("p3_array_overrun").source);
    auto d3 = extract_dynamic(p3, {{"in0", {}}});
    auto last = find_dynamic(d3, [](const auto& f) { return f.kind == DynamicKind::LAST_VALID_INDEX; });
    REQUIRE(last);
    CHECK(last->var == "a");
    CHECK(last->value == 3);
    auto fault = find_dynamic(d3, [](const auto& f) { return f.kind == DynamicKind::FAULT; });
    REQUIRE(fault);
    CHECK(fault->text == "index out of bounds");
    CHECK(fault->line == 5); // a[j] = j; inside the loop body
}

TEST_CASE("extract_dynamic rejects input sets that omit a parameter")
{
    CHECK_THROWS_AS(extract_dynamic(parse(kP1), {{"in0", {}}}), InvalidInputs);
}

TEST_CASE("decompose P1, straight-line code and P3")
{
    auto u1 = decompose(parse(kP1));
    REQUIRE(u1.size() == 2);
    CHECK(u1[0].kind == UnitKind::FUNCTION_BODY);
    CHECK(u1[1].kind == UnitKind::LOOP_BODY);
    CHECK(u1[1].kcs == std::set<KC>{KC::LOOPS, KC::TRACING, KC::ARITHMETIC});
    CHECK(u1[1].parent == u1[0].unit_id);

    auto straight = decompose(parse("int main(int a) { int b = a + 1; print(b); return b; }"));
    CHECK(straight.size() == 1);

    auto u3 = decompose(parse(kP3));
    auto body = std::find_if(u3.begin(), u3.end(), [](const auto& u) { return u.kind == UnitKind::LOOP_BODY; });
    REQUIRE(body != u3.end());
    CHECK(body->kcs == std::set<KC>{KC::LOOPS, KC::ARRAYS, KC::TRACING});

    auto u2 = decompose(parse(kP2));
    CHECK(u2[1].kcs.count(KC::TERMINATION) == 1);
}

TEST_CASE("sample_inputs is deterministic per seed and respects domains")
{
    Program p1 = parse(kP1);
    auto a = sample_inputs(p1, 42, 2);
    auto b = sample_inputs(p1, 42, 2);
    REQUIRE(a.size() == 2);
    CHECK(a == b);
    for (const auto& m : a) {
        auto v = std::get<std::int64_t>(m.at("n"));
        CHECK(v >= -8);
        CHECK(v <= 8);
    }

    auto none = sample_inputs(parse("int main() { return 0; }"), 9, 3);
    CHECK(none == std::vector<InputMap>(3));

    Program arr = parse(testing_support::corpus_program("c09_array_sum").source);
    auto narrow = sample_inputs(arr, 1, 4, {{"v", InputDomain{2, 3}}});
    for (const auto& m : narrow) {
        const auto& v = std::get<std::vector<std::int64_t>>(m.at("v"));
        CHECK(v.size() == 5);
        for (auto x : v)
            CHECK((x == 2 || x == 3));
    }
    CHECK_THROWS_AS(sample_inputs(p1, 1, 0), std::invalid_argument);
}

TEST_CASE("fact coverage and partition invariants over the corpus")
{
    for (const auto& prog : testing_support::corpus()) {
        CAPTURE(prog.name);
        Program p = parse(prog.source);
        auto statics = extract_static(p);

        int loops = 0, decls = 0;
        walk(p, [&](const Node& n) {
            loops += is_loop(n.kind);
            decls += n.kind == NodeKind::DECL;
        });
        CHECK(std::count_if(statics.begin(), statics.end(),
                            [](const auto& f) { return f.kind == StaticKind::LOOP; }) == loops);
        CHECK(std::count_if(statics.begin(), statics.end(),
                            [](const auto& f) { return f.kind == StaticKind::DECL; }) == decls);
        for (std::size_t i = 1; i < statics.size(); ++i)
            CHECK(std::tie(statics[i - 1].line, statics[i - 1].kind) <= std::tie(statics[i].line, statics[i].kind));

        auto units = decompose(p);
        std::vector<NodeId> covered;
        for (const auto& u : units) {
            covered.insert(covered.end(), u.node_ids.begin(), u.node_ids.end());
            if (u.kind == UnitKind::LOOP_BODY) {
                // nested inside exactly one function body
                const LogicUnit* up = &u;
                while (!up->parent.empty())
                    up = &*std::find_if(units.begin(), units.end(),
                                        [&](const auto& x) { return x.unit_id == up->parent; });
                CHECK(up->kind == UnitKind::FUNCTION_BODY);
                CHECK(up->function == u.function);
            }
        }
        std::sort(covered.begin(), covered.end());
        CHECK(std::adjacent_find(covered.begin(), covered.end()) == covered.end());
        CHECK(covered == statement_ids(p));
    }
}

TEST_CASE("every dynamic fact is reproducible from its input set")
{
    for (const auto& prog : testing_support::corpus()) {
        CAPTURE(prog.name);
        Program p = parse(prog.source);
        auto sets = name_input_sets(sample_inputs(p, 11, 3));
        CodeFacts facts = analyze(p, sets);
        for (const auto& f : facts.dynamic_facts) {
            const InputSet* set = facts.input_set(f.input_set_id);
            REQUIRE(set);
            auto again = facts_for_run(p, set->id, execute(p, set->inputs));
            DynamicFact bare = f;
            bare.id.clear();
            CHECK(std::find(again.begin(), again.end(), bare) != again.end());
        }
        CHECK(to_json(facts).dump() == to_json(analyze(p, sets)).dump());
    }
}

TEST_CASE("every fact references an existing node and a line in range")
{
    for (const auto& prog : testing_support::corpus()) {
        CAPTURE(prog.name);
        Program p = parse(prog.source);
        CodeFacts facts = analyze(p, name_input_sets(sample_inputs(p, 3, 3)));
        auto known = [&](NodeId id) {
            if (p.find_node(id))
                return true;
            return std::any_of(p.functions.begin(), p.functions.end(), [&](const auto& f) { return f.id == id; });
        };
        int lines = static_cast<int>(p.source_lines.size());
        for (const auto& f : facts.static_facts) {
            CHECK(known(f.node_id));
            CHECK(f.line >= 1);
            CHECK(f.line <= lines);
        }
        for (const auto& f : facts.dynamic_facts) {
            CHECK(known(f.node_id));
            CHECK(f.line >= 1);
            CHECK(f.line <= lines);
        }
    }
}
