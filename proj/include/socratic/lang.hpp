#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace socratic {

using NodeId = int;

enum class NodeKind {
    DECL,
    ASSIGN,
    ARRAY_ASSIGN,
    IF,
    WHILE,
    FOR,
    PRINT,
    RETURN,
    CALL,
    BINOP,
    UNOP,
    VAR,
    CONST,
    INDEX,
};

enum class Op {
    NONE,
    ADD,
    SUB,
    MUL,
    DIV,
    MOD,
    EQ,
    NE,
    LT,
    LE,
    GT,
    GE,
    AND,
    OR,
    NOT,
    NEG,
};

std::string_view to_string(NodeKind kind);
std::string_view to_string(Op op);

bool is_statement(NodeKind kind);
bool is_loop(NodeKind kind);
bool is_arithmetic(Op op);

struct Node;
using NodePtr = std::unique_ptr<Node>;

// Layout by kind:
//   DECL          name, array_size (arrays), children = [init] for scalars
//   ASSIGN        name, children = [value]
//   ARRAY_ASSIGN  name, children = [index, value]
//   IF            children = [cond], body = then-arm, else_body, has_else
//   WHILE         children = [cond], body
//   FOR           children = [init, cond, update], body
//   PRINT/RETURN  children = [value]
//   CALL          name, children = args
//   BINOP/UNOP    op, children = operands
//   VAR           name
//   CONST         value
//   INDEX         name, children = [index]
struct Node {
    NodeId id = -1;
    NodeKind kind = NodeKind::CONST;
    int line = 0;
    int column = 0;
    std::string name;
    std::int64_t value = 0;
    Op op = Op::NONE;
    std::optional<std::int64_t> array_size;
    bool has_else = false;
    std::vector<NodePtr> children;
    std::vector<NodePtr> body;
    std::vector<NodePtr> else_body;

    const Node& child(std::size_t i) const { return *children.at(i); }
};

struct Param {
    std::string name;
    std::optional<std::int64_t> array_size;
    int line = 0;
};

struct FunctionDef {
    NodeId id = -1;
    std::string name;
    std::vector<Param> params;
    std::vector<NodePtr> body;
    int line = 0;
    int end_line = 0;
};

struct Program {
    std::vector<FunctionDef> functions;
    std::string entry = "main";
    std::vector<std::string> source_lines;
    int node_count = 0;

    const FunctionDef& main() const;
    const FunctionDef* find_function(std::string_view name) const;
    const Node* find_node(NodeId id) const;
    // Function that syntactically contains the node, or nullptr.
    const FunctionDef* owner_of(NodeId id) const;
    // Source text of the node's line with surrounding whitespace removed.
    std::string line_text(int line) const;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, int line, int column, std::vector<std::string> expected);

    int line() const { return line_; }
    int column() const { return column_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    int line_;
    int column_;
    std::vector<std::string> expected_;
};

class SemanticError : public std::runtime_error {
public:
    SemanticError(std::string message, int line, int column);

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

class InvalidInputs : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

Program parse(std::string_view source);

// Parses a standalone statement sequence, as if it were the body of a function.
// Used to check that free text does not contain MiniLang code.
bool parses_as_statements(std::string_view text);

// Pre-order walk over every node reachable from the function body.
template <typename Fn>
void walk(const Node& node, Fn&& fn)
{
    fn(node);
    for (const auto& c : node.children)
        if (c)
            walk(*c, fn);
    for (const auto& c : node.body)
        walk(*c, fn);
    for (const auto& c : node.else_body)
        walk(*c, fn);
}

template <typename Fn>
void walk(const FunctionDef& fn_def, Fn&& fn)
{
    for (const auto& stmt : fn_def.body)
        walk(*stmt, fn);
}

template <typename Fn>
void walk(const Program& program, Fn&& fn)
{
    for (const auto& f : program.functions)
        walk(f, fn);
}

} // namespace socratic
