#include "socratic/lang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

namespace socratic {

std::string_view to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::DECL: return "DECL";
    case NodeKind::ASSIGN: return "ASSIGN";
    case NodeKind::ARRAY_ASSIGN: return "ARRAY_ASSIGN";
    case NodeKind::IF: return "IF";
    case NodeKind::WHILE: return "WHILE";
    case NodeKind::FOR: return "FOR";
    case NodeKind::PRINT: return "PRINT";
    case NodeKind::RETURN: return "RETURN";
    case NodeKind::CALL: return "CALL";
    case NodeKind::BINOP: return "BINOP";
    case NodeKind::UNOP: return "UNOP";
    case NodeKind::VAR: return "VAR";
    case NodeKind::CONST: return "CONST";
    case NodeKind::INDEX: return "INDEX";
    }
    return "?";
}

std::string_view to_string(Op op)
{
    switch (op) {
    case Op::NONE: return "";
    case Op::ADD: return "+";
    case Op::SUB: return "-";
    case Op::MUL: return "*";
    case Op::DIV: return "/";
    case Op::MOD: return "%";
    case Op::EQ: return "==";
    case Op::NE: return "!=";
    case Op::LT: return "<";
    case Op::LE: return "<=";
    case Op::GT: return ">";
    case Op::GE: return ">=";
    case Op::AND: return "&&";
    case Op::OR: return "||";
    case Op::NOT: return "!";
    case Op::NEG: return "-";
    }
    return "?";
}

bool is_statement(NodeKind kind)
{
    switch (kind) {
    case NodeKind::DECL:
    case NodeKind::ASSIGN:
    case NodeKind::ARRAY_ASSIGN:
    case NodeKind::IF:
    case NodeKind::WHILE:
    case NodeKind::FOR:
    case NodeKind::PRINT:
    case NodeKind::RETURN:
        return true;
    default:
        return false;
    }
}

bool is_loop(NodeKind kind) { return kind == NodeKind::WHILE || kind == NodeKind::FOR; }

bool is_arithmetic(Op op)
{
    return op == Op::ADD || op == Op::SUB || op == Op::MUL || op == Op::DIV || op == Op::MOD;
}

ParseError::ParseError(std::string message, int line, int column, std::vector<std::string> expected)
    : std::runtime_error(std::move(message)), line_(line), column_(column), expected_(std::move(expected))
{
}

SemanticError::SemanticError(std::string message, int line, int column)
    : std::runtime_error(std::move(message)), line_(line), column_(column)
{
}

const FunctionDef& Program::main() const
{
    const FunctionDef* f = find_function(entry);
    if (!f)
        throw std::logic_error("program has no entry function");
    return *f;
}

const FunctionDef* Program::find_function(std::string_view name) const
{
    for (const auto& f : functions)
        if (f.name == name)
            return &f;
    return nullptr;
}

const Node* Program::find_node(NodeId id) const
{
    const Node* found = nullptr;
    walk(*this, [&](const Node& n) {
        if (n.id == id)
            found = &n;
    });
    return found;
}

const FunctionDef* Program::owner_of(NodeId id) const
{
    for (const auto& f : functions) {
        bool hit = false;
        walk(f, [&](const Node& n) { hit = hit || n.id == id; });
        if (hit)
            return &f;
    }
    return nullptr;
}

std::string Program::line_text(int line) const
{
    if (line < 1 || line > static_cast<int>(source_lines.size()))
        return {};
    const std::string& raw = source_lines[line - 1];
    auto first = raw.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    auto last = raw.find_last_not_of(" \t\r");
    return raw.substr(first, last - first + 1);
}

namespace {

enum class Tok {
    END,
    IDENT,
    NUMBER,
    KW_INT,
    KW_IF,
    KW_ELSE,
    KW_WHILE,
    KW_FOR,
    KW_PRINT,
    KW_RETURN,
    LPAREN,
    RPAREN,
    LBRACE,
    RBRACE,
    LBRACKET,
    RBRACKET,
    SEMI,
    COMMA,
    ASSIGN,
    PLUS,
    MINUS,
    STAR,
    SLASH,
    PERCENT,
    EQ,
    NE,
    LT,
    LE,
    GT,
    GE,
    AND,
    OR,
    NOT,
};

std::string describe(Tok t)
{
    switch (t) {
    case Tok::END: return "end of input";
    case Tok::IDENT: return "identifier";
    case Tok::NUMBER: return "integer";
    case Tok::KW_INT: return "int";
    case Tok::KW_IF: return "if";
    case Tok::KW_ELSE: return "else";
    case Tok::KW_WHILE: return "while";
    case Tok::KW_FOR: return "for";
    case Tok::KW_PRINT: return "print";
    case Tok::KW_RETURN: return "return";
    case Tok::LPAREN: return "(";
    case Tok::RPAREN: return ")";
    case Tok::LBRACE: return "{";
    case Tok::RBRACE: return "}";
    case Tok::LBRACKET: return "[";
    case Tok::RBRACKET: return "]";
    case Tok::SEMI: return ";";
    case Tok::COMMA: return ",";
    case Tok::ASSIGN: return "=";
    case Tok::PLUS: return "+";
    case Tok::MINUS: return "-";
    case Tok::STAR: return "*";
    case Tok::SLASH: return "/";
    case Tok::PERCENT: return "%";
    case Tok::EQ: return "==";
    case Tok::NE: return "!=";
    case Tok::LT: return "<";
    case Tok::LE: return "<=";
    case Tok::GT: return ">";
    case Tok::GE: return ">=";
    case Tok::AND: return "&&";
    case Tok::OR: return "||";
    case Tok::NOT: return "!";
    }
    return "?";
}

struct Token {
    Tok kind = Tok::END;
    std::string text;
    std::int64_t number = 0;
    int line = 1;
    int column = 1;
};

std::vector<Token> lex(std::string_view src)
{
    static const std::map<std::string, Tok, std::less<>> keywords = {
        {"int", Tok::KW_INT},     {"if", Tok::KW_IF},       {"else", Tok::KW_ELSE},
        {"while", Tok::KW_WHILE}, {"for", Tok::KW_FOR},     {"print", Tok::KW_PRINT},
        {"return", Tok::KW_RETURN},
    };

    std::vector<Token> out;
    int line = 1;
    int col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };

    while (i < src.size()) {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n')
                advance(1);
            continue;
        }

        Token tok;
        tok.line = line;
        tok.column = col;

        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                ++j;
            tok.text = std::string(src.substr(i, j - i));
            auto kw = keywords.find(tok.text);
            tok.kind = kw == keywords.end() ? Tok::IDENT : kw->second;
            advance(j - i);
            out.push_back(std::move(tok));
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])))
                ++j;
            tok.kind = Tok::NUMBER;
            tok.text = std::string(src.substr(i, j - i));
            auto [ptr, ec] = std::from_chars(src.data() + i, src.data() + j, tok.number);
            if (ec != std::errc{} || ptr != src.data() + j)
                throw ParseError("integer literal out of range: " + tok.text, line, col, {"integer"});
            advance(j - i);
            out.push_back(std::move(tok));
            continue;
        }

        auto two = [&](char a, char b) { return c == a && i + 1 < src.size() && src[i + 1] == b; };
        std::size_t len = 1;
        if (two('=', '='))
            tok.kind = Tok::EQ, len = 2;
        else if (two('!', '='))
            tok.kind = Tok::NE, len = 2;
        else if (two('<', '='))
            tok.kind = Tok::LE, len = 2;
        else if (two('>', '='))
            tok.kind = Tok::GE, len = 2;
        else if (two('&', '&'))
            tok.kind = Tok::AND, len = 2;
        else if (two('|', '|'))
            tok.kind = Tok::OR, len = 2;
        else {
            switch (c) {
            case '(': tok.kind = Tok::LPAREN; break;
            case ')': tok.kind = Tok::RPAREN; break;
            case '{': tok.kind = Tok::LBRACE; break;
            case '}': tok.kind = Tok::RBRACE; break;
            case '[': tok.kind = Tok::LBRACKET; break;
            case ']': tok.kind = Tok::RBRACKET; break;
            case ';': tok.kind = Tok::SEMI; break;
            case ',': tok.kind = Tok::COMMA; break;
            case '=': tok.kind = Tok::ASSIGN; break;
            case '+': tok.kind = Tok::PLUS; break;
            case '-': tok.kind = Tok::MINUS; break;
            case '*': tok.kind = Tok::STAR; break;
            case '/': tok.kind = Tok::SLASH; break;
            case '%': tok.kind = Tok::PERCENT; break;
            case '<': tok.kind = Tok::LT; break;
            case '>': tok.kind = Tok::GT; break;
            case '!': tok.kind = Tok::NOT; break;
            default:
                throw ParseError(std::string("unexpected character '") + c + "'", line, col, {});
            }
        }
        tok.text = std::string(src.substr(i, len));
        advance(len);
        out.push_back(std::move(tok));
    }

    Token end;
    end.kind = Tok::END;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    Program parse_program()
    {
        Program p;
        while (peek().kind != Tok::END)
            p.functions.push_back(parse_function());
        p.node_count = next_id_;
        return p;
    }

    std::vector<NodePtr> parse_statement_list()
    {
        std::vector<NodePtr> stmts;
        while (peek().kind != Tok::END)
            stmts.push_back(parse_statement());
        return stmts;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    int next_id_ = 0;

    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }

    const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(std::vector<Tok> expected) const
    {
        std::vector<std::string> names;
        for (Tok t : expected)
            names.push_back(describe(t));
        fail_names(std::move(names));
    }

    [[noreturn]] void fail_names(std::vector<std::string> expected) const
    {
        const Token& t = peek();
        std::ostringstream msg;
        msg << "unexpected " << (t.kind == Tok::END ? describe(Tok::END) : "'" + t.text + "'") << ", expected ";
        for (std::size_t i = 0; i < expected.size(); ++i)
            msg << (i ? ", " : "") << "'" << expected[i] << "'";
        throw ParseError(msg.str(), t.line, t.column, std::move(expected));
    }

    const Token& expect(Tok kind)
    {
        if (peek().kind != kind)
            fail({kind});
        return take();
    }

    bool accept(Tok kind)
    {
        if (peek().kind == kind) {
            take();
            return true;
        }
        return false;
    }

    NodePtr make(NodeKind kind, const Token& at)
    {
        auto n = std::make_unique<Node>();
        n->id = next_id_++;
        n->kind = kind;
        n->line = at.line;
        n->column = at.column;
        return n;
    }

    std::int64_t array_size()
    {
        expect(Tok::LBRACKET);
        const Token& size = expect(Tok::NUMBER);
        if (size.number < 1)
            throw SemanticError("array size must be positive", size.line, size.column);
        expect(Tok::RBRACKET);
        return size.number;
    }

    FunctionDef parse_function()
    {
        FunctionDef f;
        const Token& kw = expect(Tok::KW_INT);
        f.id = next_id_++;
        f.line = kw.line;
        f.name = expect(Tok::IDENT).text;
        expect(Tok::LPAREN);
        if (peek().kind != Tok::RPAREN) {
            do {
                Param prm;
                const Token& t = expect(Tok::KW_INT);
                prm.line = t.line;
                if (peek().kind == Tok::LBRACKET)
                    prm.array_size = array_size();
                prm.name = expect(Tok::IDENT).text;
                f.params.push_back(std::move(prm));
            } while (accept(Tok::COMMA));
        }
        expect(Tok::RPAREN);
        f.body = parse_block();
        f.end_line = toks_[pos_ - 1].line;
        return f;
    }

    std::vector<NodePtr> parse_block()
    {
        expect(Tok::LBRACE);
        std::vector<NodePtr> stmts;
        while (peek().kind != Tok::RBRACE) {
            if (peek().kind == Tok::END)
                fail({Tok::RBRACE});
            stmts.push_back(parse_statement());
        }
        expect(Tok::RBRACE);
        return stmts;
    }

    NodePtr parse_decl()
    {
        const Token& kw = expect(Tok::KW_INT);
        auto n = make(NodeKind::DECL, kw);
        if (peek().kind == Tok::LBRACKET) {
            n->array_size = array_size();
            n->name = expect(Tok::IDENT).text;
            return n;
        }
        n->name = expect(Tok::IDENT).text;
        expect(Tok::ASSIGN);
        n->children.push_back(parse_expr());
        return n;
    }

    // Assignment or array-element assignment; the identifier has not been consumed.
    NodePtr parse_assign()
    {
        const Token& id = expect(Tok::IDENT);
        if (peek().kind == Tok::LBRACKET) {
            auto n = make(NodeKind::ARRAY_ASSIGN, id);
            n->name = id.text;
            take();
            n->children.push_back(parse_expr());
            expect(Tok::RBRACKET);
            expect(Tok::ASSIGN);
            n->children.push_back(parse_expr());
            return n;
        }
        auto n = make(NodeKind::ASSIGN, id);
        n->name = id.text;
        if (peek().kind != Tok::ASSIGN)
            fail({Tok::ASSIGN, Tok::LBRACKET});
        take();
        n->children.push_back(parse_expr());
        return n;
    }

    NodePtr parse_statement()
    {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::KW_INT: {
            auto n = parse_decl();
            expect(Tok::SEMI);
            return n;
        }
        case Tok::IDENT: {
            if (peek(1).kind == Tok::LPAREN) {
                auto call = parse_primary();
                expect(Tok::SEMI);
                return call;
            }
            auto n = parse_assign();
            expect(Tok::SEMI);
            return n;
        }
        case Tok::KW_IF: return parse_if();
        case Tok::KW_WHILE: {
            auto n = make(NodeKind::WHILE, take());
            expect(Tok::LPAREN);
            n->children.push_back(parse_expr());
            expect(Tok::RPAREN);
            n->body = parse_block();
            return n;
        }
        case Tok::KW_FOR: {
            auto n = make(NodeKind::FOR, take());
            expect(Tok::LPAREN);
            if (peek().kind == Tok::KW_INT)
                n->children.push_back(parse_decl());
            else if (peek().kind == Tok::IDENT)
                n->children.push_back(parse_assign());
            else
                fail({Tok::KW_INT, Tok::IDENT});
            expect(Tok::SEMI);
            n->children.push_back(parse_expr());
            expect(Tok::SEMI);
            n->children.push_back(parse_assign());
            expect(Tok::RPAREN);
            n->body = parse_block();
            return n;
        }
        case Tok::KW_PRINT: {
            auto n = make(NodeKind::PRINT, take());
            expect(Tok::LPAREN);
            n->children.push_back(parse_expr());
            expect(Tok::RPAREN);
            expect(Tok::SEMI);
            return n;
        }
        case Tok::KW_RETURN: {
            auto n = make(NodeKind::RETURN, take());
            n->children.push_back(parse_expr());
            expect(Tok::SEMI);
            return n;
        }
        default:
            fail({Tok::KW_INT, Tok::IDENT, Tok::KW_IF, Tok::KW_WHILE, Tok::KW_FOR, Tok::KW_PRINT, Tok::KW_RETURN});
        }
    }

    NodePtr parse_if()
    {
        auto n = make(NodeKind::IF, expect(Tok::KW_IF));
        expect(Tok::LPAREN);
        n->children.push_back(parse_expr());
        expect(Tok::RPAREN);
        n->body = parse_block();
        if (accept(Tok::KW_ELSE)) {
            n->has_else = true;
            if (peek().kind == Tok::KW_IF)
                n->else_body.push_back(parse_if());
            else
                n->else_body = parse_block();
        }
        return n;
    }

    NodePtr binary(Op op, const Token& at, NodePtr lhs, NodePtr rhs)
    {
        auto n = make(NodeKind::BINOP, at);
        n->op = op;
        // Operands are numbered before the operator; the node takes the left operand's position.
        n->line = lhs->line;
        n->column = lhs->column;
        n->children.push_back(std::move(lhs));
        n->children.push_back(std::move(rhs));
        return n;
    }

    NodePtr parse_expr() { return parse_or(); }

    NodePtr parse_or()
    {
        auto lhs = parse_and();
        while (peek().kind == Tok::OR) {
            const Token& t = take();
            lhs = binary(Op::OR, t, std::move(lhs), parse_and());
        }
        return lhs;
    }

    NodePtr parse_and()
    {
        auto lhs = parse_equality();
        while (peek().kind == Tok::AND) {
            const Token& t = take();
            lhs = binary(Op::AND, t, std::move(lhs), parse_equality());
        }
        return lhs;
    }

    NodePtr parse_equality()
    {
        auto lhs = parse_relational();
        while (peek().kind == Tok::EQ || peek().kind == Tok::NE) {
            const Token& t = take();
            lhs = binary(t.kind == Tok::EQ ? Op::EQ : Op::NE, t, std::move(lhs), parse_relational());
        }
        return lhs;
    }

    NodePtr parse_relational()
    {
        auto lhs = parse_additive();
        for (;;) {
            Op op = Op::NONE;
            switch (peek().kind) {
            case Tok::LT: op = Op::LT; break;
            case Tok::LE: op = Op::LE; break;
            case Tok::GT: op = Op::GT; break;
            case Tok::GE: op = Op::GE; break;
            default: return lhs;
            }
            const Token& t = take();
            lhs = binary(op, t, std::move(lhs), parse_additive());
        }
    }

    NodePtr parse_additive()
    {
        auto lhs = parse_multiplicative();
        while (peek().kind == Tok::PLUS || peek().kind == Tok::MINUS) {
            const Token& t = take();
            lhs = binary(t.kind == Tok::PLUS ? Op::ADD : Op::SUB, t, std::move(lhs), parse_multiplicative());
        }
        return lhs;
    }

    NodePtr parse_multiplicative()
    {
        auto lhs = parse_unary();
        for (;;) {
            Op op = Op::NONE;
            switch (peek().kind) {
            case Tok::STAR: op = Op::MUL; break;
            case Tok::SLASH: op = Op::DIV; break;
            case Tok::PERCENT: op = Op::MOD; break;
            default: return lhs;
            }
            const Token& t = take();
            lhs = binary(op, t, std::move(lhs), parse_unary());
        }
    }

    NodePtr parse_unary()
    {
        if (peek().kind == Tok::MINUS || peek().kind == Tok::NOT) {
            const Token& t = take();
            auto n = make(NodeKind::UNOP, t);
            n->op = t.kind == Tok::MINUS ? Op::NEG : Op::NOT;
            n->children.push_back(parse_unary());
            return n;
        }
        return parse_primary();
    }

    NodePtr parse_primary()
    {
        const Token& t = peek();
        if (t.kind == Tok::NUMBER) {
            auto n = make(NodeKind::CONST, take());
            n->value = t.number;
            return n;
        }
        if (t.kind == Tok::LPAREN) {
            take();
            auto inner = parse_expr();
            expect(Tok::RPAREN);
            return inner;
        }
        if (t.kind == Tok::IDENT) {
            const Token& id = take();
            if (peek().kind == Tok::LPAREN) {
                auto n = make(NodeKind::CALL, id);
                n->name = id.text;
                take();
                if (peek().kind != Tok::RPAREN) {
                    do
                        n->children.push_back(parse_expr());
                    while (accept(Tok::COMMA));
                }
                expect(Tok::RPAREN);
                return n;
            }
            if (peek().kind == Tok::LBRACKET) {
                auto n = make(NodeKind::INDEX, id);
                n->name = id.text;
                take();
                n->children.push_back(parse_expr());
                expect(Tok::RBRACKET);
                return n;
            }
            auto n = make(NodeKind::VAR, id);
            n->name = id.text;
            return n;
        }
        fail({Tok::NUMBER, Tok::IDENT, Tok::LPAREN, Tok::MINUS, Tok::NOT});
    }
};

// Static types of expressions. ARRAY values only appear as call arguments.
struct Type {
    enum Kind { INT, BOOL, ARRAY } kind = INT;
    std::int64_t size = 0;

    bool operator==(const Type&) const = default;
    std::string str() const
    {
        switch (kind) {
        case INT: return "int";
        case BOOL: return "bool";
        case ARRAY: return "int[" + std::to_string(size) + "]";
        }
        return "?";
    }
};

class Checker {
public:
    explicit Checker(const Program& p) : program_(p) {}

    void check()
    {
        std::set<std::string> names;
        for (const auto& f : program_.functions) {
            if (!names.insert(f.name).second)
                throw SemanticError("duplicate declaration of function " + f.name, f.line, 1);
        }
        int mains = static_cast<int>(std::count_if(program_.functions.begin(), program_.functions.end(),
                                                   [](const FunctionDef& f) { return f.name == "main"; }));
        if (mains != 1)
            throw SemanticError("program must define exactly one function named main", 1, 1);

        for (const auto& f : program_.functions) {
            scopes_.clear();
            scopes_.emplace_back();
            for (const auto& prm : f.params) {
                Type t = prm.array_size ? Type{Type::ARRAY, *prm.array_size} : Type{Type::INT, 0};
                declare(prm.name, t, prm.line, 1);
            }
            check_block(f.body, false);
        }
    }

private:
    const Program& program_;
    std::vector<std::map<std::string, Type>> scopes_;

    const Type* lookup(const std::string& name) const
    {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto hit = it->find(name);
            if (hit != it->end())
                return &hit->second;
        }
        return nullptr;
    }

    // Names are unique across all nested scopes of one function.
    void declare(const std::string& name, Type t, int line, int col)
    {
        if (lookup(name))
            throw SemanticError("duplicate declaration of " + name, line, col);
        scopes_.back().emplace(name, t);
    }

    const Type& resolve(const Node& n) const
    {
        const Type* t = lookup(n.name);
        if (!t)
            throw SemanticError("undeclared identifier " + n.name, n.line, n.column);
        return *t;
    }

    static void require(const Node& n, const Type& got, const Type& want)
    {
        if (!(got == want))
            throw SemanticError("type mismatch: expected " + want.str() + ", found " + got.str(), n.line, n.column);
    }

    void check_block(const std::vector<NodePtr>& stmts, bool new_scope = true)
    {
        if (new_scope)
            scopes_.emplace_back();
        for (const auto& s : stmts)
            check_stmt(*s);
        if (new_scope)
            scopes_.pop_back();
    }

    void check_stmt(const Node& n)
    {
        const Type int_t{Type::INT, 0};
        const Type bool_t{Type::BOOL, 0};
        switch (n.kind) {
        case NodeKind::DECL:
            if (n.array_size) {
                declare(n.name, Type{Type::ARRAY, *n.array_size}, n.line, n.column);
            } else {
                require(n.child(0), expr(n.child(0)), int_t);
                declare(n.name, int_t, n.line, n.column);
            }
            break;
        case NodeKind::ASSIGN: {
            const Type& t = resolve(n);
            if (t.kind != Type::INT)
                throw SemanticError("type mismatch: cannot assign to array " + n.name, n.line, n.column);
            require(n.child(0), expr(n.child(0)), int_t);
            break;
        }
        case NodeKind::ARRAY_ASSIGN: {
            const Type& t = resolve(n);
            if (t.kind != Type::ARRAY)
                throw SemanticError("type mismatch: " + n.name + " is not an array", n.line, n.column);
            require(n.child(0), expr(n.child(0)), int_t);
            require(n.child(1), expr(n.child(1)), int_t);
            break;
        }
        case NodeKind::IF:
            require(n.child(0), expr(n.child(0)), bool_t);
            check_block(n.body);
            check_block(n.else_body);
            break;
        case NodeKind::WHILE:
            require(n.child(0), expr(n.child(0)), bool_t);
            check_block(n.body);
            break;
        case NodeKind::FOR:
            scopes_.emplace_back();
            check_stmt(n.child(0));
            require(n.child(1), expr(n.child(1)), bool_t);
            check_stmt(n.child(2));
            check_block(n.body);
            scopes_.pop_back();
            break;
        case NodeKind::PRINT:
        case NodeKind::RETURN:
            require(n.child(0), expr(n.child(0)), int_t);
            break;
        case NodeKind::CALL:
            expr(n);
            break;
        default:
            throw SemanticError("expression used as statement", n.line, n.column);
        }
    }

    Type expr(const Node& n)
    {
        const Type int_t{Type::INT, 0};
        const Type bool_t{Type::BOOL, 0};
        switch (n.kind) {
        case NodeKind::CONST:
            return int_t;
        case NodeKind::VAR:
            return resolve(n);
        case NodeKind::INDEX: {
            const Type& t = resolve(n);
            if (t.kind != Type::ARRAY)
                throw SemanticError("type mismatch: " + n.name + " is not an array", n.line, n.column);
            require(n.child(0), expr(n.child(0)), int_t);
            return int_t;
        }
        case NodeKind::UNOP:
            if (n.op == Op::NOT) {
                require(n.child(0), expr(n.child(0)), bool_t);
                return bool_t;
            }
            require(n.child(0), expr(n.child(0)), int_t);
            return int_t;
        case NodeKind::BINOP: {
            Type lhs = expr(n.child(0));
            Type rhs = expr(n.child(1));
            if (n.op == Op::AND || n.op == Op::OR) {
                require(n.child(0), lhs, bool_t);
                require(n.child(1), rhs, bool_t);
                return bool_t;
            }
            require(n.child(0), lhs, int_t);
            require(n.child(1), rhs, int_t);
            return is_arithmetic(n.op) ? int_t : bool_t;
        }
        case NodeKind::CALL: {
            const FunctionDef* f = program_.find_function(n.name);
            if (!f)
                throw SemanticError("undeclared identifier " + n.name, n.line, n.column);
            if (f->params.size() != n.children.size())
                throw SemanticError("type mismatch: " + n.name + " expects " + std::to_string(f->params.size()) +
                                        " arguments",
                                    n.line, n.column);
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                const auto& prm = f->params[i];
                Type want = prm.array_size ? Type{Type::ARRAY, *prm.array_size} : int_t;
                const Node& arg = n.child(i);
                if (want.kind == Type::ARRAY && arg.kind != NodeKind::VAR)
                    throw SemanticError("type mismatch: expected " + want.str(), arg.line, arg.column);
                require(arg, expr(arg), want);
            }
            return int_t;
        }
        default:
            throw SemanticError("statement used as expression", n.line, n.column);
        }
    }
};

std::vector<std::string> split_lines(std::string_view source)
{
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= source.size()) {
        auto nl = source.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(source.substr(start));
            break;
        }
        lines.emplace_back(source.substr(start, nl - start));
        start = nl + 1;
    }
    if (!lines.empty() && lines.back().empty() && !source.empty() && source.back() == '\n')
        lines.pop_back();
    return lines;
}

} // namespace

Program parse(std::string_view source)
{
    Parser parser(lex(source));
    Program p = parser.parse_program();
    p.source_lines = split_lines(source);
    Checker(p).check();
    return p;
}

bool parses_as_statements(std::string_view text)
{
    try {
        Parser parser(lex(text));
        return !parser.parse_statement_list().empty();
    } catch (const ParseError&) {
        return false;
    } catch (const SemanticError&) {
        return false;
    }
}

} // namespace socratic
