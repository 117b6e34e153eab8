#pragma once

// Lexer, parser, AST, pretty-printer and the arena-block desugar for the
// Clef-lite source language: let bindings, lambdas, application, pipelines,
// arithmetic, spans, for-loops, tuples, dimension annotations, coeffect
// attributes and arena blocks.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clef/dims.hpp"

namespace clef::syntax {

using dims::SourceSpan;

// =============================================================================
// Dimension and type annotation expressions
// =============================================================================

/// Dimension expression in annotations: unit names, 'variables, one, and
/// *, /, ^integer combinations.
struct DimExpr {
    enum class Kind { Unit, Var, One, Mul, Div, Pow };
    Kind kind = Kind::One;
    std::string name;             // Unit / Var
    int power = 1;                // Pow
    std::vector<DimExpr> args;    // Mul/Div: [lhs, rhs]; Pow: [base]

    bool operator==(const DimExpr&) const;
};

/// Type annotation expression.
struct TypeExpr {
    enum class Kind { Float, Int, Unit, Span, Quire, Tuple, Arrow, Var, ByRef };
    Kind kind = Kind::Float;
    std::optional<DimExpr> dim;   // Float / Quire
    std::vector<TypeExpr> args;   // Span/ByRef: [inner]; Tuple: members; Arrow: [dom, cod]
    std::string var_name;         // Var ('a)
    std::string memory;           // optional @space suffix

    bool operator==(const TypeExpr&) const;
};

// =============================================================================
// Coeffect attributes
// =============================================================================

struct CoeffectAttribute {
    enum class Kind { Target, Memory, Inline };
    Kind kind = Kind::Inline;
    std::vector<std::string> targets;  // Target
    std::string memory;                // Memory

    bool operator==(const CoeffectAttribute&) const = default;
};

// =============================================================================
// Expressions
// =============================================================================

enum class ExprKind {
    Literal,
    Var,
    Let,
    LetMut,
    Assign,
    Lambda,
    Apply,
    BinOp,
    Tuple,
    Index,
    Property,
    ForRange,
    ArenaBlock,  // parse-time only; desugar replaces it with Scope
    Scope,       // arena scope marker carrying the block
    Annotated,
    Block,       // statement sequence whose value is the last expression
    Load,        // inserted by lvalue resolution, never produced by the parser
};

const char* expr_kind_name(ExprKind k);

struct LiteralValue {
    std::variant<std::int64_t, double, std::monostate> value;  // int, float, unit

    [[nodiscard]] bool is_int() const {
        return std::holds_alternative<std::int64_t>(value);
    }
    [[nodiscard]] bool is_float() const { return std::holds_alternative<double>(value); }
    [[nodiscard]] bool is_unit() const {
        return std::holds_alternative<std::monostate>(value);
    }
    bool operator==(const LiteralValue&) const = default;
};

struct Param {
    std::string name;  // empty for a unit parameter ()
    std::optional<TypeExpr> annotation;
    SourceSpan span;
};

struct Expr {
    ExprKind kind = ExprKind::Literal;
    SourceSpan span;
    int id = -1;  // assigned by number_exprs after desugar

    std::vector<Expr> children;

    // Kind-specific payloads.
    LiteralValue literal;                 // Literal
    std::optional<DimExpr> literal_dim;   // Literal with <...> suffix
    std::string name;                     // Var/Let/LetMut/Assign/Property/ForRange
    std::optional<TypeExpr> annotation;   // Let/LetMut/Annotated
    std::vector<Param> params;            // Lambda
    char op = 0;                          // BinOp: + - * /
    bool from_arena_bang = false;         // Let introduced by let!
    int arena_scope = -1;                 // Let tagged by desugar; Scope id
};

/// Structural equality ignoring spans and ids (round-trip testing).
bool same_tree(const Expr& a, const Expr& b);

// =============================================================================
// Programs
// =============================================================================

struct TopBinding {
    std::string name;
    bool mutable_binding = false;
    std::vector<CoeffectAttribute> attributes;
    std::vector<Param> params;
    std::optional<TypeExpr> return_annotation;
    Expr body;  // Block
    SourceSpan span;
};

struct Program {
    std::vector<TopBinding> bindings;
    int next_scope_id = 0;   // advanced by desugar
    int next_expr_id = 0;    // advanced by number_exprs
};

bool same_program(const Program& a, const Program& b);

// =============================================================================
// Operations
// =============================================================================

struct ParseError {
    std::string message;
    SourceSpan span;
    std::vector<std::string> expected;
};

struct ParseResult {
    std::optional<Program> program;
    std::optional<ParseError> error;

    [[nodiscard]] bool ok() const { return program.has_value(); }
};

ParseResult parse(std::string_view source);

/// Replaces every ArenaBlock with a Scope marker and tags each let!-bound
/// binding with memory=arena scoped to the innermost block. Idempotent.
Program desugar(Program p);

/// Assigns pre-order ids to every expression node. Called by desugar; exposed
/// for synthetic trees built in tests.
void number_exprs(Program& p);

/// Canonical textual form; parse(pretty_print(p)) reproduces the tree.
std::string pretty_print(const Program& p);
std::string pretty_print(const Expr& e);

}  // namespace clef::syntax
