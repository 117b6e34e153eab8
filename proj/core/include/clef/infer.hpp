#pragma once

// Hindley-Milner type inference extended with dimension variables and memory
// sorts: constraint generation, unification (dimension systems delegate to
// dims::dim_unify), generalization to dimension-polymorphic schemes, and the
// type-driven lvalue/rvalue resolution that wraps mutable-cell reads in
// explicit loads.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clef/dims.hpp"
#include "clef/syntax.hpp"

namespace clef::infer {

using dims::SourceSpan;

// =============================================================================
// Types
// =============================================================================

/// A resolved type value. Var nodes are free (unquantified or scheme-bound)
/// type variables.
struct Type {
    enum class Kind { Float, Int, Unit, Span, Tuple, Arrow, Quire, MemRef, Var };
    Kind kind = Kind::Unit;
    dims::Dimension dim;       // Float / Quire
    std::vector<Type> args;    // Span/MemRef: [inner]; Tuple: members; Arrow: [dom, cod]
    int var_id = -1;           // Var
    std::string memory;        // optional memory-space annotation

    bool operator==(const Type&) const;

    static Type float_dim(dims::Dimension d) {
        Type t;
        t.kind = Kind::Float;
        t.dim = std::move(d);
        return t;
    }
    static Type integer() {
        Type t;
        t.kind = Kind::Int;
        return t;
    }
    static Type unit() { return {}; }
    static Type span_of(Type inner);
    static Type quire(dims::Dimension d);
    static Type arrow(Type dom, Type cod);
    static Type tuple(std::vector<Type> members);
    static Type memref(Type inner);
    static Type var(int id);

    /// Rendering with unit aliases: float<newtons>, Span<float<celsius>>,
    /// float<'d_g * 'd_m1>, Quire<joules>.
    [[nodiscard]] std::string render(const dims::UnitTable& units) const;
};

struct TypeScheme {
    std::vector<int> type_vars;                     // quantified type variables
    std::vector<dims::DimensionVariable> dim_vars;  // quantified dimension variables
    Type body;

    [[nodiscard]] std::string render(const dims::UnitTable& units) const;
};

/// Alpha-equivalence up to consistent renaming of quantified variables.
bool alpha_equivalent(const TypeScheme& a, const TypeScheme& b);

/// Instance check: substituting the scheme's quantified variables can
/// produce `monotype`. On success reports the dimensions assigned to each
/// quantified dimension variable (keyed by variable id).
struct InstanceMatch {
    bool ok = false;
    std::map<std::int64_t, dims::Dimension> dim_assignment;
};
InstanceMatch match_instance(const TypeScheme& scheme, const Type& monotype,
                             dims::VarSupply& supply);

// =============================================================================
// Results
// =============================================================================

struct InferError {
    enum class Kind {
        UnboundVariable,
        TypeMismatch,
        DimensionError,
        UnknownUnit,
        UnknownProperty,
        InvalidAssign,
        Internal,
    };
    Kind kind = Kind::Internal;
    std::string message;
    SourceSpan span_a;        // primary location
    SourceSpan span_b;        // second constraint origin when relevant
    dims::Dimension residual;  // DimensionError: leftover exponent vector
};

struct TypedBinding {
    std::string name;
    SourceSpan span;
    TypeScheme scheme;
    std::vector<syntax::CoeffectAttribute> attributes;
    std::map<int, Type> node_types;          // by expression id
    std::map<int, std::string> node_memory;  // let-node id -> resolved space tag
};

struct TypedProgram {
    syntax::Program program;  // desugared, load-resolved copy
    std::vector<TypedBinding> bindings;

    [[nodiscard]] const TypedBinding* find(std::string_view name) const;
};

struct InferResult {
    std::optional<TypedProgram> program;
    std::optional<InferError> error;

    [[nodiscard]] bool ok() const { return program.has_value(); }
};

/// Runs inference over a desugared program. Every binding receives a scheme;
/// every expression node a resolved type; unsolved dimension variables are
/// generalized at top level. Includes the apply-and-verify soundness pass
/// (any violation surfaces as an Internal error).
InferResult infer_program(syntax::Program desugared, const dims::UnitTable& units);

/// The type-driven load composition: wraps memory-cell reads (mutable
/// bindings, byref parameters used as values) in explicit Load nodes.
/// Runs as part of infer_program; calling it again is the identity.
void resolve_lvalue(TypedProgram& tp);

}  // namespace clef::infer
