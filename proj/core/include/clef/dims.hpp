#pragma once

// Dimensional algebra over the free abelian group generated by the seven SI
// base dimensions, plus equation solving over integer exponents and equality
// unification for memory sorts.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clef::dims {

// =============================================================================
// Base dimensions
// =============================================================================

/// One of the seven SI base dimensions. Indices are stable for the process
/// lifetime and order the canonical rendering.
enum class BaseDimension : int {
    Length = 0,
    Time = 1,
    Mass = 2,
    Temperature = 3,
    Current = 4,
    LuminousIntensity = 5,
    AmountOfSubstance = 6,
};

inline constexpr int kBaseDimensionCount = 7;

/// Unit symbol used when rendering exponent vectors (m, s, kg, K, A, cd, mol).
std::string_view base_symbol(BaseDimension b);

/// Full lowercase name used in config files (length, time, mass, ...).
std::string_view base_name(BaseDimension b);

/// Reverse lookup over base_name; nullopt for unknown names.
std::optional<BaseDimension> base_from_name(std::string_view name);

// =============================================================================
// Dimension variables
// =============================================================================

/// Source location carried by variables and diagnostics. line/column are
/// 1-based; a zero line means "synthetic" (no source anchor).
struct SourceSpan {
    int line = 0;
    int column = 0;
    int end_line = 0;
    int end_column = 0;

    bool operator==(const SourceSpan&) const = default;
    [[nodiscard]] bool is_synthetic() const { return line == 0; }
};

/// A dimension variable. Fresh ids come from a VarSupply owned by the
/// inference session; the name hint (when present) drives rendering such as
/// 'd_g for the dimension of a binding named g.
struct DimensionVariable {
    std::int64_t id = 0;
    SourceSpan origin;
    std::string name_hint;

    bool operator==(const DimensionVariable& o) const { return id == o.id; }
    auto operator<=>(const DimensionVariable& o) const { return id <=> o.id; }
};

/// Monotonic id source for one inference session. Not thread-safe by design;
/// sessions are independent.
class VarSupply {
public:
    DimensionVariable fresh(SourceSpan origin = {}, std::string hint = {});
    [[nodiscard]] std::int64_t count() const { return next_; }

private:
    std::int64_t next_ = 0;
};

// =============================================================================
// Dimension: element of Z^7 extended with variables
// =============================================================================

/// An exponent vector over base dimensions plus dimension variables.
/// Canonical form: zero exponents are never stored, so map equality is
/// dimension equality. The dimensionless dimension has both maps empty.
class Dimension {
public:
    Dimension() = default;

    static Dimension base(BaseDimension b, int exponent = 1);
    static Dimension variable(const DimensionVariable& v, int exponent = 1);
    static Dimension dimensionless() { return {}; }

    [[nodiscard]] bool is_dimensionless() const {
        return exponents_.empty() && variables_.empty();
    }
    [[nodiscard]] bool has_variables() const { return !variables_.empty(); }

    [[nodiscard]] int exponent_of(BaseDimension b) const;
    [[nodiscard]] int exponent_of(const DimensionVariable& v) const;

    [[nodiscard]] const std::map<BaseDimension, int>& exponents() const {
        return exponents_;
    }
    [[nodiscard]] const std::map<DimensionVariable, int>& variables() const {
        return variables_;
    }

    bool operator==(const Dimension& o) const {
        return exponents_ == o.exponents_ && variables_ == o.variables_;
    }

    /// Renders in canonical base-index order with ASCII exponents, e.g.
    /// "m^3 * kg^-1 * s^-2" ordered (m, s, kg, ...). Dimensionless is "1".
    [[nodiscard]] std::string to_string() const;

    friend Dimension dim_mul(const Dimension& a, const Dimension& b);
    friend Dimension dim_pow(const Dimension& a, int k);

private:
    void set(BaseDimension b, int e);
    void set(const DimensionVariable& v, int e);

    std::map<BaseDimension, int> exponents_;
    std::map<DimensionVariable, int> variables_;
};

/// Group product: exponents add. Total.
Dimension dim_mul(const Dimension& a, const Dimension& b);

/// Group quotient: exponents subtract. Equal to dim_mul(a, dim_pow(b, -1)).
Dimension dim_div(const Dimension& a, const Dimension& b);

/// Integer scaling; dim_pow(a, 0) is dimensionless.
Dimension dim_pow(const Dimension& a, int k);

/// Dimension of a derivative d(out)/d(in): dim_div(out, in). The algebra is
/// closed under this, so gradient graphs reuse the ordinary solver.
Dimension gradient_dimension(const Dimension& d_out, const Dimension& d_in);

// =============================================================================
// Substitutions and unification
// =============================================================================

/// Idempotent variable binding set produced by unification. No binding's
/// right-hand side mentions a variable bound elsewhere in the same
/// substitution.
class DimSubstitution {
public:
    [[nodiscard]] bool empty() const { return bindings_.empty(); }
    [[nodiscard]] std::size_t size() const { return bindings_.size(); }

    [[nodiscard]] const std::map<DimensionVariable, Dimension>& bindings() const {
        return bindings_;
    }
    [[nodiscard]] std::optional<Dimension> lookup(const DimensionVariable& v) const;

    /// Replaces every bound variable occurring in d, scaling by its exponent.
    [[nodiscard]] Dimension apply(const Dimension& d) const;

    /// Adds v := d and rewrites existing right-hand sides so the resolved-form
    /// invariant holds. d must not mention v.
    void bind(const DimensionVariable& v, const Dimension& d);

private:
    std::map<DimensionVariable, Dimension> bindings_;
};

/// One equation lhs = rhs with the source expressions that generated it
/// (both operand spans retained for two-origin diagnostics).
struct DimEquation {
    Dimension lhs;
    Dimension rhs;
    SourceSpan origin_lhs;
    SourceSpan origin_rhs;
    std::string note;  // e.g. "operands of +"
};

/// Unsatisfiable equation report: the equation index and the residual
/// exponent vector (lhs - rhs after substitution) for diagnostics.
struct DimInconsistency {
    std::size_t equation_index = 0;
    DimEquation equation;
    Dimension residual;
};

struct DimUnifyResult {
    std::optional<DimSubstitution> substitution;  // set on success
    std::optional<DimInconsistency> inconsistency;

    [[nodiscard]] bool ok() const { return substitution.has_value(); }
};

/// Solves a system of dimension equations over integer exponents, returning a
/// most-general idempotent substitution or the first unsatisfiable equation.
/// Unsolved variables remain free (dimensional polymorphism). Auxiliary
/// variables introduced by the Euclidean reduction step are drawn from the
/// supplied VarSupply.
DimUnifyResult dim_unify(const std::vector<DimEquation>& equations, VarSupply& supply);

// =============================================================================
// Memory sorts: finite-domain equality unification
// =============================================================================

/// A memory space tag. The lifetime-comparable subset (stack, arena, heap,
/// static) is totally ordered by the escape module; target-defined extensions
/// (fabric, scratchpad, register, ...) only support equality.
struct MemorySpace {
    std::string tag;
    std::string target_scoped;  // optional owning target

    bool operator==(const MemorySpace&) const = default;
    auto operator<=>(const MemorySpace&) const = default;

    [[nodiscard]] std::string to_string() const;
};

inline MemorySpace mem_stack() { return {"stack", {}}; }
inline MemorySpace mem_arena() { return {"arena", {}}; }
inline MemorySpace mem_heap() { return {"heap", {}}; }
inline MemorySpace mem_static() { return {"static", {}}; }

/// A memory term is a constant space or a variable (id from VarSupply; memory
/// variables share the dimension-variable id space for simplicity).
struct MemTerm {
    std::optional<MemorySpace> constant;
    std::optional<std::int64_t> variable;

    static MemTerm make(MemorySpace s) { return {std::move(s), std::nullopt}; }
    static MemTerm var(std::int64_t id) { return {std::nullopt, id}; }
    bool operator==(const MemTerm&) const = default;
};

struct MemEquation {
    MemTerm lhs;
    MemTerm rhs;
    SourceSpan origin;
};

struct MemInconsistency {
    std::size_t equation_index = 0;
    MemorySpace left;
    MemorySpace right;
};

struct MemUnifyResult {
    // var id -> resolved constant; variables joined to a free class resolve to
    // the class representative id instead.
    std::map<std::int64_t, MemorySpace> constants;
    std::map<std::int64_t, std::int64_t> representatives;
    std::optional<MemInconsistency> inconsistency;

    [[nodiscard]] bool ok() const { return !inconsistency.has_value(); }
    [[nodiscard]] std::optional<MemorySpace> resolve(std::int64_t var) const;
};

/// Syntactic unification over the finite memory-space domain plus variables.
/// Fails exactly when two distinct constants are equated.
MemUnifyResult mem_unify(const std::vector<MemEquation>& equations);

// =============================================================================
// Unit aliases
// =============================================================================

/// Named unit expanding to an exponent vector, with an optional scale factor
/// relative to the SI base (used only by range-rescaling suggestions; the
/// dimensional algebra never sees scales).
struct UnitAlias {
    std::string name;
    Dimension dimension;
    double scale = 1.0;
};

/// Alias table: built-in SI units and derived names, extensible from config.
class UnitTable {
public:
    /// Table preloaded with base units (m, s, kg, K, A, cd, mol and long
    /// names), derived units (newtons, joules, celsius, ...) and AU.
    static UnitTable builtin();

    void add(UnitAlias alias);
    [[nodiscard]] const UnitAlias* find(std::string_view name) const;

    /// First alias whose dimension equals d, preferring derived names
    /// (newtons over the raw exponent rendering); nullptr when none match.
    [[nodiscard]] const UnitAlias* find_by_dimension(const Dimension& d) const;

    /// All aliases with the given dimension (for rescaling candidates).
    [[nodiscard]] std::vector<const UnitAlias*> all_with_dimension(const Dimension& d) const;

    /// Renders d as a known alias name when one matches exactly, falling back
    /// to the exponent-vector form.
    [[nodiscard]] std::string render(const Dimension& d) const;

    [[nodiscard]] const std::vector<UnitAlias>& aliases() const { return aliases_; }

private:
    std::vector<UnitAlias> aliases_;
};

}  // namespace clef::dims
