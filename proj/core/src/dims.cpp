#include "clef/dims.hpp"

#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <stdexcept>

namespace clef::dims {

std::string_view base_symbol(BaseDimension b) {
    switch (b) {
        case BaseDimension::Length: return "m";
        case BaseDimension::Time: return "s";
        case BaseDimension::Mass: return "kg";
        case BaseDimension::Temperature: return "K";
        case BaseDimension::Current: return "A";
        case BaseDimension::LuminousIntensity: return "cd";
        case BaseDimension::AmountOfSubstance: return "mol";
    }
    return "?";
}

std::string_view base_name(BaseDimension b) {
    switch (b) {
        case BaseDimension::Length: return "length";
        case BaseDimension::Time: return "time";
        case BaseDimension::Mass: return "mass";
        case BaseDimension::Temperature: return "temperature";
        case BaseDimension::Current: return "current";
        case BaseDimension::LuminousIntensity: return "luminous";
        case BaseDimension::AmountOfSubstance: return "amount";
    }
    return "?";
}

std::optional<BaseDimension> base_from_name(std::string_view name) {
    for (int i = 0; i < kBaseDimensionCount; ++i) {
        auto b = static_cast<BaseDimension>(i);
        if (name == base_name(b) || name == base_symbol(b)) return b;
    }
    return std::nullopt;
}

DimensionVariable VarSupply::fresh(SourceSpan origin, std::string hint) {
    DimensionVariable v;
    v.id = next_++;
    v.origin = origin;
    v.name_hint = std::move(hint);
    return v;
}

// -----------------------------------------------------------------------------
// Dimension
// -----------------------------------------------------------------------------

Dimension Dimension::base(BaseDimension b, int exponent) {
    Dimension d;
    d.set(b, exponent);
    return d;
}

Dimension Dimension::variable(const DimensionVariable& v, int exponent) {
    Dimension d;
    d.set(v, exponent);
    return d;
}

int Dimension::exponent_of(BaseDimension b) const {
    auto it = exponents_.find(b);
    return it == exponents_.end() ? 0 : it->second;
}

int Dimension::exponent_of(const DimensionVariable& v) const {
    auto it = variables_.find(v);
    return it == variables_.end() ? 0 : it->second;
}

void Dimension::set(BaseDimension b, int e) {
    if (e == 0) {
        exponents_.erase(b);
    } else {
        exponents_[b] = e;
    }
}

void Dimension::set(const DimensionVariable& v, int e) {
    if (e == 0) {
        variables_.erase(v);
    } else {
        variables_[v] = e;
    }
}

Dimension dim_mul(const Dimension& a, const Dimension& b) {
    Dimension r = a;
    for (const auto& [base, e] : b.exponents_) r.set(base, r.exponent_of(base) + e);
    for (const auto& [var, e] : b.variables_) r.set(var, r.exponent_of(var) + e);
    return r;
}

Dimension dim_div(const Dimension& a, const Dimension& b) {
    return dim_mul(a, dim_pow(b, -1));
}

Dimension dim_pow(const Dimension& a, int k) {
    Dimension r;
    if (k == 0) return r;
    for (const auto& [base, e] : a.exponents_) r.set(base, e * k);
    for (const auto& [var, e] : a.variables_) r.set(var, e * k);
    return r;
}

Dimension gradient_dimension(const Dimension& d_out, const Dimension& d_in) {
    return dim_div(d_out, d_in);
}

std::string Dimension::to_string() const {
    if (is_dimensionless()) return "1";
    std::string out;
    auto append = [&out](std::string_view sym, int e) {
        if (!out.empty()) out += " * ";
        out += sym;
        if (e != 1) {
            out += "^";
            out += std::to_string(e);
        }
    };
    for (const auto& [base, e] : exponents_) append(base_symbol(base), e);
    for (const auto& [var, e] : variables_) {
        std::string name = "'d";
        if (!var.name_hint.empty()) {
            name += "_" + var.name_hint;
        } else {
            name += std::to_string(var.id);
        }
        append(name, e);
    }
    return out;
}

// -----------------------------------------------------------------------------
// DimSubstitution
// -----------------------------------------------------------------------------

std::optional<Dimension> DimSubstitution::lookup(const DimensionVariable& v) const {
    auto it = bindings_.find(v);
    if (it == bindings_.end()) return std::nullopt;
    return it->second;
}

Dimension DimSubstitution::apply(const Dimension& d) const {
    Dimension r;
    for (const auto& [base, e] : d.exponents()) {
        r = dim_mul(r, Dimension::base(base, e));
    }
    for (const auto& [var, e] : d.variables()) {
        auto it = bindings_.find(var);
        if (it == bindings_.end()) {
            r = dim_mul(r, Dimension::variable(var, e));
        } else {
            r = dim_mul(r, dim_pow(it->second, e));
        }
    }
    return r;
}

void DimSubstitution::bind(const DimensionVariable& v, const Dimension& d) {
    assert(d.exponent_of(v) == 0 && "binding must not mention its own variable");
    // Rewrite existing right-hand sides first so no RHS mentions v afterwards.
    DimSubstitution single;
    single.bindings_[v] = d;
    for (auto& [bound, rhs] : bindings_) {
        rhs = single.apply(rhs);
    }
    bindings_[v] = apply(d);
}

// -----------------------------------------------------------------------------
// dim_unify: abelian-group unification with smallest-exponent pivoting
// -----------------------------------------------------------------------------

namespace {

// Euclidean floor helpers over possibly negative operands.
int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

Dimension residual_of(const DimEquation& eq, const DimSubstitution& sub) {
    return dim_div(sub.apply(eq.lhs), sub.apply(eq.rhs));
}

}  // namespace

DimUnifyResult dim_unify(const std::vector<DimEquation>& equations, VarSupply& supply) {
    DimSubstitution sub;

    // Work list of residuals (lhs / rhs), kept fully substituted.
    struct Pending {
        Dimension residual;
        std::size_t index;
    };
    std::vector<Pending> pending;
    pending.reserve(equations.size());
    for (std::size_t i = 0; i < equations.size(); ++i) {
        pending.push_back({residual_of(equations[i], sub), i});
    }

    auto apply_binding = [&](const DimensionVariable& v, const Dimension& rhs) {
        sub.bind(v, rhs);
        DimSubstitution single;
        single.bind(v, rhs);
        for (auto& p : pending) p.residual = single.apply(p.residual);
    };

    for (std::size_t slot = 0; slot < pending.size(); ++slot) {
        // Solve this equation's residual to completion before moving on.
        for (;;) {
            Dimension& res = pending[slot].residual;
            if (!res.has_variables()) {
                if (res.is_dimensionless()) break;  // solved
                DimInconsistency inc;
                inc.equation_index = pending[slot].index;
                inc.equation = equations[inc.equation_index];
                inc.residual = res;
                return {std::nullopt, inc};
            }

            // Pivot: variable with the smallest nonzero absolute exponent.
            auto pivot = res.variables().begin();
            for (auto it = res.variables().begin(); it != res.variables().end(); ++it) {
                if (std::abs(it->second) < std::abs(pivot->second)) pivot = it;
            }
            DimensionVariable pv = pivot->first;
            int pc = pivot->second;

            // rest = residual without the pivot term; the equation reads
            // pc*pv + rest = 0.
            Dimension rest = dim_mul(res, Dimension::variable(pv, -pc));

            bool divisible = true;
            for (const auto& [base, e] : rest.exponents()) {
                (void)base;
                if (e % pc != 0) divisible = false;
            }
            for (const auto& [var, e] : rest.variables()) {
                (void)var;
                if (e % pc != 0) divisible = false;
            }

            if (divisible) {
                // pv := rest^(-1/pc), exactly.
                Dimension value;
                for (const auto& [base, e] : rest.exponents()) {
                    value = dim_mul(value, Dimension::base(base, -e / pc));
                }
                for (const auto& [var, e] : rest.variables()) {
                    value = dim_mul(value, Dimension::variable(var, -e / pc));
                }
                apply_binding(pv, value);
                break;  // equation reduced to dimensionless
            }

            if (rest.variables().empty()) {
                // Single variable, coefficient does not divide the base part:
                // no integer solution.
                DimInconsistency inc;
                inc.equation_index = pending[slot].index;
                inc.equation = equations[inc.equation_index];
                inc.residual = res;
                return {std::nullopt, inc};
            }

            // Euclidean step: pv := u - sum floor(c/pc) * term. Coefficients of
            // the other terms drop to c mod pc, so the minimum strictly falls.
            DimensionVariable u = supply.fresh();
            Dimension value = Dimension::variable(u);
            for (const auto& [base, e] : rest.exponents()) {
                value = dim_mul(value, Dimension::base(base, -floor_div(e, pc)));
            }
            for (const auto& [var, e] : rest.variables()) {
                value = dim_mul(value, Dimension::variable(var, -floor_div(e, pc)));
            }
            apply_binding(pv, value);
        }
    }

    return {sub, std::nullopt};
}

// -----------------------------------------------------------------------------
// Memory sorts
// -----------------------------------------------------------------------------

std::string MemorySpace::to_string() const {
    if (target_scoped.empty()) return tag;
    return tag + "@" + target_scoped;
}

std::optional<MemorySpace> MemUnifyResult::resolve(std::int64_t var) const {
    auto rep = var;
    auto it = representatives.find(rep);
    while (it != representatives.end() && it->second != rep) {
        rep = it->second;
        it = representatives.find(rep);
    }
    auto c = constants.find(rep);
    if (c != constants.end()) return c->second;
    return std::nullopt;
}

MemUnifyResult mem_unify(const std::vector<MemEquation>& equations) {
    MemUnifyResult result;
    std::map<std::int64_t, std::int64_t> parent;
    std::map<std::int64_t, MemorySpace> value;

    auto find = [&](std::int64_t x) {
        while (true) {
            auto it = parent.find(x);
            if (it == parent.end() || it->second == x) {
                parent[x] = x;
                return x;
            }
            x = it->second;
        }
    };

    for (std::size_t i = 0; i < equations.size(); ++i) {
        const auto& eq = equations[i];
        const bool lc = eq.lhs.constant.has_value();
        const bool rc = eq.rhs.constant.has_value();
        if (lc && rc) {
            if (*eq.lhs.constant != *eq.rhs.constant) {
                result.inconsistency = MemInconsistency{i, *eq.lhs.constant, *eq.rhs.constant};
                return result;
            }
            continue;
        }
        if (lc || rc) {
            const auto& c = lc ? *eq.lhs.constant : *eq.rhs.constant;
            const auto v = find(lc ? *eq.rhs.variable : *eq.lhs.variable);
            auto it = value.find(v);
            if (it != value.end() && it->second != c) {
                result.inconsistency = MemInconsistency{i, it->second, c};
                return result;
            }
            value[v] = c;
            continue;
        }
        // var = var: union, merging any attached constants.
        auto a = find(*eq.lhs.variable);
        auto b = find(*eq.rhs.variable);
        if (a == b) continue;
        auto va = value.find(a);
        auto vb = value.find(b);
        if (va != value.end() && vb != value.end() && va->second != vb->second) {
            result.inconsistency = MemInconsistency{i, va->second, vb->second};
            return result;
        }
        parent[a] = b;
        if (va != value.end() && vb == value.end()) value[b] = va->second;
    }

    for (const auto& [var, p] : parent) {
        (void)p;
        result.representatives[var] = find(var);
        auto it = value.find(find(var));
        if (it != value.end()) result.constants[var] = it->second;
    }
    return result;
}

// -----------------------------------------------------------------------------
// Unit aliases
// -----------------------------------------------------------------------------

namespace {

Dimension exps(std::initializer_list<std::pair<BaseDimension, int>> parts) {
    Dimension d;
    for (const auto& [b, e] : parts) d = dim_mul(d, Dimension::base(b, e));
    return d;
}

}  // namespace

UnitTable UnitTable::builtin() {
    using B = BaseDimension;
    UnitTable t;
    // Base units, symbol and long forms.
    for (auto [name, b] : std::initializer_list<std::pair<const char*, B>>{
             {"m", B::Length},        {"meter", B::Length},   {"meters", B::Length},
             {"s", B::Time},          {"second", B::Time},    {"seconds", B::Time},
             {"kg", B::Mass},         {"K", B::Temperature},  {"kelvin", B::Temperature},
             {"A", B::Current},       {"ampere", B::Current},
             {"cd", B::LuminousIntensity},
             {"mol", B::AmountOfSubstance},
         }) {
        t.add({name, Dimension::base(b), 1.0});
    }
    // Celsius is a pure temperature dimension here; affine offsets are out of
    // the algebra.
    t.add({"celsius", Dimension::base(B::Temperature), 1.0});
    // Derived names.
    t.add({"newtons", exps({{B::Length, 1}, {B::Time, -2}, {B::Mass, 1}}), 1.0});
    t.add({"newton", exps({{B::Length, 1}, {B::Time, -2}, {B::Mass, 1}}), 1.0});
    t.add({"joules", exps({{B::Length, 2}, {B::Time, -2}, {B::Mass, 1}}), 1.0});
    t.add({"joule", exps({{B::Length, 2}, {B::Time, -2}, {B::Mass, 1}}), 1.0});
    t.add({"watts", exps({{B::Length, 2}, {B::Time, -3}, {B::Mass, 1}}), 1.0});
    t.add({"hertz", exps({{B::Time, -1}}), 1.0});
    // Scaled length alias used by rescaling suggestions.
    t.add({"AU", Dimension::base(B::Length), 1.495978707e11});
    return t;
}

void UnitTable::add(UnitAlias alias) {
    for (auto& existing : aliases_) {
        if (existing.name == alias.name) {
            existing = std::move(alias);
            return;
        }
    }
    aliases_.push_back(std::move(alias));
}

const UnitAlias* UnitTable::find(std::string_view name) const {
    for (const auto& a : aliases_) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const UnitAlias* UnitTable::find_by_dimension(const Dimension& d) const {
    const UnitAlias* fallback = nullptr;
    for (const auto& a : aliases_) {
        if (!(a.dimension == d) || a.scale != 1.0) continue;
        const bool derived = a.dimension.exponents().size() > 1 ||
                             (a.dimension.exponents().size() == 1 &&
                              a.dimension.exponents().begin()->second != 1);
        if (derived) return &a;
        if (fallback == nullptr) fallback = &a;
    }
    return fallback;
}

std::vector<const UnitAlias*> UnitTable::all_with_dimension(const Dimension& d) const {
    std::vector<const UnitAlias*> out;
    for (const auto& a : aliases_) {
        if (a.dimension == d) out.push_back(&a);
    }
    return out;
}

std::string UnitTable::render(const Dimension& d) const {
    if (d.is_dimensionless()) return "1";
    if (!d.has_variables()) {
        if (const auto* a = find_by_dimension(d)) return a->name;
    }
    return d.to_string();
}

}  // namespace clef::dims
