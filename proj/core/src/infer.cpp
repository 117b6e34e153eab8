#include "clef/infer.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

namespace clef::infer {

// =============================================================================
// Type values
// =============================================================================

bool Type::operator==(const Type& o) const {
    return kind == o.kind && dim == o.dim && args == o.args && var_id == o.var_id &&
           memory == o.memory;
}

Type Type::span_of(Type inner) {
    Type t;
    t.kind = Kind::Span;
    t.args.push_back(std::move(inner));
    return t;
}
Type Type::quire(dims::Dimension d) {
    Type t;
    t.kind = Kind::Quire;
    t.dim = std::move(d);
    return t;
}
Type Type::arrow(Type dom, Type cod) {
    Type t;
    t.kind = Kind::Arrow;
    t.args.push_back(std::move(dom));
    t.args.push_back(std::move(cod));
    return t;
}
Type Type::tuple(std::vector<Type> members) {
    Type t;
    t.kind = Kind::Tuple;
    t.args = std::move(members);
    return t;
}
Type Type::memref(Type inner) {
    Type t;
    t.kind = Kind::MemRef;
    t.args.push_back(std::move(inner));
    return t;
}
Type Type::var(int id) {
    Type t;
    t.kind = Kind::Var;
    t.var_id = id;
    return t;
}

std::string Type::render(const dims::UnitTable& units) const {
    std::string out;
    switch (kind) {
        case Kind::Float:
            out = dim.is_dimensionless() ? "float" : "float<" + units.render(dim) + ">";
            break;
        case Kind::Int: out = "int"; break;
        case Kind::Unit: out = "unit"; break;
        case Kind::Span: out = "Span<" + args[0].render(units) + ">"; break;
        case Kind::Quire:
            out = dim.is_dimensionless() ? "Quire" : "Quire<" + units.render(dim) + ">";
            break;
        case Kind::MemRef: out = "byref<" + args[0].render(units) + ">"; break;
        case Kind::Var: out = "'t" + std::to_string(var_id); break;
        case Kind::Tuple: {
            for (std::size_t i = 0; i < args.size(); ++i) {
                if (i) out += " * ";
                std::string part = args[i].render(units);
                if (args[i].kind == Kind::Arrow || args[i].kind == Kind::Tuple) {
                    part = "(" + part + ")";
                }
                out += part;
            }
            break;
        }
        case Kind::Arrow: {
            std::string dom = args[0].render(units);
            if (args[0].kind == Kind::Arrow) dom = "(" + dom + ")";
            out = dom + " -> " + args[1].render(units);
            break;
        }
    }
    if (!memory.empty()) out += "@" + memory;
    return out;
}

std::string TypeScheme::render(const dims::UnitTable& units) const {
    return body.render(units);
}

// =============================================================================
// Alpha equivalence and instance matching
// =============================================================================

namespace {

void collect_type_vars(const Type& t, std::vector<int>& order) {
    if (t.kind == Type::Kind::Var &&
        std::find(order.begin(), order.end(), t.var_id) == order.end()) {
        order.push_back(t.var_id);
    }
    for (const auto& a : t.args) collect_type_vars(a, order);
}

void collect_dim_vars(const Type& t, std::vector<std::int64_t>& order) {
    for (const auto& [v, e] : t.dim.variables()) {
        (void)e;
        if (std::find(order.begin(), order.end(), v.id) == order.end()) {
            order.push_back(v.id);
        }
    }
    for (const auto& a : t.args) collect_dim_vars(a, order);
}

dims::Dimension rename_dims(const dims::Dimension& d,
                            const std::map<std::int64_t, dims::DimensionVariable>& m) {
    dims::Dimension out;
    for (const auto& [b, e] : d.exponents()) {
        out = dims::dim_mul(out, dims::Dimension::base(b, e));
    }
    for (const auto& [v, e] : d.variables()) {
        auto it = m.find(v.id);
        out = dims::dim_mul(out, dims::Dimension::variable(
                                     it == m.end() ? v : it->second, e));
    }
    return out;
}

Type rename_type(const Type& t, const std::map<int, int>& tv,
                 const std::map<std::int64_t, dims::DimensionVariable>& dv) {
    Type out = t;
    out.dim = rename_dims(t.dim, dv);
    if (t.kind == Type::Kind::Var) {
        auto it = tv.find(t.var_id);
        if (it != tv.end()) out.var_id = it->second;
    }
    out.args.clear();
    for (const auto& a : t.args) out.args.push_back(rename_type(a, tv, dv));
    return out;
}

}  // namespace

bool alpha_equivalent(const TypeScheme& a, const TypeScheme& b) {
    if (a.type_vars.size() != b.type_vars.size() ||
        a.dim_vars.size() != b.dim_vars.size()) {
        return false;
    }
    // Canonicalize type variables by first occurrence; search over dimension
    // variable pairings (schemes here are small).
    std::vector<int> ta, tb;
    collect_type_vars(a.body, ta);
    collect_type_vars(b.body, tb);
    if (ta.size() != tb.size()) return false;
    std::map<int, int> tv;
    for (std::size_t i = 0; i < ta.size(); ++i) tv[ta[i]] = tb[i];

    std::vector<std::int64_t> da, db;
    collect_dim_vars(a.body, da);
    collect_dim_vars(b.body, db);
    if (da.size() != db.size()) return false;
    if (da.size() > 7) return false;  // out of scope for the search

    std::vector<std::size_t> perm(db.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    do {
        std::map<std::int64_t, dims::DimensionVariable> dv;
        for (std::size_t i = 0; i < da.size(); ++i) {
            dims::DimensionVariable target;
            target.id = db[perm[i]];
            dv[da[i]] = target;
        }
        if (rename_type(a.body, tv, dv) == b.body) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return da.empty() && ta.empty() ? a.body == b.body : false;
}

namespace {

// Small unifier over Type values for instance matching. Scheme-side variables
// live in `bindings`; the monotype side must be ground in type structure.
struct ValueUnifier {
    std::map<int, Type> bindings;
    std::vector<dims::DimEquation> dim_eqs;

    Type resolve(Type t) {
        while (t.kind == Type::Kind::Var) {
            auto it = bindings.find(t.var_id);
            if (it == bindings.end()) break;
            t = it->second;
        }
        return t;
    }

    bool unify(const Type& a_in, const Type& b_in) {
        Type a = resolve(a_in);
        Type b = resolve(b_in);
        if (a.kind == Type::Kind::Var) {
            bindings[a.var_id] = b;
            return true;
        }
        if (b.kind == Type::Kind::Var) {
            bindings[b.var_id] = a;
            return true;
        }
        if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
        if (a.kind == Type::Kind::Float || a.kind == Type::Kind::Quire) {
            dim_eqs.push_back({a.dim, b.dim, {}, {}, "instance"});
        }
        for (std::size_t i = 0; i < a.args.size(); ++i) {
            if (!unify(a.args[i], b.args[i])) return false;
        }
        return true;
    }
};

}  // namespace

InstanceMatch match_instance(const TypeScheme& scheme, const Type& monotype,
                             dims::VarSupply& supply) {
    InstanceMatch result;
    // Freshen the scheme.
    std::map<int, int> tv;
    std::map<std::int64_t, dims::DimensionVariable> dv;
    int next_tv = -1000;
    for (int v : scheme.type_vars) tv[v] = next_tv--;
    for (const auto& v : scheme.dim_vars) dv[v.id] = supply.fresh(v.origin, v.name_hint);
    Type fresh = rename_type(scheme.body, tv, dv);

    ValueUnifier u;
    if (!u.unify(fresh, monotype)) return result;
    auto solved = dims::dim_unify(u.dim_eqs, supply);
    if (!solved.ok()) return result;
    result.ok = true;
    for (const auto& v : scheme.dim_vars) {
        result.dim_assignment[v.id] =
            solved.substitution->apply(dims::Dimension::variable(dv.at(v.id)));
    }
    return result;
}

// =============================================================================
// Inference engine
// =============================================================================

namespace {

using syntax::Expr;
using syntax::ExprKind;

struct Term;
using TermPtr = std::shared_ptr<Term>;

struct Term {
    Type::Kind kind = Type::Kind::Unit;
    dims::Dimension dim;
    std::vector<TermPtr> args;
    int var_id = -1;
    std::string memory;
};

TermPtr mk(Type::Kind k) {
    auto t = std::make_shared<Term>();
    t->kind = k;
    return t;
}
TermPtr mk_float(dims::Dimension d) {
    auto t = mk(Type::Kind::Float);
    t->dim = std::move(d);
    return t;
}
TermPtr mk_arrow(TermPtr dom, TermPtr cod) {
    auto t = mk(Type::Kind::Arrow);
    t->args = {std::move(dom), std::move(cod)};
    return t;
}

struct Store {
    std::vector<TermPtr> bound;

    TermPtr fresh() {
        auto t = mk(Type::Kind::Var);
        t->var_id = static_cast<int>(bound.size());
        bound.push_back(nullptr);
        return t;
    }
    TermPtr resolve(TermPtr t) const {
        while (t->kind == Type::Kind::Var && bound[static_cast<std::size_t>(t->var_id)]) {
            t = bound[static_cast<std::size_t>(t->var_id)];
        }
        return t;
    }
    bool occurs(int id, const TermPtr& t) const {
        auto r = resolve(t);
        if (r->kind == Type::Kind::Var) return r->var_id == id;
        for (const auto& a : r->args) {
            if (occurs(id, a)) return true;
        }
        return false;
    }
};

struct EnvEntry {
    TermPtr mono;                    // locals and parameters
    const TypeScheme* scheme = nullptr;  // top-level and prelude names
};

const std::map<std::string, TypeScheme>& prelude() {
    static const std::map<std::string, TypeScheme> table = [] {
        std::map<std::string, TypeScheme> m;
        auto dvar = [](std::int64_t id, const char* hint) {
            dims::DimensionVariable v;
            v.id = id;
            v.name_hint = hint;
            return v;
        };
        const auto a = Type::var(0);
        const auto b = Type::var(1);
        const auto dx = dvar(0, "x");
        const auto dy = dvar(1, "y");

        // Span.map : (a -> b) -> Span a -> Span b
        {
            TypeScheme s;
            s.type_vars = {0, 1};
            s.body = Type::arrow(Type::arrow(a, b),
                                 Type::arrow(Type::span_of(a), Type::span_of(b)));
            m["Span.map"] = s;
        }
        // Span.mapInto : Span b -> (a -> b) -> Span a -> unit
        {
            TypeScheme s;
            s.type_vars = {0, 1};
            s.body = Type::arrow(
                Type::span_of(b),
                Type::arrow(Type::arrow(a, b),
                            Type::arrow(Type::span_of(a), Type::unit())));
            m["Span.mapInto"] = s;
        }
        // Quire.zero : Quire<'x>
        {
            TypeScheme s;
            s.dim_vars = {dx};
            s.body = Type::quire(dims::Dimension::variable(dx));
            m["Quire.zero"] = s;
        }
        // Quire.fma : Quire<'x 'y> -> float<'x> -> float<'y> -> Quire<'x 'y>
        {
            TypeScheme s;
            s.dim_vars = {dx, dy};
            auto prod = dims::dim_mul(dims::Dimension::variable(dx),
                                      dims::Dimension::variable(dy));
            s.body = Type::arrow(
                Type::quire(prod),
                Type::arrow(Type::float_dim(dims::Dimension::variable(dx)),
                            Type::arrow(Type::float_dim(dims::Dimension::variable(dy)),
                                        Type::quire(prod))));
            m["Quire.fma"] = s;
        }
        // Quire.toPosit : Quire<'x> -> float<'x>
        {
            TypeScheme s;
            s.dim_vars = {dx};
            s.body = Type::arrow(Type::quire(dims::Dimension::variable(dx)),
                                 Type::float_dim(dims::Dimension::variable(dx)));
            m["Quire.toPosit"] = s;
        }
        return m;
    }();
    return table;
}

class Inferencer {
public:
    Inferencer(syntax::Program program, const dims::UnitTable& units)
        : program_(std::move(program)), units_(units) {}

    InferResult run() {
        TypedProgram tp;
        for (auto& binding : program_.bindings) {
            auto typed = infer_binding(binding);
            if (!typed) return {std::nullopt, error_};
            schemes_[binding.name] = typed->scheme;
            tp.bindings.push_back(std::move(*typed));
        }
        tp.program = std::move(program_);
        resolve_lvalue_impl(tp);
        return {std::move(tp), std::nullopt};
    }

    static void resolve_lvalue_impl(TypedProgram& tp);

private:
    syntax::Program program_;
    const dims::UnitTable& units_;
    std::map<std::string, TypeScheme> schemes_;
    std::optional<InferError> error_;

    // Per-binding state.
    Store store_;
    dims::VarSupply supply_;
    std::vector<dims::DimEquation> dim_eqs_;
    std::vector<dims::MemEquation> mem_eqs_;
    std::map<std::string, dims::DimensionVariable> annot_dim_vars_;
    std::map<std::string, TermPtr> annot_type_vars_;
    std::vector<std::map<std::string, EnvEntry>> scopes_;
    std::map<int, TermPtr> node_terms_;
    std::map<int, std::int64_t> let_mem_vars_;
    std::string binding_memory_attr_;
    std::string current_hint_;

    struct PendingBinOp {
        int expr_id;
        char op;
        TermPtr a, b, result;
        SourceSpan sa, sb;
        std::string hint_a, hint_b;
    };
    std::vector<PendingBinOp> pending_;

    bool fail(InferError e) {
        if (!error_) error_ = std::move(e);
        return false;
    }
    bool fail_at(InferError::Kind kind, std::string message, SourceSpan a,
                 SourceSpan b = {}) {
        return fail(InferError{kind, std::move(message), a, b, {}});
    }

    // --- environment -----------------------------------------------------------

    void push_scope() { scopes_.emplace_back(); }
    void pop_scope() { scopes_.pop_back(); }
    void bind(const std::string& name, TermPtr t) {
        scopes_.back()[name] = EnvEntry{std::move(t), nullptr};
    }
    const EnvEntry* lookup(const std::string& name) {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto found = it->find(name);
            if (found != it->end()) return &found->second;
        }
        if (auto it = schemes_.find(name); it != schemes_.end()) {
            static thread_local EnvEntry entry;
            entry = EnvEntry{nullptr, &it->second};
            return &entry;
        }
        if (auto it = prelude().find(name); it != prelude().end()) {
            static thread_local EnvEntry entry;
            entry = EnvEntry{nullptr, &it->second};
            return &entry;
        }
        return nullptr;
    }

    // --- conversions ------------------------------------------------------------

    TermPtr value_to_term(const Type& t, std::map<int, TermPtr>& tv,
                          std::map<std::int64_t, dims::DimensionVariable>& dv) {
        if (t.kind == Type::Kind::Var) {
            auto it = tv.find(t.var_id);
            if (it == tv.end()) it = tv.emplace(t.var_id, store_.fresh()).first;
            return it->second;
        }
        auto out = mk(t.kind);
        out->dim = rename_dims(t.dim, dv);
        out->memory = t.memory;
        for (const auto& a : t.args) out->args.push_back(value_to_term(a, tv, dv));
        return out;
    }

    TermPtr instantiate(const TypeScheme& s) {
        std::map<int, TermPtr> tv;
        std::map<std::int64_t, dims::DimensionVariable> dv;
        for (const auto& v : s.dim_vars) dv[v.id] = supply_.fresh(v.origin, v.name_hint);
        return value_to_term(s.body, tv, dv);
    }

    std::optional<dims::Dimension> eval_dim_expr(const syntax::DimExpr& d,
                                                 SourceSpan span) {
        using K = syntax::DimExpr::Kind;
        switch (d.kind) {
            case K::One: return dims::Dimension::dimensionless();
            case K::Unit: {
                const auto* alias = units_.find(d.name);
                if (alias == nullptr) {
                    fail_at(InferError::Kind::UnknownUnit,
                            "unknown unit '" + d.name + "'", span);
                    return std::nullopt;
                }
                return alias->dimension;
            }
            case K::Var: {
                auto it = annot_dim_vars_.find(d.name);
                if (it == annot_dim_vars_.end()) {
                    it = annot_dim_vars_
                             .emplace(d.name, supply_.fresh(span, d.name))
                             .first;
                }
                return dims::Dimension::variable(it->second);
            }
            case K::Mul: {
                auto a = eval_dim_expr(d.args[0], span);
                auto b = eval_dim_expr(d.args[1], span);
                if (!a || !b) return std::nullopt;
                return dims::dim_mul(*a, *b);
            }
            case K::Div: {
                auto a = eval_dim_expr(d.args[0], span);
                auto b = eval_dim_expr(d.args[1], span);
                if (!a || !b) return std::nullopt;
                return dims::dim_div(*a, *b);
            }
            case K::Pow: {
                auto a = eval_dim_expr(d.args[0], span);
                if (!a) return std::nullopt;
                return dims::dim_pow(*a, d.power);
            }
        }
        return std::nullopt;
    }

    TermPtr from_type_expr(const syntax::TypeExpr& t, SourceSpan span) {
        using K = syntax::TypeExpr::Kind;
        TermPtr out;
        switch (t.kind) {
            case K::Float: {
                dims::Dimension d;
                if (t.dim) {
                    auto ev = eval_dim_expr(*t.dim, span);
                    if (!ev) return nullptr;
                    d = *ev;
                }
                out = mk_float(std::move(d));
                break;
            }
            case K::Int: out = mk(Type::Kind::Int); break;
            case K::Unit: out = mk(Type::Kind::Unit); break;
            case K::Span: {
                auto inner = from_type_expr(t.args[0], span);
                if (!inner) return nullptr;
                out = mk(Type::Kind::Span);
                out->args.push_back(std::move(inner));
                break;
            }
            case K::Quire: {
                dims::Dimension d;
                if (t.dim) {
                    auto ev = eval_dim_expr(*t.dim, span);
                    if (!ev) return nullptr;
                    d = *ev;
                } else {
                    d = dims::Dimension::variable(supply_.fresh(span, "q"));
                }
                out = mk(Type::Kind::Quire);
                out->dim = std::move(d);
                break;
            }
            case K::ByRef: {
                auto inner = from_type_expr(t.args[0], span);
                if (!inner) return nullptr;
                out = mk(Type::Kind::MemRef);
                out->args.push_back(std::move(inner));
                break;
            }
            case K::Tuple: {
                out = mk(Type::Kind::Tuple);
                for (const auto& a : t.args) {
                    auto inner = from_type_expr(a, span);
                    if (!inner) return nullptr;
                    out->args.push_back(std::move(inner));
                }
                break;
            }
            case K::Arrow: {
                auto dom = from_type_expr(t.args[0], span);
                auto cod = dom ? from_type_expr(t.args[1], span) : nullptr;
                if (!cod) return nullptr;
                out = mk_arrow(std::move(dom), std::move(cod));
                break;
            }
            case K::Var: {
                auto it = annot_type_vars_.find(t.var_name);
                if (it == annot_type_vars_.end()) {
                    it = annot_type_vars_.emplace(t.var_name, store_.fresh()).first;
                }
                out = it->second;
                break;
            }
        }
        if (out && !t.memory.empty()) out->memory = t.memory;
        return out;
    }

    // --- unification -------------------------------------------------------------

    std::string term_str(const TermPtr& t) {
        return finalize_type(t, dims::DimSubstitution{}).render(units_);
    }

    bool unify(TermPtr a, TermPtr b, SourceSpan sa, SourceSpan sb, const char* note) {
        a = store_.resolve(a);
        b = store_.resolve(b);
        if (a == b) return true;
        if (a->kind == Type::Kind::Var) {
            if (store_.occurs(a->var_id, b)) {
                return fail_at(InferError::Kind::TypeMismatch, "infinite type", sa, sb);
            }
            store_.bound[static_cast<std::size_t>(a->var_id)] = b;
            return true;
        }
        if (b->kind == Type::Kind::Var) return unify(b, a, sb, sa, note);
        if (a->kind != b->kind || a->args.size() != b->args.size()) {
            return fail_at(InferError::Kind::TypeMismatch,
                           std::string("type mismatch: ") + term_str(a) + " vs " +
                               term_str(b) + (note ? std::string(" (") + note + ")" : ""),
                           sa, sb);
        }
        if (a->kind == Type::Kind::Float || a->kind == Type::Kind::Quire) {
            dim_eqs_.push_back({a->dim, b->dim, sa, sb, note ? note : ""});
        }
        for (std::size_t i = 0; i < a->args.size(); ++i) {
            if (!unify(a->args[i], b->args[i], sa, sb, note)) return false;
        }
        return true;
    }

    // --- binary operator resolution -----------------------------------------------

    bool commit_float_binop(PendingBinOp& p) {
        auto coerce = [&](TermPtr t, SourceSpan s, const std::string& hint) -> TermPtr {
            auto r = store_.resolve(t);
            if (r->kind == Type::Kind::Float) return r;
            auto ft = mk_float(dims::Dimension::variable(supply_.fresh(s, hint)));
            if (!unify(t, ft, s, s, "arithmetic operand")) return nullptr;
            return store_.resolve(ft);
        };
        auto fa = coerce(p.a, p.sa, p.hint_a);
        if (!fa) return false;
        auto fb = coerce(p.b, p.sb, p.hint_b);
        if (!fb) return false;
        switch (p.op) {
            case '+':
            case '-':
                dim_eqs_.push_back({fa->dim, fb->dim, p.sa, p.sb,
                                    std::string("operands of ") + p.op});
                return unify(p.result, fa, p.sa, p.sb, "arithmetic result");
            case '*':
                return unify(p.result, mk_float(dims::dim_mul(fa->dim, fb->dim)), p.sa,
                             p.sb, "arithmetic result");
            case '/':
                return unify(p.result, mk_float(dims::dim_div(fa->dim, fb->dim)), p.sa,
                             p.sb, "arithmetic result");
            default:
                return fail_at(InferError::Kind::Internal, "unknown operator", p.sa);
        }
    }

    bool commit_int_binop(PendingBinOp& p) {
        auto i = mk(Type::Kind::Int);
        return unify(p.a, i, p.sa, p.sa, "integer arithmetic") &&
               unify(p.b, i, p.sb, p.sb, "integer arithmetic") &&
               unify(p.result, i, p.sa, p.sb, "integer arithmetic");
    }

    bool process_pending() {
        std::vector<bool> done(pending_.size(), false);
        bool progress = true;
        while (progress) {
            progress = false;
            for (std::size_t i = 0; i < pending_.size(); ++i) {
                if (done[i]) continue;
                auto& p = pending_[i];
                auto ra = store_.resolve(p.a);
                auto rb = store_.resolve(p.b);
                const bool a_num = ra->kind == Type::Kind::Int ||
                                   ra->kind == Type::Kind::Float;
                const bool b_num = rb->kind == Type::Kind::Int ||
                                   rb->kind == Type::Kind::Float;
                if ((ra->kind != Type::Kind::Var && !a_num) ||
                    (rb->kind != Type::Kind::Var && !b_num)) {
                    return fail_at(InferError::Kind::TypeMismatch,
                                   std::string("operator '") + p.op +
                                       "' needs numeric operands, got " + term_str(ra) +
                                       " and " + term_str(rb),
                                   p.sa, p.sb);
                }
                if (ra->kind == Type::Kind::Int || rb->kind == Type::Kind::Int) {
                    if (!commit_int_binop(p)) return false;
                } else if (ra->kind == Type::Kind::Float ||
                           rb->kind == Type::Kind::Float) {
                    if (!commit_float_binop(p)) return false;
                } else {
                    continue;  // both variables: postpone
                }
                done[i] = true;
                progress = true;
            }
        }
        // Unconstrained operands default to dimensional floats.
        for (std::size_t i = 0; i < pending_.size(); ++i) {
            if (!done[i] && !commit_float_binop(pending_[i])) return false;
        }
        return true;
    }

    // --- constraint generation -----------------------------------------------------

    TermPtr record(const Expr& e, TermPtr t) {
        node_terms_[e.id] = t;
        return t;
    }

    TermPtr gen(const Expr& e) {
        switch (e.kind) {
            case ExprKind::Literal: {
                if (e.literal.is_int()) return record(e, mk(Type::Kind::Int));
                if (e.literal.is_unit()) return record(e, mk(Type::Kind::Unit));
                dims::Dimension d;
                if (e.literal_dim) {
                    auto ev = eval_dim_expr(*e.literal_dim, e.span);
                    if (!ev) return nullptr;
                    d = *ev;
                } else {
                    d = dims::Dimension::variable(supply_.fresh(e.span, current_hint_));
                }
                return record(e, mk_float(std::move(d)));
            }
            case ExprKind::Var: {
                const auto* entry = lookup(e.name);
                if (entry == nullptr) {
                    fail_at(InferError::Kind::UnboundVariable,
                            "unbound variable '" + e.name + "'", e.span);
                    return nullptr;
                }
                if (entry->scheme != nullptr) return record(e, instantiate(*entry->scheme));
                auto t = store_.resolve(entry->mono);
                record(e, t);
                // Memory cells read as values compose a load. The
                // byref-argument case is intercepted in Apply.
                if (t->kind == Type::Kind::MemRef) return t->args[0];
                return t;
            }
            case ExprKind::Let:
            case ExprKind::LetMut: {
                const std::string saved = current_hint_;
                current_hint_ = e.name;
                auto value = gen(e.children[0]);
                current_hint_ = saved;
                if (!value) return nullptr;
                if (e.annotation) {
                    auto anno = from_type_expr(*e.annotation, e.span);
                    if (!anno || !unify(value, anno, e.children[0].span, e.span,
                                        "binding annotation")) {
                        return nullptr;
                    }
                }
                // Memory sort: a fresh variable, pinned by arena scope or the
                // binding-level attribute when present.
                const std::int64_t mem_var = supply_.fresh().id;
                let_mem_vars_[e.id] = mem_var;
                if (e.arena_scope >= 0) {
                    mem_eqs_.push_back({dims::MemTerm::var(mem_var),
                                        dims::MemTerm::make(dims::mem_arena()), e.span});
                } else if (!binding_memory_attr_.empty()) {
                    mem_eqs_.push_back(
                        {dims::MemTerm::var(mem_var),
                         dims::MemTerm::make({binding_memory_attr_, {}}), e.span});
                }
                if (e.kind == ExprKind::LetMut) {
                    auto cell = mk(Type::Kind::MemRef);
                    cell->args.push_back(value);
                    bind(e.name, cell);
                } else {
                    bind(e.name, value);
                }
                return record(e, value);
            }
            case ExprKind::Assign: {
                const auto* entry = lookup(e.name);
                if (entry == nullptr) {
                    fail_at(InferError::Kind::UnboundVariable,
                            "unbound variable '" + e.name + "'", e.span);
                    return nullptr;
                }
                if (entry->scheme != nullptr ||
                    store_.resolve(entry->mono)->kind != Type::Kind::MemRef) {
                    fail_at(InferError::Kind::InvalidAssign,
                            "cannot assign to immutable binding '" + e.name + "'",
                            e.span);
                    return nullptr;
                }
                auto cell = store_.resolve(entry->mono);
                auto value = gen(e.children[0]);
                if (!value) return nullptr;
                if (!unify(cell->args[0], value, e.span, e.children[0].span,
                           "assignment")) {
                    return nullptr;
                }
                return record(e, mk(Type::Kind::Unit));
            }
            case ExprKind::Lambda: {
                push_scope();
                std::vector<TermPtr> param_terms;
                for (const auto& p : e.params) {
                    TermPtr t;
                    if (p.annotation) {
                        t = from_type_expr(*p.annotation, p.span);
                        if (!t) {
                            pop_scope();
                            return nullptr;
                        }
                    } else if (p.name.empty()) {
                        t = mk(Type::Kind::Unit);
                    } else {
                        t = store_.fresh();
                    }
                    if (!p.name.empty()) bind(p.name, t);
                    param_terms.push_back(t);
                }
                auto body = gen(e.children[0]);
                pop_scope();
                if (!body) return nullptr;
                TermPtr fn = body;
                for (auto it = param_terms.rbegin(); it != param_terms.rend(); ++it) {
                    fn = mk_arrow(*it, fn);
                }
                return record(e, fn);
            }
            case ExprKind::Apply: {
                auto fn = gen(e.children[0]);
                if (!fn) return nullptr;
                const Expr& arg = e.children[1];
                auto rfn = store_.resolve(fn);
                // byref parameters take the cell itself, without a load.
                if (rfn->kind == Type::Kind::Arrow &&
                    store_.resolve(rfn->args[0])->kind == Type::Kind::MemRef &&
                    arg.kind == ExprKind::Var) {
                    const auto* entry = lookup(arg.name);
                    if (entry != nullptr && entry->mono != nullptr &&
                        store_.resolve(entry->mono)->kind == Type::Kind::MemRef) {
                        auto cell = store_.resolve(entry->mono);
                        node_terms_[arg.id] = cell;
                        if (!unify(rfn->args[0], cell, arg.span, arg.span,
                                   "byref argument")) {
                            return nullptr;
                        }
                        return record(e, rfn->args[1]);
                    }
                }
                auto targ = gen(arg);
                if (!targ) return nullptr;
                auto result = store_.fresh();
                if (!unify(fn, mk_arrow(targ, result), e.children[0].span, arg.span,
                           "application")) {
                    return nullptr;
                }
                return record(e, result);
            }
            case ExprKind::BinOp: {
                auto a = gen(e.children[0]);
                if (!a) return nullptr;
                auto b = gen(e.children[1]);
                if (!b) return nullptr;
                auto result = store_.fresh();
                PendingBinOp p;
                p.expr_id = e.id;
                p.op = e.op;
                p.a = a;
                p.b = b;
                p.result = result;
                p.sa = e.children[0].span;
                p.sb = e.children[1].span;
                if (e.children[0].kind == ExprKind::Var) p.hint_a = e.children[0].name;
                if (e.children[1].kind == ExprKind::Var) p.hint_b = e.children[1].name;
                pending_.push_back(std::move(p));
                return record(e, result);
            }
            case ExprKind::Tuple: {
                auto t = mk(Type::Kind::Tuple);
                for (const auto& c : e.children) {
                    auto m = gen(c);
                    if (!m) return nullptr;
                    t->args.push_back(m);
                }
                return record(e, t);
            }
            case ExprKind::Index: {
                auto base = gen(e.children[0]);
                auto idx = base ? gen(e.children[1]) : nullptr;
                if (!idx) return nullptr;
                auto elem = store_.fresh();
                auto span_t = mk(Type::Kind::Span);
                span_t->args.push_back(elem);
                if (!unify(base, span_t, e.children[0].span, e.span, "span indexing") ||
                    !unify(idx, mk(Type::Kind::Int), e.children[1].span, e.span,
                           "span index")) {
                    return nullptr;
                }
                return record(e, elem);
            }
            case ExprKind::Property: {
                if (e.name != "Length") {
                    fail_at(InferError::Kind::UnknownProperty,
                            "unknown property '" + e.name + "'", e.span);
                    return nullptr;
                }
                auto base = gen(e.children[0]);
                if (!base) return nullptr;
                auto span_t = mk(Type::Kind::Span);
                span_t->args.push_back(store_.fresh());
                if (!unify(base, span_t, e.children[0].span, e.span, "Length")) {
                    return nullptr;
                }
                return record(e, mk(Type::Kind::Int));
            }
            case ExprKind::ForRange: {
                auto lo = gen(e.children[0]);
                auto hi = lo ? gen(e.children[1]) : nullptr;
                if (!hi) return nullptr;
                auto i = mk(Type::Kind::Int);
                if (!unify(lo, i, e.children[0].span, e.span, "loop bound") ||
                    !unify(hi, i, e.children[1].span, e.span, "loop bound")) {
                    return nullptr;
                }
                push_scope();
                bind(e.name, mk(Type::Kind::Int));  // loop index: int, dimensionless
                auto body = gen(e.children[2]);
                pop_scope();
                if (!body) return nullptr;
                return record(e, mk(Type::Kind::Unit));
            }
            case ExprKind::Scope: {
                auto inner = gen(e.children[0]);
                if (!inner) return nullptr;
                return record(e, inner);
            }
            case ExprKind::Annotated: {
                auto inner = gen(e.children[0]);
                if (!inner) return nullptr;
                auto anno = from_type_expr(*e.annotation, e.span);
                if (!anno ||
                    !unify(inner, anno, e.children[0].span, e.span, "annotation")) {
                    return nullptr;
                }
                return record(e, inner);
            }
            case ExprKind::Block: {
                push_scope();
                TermPtr last;
                for (const auto& c : e.children) {
                    last = gen(c);
                    if (!last) {
                        pop_scope();
                        return nullptr;
                    }
                }
                pop_scope();
                return record(e, last);
            }
            case ExprKind::Load: {
                auto inner = gen(e.children[0]);
                if (!inner) return nullptr;
                auto r = store_.resolve(inner);
                if (r->kind == Type::Kind::MemRef) r = store_.resolve(r->args[0]);
                return record(e, r);
            }
            case ExprKind::ArenaBlock:
                fail_at(InferError::Kind::Internal,
                        "arena block survived desugaring", e.span);
                return nullptr;
        }
        return nullptr;
    }

    // --- finalization -----------------------------------------------------------

    Type finalize_type(const TermPtr& t_in, const dims::DimSubstitution& sub) {
        auto t = store_.resolve(t_in);
        Type out;
        out.kind = t->kind;
        out.memory = t->memory;
        if (t->kind == Type::Kind::Var) {
            out.var_id = t->var_id;
            return out;
        }
        out.dim = sub.apply(t->dim);
        for (const auto& a : t->args) out.args.push_back(finalize_type(a, sub));
        return out;
    }

    std::optional<TypedBinding> infer_binding(syntax::TopBinding& b) {
        // Reset per-binding state; sessions are independent.
        store_ = Store{};
        supply_ = dims::VarSupply{};
        dim_eqs_.clear();
        mem_eqs_.clear();
        annot_dim_vars_.clear();
        annot_type_vars_.clear();
        node_terms_.clear();
        let_mem_vars_.clear();
        pending_.clear();
        binding_memory_attr_.clear();
        current_hint_.clear();
        for (const auto& attr : b.attributes) {
            if (attr.kind == syntax::CoeffectAttribute::Kind::Memory) {
                binding_memory_attr_ = attr.memory;
            }
        }

        push_scope();
        std::vector<TermPtr> param_terms;
        for (const auto& p : b.params) {
            TermPtr t;
            if (p.annotation) {
                t = from_type_expr(*p.annotation, p.span);
                if (!t) return std::nullopt;
            } else if (p.name.empty()) {
                t = mk(Type::Kind::Unit);
            } else {
                t = store_.fresh();
            }
            if (!p.name.empty()) bind(p.name, t);
            param_terms.push_back(t);
        }

        auto body = gen(b.body);
        if (!body) return std::nullopt;
        if (b.return_annotation) {
            auto anno = from_type_expr(*b.return_annotation, b.span);
            if (!anno ||
                !unify(body, anno, b.body.span, b.span, "return annotation")) {
                return std::nullopt;
            }
        }
        if (!process_pending()) return std::nullopt;

        auto solved = dims::dim_unify(dim_eqs_, supply_);
        if (!solved.ok()) {
            const auto& inc = *solved.inconsistency;
            InferError e;
            e.kind = InferError::Kind::DimensionError;
            e.residual = inc.residual;
            e.span_a = inc.equation.origin_lhs;
            e.span_b = inc.equation.origin_rhs;
            e.message = "dimension mismatch";
            if (!inc.equation.note.empty()) e.message += " in " + inc.equation.note;
            e.message += ": " + units_.render(inc.equation.lhs) + " vs " +
                         units_.render(inc.equation.rhs) +
                         "; left over: " + units_.render(inc.residual);
            fail(std::move(e));
            return std::nullopt;
        }
        const auto& sub = *solved.substitution;

        // Apply-and-verify soundness pass.
        for (const auto& eq : dim_eqs_) {
            if (!(dims::dim_div(sub.apply(eq.lhs), sub.apply(eq.rhs))
                      .is_dimensionless())) {
                fail_at(InferError::Kind::Internal,
                        "solved substitution fails an equation", eq.origin_lhs,
                        eq.origin_rhs);
                return std::nullopt;
            }
        }

        auto mem = dims::mem_unify(mem_eqs_);
        if (!mem.ok()) {
            fail_at(InferError::Kind::TypeMismatch,
                    "conflicting memory spaces: " + mem.inconsistency->left.to_string() +
                        " vs " + mem.inconsistency->right.to_string(),
                    b.span);
            return std::nullopt;
        }

        TypedBinding out;
        out.name = b.name;
        out.span = b.span;
        out.attributes = b.attributes;

        TermPtr fn = body;
        for (auto it = param_terms.rbegin(); it != param_terms.rend(); ++it) {
            fn = mk_arrow(*it, fn);
        }
        Type fn_value = finalize_type(fn, sub);

        // Generalize everything still free; only top-level bindings do this.
        TypeScheme scheme;
        scheme.body = fn_value;
        collect_type_vars(fn_value, scheme.type_vars);
        std::vector<std::int64_t> free_dims;
        collect_dim_vars(fn_value, free_dims);
        for (auto id : free_dims) {
            // Recover hints from the supply-issued variables in the body.
            dims::DimensionVariable v;
            v.id = id;
            std::function<void(const Type&)> find = [&](const Type& t) {
                for (const auto& [var, e] : t.dim.variables()) {
                    (void)e;
                    if (var.id == id) v = var;
                }
                for (const auto& a : t.args) find(a);
            };
            find(fn_value);
            scheme.dim_vars.push_back(v);
        }
        out.scheme = std::move(scheme);

        for (const auto& [id, term] : node_terms_) {
            out.node_types[id] = finalize_type(term, sub);
        }
        for (const auto& [let_id, mem_var] : let_mem_vars_) {
            auto space = mem.resolve(mem_var);
            out.node_memory[let_id] = space ? space->tag : "";
        }
        pop_scope();
        return out;
    }
};

}  // namespace

// =============================================================================
// Lvalue resolution
// =============================================================================

namespace {

void resolve_loads_in(syntax::Expr& e, TypedBinding& binding, int& next_id) {
    // Children first; wrapping happens on the way back up.
    for (auto& c : e.children) resolve_loads_in(c, binding, next_id);

    auto type_of = [&](const syntax::Expr& n) -> const Type* {
        auto it = binding.node_types.find(n.id);
        return it == binding.node_types.end() ? nullptr : &it->second;
    };

    for (std::size_t i = 0; i < e.children.size(); ++i) {
        auto& child = e.children[i];
        if (child.kind != syntax::ExprKind::Var) continue;
        const Type* t = type_of(child);
        if (t == nullptr || t->kind != Type::Kind::MemRef) continue;
        if (e.kind == syntax::ExprKind::Load) continue;  // already wrapped
        // byref arguments stay unloaded: the callee wants the cell.
        if (e.kind == syntax::ExprKind::Apply && i == 1) {
            const Type* fn = type_of(e.children[0]);
            if (fn != nullptr && fn->kind == Type::Kind::Arrow &&
                fn->args[0].kind == Type::Kind::MemRef) {
                continue;
            }
        }
        Type inner = t->args[0];
        syntax::Expr load;
        load.kind = syntax::ExprKind::Load;
        load.span = child.span;
        load.id = next_id++;
        load.children.push_back(std::move(child));
        binding.node_types[load.id] = std::move(inner);
        e.children[i] = std::move(load);
    }
}

}  // namespace

void Inferencer::resolve_lvalue_impl(TypedProgram& tp) {
    for (std::size_t i = 0; i < tp.bindings.size(); ++i) {
        auto& b = tp.program.bindings[i];
        auto& typed = tp.bindings[i];
        resolve_loads_in(b.body, typed, tp.program.next_expr_id);
        // The body root itself is never a bare Var in practice; statements and
        // values are reached through the Block node above it.
    }
}

void resolve_lvalue(TypedProgram& tp) { Inferencer::resolve_lvalue_impl(tp); }

const TypedBinding* TypedProgram::find(std::string_view name) const {
    for (const auto& b : bindings) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

InferResult infer_program(syntax::Program desugared, const dims::UnitTable& units) {
    Inferencer inf(std::move(desugared), units);
    return inf.run();
}

}  // namespace clef::infer
