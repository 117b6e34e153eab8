#include "clef/psg.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <sstream>

namespace clef::psg {

const char* node_state_name(NodeState s) {
    switch (s) {
        case NodeState::Live: return "Live";
        case NodeState::Latent: return "Latent";
        case NodeState::Fresh: return "Fresh";
    }
    return "?";
}

const char* edge_kind_name(EdgeKind k) {
    switch (k) {
        case EdgeKind::DataDep: return "DataDep";
        case EdgeKind::ControlDep: return "ControlDep";
        case EdgeKind::Capture: return "Capture";
        case EdgeKind::Return: return "Return";
        case EdgeKind::ByRef: return "ByRef";
        case EdgeKind::Transfer: return "Transfer";
    }
    return "?";
}

const char* emission_name(EmissionStrategy e) {
    switch (e) {
        case EmissionStrategy::Inline: return "inline";
        case EmissionStrategy::SeparateFunction: return "function";
        case EmissionStrategy::ModuleInit: return "module-init";
    }
    return "?";
}

// =============================================================================
// Graph plumbing
// =============================================================================

int Psg::add_scope(Scope::Kind kind, int parent, int owner_node) {
    Scope s;
    s.id = static_cast<int>(scopes.size());
    s.parent = parent;
    s.kind = kind;
    s.owner_node = owner_node;
    scopes.push_back(s);
    return s.id;
}

int Psg::add_node(PsgNode n) {
    n.id = static_cast<int>(nodes.size());
    if (n.ssa_name.empty()) n.ssa_name = "%" + std::to_string(n.id);
    nodes.push_back(std::move(n));
    write_counts_.push_back(0);
    index_dirty_ = true;
    return nodes.back().id;
}

int Psg::add_edge(PsgEdge e) {
    e.id = static_cast<int>(edges.size());
    edges.push_back(std::move(e));
    index_dirty_ = true;
    return edges.back().id;
}

void Psg::reset_write_counts() {
    std::fill(write_counts_.begin(), write_counts_.end(), 0);
}

void Psg::rebuild_index() const {
    out_index_.assign(nodes.size(), {});
    in_index_.assign(nodes.size(), {});
    for (const auto& e : edges) {
        out_index_[static_cast<std::size_t>(e.from)].push_back(e.id);
        in_index_[static_cast<std::size_t>(e.to)].push_back(e.id);
    }
    index_dirty_ = false;
}

const std::vector<int>& Psg::out_edges(int node) const {
    if (index_dirty_) rebuild_index();
    return out_index_[static_cast<std::size_t>(node)];
}

const std::vector<int>& Psg::in_edges(int node) const {
    if (index_dirty_) rebuild_index();
    return in_index_[static_cast<std::size_t>(node)];
}

int Psg::frame_scope_of(int scope) const {
    int s = scope;
    while (s >= 0) {
        const auto& sc = scopes[static_cast<std::size_t>(s)];
        if (sc.kind == Scope::Kind::Function || sc.kind == Scope::Kind::Lambda ||
            sc.kind == Scope::Kind::Program) {
            return s;
        }
        s = sc.parent;
    }
    return 0;
}

bool Psg::scope_within(int inner, int outer) const {
    int s = inner;
    while (s >= 0) {
        if (s == outer) return true;
        s = scopes[static_cast<std::size_t>(s)].parent;
    }
    return false;
}

std::optional<int> Psg::target_index(std::string_view name) const {
    for (std::size_t i = 0; i < target_names.size(); ++i) {
        if (target_names[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

int Psg::binding_node(std::string_view name) const {
    for (const auto& n : nodes) {
        if (n.is_binding && n.label == name) return n.id;
    }
    return -1;
}

// =============================================================================
// Three-state machinery
// =============================================================================

std::optional<TransitionError> Psg::mark_latent(const std::vector<int>& node_set) {
    for (int id : node_set) {
        if (id < 0 || id >= static_cast<int>(nodes.size()) ||
            nodes[static_cast<std::size_t>(id)].state == NodeState::Fresh) {
            return TransitionError::InvalidTransition;
        }
    }
    for (int id : node_set) {
        nodes[static_cast<std::size_t>(id)].state = NodeState::Latent;
    }
    return std::nullopt;
}

std::optional<TransitionError> Psg::reactivate(const std::vector<int>& node_set) {
    for (int id : node_set) {
        if (id < 0 || id >= static_cast<int>(nodes.size()) ||
            nodes[static_cast<std::size_t>(id)].state == NodeState::Fresh) {
            return TransitionError::InvalidTransition;
        }
    }
    std::set<int> in_set(node_set.begin(), node_set.end());
    for (int id : node_set) {
        nodes[static_cast<std::size_t>(id)].state = NodeState::Live;
    }
    // Only boundary edges are re-checked: reachability intersection on edges
    // that cross between the reactivated set and the rest of the graph. The
    // annotations of interior nodes are not touched.
    for (auto& e : edges) {
        const bool from_in = in_set.contains(e.from);
        const bool to_in = in_set.contains(e.to);
        if (from_in == to_in) continue;
        e.reachability = nodes[static_cast<std::size_t>(e.from)].reachability &
                         nodes[static_cast<std::size_t>(e.to)].reachability;
    }
    return std::nullopt;
}

std::vector<int> Psg::insert_fresh(const std::vector<syntax::Expr>& exprs, int scope) {
    std::vector<int> ids;
    for (const auto& e : exprs) {
        PsgNode n;
        n.expr_id = e.id;
        n.expr_kind = e.kind;
        n.label = e.name;
        n.span = e.span;
        n.state = NodeState::Fresh;  // syntax only: no type, no dimension
        n.scope = scope;
        ids.push_back(add_node(std::move(n)));
    }
    return ids;
}

std::optional<TransitionError> Psg::disable_target(std::string_view name) {
    auto idx = target_index(name);
    if (!idx) return TransitionError::UnknownTarget;
    const std::uint64_t bit = 1ULL << *idx;
    for (auto& n : nodes) {
        if (n.state == NodeState::Fresh) continue;
        const std::uint64_t narrowed = n.reachability & ~bit;
        if (narrowed == 0 && n.reachability != 0 && n.state == NodeState::Live) {
            n.state = NodeState::Latent;  // reachable only on the disabled target
        }
        n.reachability = narrowed;
    }
    for (auto& e : edges) e.reachability &= ~bit;
    return std::nullopt;
}

std::optional<Psg::ActiveView> Psg::active_subgraph(std::string_view target) const {
    auto idx = target_index(target);
    if (!idx) return std::nullopt;
    const std::uint64_t bit = 1ULL << *idx;
    ActiveView view;
    view.target = std::string(target);
    for (const auto& n : nodes) {
        if (n.state == NodeState::Live && (n.reachability & bit)) {
            view.nodes.push_back(n.id);
        }
    }
    return view;
}

// =============================================================================
// Elaboration
// =============================================================================

namespace {

using syntax::Expr;
using syntax::ExprKind;

bool type_contains(const infer::Type& t, infer::Type::Kind kind) {
    if (t.kind == kind) return true;
    for (const auto& a : t.args) {
        if (type_contains(a, kind)) return true;
    }
    return false;
}

struct Elaborator {
    const infer::TypedProgram& tp;
    const std::vector<targets::TargetBinding>& targets_list;
    Psg g;
    std::optional<std::string> error;

    std::vector<std::map<std::string, int>> env;  // name -> node id
    int current_binding = -1;
    std::uint64_t current_mask = 0;
    std::string current_memory_attr;

    explicit Elaborator(const infer::TypedProgram& tp_,
                        const std::vector<targets::TargetBinding>& tl)
        : tp(tp_), targets_list(tl) {
        for (const auto& t : tl) g.target_names.push_back(t.name);
        g.add_scope(Scope::Kind::Program, -1);
    }

    int lookup(const std::string& name) {
        for (auto it = env.rbegin(); it != env.rend(); ++it) {
            auto found = it->find(name);
            if (found != it->end()) return found->second;
        }
        return g.binding_node(name);
    }

    const infer::Type* type_of(int expr_id) const {
        const auto& types = tp.bindings[static_cast<std::size_t>(current_binding)]
                                .node_types;
        auto it = types.find(expr_id);
        return it == types.end() ? nullptr : &it->second;
    }

    PsgNode base_node(const Expr& e, int scope) {
        PsgNode n;
        n.expr_id = e.id;
        n.expr_kind = e.kind;
        n.label = e.name;
        n.span = e.span;
        n.scope = scope;
        n.binding_index = current_binding;
        n.coeffects.targets = current_mask;
        n.reachability = current_mask;
        if (const auto* t = type_of(e.id)) {
            n.type = *t;
            if (t->kind == infer::Type::Kind::Float ||
                t->kind == infer::Type::Kind::Quire) {
                n.dimension = t->dim;
            }
            if (type_contains(*t, infer::Type::Kind::Quire)) {
                n.coeffects.capabilities.insert("quire");
                n.coeffects.capabilities.insert("float");
            } else if (type_contains(*t, infer::Type::Kind::Float)) {
                n.coeffects.capabilities.insert("float");
            }
        }
        return n;
    }

    static void free_vars(const Expr& e, std::set<std::string>& bound,
                          std::set<std::string>& out) {
        switch (e.kind) {
            case ExprKind::Var:
                if (!bound.contains(e.name)) out.insert(e.name);
                return;
            case ExprKind::Lambda: {
                auto inner = bound;
                for (const auto& p : e.params) {
                    if (!p.name.empty()) inner.insert(p.name);
                }
                free_vars(e.children[0], inner, out);
                return;
            }
            case ExprKind::Let:
            case ExprKind::LetMut:
                free_vars(e.children[0], bound, out);
                bound.insert(e.name);  // visible to later block statements
                return;
            case ExprKind::Assign:
                if (!bound.contains(e.name)) out.insert(e.name);
                free_vars(e.children[0], bound, out);
                return;
            case ExprKind::ForRange: {
                free_vars(e.children[0], bound, out);
                free_vars(e.children[1], bound, out);
                auto inner = bound;
                inner.insert(e.name);
                free_vars(e.children[2], inner, out);
                return;
            }
            case ExprKind::Block: {
                auto inner = bound;
                for (const auto& c : e.children) free_vars(c, inner, out);
                return;
            }
            default:
                for (const auto& c : e.children) free_vars(c, bound, out);
        }
    }

    // Resolves the call spine: leftmost head expression and this apply's
    // argument position within the spine.
    static const Expr* spine_head(const Expr& apply, int& depth) {
        const Expr* fn = &apply.children[0];
        depth = 0;
        while (fn->kind == ExprKind::Apply) {
            ++depth;
            fn = &fn->children[0];
        }
        return fn;
    }

    // Walks an expression; returns the node id of its value.
    int walk(const Expr& e, int scope) {
        switch (e.kind) {
            case ExprKind::Literal:
            case ExprKind::Var: {
                auto n = base_node(e, scope);
                n.is_value = true;
                n.coeffects.emission = EmissionStrategy::Inline;
                const int id = g.add_node(std::move(n));
                if (e.kind == ExprKind::Var) {
                    const int def = lookup(e.name);
                    if (def >= 0) {
                        g.add_edge({-1, def, id, EdgeKind::DataDep, current_mask,
                                    /*aliasing=*/true});
                    }
                }
                return id;
            }
            case ExprKind::Let:
            case ExprKind::LetMut: {
                const int value = walk(e.children[0], scope);
                auto n = base_node(e, scope);
                n.is_value = true;
                n.coeffects.emission = EmissionStrategy::Inline;
                const auto& mem = tp.bindings[static_cast<std::size_t>(current_binding)]
                                      .node_memory;
                if (auto it = mem.find(e.id); it != mem.end() && !it->second.empty()) {
                    n.coeffects.memory = it->second;
                    if (it->second == "arena") {
                        n.coeffects.lifetime = LifetimeLevel::Arena;
                        n.coeffects.declared_lifetime = LifetimeLevel::Arena;
                        n.coeffects.lifetime_scope = scope;
                    }
                    if (it->second == "static") {
                        n.coeffects.lifetime = LifetimeLevel::Static;
                        n.coeffects.declared_lifetime = LifetimeLevel::Static;
                    }
                }
                const int id = g.add_node(std::move(n));
                g.add_edge({-1, value, id, EdgeKind::DataDep, current_mask, true});
                env.back()[e.name] = id;
                return id;
            }
            case ExprKind::Assign: {
                const int value = walk(e.children[0], scope);
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                g.add_edge({-1, value, id, EdgeKind::DataDep, current_mask, false});
                const int cell = lookup(e.name);
                if (cell >= 0) {
                    g.add_edge({-1, value, cell, EdgeKind::ByRef, current_mask, false});
                }
                return id;
            }
            case ExprKind::Lambda: {
                auto n = base_node(e, scope);
                n.is_value = true;
                const int id = g.add_node(std::move(n));
                const int lambda_scope = g.add_scope(Scope::Kind::Lambda, scope, id);

                // Capture edges from free variables bound in this binding.
                std::set<std::string> bound, free;
                for (const auto& p : e.params) {
                    if (!p.name.empty()) bound.insert(p.name);
                }
                free_vars(e.children[0], bound, free);
                for (const auto& name : free) {
                    const int def = lookup(name);
                    if (def < 0) continue;
                    const auto& dn = g.node(def);
                    if (dn.is_binding) continue;  // top-level names are static
                    g.add_edge({-1, def, id, EdgeKind::Capture, current_mask, false});
                    g.mutate(id).coeffects.captures.insert(def);
                }

                env.emplace_back();
                for (const auto& p : e.params) {
                    if (p.name.empty()) continue;
                    PsgNode pn;
                    pn.expr_id = -1;
                    pn.expr_kind = ExprKind::Var;
                    pn.label = p.name;
                    pn.span = p.span;
                    pn.scope = lambda_scope;
                    pn.binding_index = current_binding;
                    pn.is_value = true;
                    pn.coeffects.targets = current_mask;
                    pn.reachability = current_mask;
                    const int pid = g.add_node(std::move(pn));
                    env.back()[p.name] = pid;
                }
                const int body = walk(e.children[0], lambda_scope);
                env.pop_back();
                g.add_edge({-1, body, id, EdgeKind::Return, current_mask, false});

                // Lambdas used exactly once and captured nowhere inline.
                g.mutate(id).coeffects.emission = EmissionStrategy::Inline;
                return id;
            }
            case ExprKind::Apply: {
                int depth = 0;
                const Expr* head = spine_head(e, depth);
                const int fn = walk(e.children[0], scope);
                const int arg = walk(e.children[1], scope);
                auto n = base_node(e, scope);
                n.is_value = true;
                n.coeffects.emission = EmissionStrategy::Inline;
                const int id = g.add_node(std::move(n));
                g.add_edge({-1, fn, id, EdgeKind::DataDep, current_mask, false});

                PsgEdge arg_edge{-1, arg, id, EdgeKind::DataDep, current_mask, false};
                if (head->kind == ExprKind::Var) {
                    const bool prelude = head->name.find('.') != std::string::npos;
                    if (!prelude) {
                        // Known user function: argument aliasing is resolved
                        // interprocedurally during saturation.
                        for (std::size_t bi = 0; bi < tp.bindings.size(); ++bi) {
                            if (tp.bindings[bi].name == head->name) {
                                arg_edge.call_binding = static_cast<int>(bi);
                                arg_edge.call_arg = depth;
                            }
                        }
                        if (arg_edge.call_binding < 0) {
                            // Unknown callee (a parameter-typed function):
                            // conservatively let arguments escape the call.
                            arg_edge.aliasing = true;
                        }
                    }
                } else {
                    arg_edge.aliasing = true;  // computed callee: conservative
                }
                g.add_edge(std::move(arg_edge));
                return id;
            }
            case ExprKind::BinOp:
            case ExprKind::Index:
            case ExprKind::Property:
            case ExprKind::Load: {
                std::vector<int> children;
                for (const auto& c : e.children) children.push_back(walk(c, scope));
                auto n = base_node(e, scope);
                n.is_value = true;
                n.coeffects.emission = EmissionStrategy::Inline;
                const int id = g.add_node(std::move(n));
                for (int c : children) {
                    g.add_edge({-1, c, id, EdgeKind::DataDep, current_mask, false});
                }
                return id;
            }
            case ExprKind::Tuple: {
                std::vector<int> children;
                for (const auto& c : e.children) children.push_back(walk(c, scope));
                auto n = base_node(e, scope);
                n.is_value = true;
                n.coeffects.emission = EmissionStrategy::Inline;
                const int id = g.add_node(std::move(n));
                for (int c : children) {
                    // Tuple members share the tuple's storage.
                    g.add_edge({-1, c, id, EdgeKind::DataDep, current_mask, true});
                }
                return id;
            }
            case ExprKind::ForRange: {
                const int lo = walk(e.children[0], scope);
                const int hi = walk(e.children[1], scope);
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                g.add_edge({-1, lo, id, EdgeKind::DataDep, current_mask, false});
                g.add_edge({-1, hi, id, EdgeKind::DataDep, current_mask, false});
                const int loop_scope = g.add_scope(Scope::Kind::Loop, scope);
                env.emplace_back();
                PsgNode iv;
                iv.expr_kind = ExprKind::Var;
                iv.label = e.name;
                iv.span = e.span;
                iv.scope = loop_scope;
                iv.binding_index = current_binding;
                iv.is_value = true;
                iv.coeffects.targets = current_mask;
                iv.reachability = current_mask;
                env.back()[e.name] = g.add_node(std::move(iv));
                const int body = walk(e.children[2], loop_scope);
                env.pop_back();
                g.add_edge({-1, id, body, EdgeKind::ControlDep, current_mask, false});
                return id;
            }
            case ExprKind::Scope: {
                const int arena_scope = g.add_scope(Scope::Kind::Arena, scope);
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                env.emplace_back();
                const int body = walk(e.children[0], arena_scope);
                env.pop_back();
                g.add_edge({-1, body, id, EdgeKind::DataDep, current_mask, true});
                return id;
            }
            case ExprKind::Annotated: {
                const int inner = walk(e.children[0], scope);
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                g.add_edge({-1, inner, id, EdgeKind::DataDep, current_mask, true});
                return id;
            }
            case ExprKind::Block: {
                const int block_scope = g.add_scope(Scope::Kind::Block, scope);
                env.emplace_back();
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                int last = -1;
                for (const auto& c : e.children) last = walk(c, block_scope);
                env.pop_back();
                if (last >= 0) {
                    g.add_edge({-1, last, id, EdgeKind::DataDep, current_mask, true});
                }
                return id;
            }
            case ExprKind::ArenaBlock: {
                // Desugaring precedes elaboration; treat defensively as Scope.
                const int arena_scope = g.add_scope(Scope::Kind::Arena, scope);
                auto n = base_node(e, scope);
                const int id = g.add_node(std::move(n));
                const int body = walk(e.children[0], arena_scope);
                g.add_edge({-1, body, id, EdgeKind::DataDep, current_mask, true});
                return id;
            }
        }
        return -1;
    }

    bool run() {
        for (std::size_t bi = 0; bi < tp.bindings.size(); ++bi) {
            const auto& typed = tp.bindings[bi];
            const auto& src = tp.program.bindings[bi];
            current_binding = static_cast<int>(bi);
            current_memory_attr.clear();

            current_mask = g.full_mask();
            bool inline_attr = false;
            for (const auto& attr : typed.attributes) {
                switch (attr.kind) {
                    case syntax::CoeffectAttribute::Kind::Target: {
                        std::uint64_t mask = 0;
                        for (const auto& name : attr.targets) {
                            auto idx = g.target_index(name);
                            if (!idx) {
                                error = "unknown target '" + name + "' in attribute on " +
                                        typed.name;
                                return false;
                            }
                            mask |= 1ULL << *idx;
                        }
                        current_mask = mask;
                        break;
                    }
                    case syntax::CoeffectAttribute::Kind::Memory:
                        current_memory_attr = attr.memory;
                        break;
                    case syntax::CoeffectAttribute::Kind::Inline:
                        inline_attr = true;
                        break;
                }
            }

            PsgNode bn;
            bn.expr_kind = ExprKind::Let;
            bn.label = typed.name;
            bn.span = typed.span;
            bn.scope = 0;
            bn.binding_index = current_binding;
            bn.is_binding = true;
            bn.type = typed.scheme.body;
            if (typed.scheme.body.kind == infer::Type::Kind::Float ||
                typed.scheme.body.kind == infer::Type::Kind::Quire) {
                bn.dimension = typed.scheme.body.dim;
            }
            bn.coeffects.targets = current_mask;
            bn.reachability = current_mask;
            bn.coeffects.emission = src.params.empty()
                                        ? EmissionStrategy::ModuleInit
                                        : EmissionStrategy::SeparateFunction;
            bn.coeffects.mandatory_inline = inline_attr;
            bn.coeffects.memory = current_memory_attr;
            if (type_contains(typed.scheme.body, infer::Type::Kind::Quire)) {
                bn.coeffects.capabilities.insert("quire");
                bn.coeffects.capabilities.insert("float");
            } else if (type_contains(typed.scheme.body, infer::Type::Kind::Float)) {
                bn.coeffects.capabilities.insert("float");
            }
            const int binding_id = g.add_node(std::move(bn));
            const int fn_scope = g.add_scope(Scope::Kind::Function, 0, binding_id);

            env.emplace_back();
            // Parameter nodes: peel the scheme's arrows for their types.
            const infer::Type* t = &typed.scheme.body;
            for (const auto& p : src.params) {
                PsgNode pn;
                pn.expr_kind = ExprKind::Var;
                pn.label = p.name;
                pn.span = p.span;
                pn.scope = fn_scope;
                pn.binding_index = current_binding;
                pn.is_value = true;
                pn.coeffects.targets = current_mask;
                pn.reachability = current_mask;
                if (t->kind == infer::Type::Kind::Arrow) {
                    pn.type = t->args[0];
                    if (pn.type->kind == infer::Type::Kind::Float ||
                        pn.type->kind == infer::Type::Kind::Quire) {
                        pn.dimension = pn.type->dim;
                    }
                    if (type_contains(*pn.type, infer::Type::Kind::Quire)) {
                        pn.coeffects.capabilities.insert("quire");
                        pn.coeffects.capabilities.insert("float");
                    } else if (type_contains(*pn.type, infer::Type::Kind::Float)) {
                        pn.coeffects.capabilities.insert("float");
                    }
                    t = &t->args[1];
                }
                const int pid = g.add_node(std::move(pn));
                if (!p.name.empty()) env.back()[p.name] = pid;
            }

            const int body = walk(src.body, fn_scope);
            env.pop_back();
            if (body >= 0) {
                g.add_edge({-1, body, binding_id, EdgeKind::Return, current_mask, false});
            }
        }
        return true;
    }
};

}  // namespace

ElaborateResult elaborate(const infer::TypedProgram& tp,
                          const std::vector<targets::TargetBinding>& bindings) {
    Elaborator el(tp, bindings);
    if (!el.run()) return {std::nullopt, el.error};
    el.g.reset_write_counts();
    return {std::move(el.g), std::nullopt};
}

// =============================================================================
// Saturation
// =============================================================================

namespace {

std::uint64_t capability_mask(const Psg& g,
                              const std::vector<targets::TargetBinding>& bindings,
                              const std::set<std::string>& caps) {
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        const auto& t = bindings[i];
        bool ok = true;
        for (const auto& c : caps) {
            if (c == "quire" && !t.supports_quire()) ok = false;
            if (c == "float" && !t.supports_float()) ok = false;
        }
        if (ok) mask |= 1ULL << i;
    }
    (void)g;
    return mask;
}

}  // namespace

void saturate(Psg& g, const std::vector<targets::TargetBinding>& bindings) {
    g.diagnostics.clear();

    const int binding_count = static_cast<int>(
        std::count_if(g.nodes.begin(), g.nodes.end(),
                      [](const PsgNode& n) { return n.is_binding; }));

    // Interprocedural argument aliasing + escape promotion to fixpoint.
    for (int pass = 0; pass < binding_count + 4; ++pass) {
        escape::promote(g);

        bool changed = false;
        // Parameter escape summaries flip call-argument aliasing.
        for (const auto& n : g.nodes) {
            if (!n.is_value || n.binding_index < 0 || n.expr_id != -1) continue;
            // Parameter nodes of top-level bindings: expr_id == -1 value
            // nodes whose scope is the binding's own frame.
            const auto& sc = g.scopes[static_cast<std::size_t>(n.scope)];
            if (sc.kind != Scope::Kind::Function) continue;
            const auto rec = escape::classify(g, n.id);
            if (rec.kind == escape::EscapeKind::StackScoped) continue;
            // Which parameter position is this?
            int position = 0;
            for (const auto& other : g.nodes) {
                if (other.binding_index == n.binding_index && other.expr_id == -1 &&
                    other.is_value && other.scope == n.scope && other.id < n.id) {
                    ++position;
                }
            }
            for (auto& e : g.edges) {
                if (e.call_binding == n.binding_index && e.call_arg == position &&
                    !e.aliasing) {
                    e.aliasing = true;
                    changed = true;
                }
            }
        }
        if (!changed && pass > 0) break;
    }

    // Capability aggregation over the call graph.
    std::vector<std::set<std::string>> binding_caps(
        static_cast<std::size_t>(binding_count));
    std::vector<int> binding_nodes;
    for (const auto& n : g.nodes) {
        if (n.is_binding) binding_nodes.push_back(n.id);
    }
    for (const auto& n : g.nodes) {
        if (n.binding_index >= 0) {
            auto& caps = binding_caps[static_cast<std::size_t>(n.binding_index)];
            caps.insert(n.coeffects.capabilities.begin(),
                        n.coeffects.capabilities.end());
        }
    }
    for (bool moving = true; moving;) {
        moving = false;
        for (const auto& e : g.edges) {
            if (e.call_binding < 0) continue;
            const int caller = g.node(e.to).binding_index;
            if (caller < 0 || caller == e.call_binding) continue;
            auto& dst = binding_caps[static_cast<std::size_t>(caller)];
            for (const auto& c :
                 binding_caps[static_cast<std::size_t>(e.call_binding)]) {
                if (dst.insert(c).second) moving = true;
            }
        }
        // Plain references to other bindings also propagate requirements.
        for (const auto& e : g.edges) {
            if (e.kind != EdgeKind::DataDep) continue;
            const auto& from = g.node(e.from);
            const auto& to = g.node(e.to);
            if (!from.is_binding || to.binding_index < 0 ||
                to.binding_index == from.binding_index || from.binding_index < 0) {
                continue;
            }
            auto& dst = binding_caps[static_cast<std::size_t>(to.binding_index)];
            for (const auto& c :
                 binding_caps[static_cast<std::size_t>(from.binding_index)]) {
                if (dst.insert(c).second) moving = true;
            }
        }
    }

    // Per-binding reachability: requested targets, narrowed by aggregated
    // capability requirements, intersected along call edges to fixpoint.
    std::vector<std::uint64_t> binding_reach(
        static_cast<std::size_t>(binding_count), 0);
    for (int bi = 0; bi < binding_count; ++bi) {
        const auto& bn = g.node(binding_nodes[static_cast<std::size_t>(bi)]);
        binding_reach[static_cast<std::size_t>(bi)] =
            bn.coeffects.targets &
            capability_mask(g, bindings, binding_caps[static_cast<std::size_t>(bi)]);
    }
    for (bool moving = true; moving;) {
        moving = false;
        for (const auto& e : g.edges) {
            if (e.call_binding < 0) continue;
            const int caller = g.node(e.to).binding_index;
            if (caller < 0 || caller == e.call_binding) continue;
            const std::uint64_t narrowed =
                binding_reach[static_cast<std::size_t>(caller)] &
                binding_reach[static_cast<std::size_t>(e.call_binding)];
            if (narrowed != binding_reach[static_cast<std::size_t>(caller)]) {
                binding_reach[static_cast<std::size_t>(caller)] = narrowed;
                moving = true;
            }
        }
    }

    // Capability failures: exact accumulation demanded on a target without it
    // is an error, not a silent narrowing. One diagnostic per binding/target
    // pair, anchored at the first quire-requiring node.
    std::set<std::pair<int, std::size_t>> flagged;
    for (const auto& n : g.nodes) {
        if (!n.coeffects.capabilities.contains("quire")) continue;
        for (std::size_t ti = 0; ti < bindings.size(); ++ti) {
            const std::uint64_t bit = 1ULL << ti;
            if ((n.coeffects.targets & bit) && !bindings[ti].supports_quire() &&
                flagged.insert({n.binding_index, ti}).second) {
                SaturationDiagnostic d;
                d.kind = SaturationDiagnostic::Kind::CapabilityError;
                d.node = n.id;
                d.target = bindings[ti].name;
                d.missing = "quire";
                d.message = "exact accumulation required on target '" +
                            bindings[ti].name + "' which has no quire support";
                g.diagnostics.push_back(std::move(d));
            }
        }
    }
    for (auto& n : g.nodes) {
        if (n.state == NodeState::Fresh) continue;
        if (n.binding_index >= 0) {
            n.reachability = n.coeffects.targets &
                             binding_reach[static_cast<std::size_t>(n.binding_index)];
        } else if (n.is_binding) {
            // Binding nodes carry binding_index too; nothing else to do here.
        }
    }

    // Poll-model memory join over call sites.
    for (int bi = 0; bi < binding_count; ++bi) {
        const int bnode = binding_nodes[static_cast<std::size_t>(bi)];
        if (!g.node(bnode).coeffects.memory.empty()) continue;  // push model
        std::set<std::string> imposed;
        std::vector<int> sites;
        for (const auto& e : g.edges) {
            if (e.call_binding != bi || e.call_arg != 0) continue;
            const auto& caller = g.node(e.to);
            if (caller.binding_index < 0) continue;
            const int caller_bnode =
                binding_nodes[static_cast<std::size_t>(caller.binding_index)];
            const auto& mem = g.node(caller_bnode).coeffects.memory;
            if (!mem.empty()) {
                imposed.insert(mem);
                sites.push_back(e.to);
            }
        }
        if (imposed.size() == 1) {
            g.mutate(bnode).coeffects.memory = *imposed.begin();
        } else if (imposed.size() > 1) {
            SaturationDiagnostic d;
            d.kind = SaturationDiagnostic::Kind::ContextDependent;
            d.node = bnode;
            d.call_sites = sites;
            d.message = "memory coeffect of '" + g.node(bnode).label +
                        "' is context-dependent across call sites";
            g.diagnostics.push_back(std::move(d));
        }
    }

    // Resolve remaining memory sorts from the settled lifetime class and
    // finish up.
    for (auto& n : g.nodes) {
        if (n.state == NodeState::Fresh) continue;
        if (n.coeffects.memory.empty()) {
            n.coeffects.memory = std::string(lifetime_name(n.coeffects.lifetime));
        }
        n.saturated = true;
    }
    for (auto& e : g.edges) {
        e.reachability = g.node(e.from).reachability & g.node(e.to).reachability;
    }

    // Deterministic diagnostic order.
    std::sort(g.diagnostics.begin(), g.diagnostics.end(),
              [](const SaturationDiagnostic& a, const SaturationDiagnostic& b) {
                  if (a.node != b.node) return a.node < b.node;
                  return a.target < b.target;
              });
    g.diagnostics.erase(
        std::unique(g.diagnostics.begin(), g.diagnostics.end(),
                    [](const SaturationDiagnostic& a, const SaturationDiagnostic& b) {
                        return a.node == b.node && a.target == b.target &&
                               a.kind == b.kind;
                    }),
        g.diagnostics.end());
    g.saturation_ran = true;
    g.reset_write_counts();
}

// =============================================================================
// Dump
// =============================================================================

std::string dump(const Psg& g) {
    static const auto builtin_units = dims::UnitTable::builtin();
    std::ostringstream out;
    for (const auto& n : g.nodes) {
        out << "node " << n.id << " " << n.ssa_name << " "
            << syntax::expr_kind_name(n.expr_kind);
        if (!n.label.empty()) out << ":" << n.label;
        out << " state=" << node_state_name(n.state) << " scope=" << n.scope;
        out << " type=" << (n.type ? n.type->render(builtin_units) : "-");
        out << " dim=" << (n.dimension ? builtin_units.render(*n.dimension) : "-");
        out << " life=" << lifetime_name(n.coeffects.lifetime);
        out << " mem=" << (n.coeffects.memory.empty() ? "-" : n.coeffects.memory);
        out << " caps=";
        if (n.coeffects.capabilities.empty()) {
            out << "-";
        } else {
            bool first = true;
            for (const auto& c : n.coeffects.capabilities) {
                if (!first) out << ",";
                out << c;
                first = false;
            }
        }
        out << " emit=" << emission_name(n.coeffects.emission);
        if (n.coeffects.mandatory_inline) out << "!";
        out << " reach=";
        for (std::size_t t = 0; t < g.target_names.size(); ++t) {
            out << ((n.reachability >> t) & 1);
        }
        if (n.escape) {
            out << " escape=" << escape::escape_kind_name(n.escape->kind);
            if (n.escape->promoted_from) {
                out << "[" << lifetime_name(*n.escape->promoted_from) << "->"
                    << lifetime_name(*n.escape->promoted_to) << "]";
            }
        }
        out << "\n";
    }
    for (const auto& e : g.edges) {
        out << "edge " << e.id << " " << e.from << "->" << e.to << " "
            << edge_kind_name(e.kind);
        if (e.aliasing) out << " alias";
        if (e.kind == EdgeKind::Transfer) {
            out << " " << e.transfer_from << "->" << e.transfer_to;
        }
        out << " reach=";
        for (std::size_t t = 0; t < g.target_names.size(); ++t) {
            out << ((e.reachability >> t) & 1);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace clef::psg

// =============================================================================
// Transfer annotation
// =============================================================================

namespace clef::targets {

AnnotateResult annotate_transfers(
    psg::Psg& g, const std::vector<TargetBinding>& bindings,
    const std::map<std::string, repr::NumericFormat>& selected_formats_by_target) {
    for (auto& e : g.edges) {
        if (e.kind != psg::EdgeKind::Transfer) continue;
        if (e.transfer.has_value()) continue;  // already annotated
        const TargetBinding* from = nullptr;
        const TargetBinding* to = nullptr;
        for (const auto& b : bindings) {
            if (b.name == e.transfer_from) from = &b;
            if (b.name == e.transfer_to) to = &b;
        }
        if (from == nullptr || to == nullptr) {
            return {false, "transfer edge references an unconfigured target"};
        }
        auto link = from->transfer_links.find(to->name);
        if (link == from->transfer_links.end()) {
            return {false, "no transfer link between '" + from->name + "' and '" +
                               to->name + "'"};
        }
        auto src = selected_formats_by_target.find(from->name);
        auto dst = selected_formats_by_target.find(to->name);
        if (src == selected_formats_by_target.end() ||
            dst == selected_formats_by_target.end()) {
            return {false, "no selected format for a transfer endpoint"};
        }
        auto report = transfer_fidelity(src->second, dst->second);
        report.from = from->name;
        report.to = to->name;
        report.protocol = link->second.protocol;
        report.note = link->second.note;
        e.transfer = std::move(report);
    }
    return {true, ""};
}

}  // namespace clef::targets
