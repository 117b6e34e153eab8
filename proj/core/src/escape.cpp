#include "clef/escape.hpp"

#include <algorithm>
#include <set>

#include "clef/psg.hpp"

namespace clef::escape {

const char* escape_kind_name(EscapeKind k) {
    switch (k) {
        case EscapeKind::StackScoped: return "StackScoped";
        case EscapeKind::ClosureCapture: return "ClosureCapture";
        case EscapeKind::ReturnEscape: return "ReturnEscape";
        case EscapeKind::ByRefEscape: return "ByRefEscape";
    }
    return "?";
}

namespace {

using psg::EdgeKind;
using psg::Psg;
using psg::PsgEdge;
using psg::PsgNode;

struct Candidate {
    EscapeKind kind = EscapeKind::StackScoped;
    LifetimeLevel required = LifetimeLevel::Stack;
    int required_scope = -1;
    int closure_node = -1;
    std::vector<int> chain;
};

// Tie order when requirements are equal: Return > ByRef > Capture.
int kind_rank(EscapeKind k) {
    switch (k) {
        case EscapeKind::ReturnEscape: return 3;
        case EscapeKind::ByRefEscape: return 2;
        case EscapeKind::ClosureCapture: return 1;
        case EscapeKind::StackScoped: return 0;
    }
    return 0;
}

bool better(const Candidate& a, const Candidate& b) {
    if (a.required != b.required) return a.required > b.required;
    return kind_rank(a.kind) > kind_rank(b.kind);
}

// True when the cell node is a byref parameter: a parameter whose type is a
// memory reference. Its referent originates in the caller's frame.
bool is_byref_param(const PsgNode& n) {
    return n.expr_id == -1 && n.is_value && n.type &&
           n.type->kind == infer::Type::Kind::MemRef;
}

// Scalars (floats, ints, unit) are copied on return and byref stores; only
// storage-carrying values escape through those paths. Untyped synthetic nodes
// are treated conservatively.
bool aggregate(const PsgNode& n) {
    if (!n.type) return true;
    switch (n.type->kind) {
        case infer::Type::Kind::Float:
        case infer::Type::Kind::Int:
        case infer::Type::Kind::Unit:
            return false;
        default:
            return true;
    }
}

// Collects escape candidates by following storage-forwarding edges from the
// value node. `horizon` is the scope the value must not outlive: the node's
// own frame for plain classification, or an explicit region scope.
void collect(const Psg& g, int start, int horizon, std::vector<Candidate>& out) {
    // Return and byref stores only escape storage-carrying values; captures
    // constrain every value (the closure environment holds it).
    const bool returns_escape = aggregate(g.node(start));
    std::set<int> visited;
    struct Item {
        int node;
        std::vector<int> chain;
    };
    std::vector<Item> stack{{start, {}}};
    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();
        if (!visited.insert(item.node).second) continue;
        for (int eid : g.out_edges(item.node)) {
            const PsgEdge& e = g.edges[static_cast<std::size_t>(eid)];
            const PsgNode& to = g.node(e.to);
            auto chain = item.chain;
            chain.push_back(eid);
            switch (e.kind) {
                case EdgeKind::Return: {
                    // The value is (part of) the result of the function or
                    // lambda owning this frame: it outlives the frame's call.
                    if (!returns_escape) break;
                    Candidate c;
                    c.kind = EscapeKind::ReturnEscape;
                    c.required = LifetimeLevel::Arena;  // caller's scope
                    c.required_scope =
                        g.scopes[static_cast<std::size_t>(to.scope)].parent;
                    c.chain = chain;
                    out.push_back(std::move(c));
                    break;
                }
                case EdgeKind::ByRef: {
                    if (!returns_escape) break;
                    if (is_byref_param(to)) {
                        Candidate c;
                        c.kind = EscapeKind::ByRefEscape;
                        c.required = LifetimeLevel::Arena;  // reference origin
                        c.required_scope =
                            g.scopes[static_cast<std::size_t>(to.scope)].parent;
                        c.chain = chain;
                        out.push_back(std::move(c));
                    } else if (!g.scope_within(to.scope, horizon)) {
                        Candidate c;
                        c.kind = EscapeKind::ByRefEscape;
                        c.required = std::max(LifetimeLevel::Arena,
                                              to.coeffects.lifetime);
                        c.required_scope = to.scope;
                        c.chain = chain;
                        out.push_back(std::move(c));
                    }
                    // Same-frame stores only widen the lexical scope; they do
                    // not change the lifetime class.
                    break;
                }
                case EdgeKind::Capture: {
                    Candidate c;
                    c.kind = EscapeKind::ClosureCapture;
                    c.closure_node = e.to;
                    c.required = to.coeffects.lifetime;  // at least the closure's
                    c.required_scope = to.scope;
                    c.chain = chain;
                    // A capture whose closure stays stack-scoped inside the
                    // horizon is not an escape.
                    if (c.required > LifetimeLevel::Stack ||
                        !g.scope_within(to.scope, horizon)) {
                        out.push_back(std::move(c));
                    }
                    break;
                }
                case EdgeKind::DataDep: {
                    if (!e.aliasing) break;  // plain read: no storage sharing
                    // Follow forwarding within the horizon; crossing into a
                    // different frame is covered by Capture edges.
                    if (g.frame_scope_of(to.scope) == g.frame_scope_of(
                                                          g.node(start).scope) ||
                        g.scope_within(to.scope, horizon)) {
                        stack.push_back({e.to, std::move(chain)});
                    }
                    break;
                }
                case EdgeKind::ControlDep:
                case EdgeKind::Transfer:
                    break;
            }
        }
    }
}

EscapeRecord classify_impl(const Psg& g, int node, int horizon) {
    std::vector<Candidate> candidates;
    collect(g, node, horizon, candidates);
    EscapeRecord rec;
    if (candidates.empty()) {
        rec.kind = EscapeKind::StackScoped;
        rec.required_scope = g.node(node).scope;
        return rec;
    }
    const Candidate* best = &candidates[0];
    for (const auto& c : candidates) {
        if (better(c, *best)) best = &c;
    }
    rec.kind = best->kind;
    rec.closure_node = best->closure_node;
    rec.chain = best->chain;
    rec.required_scope = best->required_scope;
    return rec;
}

LifetimeLevel required_level(const Psg& g, const EscapeRecord& rec) {
    switch (rec.kind) {
        case EscapeKind::StackScoped:
            return LifetimeLevel::Stack;
        case EscapeKind::ReturnEscape:
            return LifetimeLevel::Arena;
        case EscapeKind::ByRefEscape:
            return LifetimeLevel::Arena;
        case EscapeKind::ClosureCapture: {
            if (rec.closure_node >= 0) {
                return std::max(LifetimeLevel::Stack,
                                g.node(rec.closure_node).coeffects.lifetime);
            }
            return LifetimeLevel::Stack;
        }
    }
    return LifetimeLevel::Stack;
}

}  // namespace

EscapeRecord classify(const psg::Psg& g, int node) {
    const int frame = g.frame_scope_of(g.node(node).scope);
    return classify_impl(g, node, frame);
}

EscapeRecord classify_within(const psg::Psg& g, int node, int horizon_scope) {
    return classify_impl(g, node, horizon_scope);
}

void promote(psg::Psg& g) {
    // Tentative lifetimes come from elaboration (Stack, or the declared class
    // for arena/static annotated bindings). The fixpoint only ever raises
    // them: lambda(v) := max over uses of the required lifetime, closure
    // captures transitively.
    bool changed = true;
    int guard = 0;
    const int max_iters =
        4 * static_cast<int>(g.nodes.size()) + 4;  // lattice height * nodes
    while (changed && guard++ < max_iters) {
        changed = false;
        for (const auto& n : g.nodes) {
            if (!n.is_value || n.state == psg::NodeState::Fresh) continue;
            EscapeRecord rec = classify(g, n.id);
            const LifetimeLevel need = required_level(g, rec);
            if (need > n.coeffects.lifetime) {
                auto& m = g.mutate(n.id);
                m.coeffects.lifetime = need;
                m.coeffects.lifetime_scope = rec.required_scope;
                changed = true;
            }
        }
    }
    // Record final classifications with promotion provenance.
    for (const auto& n : g.nodes) {
        if (!n.is_value || n.state == psg::NodeState::Fresh) continue;
        EscapeRecord rec = classify(g, n.id);
        if (rec.kind != EscapeKind::StackScoped) {
            rec.promoted_from = n.coeffects.declared_lifetime;
            rec.promoted_to = n.coeffects.lifetime;
        }
        if (!n.escape || !(*n.escape == rec)) {
            g.mutate(n.id).escape = rec;
        }
    }
}

AllocationDecision allocation_strategy(const EscapeRecord& r,
                                       const targets::TargetBinding& t) {
    AllocationDecision d;
    d.kind = r.kind;
    switch (r.kind) {
        case EscapeKind::StackScoped:
            d.level = LifetimeLevel::Stack;
            d.scope_note = "lexical scope";
            break;
        case EscapeKind::ClosureCapture:
            d.level = r.promoted_to.value_or(LifetimeLevel::Arena);
            d.scope_note = "closure environment";
            break;
        case EscapeKind::ReturnEscape:
            d.level = r.promoted_to.value_or(LifetimeLevel::Arena);
            d.scope_note = "caller's scope";
            break;
        case EscapeKind::ByRefEscape:
            d.level = r.promoted_to.value_or(LifetimeLevel::Arena);
            d.scope_note = "origin scope of the reference";
            break;
    }
    // The class is target-invariant; only the concrete region varies.
    d.region = t.region_for(d.level);
    return d;
}

std::vector<Suggestion> suggest_restructurings(const psg::Psg& g, int node) {
    std::vector<Suggestion> out;
    const auto& n = g.node(node);
    if (!n.escape || !n.escape->promoted_from) return out;
    const auto& rec = *n.escape;
    switch (rec.kind) {
        case EscapeKind::StackScoped:
            return out;
        case EscapeKind::ReturnEscape:
            out.push_back({Suggestion::Kind::CallerBuffer, "Caller-provided buffer",
                           "zero allocation", rec.chain});
            out.push_back({Suggestion::Kind::ContinuationStyle,
                           "Continuation-passing style", "stack locality preserved",
                           rec.chain});
            out.push_back({Suggestion::Kind::ExplicitAnnotation,
                           "Explicit promotion annotation", "declared intent",
                           rec.chain});
            break;
        case EscapeKind::ClosureCapture:
            out.push_back({Suggestion::Kind::ContinuationStyle,
                           "Continuation-passing style", "stack locality preserved",
                           rec.chain});
            out.push_back({Suggestion::Kind::ExplicitAnnotation,
                           "Explicit promotion annotation", "declared intent",
                           rec.chain});
            break;
        case EscapeKind::ByRefEscape:
            out.push_back({Suggestion::Kind::ExplicitAnnotation,
                           "Explicit promotion annotation", "declared intent",
                           rec.chain});
            break;
    }
    return out;
}

AdCoeffectSignature ad_signature(AdMode mode) {
    if (mode == AdMode::Forward) {
        return {AdMode::Forward, AuxMemory::ConstantPerLayer, false};
    }
    return {AdMode::Reverse, AuxMemory::LinearInDepth, true};
}

bool verify_forward_no_tape(const psg::Psg& g, const std::vector<int>& region,
                            int region_scope) {
    for (int id : region) {
        const auto& n = g.node(id);
        if (!n.is_value) continue;
        if (classify_within(g, id, region_scope).kind != EscapeKind::StackScoped) {
            return false;
        }
    }
    return true;
}

}  // namespace clef::escape
