#pragma once

// Escape classification into the four-way taxonomy, lifetime promotion to
// fixpoint, allocation-strategy mapping, AD-mode coeffect signatures, and
// restructuring-suggestion generation. Operates on the program semantic
// graph; the graph structure itself lives in clef/psg.hpp.

#include <optional>
#include <string>
#include <vector>

#include "clef/lifetime.hpp"
#include "clef/targets.hpp"

namespace clef::psg {
class Psg;
}

namespace clef::escape {

/// A lifetime class: the ordered level plus the owning scope (lexical scope,
/// arena scope, or the synthetic caller scope).
struct LifetimeClass {
    LifetimeLevel level = LifetimeLevel::Stack;
    int scope = -1;

    bool operator==(const LifetimeClass&) const = default;
};

enum class EscapeKind { StackScoped, ClosureCapture, ReturnEscape, ByRefEscape };

const char* escape_kind_name(EscapeKind k);

struct EscapeRecord {
    EscapeKind kind = EscapeKind::StackScoped;
    int closure_node = -1;           // ClosureCapture(t)
    std::vector<int> chain;          // witnessing edge path to the escape site
    std::optional<LifetimeLevel> promoted_from;
    std::optional<LifetimeLevel> promoted_to;
    int required_scope = -1;         // scope the value must survive

    bool operator==(const EscapeRecord&) const = default;
};

/// Classifies one value node. When several escapes apply the one imposing the
/// greatest lifetime wins; ties break ReturnEscape > ByRefEscape >
/// ClosureCapture. The chain records the witnessing edge path.
EscapeRecord classify(const psg::Psg& g, int node);

/// Classification relative to a scope horizon: edges that stay within
/// `horizon_scope` do not count as escapes (used by the AD region check).
EscapeRecord classify_within(const psg::Psg& g, int node, int horizon_scope);

/// Lifetime promotion to fixpoint: lambda(v) := max over uses of the required
/// lifetime, with closure captures imposing lambda(v) >= lambda(closure)
/// transitively. Monotone and idempotent; each promotion appends
/// (promoted_from, promoted_to) to the node's escape record.
void promote(psg::Psg& g);

/// Target-specific allocation response to a target-invariant classification.
struct AllocationDecision {
    EscapeKind kind = EscapeKind::StackScoped;
    LifetimeLevel level = LifetimeLevel::Stack;
    dims::MemorySpace region;
    std::string scope_note;
};
AllocationDecision allocation_strategy(const EscapeRecord& r,
                                       const targets::TargetBinding& t);

/// Advisory restructurings for a promoted value: caller buffer, continuation
/// style, explicit annotation - exactly three for ReturnEscape, two for
/// ClosureCapture, one for ByRefEscape, none when no promotion happened.
struct Suggestion {
    enum class Kind { CallerBuffer, ContinuationStyle, ExplicitAnnotation };
    Kind kind = Kind::ExplicitAnnotation;
    std::string title;
    std::string cost_note;
    std::vector<int> chain;
};
std::vector<Suggestion> suggest_restructurings(const psg::Psg& g, int node);

// =============================================================================
// Automatic differentiation coeffect signatures
// =============================================================================

enum class AdMode { Forward, Reverse };
enum class AuxMemory { ConstantPerLayer, LinearInDepth };

struct AdCoeffectSignature {
    AdMode mode = AdMode::Forward;
    AuxMemory aux_memory = AuxMemory::ConstantPerLayer;
    bool tape_required = false;

    bool operator==(const AdCoeffectSignature&) const = default;
};

AdCoeffectSignature ad_signature(AdMode mode);

/// True iff no value node in the region escapes the region's scope: the
/// compile-time check that a forward-mode gradient region needs no tape.
bool verify_forward_no_tape(const psg::Psg& g, const std::vector<int>& region,
                            int region_scope);

}  // namespace clef::escape
