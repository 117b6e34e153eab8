#pragma once

// The Program Semantic Graph: nodes carrying type/dimension/coeffect
// annotations, elaboration from a typed program, saturation to fixpoint, the
// Live/Latent/Fresh state machine, per-target reachability bitvectors, and
// the text dump used by golden tests.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clef/escape.hpp"
#include "clef/infer.hpp"
#include "clef/targets.hpp"

namespace clef::psg {

enum class NodeState { Live, Latent, Fresh };
enum class EdgeKind { DataDep, ControlDep, Capture, Return, ByRef, Transfer };
enum class EmissionStrategy { Inline, SeparateFunction, ModuleInit };

const char* node_state_name(NodeState s);
const char* edge_kind_name(EdgeKind k);
const char* emission_name(EmissionStrategy e);

struct CoeffectRecord {
    EmissionStrategy emission = EmissionStrategy::SeparateFunction;
    bool mandatory_inline = false;        // [<Inline>]
    std::set<int> captures;               // captured binding node ids (lambdas)
    LifetimeLevel lifetime = LifetimeLevel::Stack;
    LifetimeLevel declared_lifetime = LifetimeLevel::Stack;  // tentative class
    int lifetime_scope = -1;
    std::string memory;                   // resolved memory sort tag
    std::set<std::string> capabilities;   // required capability tags
    std::uint64_t targets = 0;            // requested target mask

    bool operator==(const CoeffectRecord&) const = default;
};

struct PsgNode {
    int id = -1;
    int expr_id = -1;                       // link into the syntax tree
    syntax::ExprKind expr_kind = syntax::ExprKind::Literal;
    std::string label;                      // binding/variable name when present
    dims::SourceSpan span;
    std::optional<infer::Type> type;        // absent on Fresh nodes
    std::optional<dims::Dimension> dimension;
    CoeffectRecord coeffects;
    std::optional<escape::EscapeRecord> escape;
    NodeState state = NodeState::Live;
    std::uint64_t reachability = 0;
    std::string ssa_name;
    int scope = 0;
    int binding_index = -1;                 // owning top-level binding
    bool is_value = false;                  // subject to escape analysis
    bool is_binding = false;                // top-level binding node
    bool saturated = false;
};

struct PsgEdge {
    int id = -1;
    int from = -1;
    int to = -1;
    EdgeKind kind = EdgeKind::DataDep;
    std::uint64_t reachability = 0;
    bool aliasing = false;      // storage-forwarding data dependency
    int call_binding = -1;      // argument edges: callee binding index
    int call_arg = -1;          // argument edges: parameter position
    std::string transfer_from;  // Transfer edges: source/destination targets
    std::string transfer_to;
    std::optional<targets::TransferReport> transfer;
};

struct Scope {
    enum class Kind { Program, Function, Lambda, Block, Loop, Arena };
    int id = 0;
    int parent = -1;
    Kind kind = Kind::Program;
    int owner_node = -1;  // function/lambda node whose frame this is
};

struct SaturationDiagnostic {
    enum class Kind { CapabilityError, ContextDependent };
    Kind kind = Kind::CapabilityError;
    int node = -1;
    std::string target;
    std::string missing;       // capability tag
    std::string message;
    std::vector<int> call_sites;  // ContextDependent
};

enum class TransitionError { InvalidTransition, UnknownTarget, MissingLink };

class Psg {
public:
    std::vector<PsgNode> nodes;
    std::vector<PsgEdge> edges;
    std::vector<Scope> scopes;
    std::vector<std::string> target_names;
    std::vector<SaturationDiagnostic> diagnostics;
    bool saturation_ran = false;

    // --- construction (also used by synthetic test graphs) -----------------
    int add_scope(Scope::Kind kind, int parent, int owner_node = -1);
    int add_node(PsgNode n);
    int add_edge(PsgEdge e);

    // --- instrumented mutation ---------------------------------------------
    /// All annotation writes go through mutate(); per-node write counters back
    /// the passive-traversal and boundary-only assertions.
    PsgNode& mutate(int id) {
        ++write_counts_[static_cast<std::size_t>(id)];
        return nodes[static_cast<std::size_t>(id)];
    }
    [[nodiscard]] const PsgNode& node(int id) const {
        return nodes[static_cast<std::size_t>(id)];
    }
    [[nodiscard]] int write_count(int id) const {
        return write_counts_[static_cast<std::size_t>(id)];
    }
    void reset_write_counts();

    // --- queries -------------------------------------------------------------
    [[nodiscard]] const std::vector<int>& out_edges(int node) const;
    [[nodiscard]] const std::vector<int>& in_edges(int node) const;
    [[nodiscard]] int frame_scope_of(int scope) const;  // enclosing frame
    [[nodiscard]] bool scope_within(int inner, int outer) const;
    [[nodiscard]] std::uint64_t full_mask() const {
        return target_names.size() >= 64 ? ~0ULL
                                         : (1ULL << target_names.size()) - 1;
    }
    [[nodiscard]] std::optional<int> target_index(std::string_view name) const;
    [[nodiscard]] int binding_node(std::string_view name) const;  // -1 if absent

    // --- three-state machinery -----------------------------------------------
    std::optional<TransitionError> mark_latent(const std::vector<int>& node_set);
    std::optional<TransitionError> reactivate(const std::vector<int>& node_set);
    /// Adds syntax-only nodes (no type/dimension annotations).
    std::vector<int> insert_fresh(const std::vector<syntax::Expr>& exprs, int scope);
    /// Narrows reachability to exclude a target; nodes reachable only there
    /// become Latent.
    std::optional<TransitionError> disable_target(std::string_view name);

    struct ActiveView {
        std::string target;
        std::vector<int> nodes;  // Live nodes whose bit for the target is set
    };
    [[nodiscard]] std::optional<ActiveView> active_subgraph(std::string_view target) const;

private:
    std::vector<int> write_counts_;
    mutable std::vector<std::vector<int>> out_index_;
    mutable std::vector<std::vector<int>> in_index_;
    mutable bool index_dirty_ = true;
    void rebuild_index() const;
};

// =============================================================================
// Elaboration and saturation
// =============================================================================

struct ElaborateResult {
    std::optional<Psg> graph;
    std::optional<std::string> error;  // unknown target in an attribute
};

/// Builds the graph from a typed program: one node per expression plus one
/// per binding and parameter, data/control/capture/return/byref edges,
/// coeffect fields initialized, every node Live.
ElaborateResult elaborate(const infer::TypedProgram& tp,
                          const std::vector<targets::TargetBinding>& bindings);

/// Iterates escape promotion, memory resolution, capability propagation and
/// reachability narrowing to fixpoint. Deterministic. Capability failures are
/// recorded as diagnostics (the graph still saturates with narrowed
/// reachability).
void saturate(Psg& g, const std::vector<targets::TargetBinding>& bindings);

/// Stable line-oriented dump ordered by node id (golden tests).
std::string dump(const Psg& g);

}  // namespace clef::psg

namespace clef::targets {

/// Attaches a TransferReport to every Transfer edge from the endpoint
/// formats and the configured link protocol. Reports MissingLink when no
/// transferLinks entry connects the two targets.
struct AnnotateResult {
    bool ok = true;
    std::string error;
};
AnnotateResult annotate_transfers(psg::Psg& g,
                                  const std::vector<TargetBinding>& bindings,
                                  const std::map<std::string, repr::NumericFormat>&
                                      selected_formats_by_target);

}  // namespace clef::targets
