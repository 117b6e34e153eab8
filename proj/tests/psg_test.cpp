#include <doctest.h>

#include <fstream>
#include <sstream>

#include "clef/psg.hpp"

using namespace clef;
using namespace clef::psg;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(CLEF_TEST_DIR) + "/golden/" + name);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

targets::Config table4() {
    auto r = targets::load_config(std::string(CLEF_TEST_DIR) + "/golden/table4.cfg");
    REQUIRE(r.ok());
    return std::move(*r.config);
}

infer::TypedProgram typed(const std::string& src) {
    auto parsed = syntax::parse(src);
    REQUIRE_MESSAGE(parsed.ok(),
                    (parsed.error ? parsed.error->message : std::string{}));
    auto r = infer::infer_program(syntax::desugar(std::move(*parsed.program)),
                                  dims::UnitTable::builtin());
    REQUIRE_MESSAGE(r.ok(), (r.error ? r.error->message : std::string{}));
    return std::move(*r.program);
}

Psg elaborated(const std::string& src, const std::vector<targets::TargetBinding>& tb) {
    auto tp = typed(src);
    auto r = elaborate(tp, tb);
    REQUIRE_MESSAGE(r.graph.has_value(), r.error.value_or(""));
    return std::move(*r.graph);
}

std::vector<targets::TargetBinding> subset(const targets::Config& cfg,
                                           std::initializer_list<const char*> names) {
    std::vector<targets::TargetBinding> out;
    for (const char* n : names) {
        const auto* b = cfg.find(n);
        REQUIRE(b != nullptr);
        out.push_back(*b);
    }
    return out;
}

int find_node(const Psg& g, const std::function<bool(const PsgNode&)>& pred) {
    for (const auto& n : g.nodes) {
        if (pred(n)) return n.id;
    }
    return -1;
}

}  // namespace

TEST_CASE("elaboration builds one node per expression with dimensions") {
    auto cfg = table4();
    auto g = elaborated(read_fixture("gravity_unannotated.clef"), subset(cfg, {"x86_64"}));
    CHECK(g.nodes.size() >= 7);

    // Every node is Live with a pre-assigned SSA name.
    for (const auto& n : g.nodes) {
        CHECK(n.state == NodeState::Live);
        CHECK(n.ssa_name == "%" + std::to_string(n.id));
    }

    // The division node carries dg * dm1 * dm2 * dd^-2.
    const int div = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::BinOp && n.dimension &&
               !n.dimension->variables().empty() &&
               n.dimension->variables().size() == 4;
    });
    REQUIRE(div >= 0);
    const auto& d = *g.node(div).dimension;
    int negative_two = 0, plus_one = 0;
    for (const auto& [v, e] : d.variables()) {
        (void)v;
        if (e == -2) ++negative_two;
        if (e == 1) ++plus_one;
    }
    CHECK(negative_two == 1);
    CHECK(plus_one == 3);
}

TEST_CASE("empty program elaborates to an empty graph") {
    auto cfg = table4();
    auto tp = typed("let unused = 1");
    infer::TypedProgram empty;
    empty.program = syntax::Program{};
    auto r = elaborate(empty, subset(cfg, {"x86_64"}));
    REQUIRE(r.graph.has_value());
    CHECK(r.graph->nodes.empty());
    CHECK(r.graph->edges.empty());
}

TEST_CASE("target attributes restrict the requested mask before saturation") {
    auto cfg = table4();
    auto g = elaborated(read_fixture("push_model.clef"),
                        subset(cfg, {"x86_64", "xilinx", "loihi2"}));
    const int root = g.binding_node("processReadings");
    REQUIRE(root >= 0);
    // [<Target: x86_64 | xilinx>]: bits 0 and 1, not loihi2.
    CHECK(g.node(root).coeffects.targets == 0b011);
    CHECK(g.node(root).coeffects.memory == "arena");

    auto bad = typed(read_fixture("push_model.clef"));
    auto err = elaborate(bad, subset(cfg, {"loihi2"}));
    CHECK_FALSE(err.graph.has_value());
    CHECK(err.error->find("x86_64") != std::string::npos);
}

TEST_CASE("quire loop saturates with per-target allocations") {
    auto cfg = table4();
    auto g = elaborated(read_fixture("quire_work.clef"),
                        subset(cfg, {"x86_64", "xilinx"}));
    saturate(g, subset(cfg, {"x86_64", "xilinx"}));
    CHECK(g.diagnostics.empty());

    const int q = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::LetMut && n.label == "q";
    });
    REQUIRE(q >= 0);
    const auto& qn = g.node(q);
    CHECK(qn.saturated);
    CHECK(qn.coeffects.capabilities.contains("quire"));
    CHECK(qn.reachability == 0b11);
    REQUIRE(qn.escape.has_value());
    CHECK(qn.escape->kind == escape::EscapeKind::StackScoped);

    // Target-specific allocation: stack on the CPU, fabric on the FPGA.
    auto x86 = escape::allocation_strategy(*qn.escape, *cfg.find("x86_64"));
    CHECK(x86.level == LifetimeLevel::Stack);
    CHECK(x86.region.tag == "stack");
    auto fpga = escape::allocation_strategy(*qn.escape, *cfg.find("xilinx"));
    CHECK(fpga.level == LifetimeLevel::Stack);
    CHECK(fpga.region.tag == "fabric");
}

TEST_CASE("a quire on a target without support is a capability error") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx", "loihi2"});
    auto g = elaborated(read_fixture("quire_work.clef"), tlist);
    saturate(g, tlist);
    REQUIRE_FALSE(g.diagnostics.empty());
    bool found = false;
    for (const auto& d : g.diagnostics) {
        if (d.kind == SaturationDiagnostic::Kind::CapabilityError &&
            d.target == "loihi2" && d.missing == "quire") {
            found = true;
        }
    }
    CHECK(found);
    // Reachability narrowed away from loihi2: bit 2 cleared everywhere.
    const int work = g.binding_node("work");
    CHECK((g.node(work).reachability & 0b100) == 0);
    CHECK((g.node(work).reachability & 0b011) == 0b11);
}

TEST_CASE("saturation is idempotent") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    for (const char* f : {"sensor_pipeline.clef", "quire_work.clef", "gravity_annotated.clef"}) {
        auto g = elaborated(read_fixture(f), tlist);
        saturate(g, tlist);
        auto first = dump(g);
        saturate(g, tlist);
        CHECK_MESSAGE(dump(g) == first, f);
    }
}

TEST_CASE("saturation without coeffect variables changes nothing material") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64"});
    auto g = elaborated("let f (x: float<m>) = x * 2.0", tlist);
    saturate(g, tlist);
    for (const auto& n : g.nodes) {
        CHECK(n.saturated);
        CHECK(n.reachability == 0b1);
        CHECK(n.coeffects.lifetime == LifetimeLevel::Stack);
    }
}

TEST_CASE("mark_latent and reactivate round-trip preserves annotations") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    auto g = elaborated(read_fixture("sensor_pipeline.clef"), tlist);
    saturate(g, tlist);

    struct Snapshot {
        std::optional<infer::Type> type;
        std::optional<dims::Dimension> dim;
        CoeffectRecord coeff;
        std::optional<escape::EscapeRecord> esc;
    };
    std::vector<Snapshot> before;
    for (const auto& n : g.nodes) {
        before.push_back({n.type, n.dimension, n.coeffects, n.escape});
    }
    g.reset_write_counts();

    std::vector<int> set;
    for (const auto& n : g.nodes) {
        if (n.binding_index == 2) set.push_back(n.id);  // processReadings
    }
    REQUIRE_FALSE(set.empty());
    CHECK_FALSE(g.mark_latent(set).has_value());
    for (int id : set) CHECK(g.node(id).state == NodeState::Latent);
    // Latent nodes keep their resolution (type and dimension intact).
    for (int id : set) {
        CHECK(g.node(id).type == before[static_cast<std::size_t>(id)].type);
    }
    CHECK_FALSE(g.reactivate(set).has_value());

    for (const auto& n : g.nodes) {
        const auto& snap = before[static_cast<std::size_t>(n.id)];
        CHECK(n.state == NodeState::Live);
        CHECK(n.type == snap.type);
        CHECK(n.dimension == snap.dim);
        CHECK(n.coeffects == snap.coeff);
        CHECK(n.escape == snap.esc);
        // No annotation writes anywhere: the round trip is state-only, and
        // reactivation re-checks boundary edges without touching interiors.
        CHECK(g.write_count(n.id) == 0);
    }
}

TEST_CASE("reactivating a fresh node is an invalid transition") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64"});
    auto g = elaborated("let x = 1", tlist);
    syntax::Expr fresh_expr;
    fresh_expr.kind = syntax::ExprKind::Var;
    fresh_expr.name = "pending";
    fresh_expr.id = 999;
    auto ids = g.insert_fresh({fresh_expr}, 0);
    REQUIRE(ids.size() == 1);
    CHECK(g.node(ids[0]).state == NodeState::Fresh);
    CHECK_FALSE(g.node(ids[0]).type.has_value());
    CHECK_FALSE(g.node(ids[0]).dimension.has_value());

    auto err = g.reactivate(ids);
    REQUIRE(err.has_value());
    CHECK(*err == TransitionError::InvalidTransition);
    auto err2 = g.mark_latent(ids);
    REQUIRE(err2.has_value());
    CHECK(*err2 == TransitionError::InvalidTransition);
}

TEST_CASE("disabling a target keeps others live with narrowed bitvectors") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    auto g = elaborated(read_fixture("push_model.clef"), tlist);
    saturate(g, tlist);

    // Give one synthetic node xilinx-only reachability.
    PsgNode only;
    only.expr_kind = syntax::ExprKind::Literal;
    only.scope = 0;
    only.reachability = 0b10;
    only.coeffects.targets = 0b10;
    const int xid = g.add_node(std::move(only));

    CHECK_FALSE(g.disable_target("xilinx").has_value());
    CHECK(g.node(xid).state == NodeState::Latent);
    const int root = g.binding_node("processReadings");
    CHECK(g.node(root).state == NodeState::Live);
    CHECK(g.node(root).reachability == 0b01);

    CHECK(g.disable_target("nonesuch").has_value());
}

TEST_CASE("active subgraph views filter by liveness and reachability") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx", "loihi2"});
    // computeForce (float math) narrows off loihi2; quire work errors there.
    std::string src = read_fixture("sensor_pipeline.clef");
    auto g = elaborated(src, tlist);
    saturate(g, tlist);

    auto x86 = g.active_subgraph("x86_64");
    REQUIRE(x86.has_value());
    CHECK(x86->nodes.size() == g.nodes.size());  // everything reachable

    auto loihi = g.active_subgraph("loihi2");
    REQUIRE(loihi.has_value());
    CHECK(loihi->nodes.empty());  // no float path on the neuromorphic core

    CHECK_FALSE(g.active_subgraph("nope").has_value());

    // All-latent graph gives an empty view.
    std::vector<int> all;
    for (const auto& n : g.nodes) all.push_back(n.id);
    CHECK_FALSE(g.mark_latent(all).has_value());
    CHECK(g.active_subgraph("x86_64")->nodes.empty());
}

TEST_CASE("rendering the dump performs no annotation writes") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    auto g = elaborated(read_fixture("quire_work.clef"), tlist);
    saturate(g, tlist);
    g.reset_write_counts();
    auto text = dump(g);
    CHECK(text.find("node 0") == 0);
    for (const auto& n : g.nodes) CHECK(g.write_count(n.id) == 0);
}

TEST_CASE("dump output is stable across runs") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    auto g1 = elaborated(read_fixture("gravity_annotated.clef"), tlist);
    saturate(g1, tlist);
    auto g2 = elaborated(read_fixture("gravity_annotated.clef"), tlist);
    saturate(g2, tlist);
    CHECK(dump(g1) == dump(g2));
}

TEST_CASE("transfer edges get fidelity reports from the configured link") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64", "xilinx"});
    auto g = elaborated(read_fixture("gravity_annotated.clef"), tlist);
    saturate(g, tlist);

    const int root = g.binding_node("computeForce");
    PsgEdge t;
    t.from = root;
    t.to = root;
    t.kind = EdgeKind::Transfer;
    t.transfer_from = "xilinx";
    t.transfer_to = "x86_64";
    const int eid = g.add_edge(std::move(t));

    std::map<std::string, repr::NumericFormat> formats = {
        {"x86_64", repr::float64()},
        {"xilinx", repr::posit(32)},
    };
    auto res = targets::annotate_transfers(g, tlist, formats);
    REQUIRE(res.ok);
    const auto& report = g.edges[static_cast<std::size_t>(eid)].transfer;
    REQUIRE(report.has_value());
    CHECK(report->lossless);
    CHECK(report->fidelity == 1.0);
    CHECK(report->protocol == "BAREWire over PCIe");
    CHECK(report->from == "xilinx");

    // A link-less pair reports MissingLink.
    auto g2 = elaborated(read_fixture("gravity_annotated.clef"), tlist);
    PsgEdge t2;
    t2.from = g2.binding_node("computeForce");
    t2.to = t2.from;
    t2.kind = EdgeKind::Transfer;
    t2.transfer_from = "x86_64";
    t2.transfer_to = "x86_64";  // self link is not configured
    g2.add_edge(std::move(t2));
    auto res2 = targets::annotate_transfers(g2, tlist, formats);
    CHECK_FALSE(res2.ok);
    CHECK(res2.error.find("link") != std::string::npos);
}

TEST_CASE("poll-model conflicting memory joins flag a context dependence") {
    auto cfg = table4();
    auto tlist = subset(cfg, {"x86_64"});
    auto g = elaborated(
        "let helper (x: float<m>) = x * 2.0\n"
        "let a [<Memory: arena>] (x: float<m>) = helper x\n"
        "let b [<Memory: stack>] (x: float<m>) = helper x",
        tlist);
    saturate(g, tlist);
    bool found = false;
    for (const auto& d : g.diagnostics) {
        if (d.kind == SaturationDiagnostic::Kind::ContextDependent) {
            found = true;
            CHECK(d.call_sites.size() == 2);
            CHECK(g.node(d.node).label == "helper");
        }
    }
    CHECK(found);

    // A single consistent imposition joins silently.
    auto g2 = elaborated(
        "let helper (x: float<m>) = x * 2.0\n"
        "let a [<Memory: arena>] (x: float<m>) = helper x",
        tlist);
    saturate(g2, tlist);
    CHECK(g2.diagnostics.empty());
    CHECK(g2.node(g2.binding_node("helper")).coeffects.memory == "arena");
}
