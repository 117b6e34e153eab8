#include <doctest.h>

#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "clef/psg.hpp"
#include "support/escape_oracle.hpp"

using namespace clef;
using namespace clef::escape;
using clef::psg::EdgeKind;
using clef::psg::Psg;
using clef::psg::PsgEdge;
using clef::psg::PsgNode;

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

Psg analyzed(const std::string& src, const std::vector<targets::TargetBinding>& tb) {
    auto parsed = syntax::parse(src);
    REQUIRE_MESSAGE(parsed.ok(),
                    (parsed.error ? parsed.error->message : std::string{}));
    auto typed = infer::infer_program(syntax::desugar(std::move(*parsed.program)),
                                      dims::UnitTable::builtin());
    REQUIRE_MESSAGE(typed.ok(), (typed.error ? typed.error->message : std::string{}));
    auto g = psg::elaborate(*typed.program, tb);
    REQUIRE(g.graph.has_value());
    psg::saturate(*g.graph, tb);
    return std::move(*g.graph);
}

int find_node(const Psg& g, const std::function<bool(const PsgNode&)>& pred) {
    for (const auto& n : g.nodes) {
        if (pred(n)) return n.id;
    }
    return -1;
}

}  // namespace

TEST_CASE("returned span classifies as ReturnEscape with a connected chain") {
    auto cfg = table4();
    auto g = analyzed(read_fixture("sensor_pipeline.clef"),
                      {*cfg.find("x86_64"), *cfg.find("xilinx")});
    const int readings = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::Let && n.label == "readings";
    });
    REQUIRE(readings >= 0);
    const auto& rec = g.node(readings).escape;
    REQUIRE(rec.has_value());
    CHECK(rec->kind == EscapeKind::ReturnEscape);
    CHECK(rec->promoted_from == LifetimeLevel::Stack);
    CHECK(rec->promoted_to == LifetimeLevel::Arena);

    // The chain is a connected path from the creating node to the escape.
    REQUIRE_FALSE(rec->chain.empty());
    int at = readings;
    for (int eid : rec->chain) {
        const auto& e = g.edges[static_cast<std::size_t>(eid)];
        CHECK(e.from == at);
        at = e.to;
    }
    CHECK(g.edges[static_cast<std::size_t>(rec->chain.back())].kind ==
          EdgeKind::Return);
}

TEST_CASE("values used only inside their scope stay stack-scoped") {
    auto cfg = table4();
    auto g = analyzed(read_fixture("gravity_unannotated.clef"), {*cfg.find("x86_64")});
    const int let_g = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::Let && n.label == "g";
    });
    REQUIRE(let_g >= 0);
    REQUIRE(g.node(let_g).escape.has_value());
    CHECK(g.node(let_g).escape->kind == EscapeKind::StackScoped);
    CHECK_FALSE(g.node(let_g).escape->promoted_from.has_value());
}

TEST_CASE("a chain of closures promotes the captured value transitively") {
    auto cfg = table4();
    auto g = analyzed(read_fixture("nested_closures.clef"), {*cfg.find("x86_64")});
    const int a = find_node(g, [](const PsgNode& n) {
        return n.label == "a" && n.is_value && n.expr_id == -1;
    });
    REQUIRE(a >= 0);
    const auto& rec = g.node(a).escape;
    REQUIRE(rec.has_value());
    CHECK(rec->kind == EscapeKind::ClosureCapture);
    CHECK(rec->closure_node >= 0);
    CHECK(g.node(a).coeffects.lifetime == LifetimeLevel::Arena);
    CHECK(rec->promoted_from == LifetimeLevel::Stack);
    CHECK(rec->promoted_to == LifetimeLevel::Arena);
    // The capturing lambda itself was promoted because it is returned.
    const auto& lam = g.node(rec->closure_node);
    REQUIRE(lam.escape.has_value());
    CHECK(lam.escape->kind == EscapeKind::ReturnEscape);
    CHECK(lam.coeffects.lifetime == LifetimeLevel::Arena);
}

TEST_CASE("storing through a byref parameter escapes to the reference origin") {
    auto cfg = table4();
    auto g = analyzed(
        "let store (out: byref<Span<float<m>>>) (xs: Span<float<m>>) =\n"
        "    let doubled = xs |> Span.map (fun s -> s * 2.0)\n"
        "    out <- doubled",
        {*cfg.find("x86_64")});
    const int doubled = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::Let && n.label == "doubled";
    });
    REQUIRE(doubled >= 0);
    const auto& rec = g.node(doubled).escape;
    REQUIRE(rec.has_value());
    CHECK(rec->kind == EscapeKind::ByRefEscape);
    CHECK(rec->promoted_to == LifetimeLevel::Arena);
}

TEST_CASE("scalar returns are copies, not escapes") {
    auto cfg = table4();
    auto g = analyzed("let f (x: float<m>) = x * 2.0", {*cfg.find("x86_64")});
    for (const auto& n : g.nodes) {
        if (!n.escape) continue;
        CHECK(n.escape->kind == EscapeKind::StackScoped);
    }
}

TEST_CASE("allocation strategy maps every class and tracks target regions") {
    auto cfg = table4();
    const auto& x86 = *cfg.find("x86_64");
    const auto& loihi = *cfg.find("loihi2");

    EscapeRecord stack_rec;
    stack_rec.kind = EscapeKind::StackScoped;
    auto d1 = allocation_strategy(stack_rec, x86);
    CHECK(d1.level == LifetimeLevel::Stack);
    CHECK(d1.region.tag == "stack");
    CHECK(d1.scope_note == "lexical scope");
    // Constrained targets override the region; the class is target-invariant.
    auto d2 = allocation_strategy(stack_rec, loihi);
    CHECK(d2.level == LifetimeLevel::Stack);
    CHECK(d2.region.tag == "scratchpad");

    EscapeRecord ret_rec;
    ret_rec.kind = EscapeKind::ReturnEscape;
    ret_rec.promoted_from = LifetimeLevel::Stack;
    ret_rec.promoted_to = LifetimeLevel::Arena;
    auto d3 = allocation_strategy(ret_rec, x86);
    CHECK(d3.level == LifetimeLevel::Arena);
    CHECK(d3.region.tag == "arena");
    CHECK(d3.scope_note == "caller's scope");

    EscapeRecord cap_rec;
    cap_rec.kind = EscapeKind::ClosureCapture;
    cap_rec.promoted_from = LifetimeLevel::Stack;
    cap_rec.promoted_to = LifetimeLevel::Arena;
    CHECK(allocation_strategy(cap_rec, x86).scope_note == "closure environment");

    EscapeRecord byref_rec;
    byref_rec.kind = EscapeKind::ByRefEscape;
    byref_rec.promoted_from = LifetimeLevel::Stack;
    byref_rec.promoted_to = LifetimeLevel::Arena;
    CHECK(allocation_strategy(byref_rec, x86).scope_note ==
          "origin scope of the reference");
}

TEST_CASE("restructuring suggestions follow the escape kind") {
    auto cfg = table4();
    auto g = analyzed(read_fixture("sensor_pipeline.clef"),
                      {*cfg.find("x86_64"), *cfg.find("xilinx")});
    const int readings = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::Let && n.label == "readings";
    });
    auto s = suggest_restructurings(g, readings);
    REQUIRE(s.size() == 3);
    CHECK(s[0].kind == Suggestion::Kind::CallerBuffer);
    CHECK(s[0].cost_note == "zero allocation");
    CHECK(s[1].kind == Suggestion::Kind::ContinuationStyle);
    CHECK(s[1].cost_note == "stack locality preserved");
    CHECK(s[2].kind == Suggestion::Kind::ExplicitAnnotation);
    CHECK(s[2].cost_note == "declared intent");

    // Non-promoted nodes produce nothing.
    const int let_g = find_node(g, [](const PsgNode& n) {
        return n.expr_kind == syntax::ExprKind::Let && n.label == "summary";
    });
    CHECK(suggest_restructurings(g, let_g).empty());

    // Closure capture: continuation + annotation.
    auto g2 = analyzed(read_fixture("nested_closures.clef"), {*cfg.find("x86_64")});
    const int a = find_node(g2, [](const PsgNode& n) {
        return n.label == "a" && n.is_value && n.expr_id == -1;
    });
    auto s2 = suggest_restructurings(g2, a);
    REQUIRE(s2.size() == 2);
    CHECK(s2[0].kind == Suggestion::Kind::ContinuationStyle);
    CHECK(s2[1].kind == Suggestion::Kind::ExplicitAnnotation);
}

TEST_CASE("ad signatures match the two differentiation modes") {
    auto fwd = ad_signature(AdMode::Forward);
    CHECK(fwd.tape_required == false);
    CHECK(fwd.aux_memory == AuxMemory::ConstantPerLayer);
    auto rev = ad_signature(AdMode::Reverse);
    CHECK(rev.tape_required == true);
    CHECK(rev.aux_memory == AuxMemory::LinearInDepth);
}

TEST_CASE("forward-mode tape check holds exactly when nothing escapes") {
    // Hand-built region: a frame with three stack values chained by alias
    // edges into a block-scoped consumer.
    Psg g;
    const int fn_scope = g.add_scope(psg::Scope::Kind::Function, 0);
    const int region_scope = g.add_scope(psg::Scope::Kind::Block, fn_scope);

    auto value_node = [&](int scope) {
        PsgNode n;
        n.is_value = true;
        n.scope = scope;
        n.type = infer::Type::span_of(infer::Type::float_dim({}));
        return g.add_node(std::move(n));
    };
    const int a = value_node(region_scope);
    const int b = value_node(region_scope);
    const int c = value_node(region_scope);
    g.add_edge({-1, a, b, EdgeKind::DataDep, 0, true});
    g.add_edge({-1, b, c, EdgeKind::DataDep, 0, false});
    CHECK(verify_forward_no_tape(g, {a, b, c}, region_scope));

    // Injecting a return escape through the region boundary flips the check.
    PsgNode binding;
    binding.is_binding = true;
    binding.scope = 0;
    const int owner = g.add_node(std::move(binding));
    g.add_edge({-1, c, owner, EdgeKind::Return, 0, false});
    CHECK_FALSE(verify_forward_no_tape(g, {a, b, c}, region_scope));
}

TEST_CASE("classify and promote agree with the path-enumeration oracle") {
    std::mt19937 rng(61);
    int graphs = 0, nodes_checked = 0;
    for (int iter = 0; iter < 500; ++iter) {
        auto gen = escape_oracle::random_graph(rng);
        Psg& g = gen.g;
        promote(g);
        escape_oracle::Oracle oracle{g, {}};
        for (int id : gen.values) {
            const auto expect = oracle.classify(id);
            const auto expect_lt = oracle.lifetime_of(id);
            const auto& got = g.node(id).escape;
            REQUIRE(got.has_value());
            CHECK_MESSAGE(got->kind == expect.kind, "iter ", iter, " node ", id);
            CHECK_MESSAGE(g.node(id).coeffects.lifetime == expect_lt, "iter ", iter,
                          " node ", id);
            ++nodes_checked;
        }
        ++graphs;

        // Promotion is monotone and idempotent: a second run changes nothing.
        std::vector<LifetimeLevel> before;
        for (const auto& node : g.nodes) before.push_back(node.coeffects.lifetime);
        promote(g);
        for (const auto& node : g.nodes) {
            CHECK(node.coeffects.lifetime ==
                  before[static_cast<std::size_t>(node.id)]);
        }
    }
    CHECK(graphs == 500);
    CHECK(nodes_checked > 2000);
}

TEST_CASE("escape classification is identical across targets") {
    auto cfg = table4();
    auto g1 = analyzed(read_fixture("sensor_pipeline.clef"), {*cfg.find("x86_64")});
    auto g2 = analyzed(read_fixture("sensor_pipeline.clef"),
                       {*cfg.find("xilinx"), *cfg.find("loihi2")});
    REQUIRE(g1.nodes.size() == g2.nodes.size());
    for (std::size_t i = 0; i < g1.nodes.size(); ++i) {
        const auto& a = g1.nodes[i].escape;
        const auto& b = g2.nodes[i].escape;
        CHECK(a.has_value() == b.has_value());
        if (a && b) CHECK(a->kind == b->kind);
    }
}
