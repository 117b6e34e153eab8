// Acceptance suite: end-to-end checks over the worked examples and the
// property suites, with time budgets. One PASS/FAIL line per criterion; the
// exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "clef/report.hpp"
#include "support/dim_system_oracle.hpp"
#include "support/escape_oracle.hpp"
#include "support/posit_oracle.hpp"
#include "support/selection_oracle.hpp"

using namespace clef;

namespace {

struct Harness {
    int failures = 0;

    void run(const std::string& name, double budget_seconds,
             const std::function<bool(std::string&)>& body) {
        std::string why;
        const auto start = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = body(why);
        } catch (const std::exception& e) {
            why = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        if (ok && elapsed > budget_seconds) {
            ok = false;
            why = "time budget exceeded";
        }
        std::printf("%s %s (%.2fs)\n", ok ? "PASS" : "FAIL", name.c_str(), elapsed);
        if (!ok) {
            if (!why.empty()) std::printf("     %s\n", why.c_str());
            ++failures;
        }
    }
};

std::string golden_dir() { return std::string(CLEF_TEST_DIR) + "/golden/"; }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

driver::CheckResult check(const std::string& source, const std::string& config,
                          const std::string& show = "all") {
    driver::CheckOptions opts;
    opts.source_path = golden_dir() + source;
    opts.config_path = golden_dir() + config;
    opts.show = show;
    return driver::run_check(opts);
}

bool golden_matches(const std::string& actual, const std::string& name,
                    std::string& why) {
    std::string got = actual;
    if (!got.empty() && got.back() != '\n') got += "\n";
    const std::string expected = read_file(golden_dir() + "expected/" + name);
    if (got != expected) {
        why = "output differs from expected/" + name;
        return false;
    }
    return true;
}

dims::Dimension base(dims::BaseDimension b, int e = 1) {
    return dims::Dimension::base(b, e);
}

infer::TypedProgram infer_fixture(const std::string& name, std::string& why) {
    auto parsed = syntax::parse(read_file(golden_dir() + name));
    if (!parsed.ok()) {
        why = "parse failed";
        return {};
    }
    auto typed = infer::infer_program(syntax::desugar(std::move(*parsed.program)),
                                      dims::UnitTable::builtin());
    if (!typed.ok()) {
        why = "inference failed: " + typed.error->message;
        return {};
    }
    return std::move(*typed.program);
}

// --- criteria ---------------------------------------------------------------

bool gravity_inference_criterion(std::string& why) {
    using B = dims::BaseDimension;
    auto tp = infer_fixture("gravity_unannotated.clef", why);
    if (!why.empty()) return false;
    const auto& scheme = tp.bindings[0].scheme;
    if (scheme.dim_vars.size() != 4) {
        why = "expected a scheme polymorphic in four dimension variables";
        return false;
    }

    // Instantiate at (kg, kg, m) with the return annotated newtons.
    const auto newtons =
        dims::dim_mul(dims::dim_mul(base(B::Length), base(B::Time, -2)), base(B::Mass));
    infer::Type mono = infer::Type::arrow(
        infer::Type::float_dim(base(B::Mass)),
        infer::Type::arrow(
            infer::Type::float_dim(base(B::Mass)),
            infer::Type::arrow(infer::Type::float_dim(base(B::Length)),
                               infer::Type::float_dim(newtons))));
    dims::VarSupply supply;
    auto match = infer::match_instance(scheme, mono, supply);
    if (!match.ok) {
        why = "the annotated monotype is not an instance of the inferred scheme";
        return false;
    }
    const dims::DimensionVariable* dg = nullptr;
    for (const auto& v : scheme.dim_vars) {
        if (v.name_hint == "g") dg = &v;
    }
    if (dg == nullptr) {
        why = "no quantified variable for the gravitational constant";
        return false;
    }
    const auto grav = dims::dim_mul(
        dims::dim_mul(base(B::Length, 3), base(B::Mass, -1)), base(B::Time, -2));
    if (!(match.dim_assignment.at(dg->id) == grav)) {
        why = "'d_g did not resolve to m^3 kg^-1 s^-2";
        return false;
    }
    // Return dimension: exact symbolic newtons = kg m s^-2 by construction of
    // the instance; verify once more through the assignment.
    dims::Dimension ret = grav;
    ret = dims::dim_mul(ret, base(B::Mass));
    ret = dims::dim_mul(ret, base(B::Mass));
    ret = dims::dim_mul(ret, base(B::Length, -2));
    if (!(ret == newtons)) {
        why = "return dimension is not kg m s^-2";
        return false;
    }
    return true;
}

bool sensor_escape_criterion(std::string& why) {
    auto r = check("sensor_pipeline.clef", "two_target.cfg", "escapes");
    if (r.exit_code != 0) {
        why = "check exited nonzero";
        return false;
    }
    if (!golden_matches(r.output, "sensor_pipeline_escapes.txt", why)) return false;
    if (r.report->escapes.size() != 1) {
        why = "expected exactly one escape diagnostic";
        return false;
    }
    const auto& e = r.report->escapes[0];
    if (e.value_name != "readings" ||
        e.record.kind != escape::EscapeKind::ReturnEscape ||
        e.record.promoted_from != LifetimeLevel::Stack ||
        e.record.promoted_to != LifetimeLevel::Arena || e.suggestions.size() != 3) {
        why = "readings must be ReturnEscape, stack -> arena, with 3 suggestions";
        return false;
    }
    if (e.suggestions[0].cost_note != "zero allocation" ||
        e.suggestions[1].cost_note != "stack locality preserved" ||
        e.suggestions[2].cost_note != "declared intent") {
        why = "suggestion set is not caller buffer / CPS / explicit annotation";
        return false;
    }
    return true;
}

bool two_target_display_criterion(std::string& why) {
    auto r = check("gravity_annotated.clef", "two_target.cfg");
    if (r.exit_code != 0) {
        why = "check exited nonzero";
        return false;
    }
    if (!golden_matches(r.output, "gravity_annotated.txt", why)) return false;

    const auto& b = r.report->bindings[0];
    const auto* x86 = &b.targets[0];
    const auto* fpga = &b.targets[1];
    if (x86->target != "x86_64" || !x86->format ||
        !(*x86->format == repr::float64())) {
        why = "x86_64 did not select float64";
        return false;
    }
    if (fpga->target != "xilinx" || !fpga->format ||
        !(*fpga->format == repr::posit(32))) {
        why = "xilinx did not select posit32";
        return false;
    }
    // posit32 range check over [1e-2, 1e25].
    const auto range = repr::representable_range(repr::posit(32));
    if (!(range.lo <= 1e-2 && 1e25 <= range.hi)) {
        why = "posit32 range check failed for [1e-2, 1e25]";
        return false;
    }
    // Transfer xilinx -> x86_64 lossless at fidelity 1.0.
    bool transfer_ok = false;
    for (const auto& t : b.transfers) {
        if (t.report.from == "xilinx" && t.report.to == "x86_64" &&
            t.report.lossless && t.report.fidelity == 1.0) {
            transfer_ok = true;
        }
    }
    if (!transfer_ok) {
        why = "no lossless xilinx -> x86_64 transfer at fidelity 1.0";
        return false;
    }
    // Analytic error figures within one decade of the reported approximations
    // (~1.5e-9 near the peak, ~3.9e-3 at the extremes).
    double near_peak = fpga->profile->summary;
    for (const auto& d : fpga->profile->decades) {
        near_peak = std::min(near_peak, d.worst_rel_error);
    }
    const double extremes = fpga->profile->summary;
    if (!(near_peak >= 1.5e-10 && near_peak <= 1.5e-8)) {
        why = "near-peak figure outside one decade of 1.5e-9";
        return false;
    }
    if (!(extremes >= 3.9e-4 && extremes <= 3.9e-2)) {
        why = "extreme-range figure outside one decade of 3.9e-3";
        return false;
    }
    return true;
}

bool range_warning_reproduction(std::string& why) {
    auto r = check("astronomical.clef", "posit_only.cfg");
    if (!golden_matches(r.output, "astronomical.txt", why)) return false;
    if (r.output.find("does not cover") == std::string::npos ||
        r.output.find("scaling to AU") == std::string::npos) {
        why = "missing does-not-cover warning or rescaling suggestion";
        return false;
    }
    return true;
}

bool quire_spec_criterion(std::string& why) {
    auto q = repr::quire_spec(32, 64);
    if (!q || q->bits != 512 || q->bytes != 64 || q->cache_lines != 1) {
        why = "quire_spec(32) is not 512 bits / 64 bytes / 1 cache line";
        return false;
    }
    // The loihi2 row of the target matrix fails saturation with a capability
    // error.
    auto r = check("quire_work.clef", "quire_matrix.cfg");
    if (r.exit_code != 1) {
        why = "expected exit 1 from the capability failure";
        return false;
    }
    bool found = false;
    for (const auto& issue : r.report->issues) {
        if (issue.severity == report::Issue::Severity::Error &&
            issue.message.find("loihi2") != std::string::npos &&
            issue.message.find("quire") != std::string::npos) {
            found = true;
        }
    }
    if (!found) {
        why = "no CapabilityError naming loihi2 and quire";
        return false;
    }
    return true;
}

bool quire_exactness(std::string& why) {
    std::mt19937 rng(20260810);
    std::uniform_int_distribution<std::uint64_t> code(0, 255);
    std::uniform_int_distribution<int> len(1, 32);

    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> products;
        const int count = len(rng);
        mpq_class exact(0);
        for (int i = 0; i < count; ++i) {
            std::uint64_t a = code(rng), b = code(rng);
            if (a == 0x80) a = 0x40;
            if (b == 0x80) b = 0x40;
            products.push_back({a, b});
            auto term = [&](std::uint64_t c) -> mpq_class {
                if (c == 0) return 0;
                const bool neg = c & 0x80;
                const std::uint64_t mag = neg ? ((~c + 1) & 0xFF) : c;
                mpq_class v = oracle::posit_value(8, 2, mag);
                return neg ? mpq_class(-v) : v;
            };
            exact += term(a) * term(b);
        }
        auto run = repr::quire_accumulate(8, products);
        if (!run.posit_bits) {
            why = "quire accumulation failed at iteration " + std::to_string(iter);
            return false;
        }
        if (*run.posit_bits != oracle::round_to_posit(8, 2, exact)) {
            why = "quire result differs from round(exact sum) at iteration " +
                  std::to_string(iter);
            return false;
        }
    }

    // Adversarial search: naive per-step rounding must diverge somewhere.
    auto p8 = repr::posit(8);
    auto naive = [&](const std::vector<std::pair<std::uint64_t, std::uint64_t>>& ps) {
        std::uint64_t acc = 0;
        for (const auto& [a, b] : ps) {
            const double prod = *repr::decode(p8, a).value * *repr::decode(p8, b).value;
            const std::uint64_t pb = *repr::encode(p8, prod).bits;
            const double sum =
                *repr::decode(p8, acc).value + *repr::decode(p8, pb).value;
            acc = *repr::encode(p8, sum).bits;
        }
        return acc;
    };
    std::uniform_int_distribution<std::uint64_t> pos(1, 127);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> ps;
        for (int i = 0; i < 8; ++i) ps.push_back({pos(rng), pos(rng)});
        auto run = repr::quire_accumulate(8, ps);
        if (run.posit_bits && *run.posit_bits != naive(ps)) return true;
    }
    why = "no product list separated the quire from naive sequential rounding";
    return false;
}

bool selection_oracle_equivalence(std::string& why) {
    std::mt19937 rng(67);
    std::uniform_int_distribution<int> decade(-6, 6);
    const std::vector<repr::NumericFormat> candidates = {
        repr::posit(8), repr::posit(16), repr::float32()};

    for (int iter = 0; iter < 200; ++iter) {
        int a = decade(rng), b = decade(rng);
        if (a > b) std::swap(a, b);
        const double lo = std::pow(10.0, a), hi = std::pow(10.0, b);

        std::vector<std::pair<double, std::size_t>> viable;
        if (selection_oracle::posit_covers(8, lo, hi)) {
            viable.push_back({selection_oracle::posit_summary(8, lo, hi), 0});
        }
        if (selection_oracle::posit_covers(16, lo, hi)) {
            viable.push_back({selection_oracle::posit_summary(16, lo, hi), 1});
        }
        if (selection_oracle::f32_covers(lo, hi)) {
            viable.push_back({selection_oracle::f32_summary(lo, hi), 2});
        }

        auto prod = repr::select_representation({lo, hi, true}, candidates);
        if (viable.empty()) {
            if (prod.ok()) {
                why = "oracle found no viable candidate but selection did";
                return false;
            }
            continue;
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < viable.size(); ++i) {
            if (viable[i].first < viable[best].first) best = i;
        }
        if (!prod.ok() || !(*prod.format == candidates[viable[best].second])) {
            why = "selection disagrees with the brute-force oracle at iteration " +
                  std::to_string(iter);
            return false;
        }
    }
    return true;
}

bool unification_suite(std::string& why) {
    std::mt19937 rng(71);
    long cases = 0;

    // Group laws.
    {
        auto random_dim = [&](dims::VarSupply& supply) {
            std::uniform_int_distribution<int> e(-8, 8);
            std::uniform_int_distribution<int> which(0, 6);
            dims::Dimension d = base(static_cast<dims::BaseDimension>(which(rng)),
                                     e(rng));
            d = dims::dim_mul(
                d, base(static_cast<dims::BaseDimension>(which(rng)), e(rng)));
            if (which(rng) == 0) {
                d = dims::dim_mul(d, dims::Dimension::variable(supply.fresh(), e(rng)));
            }
            return d;
        };
        dims::VarSupply supply;
        for (int i = 0; i < 4450; ++i) {
            auto a = random_dim(supply), b = random_dim(supply), c = random_dim(supply);
            if (!(dims::dim_mul(a, b) == dims::dim_mul(b, a)) ||
                !(dims::dim_mul(dims::dim_mul(a, b), c) ==
                  dims::dim_mul(a, dims::dim_mul(b, c))) ||
                !dims::dim_mul(a, dims::dim_pow(a, -1)).is_dimensionless()) {
                why = "group law violated";
                return false;
            }
            ++cases;
        }
    }

    // Substitution idempotence and apply-and-check.
    {
        std::uniform_int_distribution<int> nv(1, 4), ne(1, 4);
        for (int i = 0; i < 5000; ++i) {
            auto sys = dimsys::random_system(rng, nv(rng), ne(rng), 3);
            dims::VarSupply supply;
            std::vector<dims::DimensionVariable> vars;
            for (int j = 0; j < sys.nvars; ++j) vars.push_back(supply.fresh());
            auto eqs = dimsys::to_equations(sys, vars);
            auto r = dims::dim_unify(eqs, supply);
            ++cases;
            if (!r.ok()) continue;
            for (const auto& v : vars) {
                auto once = r.substitution->apply(dims::Dimension::variable(v));
                if (!(r.substitution->apply(once) == once)) {
                    why = "substitution is not idempotent";
                    return false;
                }
            }
            for (const auto& eq : eqs) {
                if (!dims::dim_div(r.substitution->apply(eq.lhs),
                                   r.substitution->apply(eq.rhs))
                         .is_dimensionless()) {
                    why = "substitution does not solve its own system";
                    return false;
                }
            }
        }
    }

    // Principality against exhaustive enumeration.
    {
        long enumerated = 0;
        for (int iter = 0; iter < 550; ++iter) {
            const int nvars = (iter % 10 == 0) ? 4 : 3;
            const int bound = 3;
            auto sys = dimsys::random_system(rng, nvars, 2, 2);
            dims::VarSupply supply;
            std::vector<dims::DimensionVariable> vars;
            for (int j = 0; j < sys.nvars; ++j) vars.push_back(supply.fresh());
            auto r = dims::dim_unify(dimsys::to_equations(sys, vars), supply);
            ++cases;

            std::vector<std::array<int, 2>> sol(static_cast<std::size_t>(nvars));
            const int radix = 2 * bound + 1;
            long total = 1;
            for (int k = 0; k < nvars * 2; ++k) total *= radix;
            for (long code = 0; code < total; ++code) {
                long c = code;
                for (int k = 0; k < nvars; ++k) {
                    sol[static_cast<std::size_t>(k)][0] =
                        static_cast<int>(c % radix) - bound;
                    c /= radix;
                    sol[static_cast<std::size_t>(k)][1] =
                        static_cast<int>(c % radix) - bound;
                    c /= radix;
                }
                if (!dimsys::satisfies(sys, sol)) continue;
                ++enumerated;
                if (!r.ok()) {
                    why = "enumeration found a solution the solver called inconsistent";
                    return false;
                }
                if (!dimsys::is_instance(*r.substitution, vars, sol)) {
                    why = "an enumerated solution is not an instance of the result";
                    return false;
                }
            }
        }
        if (enumerated < 100) {
            why = "enumeration exercised too few solutions";
            return false;
        }
    }

    if (cases < 10000) {
        why = "fewer than 10,000 random cases ran (" + std::to_string(cases) + ")";
        return false;
    }
    return true;
}

bool escape_oracle_equivalence(std::string& why) {
    std::mt19937 rng(73);
    for (int iter = 0; iter < 500; ++iter) {
        auto gen = escape_oracle::random_graph(rng);
        psg::Psg& g = gen.g;
        escape::promote(g);
        escape_oracle::Oracle oracle{g, {}};
        for (int id : gen.values) {
            const auto expect = oracle.classify(id);
            const auto& got = g.node(id).escape;
            if (!got || got->kind != expect.kind) {
                why = "classification mismatch at graph " + std::to_string(iter);
                return false;
            }
            if (g.node(id).coeffects.lifetime != oracle.lifetime_of(id)) {
                why = "promotion mismatch at graph " + std::to_string(iter);
                return false;
            }
        }
        std::vector<LifetimeLevel> before;
        for (const auto& n : g.nodes) before.push_back(n.coeffects.lifetime);
        escape::promote(g);
        for (const auto& n : g.nodes) {
            if (n.coeffects.lifetime != before[static_cast<std::size_t>(n.id)]) {
                why = "promote is not an idempotent fixpoint";
                return false;
            }
        }
    }
    return true;
}

bool three_state_round_trip(std::string& why) {
    auto parsed = syntax::parse(read_file(golden_dir() + "sensor_pipeline.clef"));
    auto typed = infer::infer_program(syntax::desugar(std::move(*parsed.program)),
                                      dims::UnitTable::builtin());
    auto cfg = targets::load_config(golden_dir() + "table4.cfg");
    std::vector<targets::TargetBinding> tlist = {*cfg.config->find("x86_64"),
                                                 *cfg.config->find("xilinx")};
    auto el = psg::elaborate(*typed.program, tlist);
    auto& g = *el.graph;
    psg::saturate(g, tlist);

    struct Snapshot {
        std::optional<infer::Type> type;
        std::optional<dims::Dimension> dim;
        psg::CoeffectRecord coeff;
        std::optional<escape::EscapeRecord> esc;
        std::uint64_t reach;
    };
    std::vector<Snapshot> before;
    for (const auto& n : g.nodes) {
        before.push_back({n.type, n.dimension, n.coeffects, n.escape, n.reachability});
    }
    g.reset_write_counts();

    std::vector<int> set;
    for (const auto& n : g.nodes) {
        if (n.binding_index == 2) set.push_back(n.id);
    }
    if (g.mark_latent(set) || g.reactivate(set)) {
        why = "transition rejected";
        return false;
    }
    for (const auto& n : g.nodes) {
        const auto& s = before[static_cast<std::size_t>(n.id)];
        if (!(n.type == s.type) || !(n.dimension == s.dim) || !(n.coeffects == s.coeff) ||
            !(n.escape == s.esc) || n.reachability != s.reach ||
            n.state != psg::NodeState::Live) {
            why = "annotations changed across the round trip";
            return false;
        }
        if (g.write_count(n.id) != 0) {
            why = "annotation write counter nonzero on node " + std::to_string(n.id);
            return false;
        }
    }
    return true;
}

bool gradient_closure(std::string& why) {
    std::mt19937 rng(79);
    std::uniform_int_distribution<int> e(-8, 8);
    std::uniform_int_distribution<int> which(0, 6);
    auto random_dim = [&] {
        dims::Dimension d = base(static_cast<dims::BaseDimension>(which(rng)), e(rng));
        return dims::dim_mul(
            d, base(static_cast<dims::BaseDimension>(which(rng)), e(rng)));
    };
    for (int i = 0; i < 10000; ++i) {
        auto d1 = random_dim(), d2 = random_dim(), d3 = random_dim();
        auto lhs = dims::dim_mul(dims::gradient_dimension(d3, d2),
                                 dims::gradient_dimension(d2, d1));
        if (!(lhs == dims::gradient_dimension(d3, d1))) {
            why = "chain-rule composition violated";
            return false;
        }
    }

    // Forward-mode signature and the tape-free region check.
    auto fwd = escape::ad_signature(escape::AdMode::Forward);
    auto rev = escape::ad_signature(escape::AdMode::Reverse);
    if (fwd.tape_required || fwd.aux_memory != escape::AuxMemory::ConstantPerLayer ||
        !rev.tape_required || rev.aux_memory != escape::AuxMemory::LinearInDepth) {
        why = "AD coeffect signatures are wrong";
        return false;
    }

    psg::Psg g;
    const int fn = g.add_scope(psg::Scope::Kind::Function, 0);
    const int region = g.add_scope(psg::Scope::Kind::Block, fn);
    auto value = [&](int scope) {
        psg::PsgNode n;
        n.is_value = true;
        n.scope = scope;
        n.type = infer::Type::span_of(infer::Type::float_dim({}));
        return g.add_node(std::move(n));
    };
    const int a = value(region), b = value(region), c = value(region);
    g.add_edge({-1, a, b, psg::EdgeKind::DataDep, 0, true});
    g.add_edge({-1, b, c, psg::EdgeKind::DataDep, 0, false});
    if (!escape::verify_forward_no_tape(g, {a, b, c}, region)) {
        why = "tape-free region did not verify";
        return false;
    }
    psg::PsgNode owner;
    owner.is_binding = true;
    owner.scope = 0;
    const int owner_id = g.add_node(std::move(owner));
    g.add_edge({-1, c, owner_id, psg::EdgeKind::Return, 0, false});
    if (escape::verify_forward_no_tape(g, {a, b, c}, region)) {
        why = "region with an injected ReturnEscape still verified";
        return false;
    }
    return true;
}

}  // namespace

int main() {
    Harness h;
    h.run("gravity-polymorphic-inference", 1.0, gravity_inference_criterion);
    h.run("sensor-span-escape-promotion", 1.0, sensor_escape_criterion);
    h.run("two-target-resolution-display", 5.0, two_target_display_criterion);
    h.run("posit-range-warning-with-rescale", 5.0, range_warning_reproduction);
    h.run("quire-spec-and-capability-failure", 5.0, quire_spec_criterion);
    h.run("quire-exactness-vs-rational-oracle", 10.0, quire_exactness);
    h.run("selection-matches-brute-force", 30.0, selection_oracle_equivalence);
    h.run("unification-property-suite", 60.0, unification_suite);
    h.run("escape-oracle-equivalence", 30.0, escape_oracle_equivalence);
    h.run("three-state-round-trip", 5.0, three_state_round_trip);
    h.run("gradient-dimension-closure", 1.0, gradient_closure);
    if (h.failures == 0) {
        std::printf("all acceptance criteria passed\n");
    } else {
        std::printf("%d criteria failed\n", h.failures);
    }
    return h.failures;
}
