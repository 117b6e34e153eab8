#include <doctest.h>

#include <array>
#include <random>
#include <vector>

#include "clef/dims.hpp"
#include "support/dim_system_oracle.hpp"

using namespace clef::dims;

namespace {

Dimension length(int e = 1) { return Dimension::base(BaseDimension::Length, e); }
Dimension time_d(int e = 1) { return Dimension::base(BaseDimension::Time, e); }
Dimension mass(int e = 1) { return Dimension::base(BaseDimension::Mass, e); }

Dimension velocity() { return dim_mul(length(1), time_d(-1)); }
Dimension force() { return dim_mul(dim_mul(length(1), time_d(-2)), mass(1)); }
Dimension joules() { return dim_mul(dim_mul(length(2), time_d(-2)), mass(1)); }

Dimension random_dimension(std::mt19937& rng, VarSupply* supply, int max_abs = 8) {
    std::uniform_int_distribution<int> exp_dist(-max_abs, max_abs);
    std::uniform_int_distribution<int> count_dist(0, 3);
    Dimension d;
    int nbases = count_dist(rng);
    for (int i = 0; i < nbases; ++i) {
        std::uniform_int_distribution<int> base_dist(0, kBaseDimensionCount - 1);
        d = dim_mul(d, Dimension::base(static_cast<BaseDimension>(base_dist(rng)),
                                       exp_dist(rng)));
    }
    if (supply != nullptr && count_dist(rng) == 0) {
        d = dim_mul(d, Dimension::variable(supply->fresh(), exp_dist(rng)));
    }
    return d;
}

}  // namespace

TEST_CASE("dim_mul matches the worked velocity and force products") {
    // velocity * time = length
    CHECK(dim_mul(velocity(), time_d(1)) == length(1));
    // identity element
    std::mt19937 rng(7);
    for (int i = 0; i < 100; ++i) {
        Dimension d = random_dimension(rng, nullptr);
        CHECK(dim_mul(d, Dimension::dimensionless()) == d);
    }
    // mass * acceleration = force, exponent vector (1, -2, 1, 0, ...)
    Dimension accel = dim_mul(length(1), time_d(-2));
    Dimension f = dim_mul(mass(1), accel);
    CHECK(f == force());
    CHECK(f.exponent_of(BaseDimension::Length) == 1);
    CHECK(f.exponent_of(BaseDimension::Time) == -2);
    CHECK(f.exponent_of(BaseDimension::Mass) == 1);
}

TEST_CASE("dim_div subtracts exponent vectors") {
    std::mt19937 rng(11);
    for (int i = 0; i < 100; ++i) {
        Dimension d = random_dimension(rng, nullptr);
        CHECK(dim_div(d, d) == Dimension::dimensionless());
    }
    // newtons / kg = acceleration: (1,-2,1) - (0,0,1) = (1,-2,0)
    CHECK(dim_div(force(), mass(1)) == dim_mul(length(1), time_d(-2)));
    // joules / seconds: (2,-2,1) - (0,1,0) = (2,-3,1)
    Dimension watts = dim_div(joules(), time_d(1));
    CHECK(watts.exponent_of(BaseDimension::Length) == 2);
    CHECK(watts.exponent_of(BaseDimension::Time) == -3);
    CHECK(watts.exponent_of(BaseDimension::Mass) == 1);
}

TEST_CASE("dim_pow scales exponents") {
    CHECK(dim_pow(length(2), 1) == length(2));
    CHECK(dim_pow(length(1), 2) == length(2));  // the r*r denominator
    Dimension v_inv = dim_pow(velocity(), -1);
    CHECK(v_inv == dim_mul(length(-1), time_d(1)));
    std::mt19937 rng(13);
    for (int i = 0; i < 100; ++i) {
        CHECK(dim_pow(random_dimension(rng, nullptr), 0) == Dimension::dimensionless());
    }
}

TEST_CASE("group laws hold for random dimensions") {
    std::mt19937 rng(17);
    VarSupply supply;
    for (int i = 0; i < 2000; ++i) {
        Dimension a = random_dimension(rng, &supply);
        Dimension b = random_dimension(rng, &supply);
        Dimension c = random_dimension(rng, &supply);
        CHECK(dim_mul(a, b) == dim_mul(b, a));
        CHECK(dim_mul(dim_mul(a, b), c) == dim_mul(a, dim_mul(b, c)));
        CHECK(dim_mul(a, dim_pow(a, -1)) == Dimension::dimensionless());
    }
}

TEST_CASE("gradient_dimension and the chain rule") {
    Dimension loss = joules();  // stand-in loss dimension
    Dimension d = mass(1);
    CHECK(gradient_dimension(loss, d) == dim_div(loss, d));
    CHECK(gradient_dimension(loss, Dimension::dimensionless()) == loss);

    std::mt19937 rng(19);
    for (int i = 0; i < 2000; ++i) {
        Dimension d1 = random_dimension(rng, nullptr);
        Dimension d2 = random_dimension(rng, nullptr);
        Dimension d3 = random_dimension(rng, nullptr);
        Dimension lhs = dim_mul(gradient_dimension(d3, d2), gradient_dimension(d2, d1));
        CHECK(lhs == gradient_dimension(d3, d1));
    }
}

// =============================================================================
// dim_unify
// =============================================================================

namespace {

DimEquation eq(Dimension lhs, Dimension rhs) {
    return DimEquation{std::move(lhs), std::move(rhs), {}, {}, ""};
}

}  // namespace

TEST_CASE("trivial unification cases") {
    VarSupply supply;
    DimensionVariable a = supply.fresh({}, "a");

    auto r = dim_unify({eq(Dimension::variable(a), Dimension::variable(a))}, supply);
    REQUIRE(r.ok());
    CHECK(r.substitution->empty());
}

TEST_CASE("the gravitational constraint chain resolves to newtons") {
    VarSupply supply;
    DimensionVariable dg = supply.fresh({}, "g");
    DimensionVariable dm1 = supply.fresh({}, "m1");
    DimensionVariable dm2 = supply.fresh({}, "m2");
    DimensionVariable dd = supply.fresh({}, "dist");

    // d(return) = dg + dm1 + dm2 - 2*dd with the instantiations
    // dm1 = kg, dm2 = kg, dd = m, dg = m^3 kg^-1 s^-2.
    Dimension grav = dim_mul(dim_mul(length(3), mass(-1)), time_d(-2));
    std::vector<DimEquation> eqs = {
        eq(Dimension::variable(dm1), mass(1)),
        eq(Dimension::variable(dm2), mass(1)),
        eq(Dimension::variable(dd), length(1)),
        eq(Dimension::variable(dg), grav),
    };
    auto r = dim_unify(eqs, supply);
    REQUIRE(r.ok());

    Dimension ret = r.substitution->apply(dim_mul(
        dim_mul(Dimension::variable(dg), Dimension::variable(dm1)),
        dim_mul(Dimension::variable(dm2), Dimension::variable(dd, -2))));
    CHECK(ret == force());  // kg * m * s^-2
}

TEST_CASE("alpha^2 = kg^2 m^-2 has the unique solution alpha = kg m^-1") {
    // Brute-force oracle: search exponent vectors with entries in [-4,4] over
    // (length, mass); confirm kg*m^-1 is the only solution.
    int solutions = 0;
    int sol_len = 99, sol_mass = 99;
    for (int el = -4; el <= 4; ++el) {
        for (int em = -4; em <= 4; ++em) {
            if (2 * el == -2 && 2 * em == 2) {
                ++solutions;
                sol_len = el;
                sol_mass = em;
            }
        }
    }
    REQUIRE(solutions == 1);
    REQUIRE(sol_len == -1);
    REQUIRE(sol_mass == 1);

    VarSupply supply;
    DimensionVariable alpha = supply.fresh({}, "alpha");
    auto r = dim_unify(
        {eq(Dimension::variable(alpha, 2), dim_mul(mass(2), length(-2)))}, supply);
    REQUIRE(r.ok());
    auto bound = r.substitution->lookup(alpha);
    REQUIRE(bound.has_value());
    CHECK(*bound == dim_mul(mass(1), length(-1)));
}

TEST_CASE("2*alpha = m is inconsistent over the integers") {
    // Parity oracle: 2*e == 1 has no integer solution; brute force agrees.
    bool any = false;
    for (int e = -8; e <= 8; ++e) {
        if (2 * e == 1) any = true;
    }
    REQUIRE_FALSE(any);

    VarSupply supply;
    DimensionVariable alpha = supply.fresh({}, "alpha");
    auto r = dim_unify({eq(Dimension::variable(alpha, 2), length(1))}, supply);
    REQUIRE_FALSE(r.ok());
    REQUIRE(r.inconsistency.has_value());
    CHECK(r.inconsistency->equation_index == 0);
    CHECK_FALSE(r.inconsistency->residual.is_dimensionless());
}

TEST_CASE("euclidean pivoting finds solutions plain division would miss") {
    // 2a + 3b = m has integer solutions (e.g. a = m^2, b = m^-1).
    VarSupply supply;
    DimensionVariable a = supply.fresh({}, "a");
    DimensionVariable b = supply.fresh({}, "b");
    auto r = dim_unify(
        {eq(dim_mul(Dimension::variable(a, 2), Dimension::variable(b, 3)), length(1))},
        supply);
    REQUIRE(r.ok());
    // apply-and-check
    Dimension lhs = r.substitution->apply(
        dim_mul(Dimension::variable(a, 2), Dimension::variable(b, 3)));
    Dimension rhs = r.substitution->apply(length(1));
    // Free variables may remain on both sides; the residual must vanish.
    CHECK(dim_div(lhs, rhs).is_dimensionless());
}

// -----------------------------------------------------------------------------
// Randomized system tests: idempotence, apply-and-check, principality
// -----------------------------------------------------------------------------

TEST_CASE("substitutions are idempotent and solve their systems") {
    std::mt19937 rng(23);
    std::uniform_int_distribution<int> nv(1, 4);
    std::uniform_int_distribution<int> ne(1, 4);
    int checked = 0;
    for (int iter = 0; iter < 3000; ++iter) {
        dimsys::FlatSystem s = dimsys::random_system(rng, nv(rng), ne(rng), 3);
        VarSupply supply;
        std::vector<DimensionVariable> vars;
        for (int j = 0; j < s.nvars; ++j) vars.push_back(supply.fresh());
        auto eqs = dimsys::to_equations(s, vars);
        auto r = dim_unify(eqs, supply);
        if (!r.ok()) continue;
        ++checked;
        const auto& sub = *r.substitution;
        // Idempotence: applying twice equals applying once.
        for (const auto& v : vars) {
            Dimension once = sub.apply(Dimension::variable(v));
            CHECK(sub.apply(once) == once);
        }
        // Apply-and-check: every equation's residual vanishes.
        for (const auto& e : eqs) {
            CHECK(dim_div(sub.apply(e.lhs), sub.apply(e.rhs)).is_dimensionless());
        }
    }
    CHECK(checked > 500);  // the generator must produce plenty of solvable systems
}

TEST_CASE("principality: every enumerated solution is an instance") {
    std::mt19937 rng(29);
    int systems_checked = 0;
    long solutions_checked = 0;
    for (int iter = 0; iter < 60; ++iter) {
        const int nvars = (iter % 3 == 0) ? 4 : 3;
        const int bound = (nvars == 4) ? 2 : 3;
        dimsys::FlatSystem s = dimsys::random_system(rng, nvars, 2, 2);
        VarSupply supply;
        std::vector<DimensionVariable> vars;
        for (int j = 0; j < s.nvars; ++j) vars.push_back(supply.fresh());
        auto r = dim_unify(dimsys::to_equations(s, vars), supply);

        // Exhaustive enumeration over [-bound, bound] exponents.
        std::vector<std::array<int, 2>> sol(nvars);
        std::vector<int> idx(nvars * 2, -bound);
        bool any_solution = false;
        const int radix = 2 * bound + 1;
        long total = 1;
        for (int k = 0; k < nvars * 2; ++k) total *= radix;
        for (long code = 0; code < total; ++code) {
            long c = code;
            for (int k = 0; k < nvars; ++k) {
                sol[k][0] = static_cast<int>(c % radix) - bound;
                c /= radix;
                sol[k][1] = static_cast<int>(c % radix) - bound;
                c /= radix;
            }
            if (!dimsys::satisfies(s, sol)) continue;
            any_solution = true;
            REQUIRE_MESSAGE(r.ok(), "enumeration found a solution the solver missed");
            ++solutions_checked;
            CHECK(dimsys::is_instance(*r.substitution, vars, sol));
        }
        if (any_solution) ++systems_checked;
    }
    CHECK(systems_checked > 10);
    CHECK(solutions_checked > 50);
}

// =============================================================================
// mem_unify
// =============================================================================

TEST_CASE("memory unification over the finite domain") {
    const std::int64_t mu = 1, nu = 2;

    SUBCASE("variable binds to constant") {
        auto r = mem_unify({{MemTerm::var(mu), MemTerm::make(mem_stack()), {}}});
        REQUIRE(r.ok());
        CHECK(r.resolve(mu) == mem_stack());
    }
    SUBCASE("distinct constants clash") {
        auto r = mem_unify({
            {MemTerm::var(mu), MemTerm::make(mem_stack()), {}},
            {MemTerm::var(mu), MemTerm::make(mem_arena()), {}},
        });
        REQUIRE_FALSE(r.ok());
        CHECK(r.inconsistency->left == mem_stack());
        CHECK(r.inconsistency->right == mem_arena());
    }
    SUBCASE("transitive closure through variable chains") {
        auto r = mem_unify({
            {MemTerm::var(mu), MemTerm::var(nu), {}},
            {MemTerm::var(nu), MemTerm::make(mem_arena()), {}},
        });
        REQUIRE(r.ok());
        CHECK(r.resolve(mu) == mem_arena());
        CHECK(r.resolve(nu) == mem_arena());
    }
    SUBCASE("constant = constant consistent") {
        auto r = mem_unify({{MemTerm::make(mem_heap()), MemTerm::make(mem_heap()), {}}});
        CHECK(r.ok());
    }
}

TEST_CASE("mem_unify never invents constants") {
    std::mt19937 rng(31);
    std::vector<MemorySpace> pool = {mem_stack(), mem_arena(), mem_heap(),
                                     mem_static(), {"fabric", ""}, {"scratchpad", ""}};
    std::uniform_int_distribution<int> var_dist(0, 5);
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<MemEquation> eqs;
        std::vector<MemorySpace> used;
        std::uniform_int_distribution<int> n(1, 6);
        int count = n(rng);
        for (int i = 0; i < count; ++i) {
            auto term = [&]() -> MemTerm {
                if (kind(rng) == 0) {
                    auto c = pool[pick(rng)];
                    used.push_back(c);
                    return MemTerm::make(c);
                }
                return MemTerm::var(var_dist(rng));
            };
            eqs.push_back({term(), term(), {}});
        }
        auto r = mem_unify(eqs);
        if (!r.ok()) continue;
        for (const auto& [var, c] : r.constants) {
            (void)var;
            bool in_input = false;
            for (const auto& u : used) {
                if (u == c) in_input = true;
            }
            CHECK(in_input);
        }
    }
}

// =============================================================================
// Unit table
// =============================================================================

TEST_CASE("builtin unit aliases expand to the expected vectors") {
    auto table = UnitTable::builtin();
    REQUIRE(table.find("newtons") != nullptr);
    CHECK(table.find("newtons")->dimension == force());
    CHECK(table.find("joules")->dimension == joules());
    CHECK(table.find("celsius")->dimension == Dimension::base(BaseDimension::Temperature));
    CHECK(table.find("kg")->dimension == mass(1));
    CHECK(table.find("AU")->scale == doctest::Approx(1.495978707e11));
    CHECK(table.render(force()) == "newtons");
    CHECK(table.render(dim_mul(length(1), time_d(-1))) == "m * s^-1");
    CHECK(table.render(Dimension::dimensionless()) == "1");
}
