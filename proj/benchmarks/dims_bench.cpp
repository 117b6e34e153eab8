#include <benchmark/benchmark.h>

#include <random>

#include "clef/dims.hpp"

using namespace clef::dims;

namespace {

Dimension random_dimension(std::mt19937& rng) {
    std::uniform_int_distribution<int> e(-8, 8);
    std::uniform_int_distribution<int> which(0, 6);
    Dimension d;
    for (int i = 0; i < 3; ++i) {
        d = dim_mul(d, Dimension::base(static_cast<BaseDimension>(which(rng)), e(rng)));
    }
    return d;
}

void BM_DimMul(benchmark::State& state) {
    std::mt19937 rng(1);
    Dimension a = random_dimension(rng);
    Dimension b = random_dimension(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dim_mul(a, b));
    }
}
BENCHMARK(BM_DimMul);

void BM_Unify(benchmark::State& state) {
    const int nvars = static_cast<int>(state.range(0));
    std::mt19937 rng(2);
    std::uniform_int_distribution<int> c(-3, 3);
    for (auto _ : state) {
        state.PauseTiming();
        VarSupply supply;
        std::vector<DimensionVariable> vars;
        for (int i = 0; i < nvars; ++i) vars.push_back(supply.fresh());
        std::vector<DimEquation> eqs;
        for (int i = 0; i < nvars; ++i) {
            Dimension lhs;
            for (const auto& v : vars) lhs = dim_mul(lhs, Dimension::variable(v, c(rng)));
            eqs.push_back({lhs, random_dimension(rng), {}, {}, ""});
        }
        state.ResumeTiming();
        benchmark::DoNotOptimize(dim_unify(eqs, supply));
    }
}
BENCHMARK(BM_Unify)->Arg(2)->Arg(4)->Arg(8);

}  // namespace
