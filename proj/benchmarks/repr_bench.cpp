#include <benchmark/benchmark.h>

#include <random>

#include "clef/repr.hpp"

using namespace clef::repr;

namespace {

void BM_PositDecode(benchmark::State& state) {
    auto f = posit(static_cast<int>(state.range(0)));
    std::uint64_t code = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(decode(f, code));
        code = (code + 0x9E37) & ((1ULL << state.range(0)) - 1);
    }
}
BENCHMARK(BM_PositDecode)->Arg(8)->Arg(16)->Arg(32);

void BM_PositEncode(benchmark::State& state) {
    auto f = posit(static_cast<int>(state.range(0)));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(1e-6, 1e6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode(f, d(rng)));
    }
}
BENCHMARK(BM_PositEncode)->Arg(8)->Arg(16)->Arg(32);

void BM_QuireAccumulate(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::uint64_t> code(1, 127);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> products;
    for (int i = 0; i < 32; ++i) products.push_back({code(rng), code(rng)});
    for (auto _ : state) {
        benchmark::DoNotOptimize(quire_accumulate(8, products));
    }
}
BENCHMARK(BM_QuireAccumulate);

void BM_WorstCaseError16(benchmark::State& state) {
    auto f = posit(16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(worst_case_rel_error(f, {1e-3, 1e3, true}));
    }
}
BENCHMARK(BM_WorstCaseError16);

void BM_Select(benchmark::State& state) {
    std::vector<NumericFormat> candidates = {float64(), float32(), posit(16), posit(8)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            select_representation({1e-2, 1e4, true}, candidates));
    }
}
BENCHMARK(BM_Select);

}  // namespace
