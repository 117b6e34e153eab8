#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "clef/report.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void BM_ParseSensorPipeline(benchmark::State& state) {
    const std::string src = read_file(std::string(CLEF_BENCH_DIR) + "/sensor_pipeline.clef");
    for (auto _ : state) {
        benchmark::DoNotOptimize(clef::syntax::parse(src));
    }
}
BENCHMARK(BM_ParseSensorPipeline);

void BM_InferSensorPipeline(benchmark::State& state) {
    const std::string src = read_file(std::string(CLEF_BENCH_DIR) + "/sensor_pipeline.clef");
    const auto units = clef::dims::UnitTable::builtin();
    for (auto _ : state) {
        auto parsed = clef::syntax::parse(src);
        benchmark::DoNotOptimize(clef::infer::infer_program(
            clef::syntax::desugar(std::move(*parsed.program)), units));
    }
}
BENCHMARK(BM_InferSensorPipeline);

void BM_FullCheck(benchmark::State& state) {
    clef::driver::CheckOptions opts;
    opts.source_path = std::string(CLEF_BENCH_DIR) + "/gravity_annotated.clef";
    opts.config_path = std::string(CLEF_BENCH_DIR) + "/two_target.cfg";
    for (auto _ : state) {
        benchmark::DoNotOptimize(clef::driver::run_check(opts));
    }
}
BENCHMARK(BM_FullCheck);

}  // namespace

BENCHMARK_MAIN();
