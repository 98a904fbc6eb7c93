// Serial vs OpenMP variants of the data-parallel kernels, plus one full
// solver step under each default execution mode.
#include <benchmark/benchmark.h>

#include <random>

#include "penfsi/config.hpp"
#include "penfsi/kernels.hpp"
#include "penfsi/scenario.hpp"
#include "penfsi/solver.hpp"

using namespace penfsi;
using kernels::Exec;

namespace {

Buffer random_buffer(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Buffer b(n);
    for (auto& x : b) x = d(rng);
    return b;
}

Exec exec_of(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& st) {
    st.SetLabel(st.range(1) ? "omp x" + std::to_string(kernels::max_threads()) : "serial");
}

void BM_dot(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Buffer x = random_buffer(n, 1), y = random_buffer(n, 2);
    for (auto _ : st) benchmark::DoNotOptimize(kernels::dot(x, y, exec_of(st)));
    st.SetBytesProcessed(static_cast<int64_t>(st.iterations() * 2 * n * sizeof(double)));
    label(st);
}

void BM_axpy(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Buffer x = random_buffer(n, 1);
    Buffer y = random_buffer(n, 2);
    for (auto _ : st) {
        kernels::axpy(1e-9, x, y, exec_of(st));
        benchmark::ClobberMemory();
    }
    st.SetBytesProcessed(static_cast<int64_t>(st.iterations() * 3 * n * sizeof(double)));
    label(st);
}

void BM_minmax(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Buffer x = random_buffer(n, 3);
    for (auto _ : st) benchmark::DoNotOptimize(kernels::minmax(x, exec_of(st)));
    label(st);
}

// 2D grid with N = range(0) cells per axis.
void BM_semi_lagrangian(benchmark::State& st) {
    const TorusGrid g = make_grid(2, 1.0, static_cast<int>(st.range(0)));
    const std::size_t n = g.size();
    const Buffer u = random_buffer(n, 4), v = random_buffer(n, 5), f = random_buffer(n, 6);
    Buffer high(n), low(n);
    kernels::Departure dep;
    const std::array<std::span<const double>, 3> vel{std::span<const double>(u), std::span<const double>(v), {}};
    for (auto _ : st) {
        kernels::departure_points(g, vel, 0.5 * g.spacing(), dep, exec_of(st));
        kernels::interpolate_monotone(g, f, dep, high, low, exec_of(st));
        benchmark::ClobberMemory();
    }
    st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * n));
    label(st);
}

void BM_step(benchmark::State& st) {
    const Config c = load_config(R"({
      "grid": {"dim": 2, "half_period": 1.0, "cells": )" + std::to_string(st.range(0)) + R"(},
      "domain": {"shape": {"type": "disk", "radius": 0.8}},
      "bodies": [{"id": 1, "shape": {"type": "disk", "radius": 0.3}, "center": [0.1, 0.0], "density": 2.0,
                  "velocity": [0.5, 0.2]}],
      "penalty": {"epsilon": 1e-3, "delta_cells": 4},
      "time": {"horizon": 1.0, "dt": 1e-3}
    })");
    const Exec saved = kernels::default_exec();
    kernels::set_default_exec(exec_of(st));
    const Problem pb = make_problem(c);
    FluidState s = build_initial_state(c, pb.spectral());
    for (auto _ : st) s = step(pb, s, c.time.dt);
    kernels::set_default_exec(saved);
    label(st);
}

void sizes(benchmark::internal::Benchmark* b) {
    for (long n : {1L << 14, 1L << 18, 1L << 22})
        for (long p : {0L, 1L}) b->Args({n, p});
}

void grids(benchmark::internal::Benchmark* b) {
    for (long n : {64L, 128L, 256L})
        for (long p : {0L, 1L}) b->Args({n, p});
}

}  // namespace

BENCHMARK(BM_dot)->Apply(sizes);
BENCHMARK(BM_axpy)->Apply(sizes);
BENCHMARK(BM_minmax)->Apply(sizes);
BENCHMARK(BM_semi_lagrangian)->Apply(grids);
BENCHMARK(BM_step)->Args({64, 0})->Args({64, 1})->Args({128, 0})->Args({128, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
