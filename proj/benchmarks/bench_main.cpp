#include <benchmark/benchmark.h>

#include "heatrace/bogolyubov.hpp"
#include "heatrace/coeff_engine.hpp"
#include "heatrace/fit_harness.hpp"
#include "heatrace/fixtures.hpp"
#include "heatrace/spectral_engine.hpp"
#include "heatrace/synge_lab.hpp"

using namespace heatrace;

static void BM_DecomposeLaplace(benchmark::State& st)
{
    const auto f = make_fixture("two_scale", static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(decompose_laplace(f.manifold, f.plus));
}
BENCHMARK(BM_DecomposeLaplace)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_CombinedX(benchmark::State& st)
{
    const auto f = make_fixture("two_scale");
    const auto p = decompose_laplace(f.manifold, f.plus), m = decompose_laplace(f.manifold, f.minus);
    const auto o = overlap(p, m);
    for (auto _ : st) benchmark::DoNotOptimize(combined_X(p, m, o, 0.01, 0.02));
}
BENCHMARK(BM_CombinedX)->Unit(benchmark::kMicrosecond);

static void BM_BCoeffs(benchmark::State& st)
{
    const auto f = make_fixture("variable_metric");
    for (auto _ : st) benchmark::DoNotOptimize(b_coeffs(f.manifold, f.plus, f.minus, 1.0, 1.0));
}
BENCHMARK(BM_BCoeffs)->Unit(benchmark::kMillisecond);

static void BM_EpsilonFit(benchmark::State& st)
{
    const auto eps = log_grid(1e-4, 1.25e-3, 12);
    std::vector<double> v;
    for (double e : eps) v.push_back((2.0 - 3.0 * e + e * e) / std::sqrt(4.0 * M_PI * e));
    for (auto _ : st) benchmark::DoNotOptimize(epsilon_fit(eps, v, 1, FitKind::X));
}
BENCHMARK(BM_EpsilonFit)->Unit(benchmark::kMicrosecond);

static void BM_HKernel(benchmark::State& st)
{
    const auto tag = static_cast<KernelTag>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(h_kernel(tag, 0.7));
}
BENCHMARK(BM_HKernel)->Arg(0)->Arg(1)->Arg(2);

static void BM_HKernelPV(benchmark::State& st)
{
    for (auto _ : st) benchmark::DoNotOptimize(h_kernel_pv(KernelTag::boson, 0.7));
}
BENCHMARK(BM_HKernelPV)->Unit(benchmark::kMicrosecond);

static void BM_BogolyubovShifted(benchmark::State& st)
{
    const auto f = make_fixture("shifted_laplace", 96);
    const auto p = decompose_laplace(f.manifold, f.plus), m = decompose_laplace(f.manifold, f.minus);
    const auto o = overlap(p, m);
    const auto surf = spectral_psi_surface(p, m, o);
    for (auto _ : st) benchmark::DoNotOptimize(bogolyubov_invariant(BogolyubovKind::boson, surf, 1.0));
}
BENCHMARK(BM_BogolyubovShifted)->Unit(benchmark::kMillisecond);

static void BM_GeodesicSigma(benchmark::State& st)
{
    const auto p = MetricPatch::sphere(Eigen::Vector2d(0, 0), 0.8);
    const Eigen::Vector2d x(0.3, -0.1), xp(0.0, 0.2);
    for (auto _ : st) benchmark::DoNotOptimize(geodesic_sigma(p, x, xp));
}
BENCHMARK(BM_GeodesicSigma)->Unit(benchmark::kMicrosecond);

static void BM_CoincidenceSuite(benchmark::State& st)
{
    const auto p = MetricPatch::wavy(Eigen::Vector2d(0, 0), 0.8);
    for (auto _ : st) benchmark::DoNotOptimize(coincidence_suite(p, Eigen::Vector2d(0.2, 0.15)));
}
BENCHMARK(BM_CoincidenceSuite)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
