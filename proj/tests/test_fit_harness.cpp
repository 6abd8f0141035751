#include <doctest.h>

#include <cmath>
#include <random>

#include "heatrace/coeff_engine.hpp"
#include "heatrace/errors.hpp"
#include "heatrace/fit_harness.hpp"
#include "heatrace/fixtures.hpp"
#include "heatrace/spectral_engine.hpp"

using namespace heatrace;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

struct Pair {
    OperatorPair f;
    SpectralDecomposition p, m;
    Overlap o;
};

Pair pair_of(const std::string& name)
{
    Pair r;
    r.f = make_fixture(name);
    r.p = r.f.dirac ? decompose_dirac(r.f.manifold, r.f.plus) : decompose_laplace(r.f.manifold, r.f.plus);
    r.m = r.f.dirac ? decompose_dirac(r.f.manifold, r.f.minus) : decompose_laplace(r.f.manifold, r.f.minus);
    r.o = overlap(r.p, r.m);
    return r;
}

AsymFit fit_direction(const Pair& q, double t, double s, FitKind kind, std::vector<double>* eps_out = nullptr)
{
    const auto w = safe_epsilon_window(q.p, q.m, t, s, 1e-8);
    const auto eps = log_grid(w.first, w.second, 12);
    std::vector<double> v;
    for (double e : eps)
        v.push_back(kind == FitKind::X ? combined_X(q.p, q.m, q.o, e * t, e * s).value
                                       : combined_Y(q.p, q.m, q.o, e * t, e * s).value);
    if (eps_out) *eps_out = eps;
    return epsilon_fit(eps, v, 1, kind);
}

} // namespace

TEST_CASE("log grid")
{
    const auto g = log_grid(1e-4, 1e-2, 12);
    CHECK(g.size() == 12);
    CHECK(g.front() == doctest::Approx(1e-4));
    CHECK(g.back() == doctest::Approx(1e-2));
    CHECK(g[1] / g[0] == doctest::Approx(g[11] / g[10]));
    CHECK_THROWS_AS(log_grid(1e-2, 1e-4, 12), DomainError);
}

TEST_CASE("synthetic series are recovered")
{
    const auto eps = log_grid(1e-3, 1.25e-2, 12);
    // X kind, n = 1: (4 pi eps)^{1/2} X = B0 exp(-0.7 eps) + 0.2 eps^3
    std::vector<double> x, y;
    for (double e : eps) {
        const double series = 2.5 * std::exp(-0.7 * e) + 0.2 * e * e * e;
        x.push_back(series / std::sqrt(4.0 * M_PI * e));
        y.push_back(series / (std::sqrt(4.0 * M_PI * e) * e));
    }
    const auto fx = epsilon_fit(eps, x, 1, FitKind::X);
    CHECK(fx.coeffs.size() == 2);
    CHECK(rel(fx.coeffs[0], 2.5) < 1e-12);
    CHECK(rel(fx.coeffs[1], -1.75) < 1e-9);
    const auto fy = epsilon_fit(eps, y, 1, FitKind::Y);
    CHECK(rel(fy.coeffs[0], 2.5) < 1e-12);
    CHECK(rel(fy.coeffs[1], -1.75) < 1e-9);
    CHECK(fx.condition > 1.0);
    CHECK(fx.condition < 1e8);

    // 2D normalization: (4 pi eps) X
    std::vector<double> z;
    for (double e : eps) z.push_back((1.0 + 3.0 * e) / (4.0 * M_PI * e));
    const auto f2 = epsilon_fit(eps, z, 2, FitKind::X);
    CHECK(rel(f2.coeffs[0], 1.0) < 1e-12);
    CHECK(rel(f2.coeffs[1], 3.0) < 1e-9);

    FitOptions k2;
    k2.k_max = 2;
    CHECK(epsilon_fit(eps, x, 1, FitKind::X, k2).coeffs.size() == 3);
}

TEST_CASE("fit errors")
{
    const auto eps = log_grid(1e-3, 1e-2, 12);
    std::vector<double> v(eps.size(), 1.0);
    FitOptions bad;
    bad.k_max = 3;
    CHECK_THROWS_AS(epsilon_fit(eps, v, 1, FitKind::X, bad), DomainError);
    CHECK_THROWS_AS(epsilon_fit({1e-3, 2e-3}, {1.0, 1.0}, 1, FitKind::X), PreconditionError);
    // a window too narrow for seven powers
    const auto narrow = log_grid(1e-3, 1.0001e-3, 12);
    CHECK_THROWS_AS(epsilon_fit(narrow, std::vector<double>(12, 1.0), 1, FitKind::X), ConsistencyError);
    std::vector<double> nan = v;
    nan[3] = std::nan("");
    CHECK_THROWS_AS(epsilon_fit(eps, nan, 1, FitKind::X), DomainError);
}

TEST_CASE("half-window refit stays within three sigma")
{
    std::mt19937 rng(7);
    std::normal_distribution<double> noise(0.0, 1e-9);
    const auto eps = log_grid(1e-3, 2e-2, 24);
    std::vector<double> v;
    for (double e : eps) v.push_back((1.3 - 0.4 * e + 2.0 * e * e) * (1.0 + noise(rng)) / std::sqrt(4.0 * M_PI * e));
    const auto full = epsilon_fit(eps, v, 1, FitKind::X);
    const std::vector<double> he(eps.begin(), eps.begin() + 16), hv(v.begin(), v.begin() + 16);
    const auto half = epsilon_fit(he, hv, 1, FitKind::X);
    for (int k = 0; k < 2; ++k) {
        CAPTURE(k);
        const double sigma = std::hypot(full.sigma(k), half.sigma(k));
        CHECK(sigma > 0.0);
        CHECK(std::abs(full.coeffs[k] - half.coeffs[k]) < 3.0 * sigma);
    }
}

TEST_CASE("spectral fits match the classical coefficients for equal operators")
{
    const auto q = pair_of("equal_laplace");
    const auto A = classical_A(q.f.manifold, q.f.plus);
    const double t = 0.7, s = 0.3;
    const auto f = fit_direction(q, t, s, FitKind::X);
    CHECK(rel(f.coeffs[0], A.A0) < 1e-6);
    CHECK(rel(f.coeffs[1], A.A1) < 1e-5);

    // Psi fit coefficients vanish within fit error
    const auto w = safe_epsilon_window(q.p, q.m, t, s, 1e-8);
    const auto eps = log_grid(w.first, w.second, 12);
    std::vector<double> v;
    for (double e : eps) v.push_back(relative_psi(q.p, q.m, q.o, e * t, e * s).value);
    const auto fp = epsilon_fit(eps, v, 1, FitKind::X);
    CHECK(std::abs(fp.coeffs[0]) < 1e-8);
    CHECK(std::abs(fp.coeffs[1]) < 1e-6);
}

TEST_CASE("fits against the geometric coefficients")
{
    const auto q = pair_of("variable_metric");
    for (auto [t, s] : {std::pair{1.0, 1.0}, {0.5, 1.5}}) {
        std::vector<double> eps;
        const auto f = fit_direction(q, t, s, FitKind::X, &eps);
        const auto b = b_coeffs(q.f.manifold, q.f.plus, q.f.minus, t, s);
        CHECK(rel(f.coeffs[0], b.k0.value) < 1e-8);
        CHECK(rel(f.coeffs[1], b.k1.value) < 1e-5);
        CHECK(f.warnings.empty());

        // residual after two terms scales as eps^2
        std::vector<double> le, lr;
        for (double e : eps) {
            const double x = std::sqrt(4.0 * M_PI * e) * combined_X(q.p, q.m, q.o, e * t, e * s).value;
            le.push_back(std::log(e));
            lr.push_back(std::log(std::abs(x - f.coeffs[0] - e * f.coeffs[1])));
        }
        const Eigen::Map<Eigen::VectorXd> X(le.data(), le.size()), Y(lr.data(), lr.size());
        const double mx = X.mean(), my = Y.mean();
        const double slope = ((X.array() - mx) * (Y.array() - my)).sum() / (X.array() - mx).square().sum();
        CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
    }

    const auto d = pair_of("dirac_variable");
    const auto f = fit_direction(d, 1.0, 1.0, FitKind::Y);
    const auto c = c_coeffs(d.f.manifold, d.f.plus, d.f.minus, 1.0, 1.0);
    CHECK(rel(f.coeffs[0], c.k0.value) < 1e-5);
    CHECK(rel(f.coeffs[1], c.k1.value) < 1e-4);
}

TEST_CASE("relation checks")
{
    const auto q = pair_of("shifted_laplace");
    const auto Am = classical_A(q.f.manifold, q.f.minus);
    const double t = 0.8, s = 1.2, m2 = kShiftMass * kShiftMass;
    const auto fts = fit_direction(q, t, s, FitKind::X);
    CHECK(rel(fts.coeffs[1], std::sqrt(t + s) * Am.A1 - t * m2 * Am.A0 / std::sqrt(t + s)) < 1e-5);

    // variable pair: the fitted Psi_k against the combination of fitted B_k
    const auto v = pair_of("variable_metric");
    const auto Vp = classical_A(v.f.manifold, v.f.plus), Vm = classical_A(v.f.manifold, v.f.minus);
    const auto bts = fit_direction(v, t, s, FitKind::X), bst = fit_direction(v, s, t, FitKind::X);
    const auto w = safe_epsilon_window(v.p, v.m, t, s, 1e-8);
    const auto eps = log_grid(w.first, w.second, 12);
    std::vector<double> pv;
    for (double e : eps) pv.push_back(relative_psi(v.p, v.m, v.o, e * t, e * s).value);
    const auto fpsi = epsilon_fit(eps, pv, 1, FitKind::X);
    for (int k = 0; k < 2; ++k) {
        CAPTURE(k);
        const auto r = psi_relation(k, 1, t, s, k ? Vp.A1 : Vp.A0, k ? Vm.A1 : Vm.A0, bts.coeffs[k], bst.coeffs[k],
                                    fpsi.coeffs[k], 1e-5);
        CHECK(r.pass);
        CHECK(std::abs(r.rhs) > 1e-3);
    }
    const auto bad = psi_relation(0, 1, t, s, Vp.A0, Vm.A0, bts.coeffs[0], bst.coeffs[0], fpsi.coeffs[0] + 0.01, 1e-5);
    CHECK_FALSE(bad.pass);

    const auto c = compare("x", 1.0 + 1e-7, 1.0, 1e-6);
    CHECK(c.pass);
    CHECK(c.error == doctest::Approx(1e-7).epsilon(1e-6));
    // tiny right-hand side: absolute comparison
    CHECK(compare("y", 1e-13, 0.0, 1e-6).pass);

    const auto d = pair_of("shifted_dirac");
    const auto Ad = classical_A(d.f.manifold, d.f.minus);
    const auto fy = fit_direction(d, t, s, FitKind::Y);
    const double T = t + s;
    CHECK(rel(fy.coeffs[0], 0.5 * std::pow(T, -1.5) * Ad.A0) < 1e-5);
    CHECK(rel(fy.coeffs[1], -0.5 * std::pow(T, -0.5) * Ad.A1 - 0.5 * t * std::pow(T, -1.5) * m2 * Ad.A0) < 1e-5);
}
