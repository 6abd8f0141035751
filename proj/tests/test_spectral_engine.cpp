#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "heatrace/errors.hpp"
#include "heatrace/fixtures.hpp"
#include "heatrace/spectral_engine.hpp"

using namespace heatrace;

namespace {

ModelManifold circle(int grid) { return ModelManifold::circle(2.0 * M_PI, grid); }

ScalarField cst(const ModelManifold& m, double v) { return ScalarField::Constant(m.points(), v); }

SpectralDecomposition lap(const ModelManifold& m, double c, double a, double q)
{
    return decompose_laplace(m, laplace_1d(m, cst(m, c), cst(m, a), cst(m, q)));
}

SpectralDecomposition dir(const ModelManifold& m, double c, double a, double s)
{
    return decompose_dirac(m, dirac_1d(m, cst(m, c), cst(m, a), cst(m, s), cst(m, 0.0)));
}

// largest distance from a computed eigenvalue to the nearest oracle value
template <class F>
double nearest_error(const Eigen::VectorXd& v, F oracle)
{
    std::vector<double> o;
    for (int k = -400; k <= 400; ++k) {
        const auto pair = oracle(k);
        o.push_back(pair.first);
        o.push_back(pair.second);
    }
    double worst = 0.0;
    for (double x : v) {
        double best = 1e300;
        for (double y : o) best = std::min(best, std::abs(x - y));
        worst = std::max(worst, best / std::max(1.0, std::abs(x)));
    }
    return worst;
}

struct Pair {
    SpectralDecomposition p, m;
    Overlap o;
};

Pair pair_of(const std::string& name, int grid = 0)
{
    const auto f = make_fixture(name, grid);
    Pair r;
    r.p = f.dirac ? decompose_dirac(f.manifold, f.plus) : decompose_laplace(f.manifold, f.plus);
    r.m = f.dirac ? decompose_dirac(f.manifold, f.minus) : decompose_laplace(f.manifold, f.minus);
    r.o = overlap(r.p, r.m);
    return r;
}

} // namespace

TEST_CASE("Laplace spectra on the circle")
{
    const auto m = circle(64);
    const auto d = lap(m, 1.0, 0.0, 0.0);
    CHECK(d.mode_cutoff > 30);
    Eigen::VectorXd expect(d.mode_cutoff);
    std::vector<double> ks;
    for (int k = -64; k <= 64; ++k) ks.push_back(double(k) * k);
    std::sort(ks.begin(), ks.end());
    for (int i = 0; i < d.mode_cutoff; ++i) expect[i] = ks[i];
    CHECK((d.values - expect).cwiseAbs().maxCoeff() < 1e-10 * expect.maxCoeff());
    CHECK(d.max_residual < 1e-9);
    CHECK(d.orthonormality < 1e-10);

    const double a = 0.3, q = 0.45;
    CHECK(nearest_error(lap(m, 1.0, a, 0.0).values, [&](int k) {
              return std::pair{(k + a) * (k + a), (k + a) * (k + a)};
          }) < 1e-10);
    const auto shifted = lap(m, 1.0, a, q);
    CHECK((shifted.values - lap(m, 1.0, a, 0.0).values - Eigen::VectorXd::Constant(shifted.values.size(), q))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    // constant metric c rescales the spectrum
    CHECK((lap(m, 4.0, 0.0, 0.0).values - 4.0 * d.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Dirac spectra on the circle")
{
    const auto m = circle(64);
    const double s = 0.6, a = 0.3;
    CHECK(nearest_error(dir(m, 1.0, 0.0, s).values, [&](int k) {
              const double w = std::sqrt(double(k) * k + s * s);
              return std::pair{w, -w};
          }) < 1e-10);
    CHECK(nearest_error(dir(m, 1.0, a, s).values, [&](int k) {
              const double w = std::sqrt((k + a) * (k + a) + s * s);
              return std::pair{w, -w};
          }) < 1e-10);
    const auto chiral = dir(m, 1.0, 0.0, 0.0);
    // +-|k| pairs, away from the cutoff shell where a degenerate group may be split
    const double top = 0.9 * chiral.values.cwiseAbs().maxCoeff();
    CHECK(std::abs((chiral.values.array().abs() < top).select(chiral.values.array(), 0.0).sum()) < 1e-9);
    CHECK(std::abs(eta(chiral, 0.3).value) < 1e-12);
    // D^2 matches the Laplace matrix of the induced geometry
    const auto g = dirac_1d(m, ScalarField((1.0 + 0.3 * m.coords(0).array().cos()).matrix()), cst(m, 0.2), cst(m, 0.6),
                            cst(m, 0.0));
    CHECK(dirac_square_residual(m, g) < 1e-9);
}

TEST_CASE("classical heat trace")
{
    const auto d = lap(circle(64), 1.0, 0.0, 0.0);
    // Poisson dual of sum_k exp(-k^2)
    double dual = 0.0;
    for (int k = -5; k <= 5; ++k) dual += std::exp(-M_PI * M_PI * k * k);
    dual *= std::sqrt(M_PI);
    CHECK(theta(d, 1.0).value == doctest::Approx(dual).epsilon(1e-13));
    CHECK(theta(d, 1.0).value == doctest::Approx(1.7726372).epsilon(1e-7));

    // (4 pi t)^{1/2} Theta(t) -> 2 pi
    const auto fine = lap(circle(512), 1.0, 0.0, 0.0);
    CHECK(std::abs(std::sqrt(4e-3 * M_PI) * theta(fine, 1e-3).value - 2.0 * M_PI) < 1e-8);
    // the coarse grid cannot resolve it and says so
    try {
        theta(d, 1e-3);
        CHECK(false);
    } catch (const TruncationError& e) {
        CHECK(e.suggested_cutoff >= 256);
    }
    CHECK(min_safe_time(d, 1e-8) > 1e-3);
    CHECK(min_safe_time(d, 1e-8) < 1.0);

    // analytic derivative against a centered difference
    const double h = 1e-4;
    const double fd = (theta(d, 0.5 + h).value - theta(d, 0.5 - h).value) / (2.0 * h);
    CHECK(theta_dt(d, 0.5).value == doctest::Approx(fd).epsilon(1e-7));
    CHECK_THROWS_AS(theta(d, -1.0), DomainError);
}

TEST_CASE("overlaps")
{
    const auto same = pair_of("equal_laplace", 96);
    for (int k = 0; k < same.p.mode_cutoff; ++k) {
        const double col = same.o.P.col(k).sum();
        CHECK(col == doctest::Approx(1.0).epsilon(1e-10));
    }
    // generic pair: completeness of the low modes
    const auto g = pair_of("variable_metric", 256);
    for (int k = 0; k < 40; ++k) CHECK(g.o.P.col(k).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g.o.max_column_sum <= 1.0 + 1e-10);

    // commuting constant pair: overlaps connect equal plane waves only
    const auto m = circle(32);
    const auto a = lap(m, 1.0, 0.0, 0.0), b = lap(m, 4.0, 0.0, 0.3);
    const auto o = overlap(a, b);
    for (int j = 0; j < o.P.rows(); ++j)
        for (int k = 0; k < o.P.cols(); ++k)
            if (o.P(j, k) > 1e-12) CHECK(std::abs(4.0 * a.values[k] + 0.3 - b.values[j]) < 1e-8);
}

TEST_CASE("combined traces: equal and shifted pairs")
{
    const auto e = pair_of("equal_laplace");
    for (auto [t, s] : {std::pair{0.05, 0.05}, {0.3, 0.8}, {1.0, 1.0}}) {
        CHECK(std::abs(combined_X(e.p, e.m, e.o, t, s).value - theta(e.p, t + s).value) < 1e-10);
        CHECK(std::abs(relative_psi(e.p, e.m, e.o, t, s).value) < 1e-10);
    }
    const auto sh = pair_of("shifted_laplace");
    const double m2 = kShiftMass * kShiftMass;
    for (auto [t, s] : {std::pair{0.05, 0.1}, {0.3, 0.8}, {1.0, 1.0}}) {
        const double th = theta(sh.m, t + s).value;
        CHECK(std::abs(combined_X(sh.p, sh.m, sh.o, t, s).value - std::exp(-t * m2) * th) < 1e-10);
        CHECK(std::abs(relative_psi(sh.p, sh.m, sh.o, t, s).value - std::expm1(-t * m2) * std::expm1(-s * m2) * th) <
              1e-10);
    }
    // label swap
    const auto v = pair_of("variable_metric");
    const auto sw = overlap(v.m, v.p);
    CHECK(std::abs(combined_X(v.p, v.m, v.o, 0.3, 0.7).value - combined_X(v.m, v.p, sw, 0.7, 0.3).value) < 1e-12);
    CHECK(combined_X(v.p, v.m, v.o, 0.3, 0.7).value > 0.0);
}

TEST_CASE("combined traces: equal Dirac pair")
{
    const auto e = pair_of("equal_dirac");
    for (auto [t, s] : {std::pair{0.1, 0.2}, {0.5, 0.5}}) {
        const double y = combined_Y(e.p, e.m, e.o, t, s).value;
        CHECK(std::abs(y + theta_dt(e.p, t + s).value) < 1e-10);
        const double h = 1e-4;
        const double fd = (theta(e.p, t + s + h).value - theta(e.p, t + s - h).value) / (2.0 * h);
        CHECK(y == doctest::Approx(-fd).epsilon(1e-7));
        CHECK(std::abs(relative_phi(e.p, e.m, e.o, t, s).value) < 1e-10);
    }
}

TEST_CASE("Psi equals the definitional double sum")
{
    const auto v = pair_of("variable_metric", 128);
    auto heat = [](const SpectralDecomposition& d, double t) {
        const Eigen::VectorXd w = (-t * d.values.array()).exp();
        return Eigen::MatrixXcd(d.vectors * w.asDiagonal() * d.vectors.adjoint());
    };
    for (auto [t, s] : {std::pair{0.2, 0.5}, {0.7, 0.4}}) {
        const Eigen::MatrixXcd a = heat(v.p, t) - heat(v.m, t), b = heat(v.p, s) - heat(v.m, s);
        const double direct = (a * b).trace().real();
        CHECK(std::abs(relative_psi(v.p, v.m, v.o, t, s).value - direct) < 1e-12 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("generalized traces")
{
    const auto d = pair_of("dirac_twist", 128);
    for (auto [t, s] : {std::pair{0.2, 0.3}, {0.6, 0.6}}) {
        CHECK(std::abs(generalized_V(d.p, d.m, d.o, t, s, 0.0, 0.0) - combined_X(d.p, d.m, d.o, t, s).value) < 1e-12);
        // -d_alpha d_beta V at zero, Richardson on h and h/2
        auto mixed = [&](double h) {
            auto V = [&](double x, double y) { return generalized_V(d.p, d.m, d.o, t, s, x, y).real(); };
            return -(V(h, h) - V(h, -h) - V(-h, h) + V(-h, -h)) / (4.0 * h * h);
        };
        const double r = (4.0 * mixed(5e-3) - mixed(1e-2)) / 3.0;
        CHECK(r == doctest::Approx(combined_Y(d.p, d.m, d.o, t, s).value).epsilon(1e-7));
    }
    CHECK(std::abs(generalized_W(d.p, 0.4, 0.0) - theta(d.p, 0.4).value) < 1e-12);

    const auto chiral = dir(circle(64), 1.0, 0.0, 0.0);
    for (double al : {0.2, 0.9}) {
        const auto w = generalized_W(chiral, 0.3, al);
        CHECK(std::abs(w.imag()) < 1e-12);
        CHECK(std::abs(w - generalized_W(chiral, 0.3, -al)) < 1e-12);
    }
}

TEST_CASE("relative zeta functions")
{
    const auto m = circle(256);
    const auto one = lap(m, 1.0, 0.0, 1.0);
    const auto o = overlap(one, one);
    const auto z = relative_zeta(one, one, o, 1.0, 1.0);
    // sum over Z of (k^2 + 1)^{-2}
    const double exact = 0.5 * M_PI / std::tanh(M_PI) + 0.5 * M_PI * M_PI / std::pow(std::sinh(M_PI), 2);
    CHECK(std::abs(z.Z_X - exact) <= z.tail + 1e-12);
    CHECK(std::abs(z.Z_X - spectral_zeta(one, 2.0)) < 1e-12);
    CHECK(std::abs(z.Z_Psi) < 1e-12);

    const auto v = pair_of("two_scale");
    const double p = 1.5, q = 1.5;
    const auto zz = relative_zeta(v.p, v.m, v.o, p, q);
    const auto zs = relative_zeta(v.p, v.m, v.o, q, p);
    const double four = spectral_zeta(v.p, p + q) + spectral_zeta(v.m, p + q) - zz.Z_X - zs.Z_X;
    CHECK(std::abs(zz.Z_Psi - four) < 1e-12);

    const auto zero = lap(circle(32), 1.0, 0.0, 0.0);
    const auto zm = relative_zeta(zero, zero, overlap(zero, zero), 1.0, 1.0);
    CHECK(zm.zero_modes_plus == 1);
    CHECK(zm.zero_modes_minus == 1);
}

TEST_CASE("large times are governed by the bottom eigenspaces")
{
    const auto v = pair_of("two_scale", 64);
    const double t = 1.0, s = 0.5, eps = 50.0;
    const double lim = combined_X(v.p, v.m, v.o, eps * t, eps * s).value *
                       std::exp(eps * (t * v.p.lowest() + s * v.m.lowest()));
    CHECK(lim == doctest::Approx(bottom_overlap(v.p, v.m, v.o)).epsilon(1e-6));
}

TEST_CASE("epsilon windows")
{
    const auto v = pair_of("variable_metric");
    const auto w = safe_epsilon_window(v.p, v.m, 1.0, 1.0, 1e-8);
    CHECK(w.second == doctest::Approx(12.5 * w.first));
    CHECK_NOTHROW(combined_X(v.p, v.m, v.o, w.first, w.first));
    CHECK_THROWS_AS(combined_X(v.p, v.m, v.o, 1e-5, 1e-5), TruncationError);
}
