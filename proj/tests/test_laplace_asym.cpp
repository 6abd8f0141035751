#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "heatrace/errors.hpp"
#include "heatrace/laplace_asym.hpp"

using namespace heatrace;
using boost::math::quadrature::gauss_kronrod;

namespace {

Eigen::MatrixXd mat1(double g) { return Eigen::MatrixXd::Constant(1, 1, g); }

Eigen::MatrixXd aniso()
{
    Eigen::MatrixXd G(2, 2);
    G << 1.3, 0.4, 0.4, 0.9;
    return G;
}

// (4pi)^{-1/2} G^{1/2} int y^p exp(-G y^2 / 4), by quadrature
double moment_1d_quad(double G, int p)
{
    auto f = [&](double y) { return std::pow(y, p) * std::exp(-G * y * y / 4.0); };
    return std::sqrt(G / (4.0 * M_PI)) * gauss_kronrod<double, 61>::integrate(f, -40.0, 40.0, 15, 1e-14);
}

Tens random_sym(int n, int rank, double seed)
{
    Tens t(n, rank);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(seed + 1.7 * i) + 0.3 * std::cos(seed * i);
    return symmetrize(t);
}

} // namespace

TEST_CASE("gaussian moments")
{
    GaussianModel m(mat1(2.0));
    CHECK(gaussian_moment(m, {0, 0}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(gaussian_moment(m, {0, 0, 0, 0}) == doctest::Approx(3.0).epsilon(1e-14));
    for (int p : {2, 4, 6, 8}) {
        std::vector<int> idx(p, 0);
        CHECK(gaussian_moment(m, idx) == doctest::Approx(moment_1d_quad(2.0, p)).epsilon(1e-11));
    }
    CHECK(gaussian_moment(m, {0, 0, 0}) == 0.0);

    GaussianModel unit(Eigen::MatrixXd::Identity(2, 2));
    // factorized: <y1^2><y2^2> = 2 * 2
    CHECK(gaussian_moment(unit, {0, 0, 1, 1}) == doctest::Approx(4.0));

    GaussianModel a(aniso());
    for (const std::vector<int>& idx : std::vector<std::vector<int>>{{0, 1}, {0, 1, 1, 1}, {0, 0, 1, 0, 1, 1}, {0, 1, 0, 1, 1, 0, 0, 1}})
        CHECK(gaussian_moment(a, idx) == doctest::Approx(gaussian_moment_symmetrized(a, idx)).epsilon(1e-12));
    CHECK(gaussian_moment(a, {0, 1, 1}) == 0.0);
}

TEST_CASE("gaussian model rejects non SPD Hessians")
{
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(GaussianModel{bad}, GeometryError);
}

TEST_CASE("hermite polynomials")
{
    GaussianModel a(aniso());
    Eigen::VectorXd y(2);
    y << 0.7, -1.1;
    for (int i = 0; i < 2; ++i)
        CHECK(hermite_eval(a, {i}, y) == doctest::Approx(0.5 * (a.G.row(i) * y)(0)));
    CHECK(hermite(a, {0, 1}).average(a) == doctest::Approx(0.0).scale(1.0));
    for (int k = 1; k <= 4; ++k) {
        const Eigen::MatrixXd gram = hermite_orthogonality(a, k);
        CHECK((gram - hermite_orthogonality_expected(a, k)).norm() < 1e-12 * gram.norm());
    }
    // orthogonal to every lower-degree monomial
    for (const std::vector<int>& lower : std::vector<std::vector<int>>{{}, {0}, {1, 1}, {0, 1, 1}}) {
        Polynomial mono = Polynomial::constant(2, 1.0);
        for (int j : lower) mono = mono.times_coordinate(j);
        CHECK(std::abs((hermite(a, {0, 1, 1, 0}) * mono).average(a)) < 1e-12);
    }
}

TEST_CASE("moment and Hermite duality by quadrature")
{
    // <f>_G = G^{1/2} F(1) for Sigma = <y, G y>/2
    GaussianModel a(aniso());
    auto avg = [&](const Polynomial& p) {
        auto S = [&](const Eigen::VectorXd& y) { return 0.5 * y.dot(a.G * y); };
        auto q = quadrature_oracle(S, [&](const Eigen::VectorXd& y) { return p(y); }, {1.0},
                                   Eigen::VectorXd::Constant(2, -18.0), Eigen::VectorXd::Constant(2, 18.0));
        return std::sqrt(a.det) * q[0].value;
    };
    // f = y1^2 y2 + 0.5 y2^2 - y1 + 0.3 y1^2 y2^2
    Polynomial f(2);
    f.add({2, 1}, 1.0);
    f.add({0, 2}, 0.5);
    f.add({1, 0}, -1.0);
    f.add({2, 2}, 0.3);
    for (const std::vector<int>& I : std::vector<std::vector<int>>{{0}, {1}, {0, 1}, {1, 1}, {0, 0, 1}, {0, 0, 1, 1}}) {
        Polynomial d = f;
        for (int i : I) d = d.derivative(i);
        const double lhs = avg(d);
        const double rhs = avg(hermite(a, I) * f);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9).scale(1.0));
        CHECK(rhs == doctest::Approx((hermite(a, I) * f).average(a)).epsilon(1e-9).scale(1.0));
    }
    // 1D: <d(y^2)> = <H_1 y^2>
    GaussianModel m(mat1(2.0));
    Polynomial y2(1);
    y2.add({2}, 1.0);
    CHECK(y2.derivative(0).average(m) == doctest::Approx((hermite(m, {0}) * y2).average(m)));
}

TEST_CASE("flat expansion")
{
    GaussianModel m(mat1(2.0));
    Jet one{Tens(1, 0, 1.0), Tens(1, 1), Tens(1, 2), Tens(1, 3), Tens(1, 4)};
    auto c = flat_expansion(m, one, 2);
    CHECK(c[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(c[1] == 0.0);
    CHECK(c[2] == 0.0);

    // phi = 1 + y^2: F(eps) = 2^{-1/2} (1 + eps)
    Jet jet{Tens(1, 0, 1.0), Tens(1, 1), Tens(1, 2, 2.0)};
    c = flat_expansion(m, jet, 1);
    CHECK(c[0] == doctest::Approx(std::pow(2.0, -0.5)));
    CHECK(c[1] == doctest::Approx(std::pow(2.0, -0.5)));
    auto q = quadrature_oracle([](const Eigen::VectorXd& y) { return y[0] * y[0]; },
                               [](const Eigen::VectorXd& y) { return 1.0 + y[0] * y[0]; }, {0.01, 0.03},
                               Eigen::VectorXd::Constant(1, -6.0), Eigen::VectorXd::Constant(1, 6.0));
    for (const auto& v : q) CHECK(std::abs(v.value - std::pow(2.0, -0.5) * (1.0 + v.eps)) < 1e-12);

    GaussianModel a(aniso());
    Jet rj{Tens(2, 0, 0.4)};
    for (int r = 1; r <= 6; ++r) rj.push_back(random_sym(2, r, 0.3 * r));
    auto cc = flat_expansion(a, rj, 3);
    auto cl = flat_expansion_laplacian(a, rj, 3);
    for (int k = 0; k <= 3; ++k) CHECK(cc[k] == doctest::Approx(cl[k]).epsilon(1e-12));
    CHECK_THROWS_AS(flat_expansion(a, rj, 4), PreconditionError);
}

TEST_CASE("morse expansion basics")
{
    TaylorData d = TaylorData::flat(mat1(2.0));
    d.phi0 = 1.0;
    auto c = morse_expansion(d, 1);
    CHECK(c.F0 == doctest::Approx(std::pow(2.0, -0.5)));
    CHECK(c.F1 == doctest::Approx(0.0).scale(1.0));
    CHECK_THROWS_AS(morse_expansion(d, 2), PreconditionError);

    // Sigma = y^2 + a y^3, phi = 1: F1 = 2^{-1/2} (15/8) a^2
    const double a = 0.3;
    d.S3[0] = 6.0 * a;
    c = morse_expansion(d, 1);
    CHECK(c.F1 == doctest::Approx(std::pow(2.0, -0.5) * 15.0 / 8.0 * a * a).epsilon(1e-13));
    // oracle: Richardson on (F(eps) - F0) / eps over a domain where Sigma stays positive
    std::vector<double> eps{0.002, 0.001, 0.0005};
    auto q = quadrature_oracle([&](const Eigen::VectorXd& y) { return y[0] * y[0] * (1.0 + a * y[0]); },
                               [](const Eigen::VectorXd&) { return 1.0; }, eps, Eigen::VectorXd::Constant(1, -1.5),
                               Eigen::VectorXd::Constant(1, 2.0));
    std::vector<double> g;
    for (const auto& v : q) g.push_back((v.value - c.F0) / v.eps);
    // g = F1 + eps F2 + ..., eliminate the linear and quadratic terms
    const double r1 = 2.0 * g[1] - g[0], r2 = 2.0 * g[2] - g[1];
    const double extrap = (4.0 * r2 - r1) / 3.0;
    CHECK(extrap == doctest::Approx(c.F1).epsilon(1e-6));
}

TEST_CASE("F2 closed form against the Wick route and quadrature")
{
    for (const auto& f : laplace_fixtures()) {
        CAPTURE(f.name);
        auto c = morse_expansion(f.data, 2);
        auto w = morse_expansion_wick(f.data, 2);
        CHECK(c.F1 == doctest::Approx(w.F1).epsilon(1e-12));
        CHECK(*c.F2 == doctest::Approx(*w.F2).epsilon(1e-12));
    }
    // 1/72 for the Sigma3 Sigma3 block misses the quadrature
    const auto f = laplace_fixtures().front();
    MorseOptions printed;
    printed.as_printed = true;
    auto good = morse_expansion(f.data, 2);
    auto bad = morse_expansion(f.data, 2, printed);
    std::vector<double> eps{0.004, 0.002, 0.001};
    auto q = quadrature_oracle(f.Sigma, f.phi, eps, f.lo, f.hi);
    std::vector<double> g;
    for (const auto& v : q) g.push_back((v.value - v.eps * good.F1) / (v.eps * v.eps));
    const double extrap = 2.0 * g[2] - g[1];
    CHECK(extrap == doctest::Approx(*good.F2).epsilon(1e-4));
    CHECK(std::abs(extrap - *bad.F2) > 0.1);
}

TEST_CASE("curved input reduces to the Ruse-Synge result")
{
    // Sigma = sigma^g: symmetrized higher derivatives vanish, G = g. c1 = [Delta phi] - R/3 [phi]
    Eigen::MatrixXd g(2, 2);
    g << 1.4, 0.2, 0.2, 0.8;
    TaylorData d = TaylorData::flat(g);
    d.g = g;
    d.ricci({0, 0}) = 0.3;
    d.ricci({0, 1}) = d.ricci({1, 0}) = -0.1;
    d.ricci({1, 1}) = 0.5;
    const Eigen::MatrixXd gi = g.inverse();
    d.scalar = gi(0, 0) * 0.3 - 2.0 * gi(0, 1) * 0.1 + gi(1, 1) * 0.5;
    d.phi0 = 0.7;
    d.phi2 = random_sym(2, 2, 1.0);
    double lap = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) lap += gi(i, j) * d.phi2({i, j});
    auto c = morse_expansion(d, 1);
    CHECK(c.F1 == doctest::Approx(lap - d.scalar / 3.0 * d.phi0).epsilon(1e-13));

    d.scalar = 1.0;   // inconsistent with g^ij R_ij
    CHECK_THROWS_AS(morse_expansion(d, 1), ConsistencyError);
}

TEST_CASE("sphere in normal coordinates: curvature terms of F1 and F2")
{
    // F(eps) = (1/2eps) int_0 exp(-r^2/4eps) sin r q(r) dr with q = 1 or r^2
    auto radial = [](double eps, int p) {
        auto f = [&](double r) { return std::exp(-r * r / (4.0 * eps)) * std::sin(r) * std::pow(r, p); };
        return gauss_kronrod<double, 61>::integrate(f, 0.0, 3.0, 15, 1e-14) / (2.0 * eps);
    };
    TaylorData d = TaylorData::flat(Eigen::MatrixXd::Identity(2, 2));
    d.ricci({0, 0}) = d.ricci({1, 1}) = 1.0;
    d.scalar = 2.0;
    d.phi0 = 1.0;
    auto c = morse_expansion(d, 1);
    const double e1 = 1e-3, e2 = 5e-4;
    const double g1 = (radial(e1, 0) - 1.0) / e1, g2 = (radial(e2, 0) - 1.0) / e2;
    CHECK(2.0 * g2 - g1 == doctest::Approx(c.F1).epsilon(1e-5));

    auto f = laplace_fixtures().back();
    auto c2 = morse_expansion(f.data, 2);
    CHECK(c2.F1 == doctest::Approx(4.0));
    const double h1 = (radial(e1, 2) - e1 * 4.0) / (e1 * e1), h2 = (radial(e2, 2) - e2 * 4.0) / (e2 * e2);
    CHECK(2.0 * h2 - h1 == doctest::Approx(*c2.F2).epsilon(1e-5));
}

TEST_CASE("quadrature oracle")
{
    auto S = [](const Eigen::VectorXd& y) { return y[0] * y[0]; };
    auto one = [](const Eigen::VectorXd&) { return 1.0; };
    auto q = quadrature_oracle(S, one, {0.01}, Eigen::VectorXd::Constant(1, -3.0), Eigen::VectorXd::Constant(1, 3.0));
    CHECK(std::abs(q[0].value - std::pow(2.0, -0.5)) < 1e-12);
    CHECK(q[0].error <= 1e-12);

    // halving the domain changes F by less than the Gaussian tail outside
    auto half = quadrature_oracle(S, one, {0.01}, Eigen::VectorXd::Constant(1, -1.5), Eigen::VectorXd::Constant(1, 1.5));
    const double bound = std::exp(-1.5 * 1.5 / (2.0 * 0.01));
    CHECK(std::abs(half[0].value - q[0].value) < bound);

    GaussianModel m(mat1(2.0));
    // Sigma = y^2 reaches 25 eps ln(1e14) at the box edge
    const double r = quadrature_radius(m, 0.01);
    CHECK(r * r == doctest::Approx(25.0 * 0.01 * std::log(1e14)));

    CHECK_THROWS_AS(quadrature_oracle(S, one, {1e-3}, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
                                      1e-30),
                    ConvergenceError);
    CHECK_THROWS_AS(quadrature_oracle(S, one, {-1.0}, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)),
                    DomainError);
}

TEST_CASE("scaling Sigma and eps together")
{
    // exponent unchanged; the (4 pi eps)^{-n/2} prefactor gives F_{2 Sigma}(2 eps) = 2^{-n/2} F_Sigma(eps)
    for (const auto& f : laplace_fixtures()) {
        CAPTURE(f.name);
        const int n = static_cast<int>(f.lo.size());
        auto S2 = [&](const Eigen::VectorXd& y) { return 2.0 * f.Sigma(y); };
        auto a = quadrature_oracle(f.Sigma, f.phi, {0.01}, f.lo, f.hi);
        auto b = quadrature_oracle(S2, f.phi, {0.02}, f.lo, f.hi);
        CHECK(b[0].value == doctest::Approx(std::pow(2.0, -0.5 * n) * a[0].value).epsilon(1e-10));
    }
}

TEST_CASE("oracle convergence slope")
{
    std::vector<double> eps;
    for (int i = 0; i < 7; ++i) eps.push_back(1e-3 * std::pow(10.0, i / 3.0));
    for (const auto& f : laplace_fixtures()) {
        auto r = oracle_convergence(f, eps);
        CAPTURE(f.name);
        CAPTURE(r.slope);
        CHECK(r.pass);
    }
}

TEST_CASE("symmetrization identities")
{
    GaussianModel m(mat1(1.7));
    Tens s(1, 3, 0.9);
    auto c = symmetrization_identity_check(m, s);
    CHECK(c.pass);
    CHECK(c.lhs == doctest::Approx(std::pow(1.0 / 1.7, 3) * 0.81));

    GaussianModel a(aniso());
    const Tens S3 = random_sym(2, 3, 0.2), S4 = random_sym(2, 4, 0.5), p2 = random_sym(2, 2, 0.8);
    CHECK(symmetrization_identity_check(a, S3).pass);
    auto z = symmetrization_identity_check(a, Tens(2, 3));
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    for (const auto& x : f2_symmetrization_checks(a, S3, S4, p2)) {
        CAPTURE(x.name);
        CHECK(x.pass);
    }
}
