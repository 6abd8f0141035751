#include <doctest.h>

#include <boost/math/quadrature/trapezoidal.hpp>
#include <cmath>

#include "heatrace/coeff_engine.hpp"
#include "heatrace/errors.hpp"
#include "heatrace/fixtures.hpp"

using namespace heatrace;

namespace {

ModelManifold circle(int grid) { return ModelManifold::circle(2.0 * M_PI, grid); }

ScalarField cst(const ModelManifold& m, double v) { return ScalarField::Constant(m.points(), v); }

// periodic integrand: the trapezoid rule is spectrally accurate
template <class F>
double periodic(F f)
{
    return boost::math::quadrature::trapezoidal(f, 0.0, 2.0 * M_PI, 1e-15);
}

// int (1 + 0.3 cos x)^{-1/2}
double wave_volume()
{
    return periodic([](double x) { return 1.0 / std::sqrt(1.0 + 0.3 * std::cos(x)); });
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

} // namespace

TEST_CASE("classical A coefficients")
{
    const auto m = circle(32);
    auto a = classical_A(m, laplace_1d(m, cst(m, 1.0), cst(m, 0.0), cst(m, 0.0)));
    CHECK(a.A0 == doctest::Approx(2.0 * M_PI).epsilon(1e-14));
    CHECK(std::abs(a.A1) < 1e-14);
    a = classical_A(m, laplace_1d(m, cst(m, 1.0), cst(m, 0.4), cst(m, 0.75)));
    CHECK(a.A1 == doctest::Approx(-2.0 * M_PI * 0.75).epsilon(1e-14));
    // R/6 enters through the override
    a = classical_A(m, laplace_1d(m, cst(m, 1.0), cst(m, 0.0), cst(m, 0.0)), 3.0);
    CHECK(a.A1 == doctest::Approx(M_PI).epsilon(1e-14));

    const double s = 0.6;
    const auto d = dirac_1d(m, cst(m, 1.0), cst(m, 0.2), cst(m, s), cst(m, 0.0));
    a = classical_A(m, d);
    CHECK(a.A0 == doctest::Approx(4.0 * M_PI).epsilon(1e-14));
    CHECK(a.A1 == doctest::Approx(-2.0 * M_PI * 2.0 * s * s).epsilon(1e-13));

    // variable metric against an independent quadrature of g^{1/2}
    const auto f = make_fixture("equal_laplace");
    a = classical_A(f.manifold, f.plus);
    CHECK(rel(a.A0, wave_volume()) < 1e-13);
    CHECK(rel(a.A1, -0.5 * wave_volume()) < 1e-13);
}

TEST_CASE("Dirac H coefficients")
{
    const auto m = circle(32);
    auto h = dirac_H(m, dirac_1d(m, cst(m, 1.0), cst(m, 0.0), cst(m, 0.6), cst(m, 0.0)));
    CHECK(std::abs(h.H0) < 1e-14);
    CHECK(std::abs(h.H1) < 1e-13);
    h = dirac_H(m, dirac_1d(m, cst(m, 2.0), cst(m, 0.3), cst(m, 0.0), cst(m, 0.0)));
    CHECK(std::abs(h.H0) < 1e-14);
    CHECK(std::abs(h.H1) < 1e-14);
    CHECK_THROWS(dirac_H(m, laplace_1d(m, cst(m, 1.0), cst(m, 0.0), cst(m, 0.0))));
}

TEST_CASE("b coefficients at constants")
{
    const auto m = circle(32);
    const double cp = 1.0, cm = 4.0, ap = 0.3, am = -0.2, qp = 0.5, qm = 1.2;
    const auto p = laplace_1d(m, cst(m, cp), cst(m, ap), cst(m, qp));
    const auto q = laplace_1d(m, cst(m, cm), cst(m, am), cst(m, qm));
    for (auto [t, s] : {std::pair{1.0, 1.0}, {0.5, 1.5}, {1.5, 0.5}}) {
        CAPTURE(t);
        CAPTURE(s);
        const auto b = b_coeffs(m, p, q, t, s);
        CHECK((b.k0.density.array() - 1.0).abs().maxCoeff() < 1e-15);
        // t L+ + s L- = alpha (k + beta/alpha)^2 + gamma - beta^2/alpha + t q+ + s q-
        const double alpha = t * cp + s * cm, beta = t * cp * ap + s * cm * am, gamma = t * cp * ap * ap + s * cm * am * am;
        const double B0 = 2.0 * M_PI / std::sqrt(alpha);
        CHECK(rel(b.k0.value, B0) < 1e-14);
        CHECK(rel(b.k1.value, B0 * (beta * beta / alpha - gamma - t * qp - s * qm)) < 1e-13);
        // t(-q+) + s(-q-) + ts G^{11} (C+ - C-)^2 with G^{11} = 1 / (s/c+ + t/c-)
        const double b1 = -t * qp - s * qm - t * s * std::pow(ap - am, 2) / (s / cp + t / cm);
        CHECK(std::abs(b.k1.density[5] - b1) < 1e-13);
        CHECK(b.k1.imag_residual < 1e-14);
        double sum = 0.0;
        for (const auto& st : b.k1.terms) sum += st.value;
        CHECK(sum == doctest::Approx(b.k1.value).epsilon(1e-13));
    }
}

TEST_CASE("equal operators reduce to the classical coefficients")
{
    for (const char* name : {"equal_laplace", "equal_dirac"}) {
        CAPTURE(name);
        const auto f = make_fixture(name, 128);
        const auto A = classical_A(f.manifold, f.plus);
        for (auto [t, s] : {std::pair{0.3, 0.9}, {1.0, 1.0}}) {
            const double T = t + s;
            const auto b = b_coeffs(f.manifold, f.plus, f.minus, t, s);
            CHECK(rel(b.k0.value, std::pow(T, -0.5) * A.A0) < 1e-10);
            CHECK(rel(b.k1.value, std::pow(T, 0.5) * A.A1) < 1e-10);
            const auto psi = psi_coeffs(f.manifold, f.plus, f.minus, t, s);
            CHECK(std::abs(psi.k0.value) < 1e-10);
            CHECK(std::abs(psi.k1.value) < 1e-10);
            if (!f.dirac) continue;
            const auto c = c_coeffs(f.manifold, f.plus, f.minus, t, s);
            // c0 = (n/2) tr I / (t + s)
            CHECK((c.k0.density.array() - 1.0 / T).abs().maxCoeff() < 1e-13);
            CHECK(rel(c.k0.value, 0.5 * std::pow(T, -1.5) * A.A0) < 1e-10);
            CHECK(rel(c.k1.value, -0.5 * std::pow(T, -0.5) * A.A1) < 1e-10);
            const auto phi = phi_coeffs(f.manifold, f.plus, f.minus, t, s);
            CHECK(std::abs(phi.k0.value) < 1e-10);
            CHECK(std::abs(phi.k1.value) < 1e-10);
        }
    }
}

TEST_CASE("c0 for constant Dirac matrices")
{
    const auto m = circle(32);
    const auto p = dirac_1d(m, cst(m, 1.0), cst(m, 0.0), cst(m, 0.6), cst(m, 0.0));
    const auto q = dirac_1d(m, cst(m, 4.0), cst(m, 0.0), cst(m, 0.9), cst(m, 0.0));
    const auto c = c_coeffs(m, p, q, 1.0, 1.0);
    // 1/2 g_11 tr(gamma+ gamma-) = 1/2 (1/5) tr(2 I)
    CHECK(c.k0.density[0] == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(rel(c.k0.value, 2.0 * M_PI * 2.0 * std::pow(5.0, -1.5)) < 1e-14);
}

TEST_CASE("Psi0 for two constant metrics")
{
    const auto m = circle(32);
    const double cp = 1.0, cm = 4.0;
    const auto p = laplace_1d(m, cst(m, cp), cst(m, 0.0), cst(m, 0.0));
    const auto q = laplace_1d(m, cst(m, cm), cst(m, 0.0), cst(m, 0.0));
    for (auto [t, s] : {std::pair{0.7, 0.7}, {0.4, 1.3}}) {
        const double expect = 2.0 * M_PI *
                              (std::pow(t + s, -0.5) * (1.0 / std::sqrt(cp) + 1.0 / std::sqrt(cm)) -
                               1.0 / std::sqrt(t * cp + s * cm) - 1.0 / std::sqrt(s * cp + t * cm));
        CHECK(rel(psi_coeffs(m, p, q, t, s).k0.value, expect) < 1e-13);
    }
}

TEST_CASE("shifted operators: B closed forms and vanishing Psi")
{
    const auto f = make_fixture("shifted_laplace", 128);
    const auto Am = classical_A(f.manifold, f.minus);
    const double m2 = kShiftMass * kShiftMass;
    for (auto [t, s] : {std::pair{1.0, 1.0}, {0.4, 1.1}}) {
        const double T = t + s;
        const auto b = b_coeffs(f.manifold, f.plus, f.minus, t, s);
        CHECK(rel(b.k0.value, std::pow(T, -0.5) * Am.A0) < 1e-12);
        CHECK(rel(b.k1.value, std::sqrt(T) * Am.A1 - t * m2 * Am.A0 / std::sqrt(T)) < 1e-12);
        const auto psi = psi_coeffs(f.manifold, f.plus, f.minus, t, s);
        CHECK(std::abs(psi.k1.value) < 1e-11);
    }

    const auto d = make_fixture("shifted_dirac", 128);
    const auto Ad = classical_A(d.manifold, d.minus);
    for (auto [t, s] : {std::pair{1.0, 1.0}, {0.4, 1.1}}) {
        const double T = t + s;
        const auto c = c_coeffs(d.manifold, d.plus, d.minus, t, s);
        CHECK(rel(c.k0.value, 0.5 * std::pow(T, -1.5) * Ad.A0) < 1e-12);
        CHECK(rel(c.k1.value, -0.5 * std::pow(T, -0.5) * Ad.A1 - 0.5 * t * std::pow(T, -1.5) * m2 * Ad.A0) < 1e-12);
    }
}

TEST_CASE("exchange symmetry and homogeneity of the densities")
{
    for (const char* name : {"variable_metric", "dirac_variable"}) {
        CAPTURE(name);
        const auto f = make_fixture(name, 128);
        const double t = 0.6, s = 1.3;
        auto get = [&](const OperatorGeometry& p, const OperatorGeometry& q, double tt, double ss) {
            return f.dirac ? c_coeffs(f.manifold, p, q, tt, ss) : b_coeffs(f.manifold, p, q, tt, ss);
        };
        const int shift = f.dirac ? -1 : 0;
        const auto a = get(f.plus, f.minus, t, s);
        const auto sw = get(f.minus, f.plus, s, t);
        CHECK((a.k0.density - sw.k0.density).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.k1.density - sw.k1.density).cwiseAbs().maxCoeff() < 1e-12);
        for (double lam : {2.0, 0.5}) {
            CAPTURE(lam);
            const auto b = get(f.plus, f.minus, lam * t, lam * s);
            const double s0 = std::pow(lam, 0 + shift), s1 = std::pow(lam, 1 + shift);
            CHECK((b.k0.density - s0 * a.k0.density).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((b.k1.density - s1 * a.k1.density).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, s1));
        }
    }
}

TEST_CASE("the alternative W block is selectable and differs on a variable metric")
{
    const auto f = make_fixture("variable_metric", 128);
    CoeffOptions printed;
    printed.w_block = WBlockConvention::AsPrinted;
    const auto a = b_coeffs(f.manifold, f.plus, f.minus, 1.0, 1.0);
    const auto b = b_coeffs(f.manifold, f.plus, f.minus, 1.0, 1.0, printed);
    CHECK(a.k0.value == b.k0.value);
    CHECK(std::abs(a.k1.value - b.k1.value) > 1e-4);

    // constant metrics: no W block at all
    const auto c = make_fixture("two_scale", 32);
    CHECK(b_coeffs(c.manifold, c.plus, c.minus, 1.0, 1.0).k1.value ==
          doctest::Approx(b_coeffs(c.manifold, c.plus, c.minus, 1.0, 1.0, printed).k1.value).epsilon(1e-15));
}

TEST_CASE("injected curvature: equal operators keep the classical reduction")
{
    const auto m = circle(32);
    const auto p = laplace_1d(m, cst(m, 1.0), cst(m, 0.2), cst(m, 0.5));
    const double R = 0.9;
    CoeffOptions o;
    o.curvature.scalar_plus = o.curvature.scalar_minus = R;
    o.curvature.ricci_plus = o.curvature.ricci_minus = o.curvature.ricci_g = Eigen::MatrixXd::Constant(1, 1, R);
    const auto A = classical_A(m, p, R);
    CHECK(A.A1 == doctest::Approx(2.0 * M_PI * (R / 6.0 - 0.5)).epsilon(1e-14));
    for (auto [t, s] : {std::pair{1.0, 1.0}, {0.3, 1.4}}) {
        const auto b = b_coeffs(m, p, p, t, s, o);
        CHECK(rel(b.k1.value, std::sqrt(t + s) * A.A1) < 1e-12);
        CHECK(rel(b.k1.value, b_coeffs(m, p, p, t, s).k1.value) > 1e-3);
    }
}
