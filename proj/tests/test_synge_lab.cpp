#include <doctest.h>

#include <cmath>

#include "heatrace/errors.hpp"
#include "heatrace/synge_lab.hpp"

using namespace heatrace;
using cd = std::complex<double>;

namespace {

Eigen::Vector2d v2(double a, double b) { return Eigen::Vector2d(a, b); }
Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

double sphere_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b)
{
    const double c = 1.0 - 2.0 * (a - b).squaredNorm() / ((1.0 + a.squaredNorm()) * (1.0 + b.squaredNorm()));
    return std::acos(c);
}

// c(x) = (1 + 0.2 x)^2, arc length s = x + 0.1 x^2
ScalarJet quad_line(double x)
{
    ScalarJet s;
    s.f = (1.0 + 0.2 * x) * (1.0 + 0.2 * x);
    s.d = v1(0.4 * (1.0 + 0.2 * x));
    s.dd = Eigen::MatrixXd::Constant(1, 1, 0.08);
    return s;
}

MetricPatch scaled(const MetricPatch& p, double c)
{
    return MetricPatch(
        p.dim(),
        [p, c](const Eigen::VectorXd& x) {
            MetricJet j = p.jet(x);
            j.g *= c;
            for (auto& m : j.dg) m *= c;
            for (auto& r : j.ddg)
                for (auto& m : r) m *= c;
            return j;
        },
        p.center(), p.radius(), p.name() + "_scaled");
}

void require_pass(const SyngeReport& r)
{
    for (const auto& c : r.checks) {
        INFO(r.metric << " " << c.name << " error " << c.error << " tol " << c.tolerance);
        CHECK(c.pass);
    }
}

const LimitCheck& find(const SyngeReport& r, const std::string& name)
{
    for (const auto& c : r.checks)
        if (c.name == name) return c;
    throw std::runtime_error("no check " + name);
}

Eigen::Matrix2cd pauli(int k)
{
    Eigen::Matrix2cd s;
    if (k == 1) s << 0, 1, 1, 0;
    if (k == 2) s << 0, cd(0, -1), cd(0, 1), 0;
    if (k == 3) s << 1, 0, 0, -1;
    return s;
}

} // namespace

TEST_CASE("sigma on flat and constant conformal metrics")
{
    const auto flat = MetricPatch::flat(2, 2.0);
    const auto s = geodesic_sigma(flat, v2(0.3, -0.4), v2(-0.2, 0.5));
    CHECK(s.sigma == doctest::Approx(0.5 * (0.25 + 0.81)).epsilon(1e-14));
    CHECK((s.mixed + Eigen::Matrix2d::Identity()).norm() < 1e-12);

    const auto cst = MetricPatch::conformal(
        [](const Eigen::VectorXd&) {
            ScalarJet u;
            u.f = 0.3;
            u.d = Eigen::Vector2d::Zero();
            u.dd = Eigen::Matrix2d::Zero();
            return u;
        },
        v2(0, 0), 2.0);
    const auto c = geodesic_sigma(cst, v2(0.3, -0.4), v2(-0.2, 0.5));
    CHECK(c.sigma == doctest::Approx(std::exp(0.6) * 0.5 * 1.06).epsilon(1e-12));
}

TEST_CASE("sigma against closed forms on curved metrics")
{
    const auto sph = MetricPatch::sphere(v2(0.1, 0.2), 0.8);
    for (auto [a, b] : {std::pair{v2(0.3, 0.1), v2(-0.1, 0.4)}, std::pair{v2(0.6, 0.3), v2(0.0, -0.3)}}) {
        const auto s = geodesic_sigma(sph, a, b);
        const double d = sphere_distance(a, b);
        CHECK(s.sigma == doctest::Approx(0.5 * d * d).epsilon(1e-10));
        CHECK(s.hj_residual < 1e-8);
    }
    const auto line = MetricPatch::line(quad_line, 0.0, 1.0);
    const auto s = geodesic_sigma(line, v1(0.7), v1(-0.4));
    const double L = (0.7 + 0.049) - (-0.4 + 0.016);
    CHECK(s.sigma == doctest::Approx(0.5 * L * L).epsilon(1e-12));
}

TEST_CASE("sigma symmetry, positivity and the metric-free identity")
{
    const auto smp = sample_sigma(MetricPatch::wavy(v2(0, 0), 1.0), v2(0.2, 0.15), 0.4, 10);
    CHECK(smp.max_asymmetry < 1e-10);
    CHECK(smp.max_hj_residual < 1e-8);
    CHECK(smp.max_metric_free < 1e-8);
    CHECK(smp.min_sigma > 0.0);
    CHECK(smp.stencil.size() == 10);
}

TEST_CASE("curvature of the sphere and of a conformal metric")
{
    const auto sph = MetricPatch::sphere(v2(0, 0), 0.9);
    const Eigen::Vector2d x(0.3, -0.2);
    const Tens R = ricci(sph, x);
    const Eigen::MatrixXd g = sph.g(x);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(R({i, j}) == doctest::Approx(g(i, j)).epsilon(1e-7));

    // Ric = -Laplacian(u) delta for g = exp(2u) delta
    const auto wv = MetricPatch::wavy(v2(0, 0), 1.0);
    const double a = 0.4, b = -0.3;
    const double lap = -0.1 * std::sin(a) * std::cos(0.7 * b) - 0.049 * std::sin(a) * std::cos(0.7 * b);
    const Tens Rw = ricci(wv, v2(a, b));
    CHECK(Rw({0, 0}) == doctest::Approx(-lap).epsilon(1e-7));
    CHECK(Rw({1, 1}) == doctest::Approx(-lap).epsilon(1e-7));
    CHECK(std::abs(Rw({0, 1})) < 1e-9);
}

TEST_CASE("finite differences of a known function")
{
    auto F = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd v(1);
        v[0] = std::sin(x[0]) * std::exp(x[1]);
        return v;
    };
    const Eigen::Vector2d x0(0.3, -0.2);
    const auto d2 = fd_derivative(F, x0, 2);
    CHECK(d2.value[0]({0, 0}) == doctest::Approx(-std::sin(0.3) * std::exp(-0.2)).epsilon(1e-8));
    CHECK(d2.value[0]({0, 1}) == doctest::Approx(std::cos(0.3) * std::exp(-0.2)).epsilon(1e-8));
    CHECK(d2.value[0]({1, 0}) == d2.value[0]({0, 1}));
    CHECK(d2.order == doctest::Approx(2.0).epsilon(0.05));
    const auto d3 = fd_derivative(F, x0, 3);
    CHECK(d3.value[0]({0, 0, 1}) == doctest::Approx(-std::sin(0.3) * std::exp(-0.2)).epsilon(1e-7));
    CHECK(d3.order_ok);
    CHECK_THROWS_AS(fd_derivative(F, x0, 4), DomainError);
}

TEST_CASE("coincidence limits")
{
    for (const auto& p : {MetricPatch::sphere(v2(0.1, 0.2), 0.8), MetricPatch::wavy(v2(0, 0), 1.0)}) {
        const auto r = coincidence_suite(p, v2(0.2, 0.15));
        require_pass(r);
        CHECK(r.flags.empty());
        CHECK(find(r, "sigma_ij").error < 1e-7);
    }
}

TEST_CASE("nabla nabla zeta equals Ricci over six")
{
    // sphere: R_ij = g_ij, checked against that value rather than the computed Ricci
    const auto sph = MetricPatch::sphere(v2(0, 0), 0.8);
    const Eigen::Vector2d xp(0.2, 0.15);
    const auto r = coincidence_suite(sph, xp);
    const auto& c = find(r, "nabla nabla zeta");
    const Eigen::MatrixXd g = sph.g(xp);
    for (int q = 0; q < 4; ++q) CHECK(c.measured[q] == doctest::Approx(g(q / 2, q % 2) / 6.0).epsilon(1e-6));
}

TEST_CASE("two-metric tensors for proportional metrics")
{
    const auto g = MetricPatch::wavy(v2(0, 0), 1.0);
    const Eigen::Vector2d xp(0.1, -0.2);
    const Eigen::MatrixXd gx = g.g(xp);

    const auto same = two_metric_tensors(g, g, xp);
    require_pass(same.report);
    CHECK(max_abs(same.S[1]) < 1e-7);
    CHECK(max_abs(same.S[2]) < 1e-6);
    CHECK(max_abs(same.V[1]) < 1e-7);

    const auto twice = two_metric_tensors(g, scaled(g, 2.0), xp);
    require_pass(twice.report);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(twice.S[0]({i, j}) == doctest::Approx(2.0 * gx(i, j)).epsilon(1e-8));
    CHECK(max_abs(twice.S[1]) < 1e-7);
    CHECK(max_abs(twice.W) < 1e-12);
}

TEST_CASE("two-metric tensors in one dimension")
{
    const auto g = MetricPatch::flat(1, 1.0);
    const auto h = MetricPatch::line(quad_line, 0.0, 1.0);
    const double x = 0.3;
    const auto t = two_metric_tensors(g, h, v1(x));
    require_pass(t.report);
    CHECK(t.S[1]({0, 0, 0}) == doctest::Approx(1.5 * 0.4 * (1.0 + 0.2 * x)).epsilon(1e-7));
    CHECK(max_abs_diff(t.S4_W, t.S4_K) < 1e-10);
}

TEST_CASE("two-metric tensors for unrelated curved metrics")
{
    const auto t = two_metric_tensors(MetricPatch::sphere(v2(0.1, 0.2), 0.8), MetricPatch::wavy(v2(0, 0), 1.0),
                                      v2(0.2, 0.15));
    require_pass(t.report);
    CHECK(max_abs_diff(t.S3_W, t.S3_K) < 1e-12);
    CHECK(max_abs_diff(t.S4_W, t.S4_K) < 1e-10);
    CHECK(is_symmetric(t.S[2], 1e-12));
}

TEST_CASE("parallel transport")
{
    const auto flat = MetricPatch::flat(2, 1.0);
    ConnectionFn zero = [](const Eigen::VectorXd&) {
        return std::vector<Eigen::MatrixXcd>(2, Eigen::MatrixXcd::Zero(2, 2));
    };
    CHECK((parallel_transport(flat, zero, v2(0.3, 0.4), v2(-0.2, 0.1)) - Eigen::Matrix2cd::Identity()).norm() < 1e-13);

    // U(1) in one dimension: P = exp(-int a)
    const auto line = MetricPatch::line(quad_line, 0.0, 1.0);
    ConnectionFn a = [](const Eigen::VectorXd& x) {
        return std::vector<Eigen::MatrixXcd>{Eigen::MatrixXcd::Constant(1, 1, cd(0, 0.5 + 0.3 * x[0]))};
    };
    ConnectionFn b = [](const Eigen::VectorXd& x) {
        return std::vector<Eigen::MatrixXcd>{Eigen::MatrixXcd::Constant(1, 1, cd(0, 0.2 * x[0] * x[0]))};
    };
    const double x = 0.6, xp = -0.3;
    const cd expect = std::exp(cd(0, -(0.5 * (x - xp) + 0.15 * (x * x - xp * xp))));
    CHECK(std::abs(parallel_transport(line, a, v1(x), v1(xp))(0, 0) - expect) < 1e-11);

    const auto r = transport_suite(line, a, line, b, v1(xp));
    require_pass(r);
    const auto& c = find(r, "[nabla P_hB] = -C");
    CHECK(c.measured[1] == doctest::Approx(-(0.2 * xp * xp - 0.5 - 0.3 * xp)).epsilon(1e-7));
}

TEST_CASE("non-abelian transport limits on curved metrics")
{
    ConnectionFn A = [](const Eigen::VectorXd& x) {
        const cd i(0, 1);
        return std::vector<Eigen::MatrixXcd>{i * 0.3 * x[1] * pauli(1), i * (0.2 * pauli(2) + 0.1 * x[0] * pauli(3))};
    };
    ConnectionFn B = [](const Eigen::VectorXd& x) {
        const cd i(0, 1);
        return std::vector<Eigen::MatrixXcd>{i * 0.25 * pauli(3), i * 0.15 * x[0] * x[1] * pauli(1)};
    };
    const auto r = transport_suite(MetricPatch::sphere(v2(0, 0), 0.8), A, MetricPatch::wavy(v2(0, 0), 1.0), B,
                                   v2(0.2, 0.15));
    require_pass(r);
    CHECK(r.checks.size() == 4);
}

TEST_CASE("metric recovery from mixed derivatives")
{
    for (const auto& p : {MetricPatch::sphere(v2(0, 0), 0.8), MetricPatch::wavy(v2(0, 0), 1.0)}) {
        const Eigen::Vector2d xp(0.1, 0.05);
        const Eigen::Vector2d x = xp + 0.1 * p.radius() * v2(0.6, 0.8);
        const auto r = metric_recovery(p, x, xp);
        CHECK(r.error < 1e-6);
        CHECK(r.series_ratio < 1.0);
        CHECK(r.series_terms > 0);
    }
}

TEST_CASE("synge_lab failure modes")
{
    const auto sph = MetricPatch::sphere(v2(0, 0), 0.5);
    CHECK_THROWS_AS(geodesic_sigma(sph, v2(0.6, 0.0), v2(0, 0)), DomainError);
    GeodesicOptions few;
    few.max_iter = 0;
    CHECK_THROWS_AS(geodesic_sigma(sph, v2(0.4, 0.1), v2(-0.3, 0.0), few), ConvergenceError);
    const MetricPatch bad(
        1,
        [](const Eigen::VectorXd& x) {
            MetricJet j;
            j.g = Eigen::MatrixXd::Constant(1, 1, x[0]);
            j.dg = {Eigen::MatrixXd::Constant(1, 1, 1.0)};
            j.ddg = {{Eigen::MatrixXd::Zero(1, 1)}};
            return j;
        },
        v1(0.0), 1.0, "degenerate");
    CHECK_THROWS_AS(bad.jet(v1(-0.2)), GeometryError);
    CHECK_THROWS_AS(MetricPatch::flat(3), DomainError);
}
