#pragma once
// Numerical checks of the world-function machinery: sigma by geodesic shooting,
// coincidence limits by finite differences, two-metric tensors, parallel transport
// and metric recovery from mixed derivatives.
#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "heatrace/tensor.hpp"

namespace heatrace {

// metric with analytic first and second partial derivatives: dg[k](i,j) = d_k g_ij,
// ddg[k][l](i,j) = d_k d_l g_ij
struct MetricJet {
    Eigen::MatrixXd g;
    std::vector<Eigen::MatrixXd> dg;
    std::vector<std::vector<Eigen::MatrixXd>> ddg;
};

struct ScalarJet {
    double f = 0.0;
    Eigen::VectorXd d;
    Eigen::MatrixXd dd;
};

class MetricPatch {
public:
    using Fn = std::function<MetricJet(const Eigen::VectorXd&)>;

    MetricPatch(int n, Fn f, Eigen::VectorXd center, double radius, std::string name = "custom");

    static MetricPatch flat(int n, double radius = 1.0);
    // g = c(x) in one dimension
    static MetricPatch line(std::function<ScalarJet(double)> c, double center, double radius, std::string name = "line");
    // g = exp(2u) delta in two dimensions
    static MetricPatch conformal(std::function<ScalarJet(const Eigen::VectorXd&)> u, Eigen::VectorXd center,
                                 double radius, std::string name = "conformal");
    // unit sphere in stereographic coordinates, u = log(2 / (1 + |x|^2))
    static MetricPatch sphere(Eigen::VectorXd center, double radius);
    // u = 0.1 sin(x1) cos(0.7 x2) + 0.05 x1 x2
    static MetricPatch wavy(Eigen::VectorXd center, double radius);

    int dim() const { return n_; }
    const Eigen::VectorXd& center() const { return center_; }
    double radius() const { return radius_; }
    const std::string& name() const { return name_; }

    MetricJet jet(const Eigen::VectorXd& x) const;   // checks SPD
    Eigen::MatrixXd g(const Eigen::VectorXd& x) const { return jet(x).g; }
    bool contains(const Eigen::VectorXd& x) const;

private:
    int n_;
    Fn f_;
    Eigen::VectorXd center_;
    double radius_;
    std::string name_;
};

// Gamma^i_jk stored [i][j][k]; dGamma [l][i][j][k] = d_l Gamma^i_jk (analytic);
// ddGamma [l][m][i][j][k] by central differences of the analytic first derivative
struct ChristoffelJet {
    Tens G, dG, ddG;
};
ChristoffelJet christoffel(const MetricPatch& p, const Eigen::VectorXd& x);
Tens riemann(const MetricPatch& p, const Eigen::VectorXd& x);   // R^i_jkl stored [i][j][k][l]
Tens ricci(const MetricPatch& p, const Eigen::VectorXd& x);     // R_jl = R^i_jil

struct GeodesicOptions {
    double tol = 1e-13;        // integrator abs/rel tolerance
    double newton_tol = 1e-12; // endpoint mismatch
    int max_iter = 30;
};

struct GeodesicSolution {
    double sigma = 0.0;
    Eigen::VectorXd xi;         // tangent at x' pointing to x, xi^{i'} = -g^{i'j'} sigma_{,j'}
    Eigen::VectorXd tangent;    // velocity at x
    Eigen::VectorXd sigma_x;    // sigma_{,i}
    Eigen::VectorXd sigma_xp;   // sigma_{,i'}
    Eigen::MatrixXd mixed;      // sigma_{,i j'} [i][j'] from the Jacobi fields
    Eigen::MatrixXd jacobi;     // d x(1) / d xi
    double hj_residual = 0.0;   // max of both Hamilton-Jacobi forms
    int iterations = 0;
    std::vector<double> history;
};
// shooting from x' with the geodesic equation plus Jacobi fields, Newton on the initial tangent
GeodesicSolution geodesic_sigma(const MetricPatch& p, const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                                const GeodesicOptions& opt = {});
// zeta = 1/2 log(g^{-1/2}(x) M g^{-1/2}(x')), M = det(-sigma_{,ij'})
double vvm_zeta(const MetricPatch& p, const GeodesicSolution& s, const Eigen::VectorXd& x, const Eigen::VectorXd& xp);

// ---- finite differences ----

struct FdOptions {
    double h = 0.04;           // coarsest step; h/2 and h/4 are also used
    double tol = 1e-6;         // absolute tolerance scaled by max(1, |expected|)
    double min_order = 1.8;
    double noise_floor = 1e-9; // differences below this are not used for the order estimate
};

// partial derivatives of order k of a vector-valued map at x0, from h, h/2, h/4 central stencils
struct FdDerivative {
    std::vector<Tens> value;   // per component, rank k, Romberg-extrapolated
    double error = 0.0;        // max |R(h/2..) - R(h..)| over components
    double order = 0.0;        // observed order of the raw central differences (0: at noise level)
    bool order_ok = true;
};
FdDerivative fd_derivative(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                           const Eigen::VectorXd& x0, int k, const FdOptions& opt = {});

struct LimitCheck {
    std::string name;
    std::vector<double> measured, expected;
    double error = 0.0, tolerance = 0.0, order = 0.0;
    bool pass = false, order_ok = true;
};

struct SyngeReport {
    std::string metric;
    Eigen::VectorXd base;
    FdOptions fd;
    std::vector<LimitCheck> checks;
    std::vector<std::string> flags;   // convergence-order warnings
    bool pass() const;
};

// sampled sigma around x' for the invariants (symmetry, positivity, metric-free identity)
struct SigmaSample {
    Eigen::VectorXd base;
    std::vector<Eigen::VectorXd> stencil;
    std::vector<double> sigma, zeta;
    std::vector<Eigen::MatrixXd> mixed;
    double max_asymmetry = 0.0;        // |sigma(x,x') - sigma(x',x)|
    double max_hj_residual = 0.0;
    double max_metric_free = 0.0;      // |sigma - 1/2 gamma^{i'j} sigma_{,i'} sigma_{,j}|
    double min_sigma = 0.0;
};
SigmaSample sample_sigma(const MetricPatch& p, const Eigen::VectorXd& xp, double r, int count = 8);

// [sigma_{,ij}], [sigma_{,ijk}], [sigma_{,ijkl}], [sigma_{,i'jkl}], zeta limits, derivative exchange,
// sampled invariants
SyngeReport coincidence_suite(const MetricPatch& p, const Eigen::VectorXd& xp, const FdOptions& opt = {});

// S, T, V of sigma^h with g-covariant derivatives, measured and from the W / K formulas
struct TwoMetricTables {
    std::vector<Tens> S, T, V;    // index k-2: S_ij, S_ijk, S_ijkl; same for T, V
    Tens S3_W, S3_K, T4, V3, V4, S4_W, S4_K;
    Tens h, W, DW, K, DK;         // ingredients at x'
    SyngeReport report;
};
TwoMetricTables two_metric_tensors(const MetricPatch& g, const MetricPatch& h, const Eigen::VectorXd& xp,
                                   const FdOptions& opt = {});

// connection one-form A_i(x) (anti-Hermitian, fiber N), one matrix per direction
using ConnectionFn = std::function<std::vector<Eigen::MatrixXcd>(const Eigen::VectorXd&)>;

// transport from x' to x along the g-geodesic: xdot^i (d_i + A_i) P = 0, P(x') = I
Eigen::MatrixXcd parallel_transport(const MetricPatch& p, const ConnectionFn& A, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& xp, const GeodesicOptions& opt = {});
// [nabla P] = 0, [nabla_(i nabla_j) P] = 0, antisymmetric part = R/2, and the two-connection limits
// [nabla^{g,A} P_{h,B}] = -C, [nabla_(i nabla_j) P_{h,B}] = -nabla_(i C_j) + C_(i C_j)
SyngeReport transport_suite(const MetricPatch& g, const ConnectionFn& A, const MetricPatch& h, const ConnectionFn& B,
                            const Eigen::VectorXd& xp, const FdOptions& opt = {});

struct RecoveryResult {
    Eigen::MatrixXd ginv_recovered, ginv_true, g_recovered, g_true;
    double error = 0.0;            // max relative error of both forms
    double series_ratio = 0.0;     // spectral radius of beta V, the series converges for < 1
    int series_terms = 0;          // terms for the truncated series to match Y^{-1} to 1e-12, -1 if divergent
    double gamma_condition = 0.0;
};
// g^{ij} = gamma^{ik'} gamma^{jl'} Y_{k'l'} and g_ij = sigma_{,ik'} sigma_{,jl'} X^{k'l'} at x
RecoveryResult metric_recovery(const MetricPatch& p, const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                               double h = 1e-3);

} // namespace heatrace
