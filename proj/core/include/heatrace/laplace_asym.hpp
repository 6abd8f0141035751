#pragma once
// Laplace-method asymptotics: Gaussian averages, Hermite polynomials and the
// small-eps coefficients of (4 pi eps)^{-n/2} int exp(-Sigma / 2eps) phi.
#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heatrace/tensor.hpp"

namespace heatrace {

struct GaussianModel {
    int n = 1;
    Eigen::MatrixXd G, Ginv;
    double det = 1.0;

    GaussianModel() = default;
    explicit GaussianModel(const Eigen::MatrixXd& hessian);   // throws GeometryError unless SPD
};

// <f>_G = (4 pi)^{-n/2} G^{1/2} int exp(-<y,Gy>/4) f(y) dy, so <y^i y^j> = 2 G^{ij}.
// Sum over pair partitions of the index list.
double gaussian_moment(const GaussianModel& m, const std::vector<int>& idx);
// (2k)!/k! G^{(i1 i2} ... G^{i_{2k-1} i_{2k})}, by averaging over all orderings
double gaussian_moment_symmetrized(const GaussianModel& m, const std::vector<int>& idx);
// sum_I T_I <y^I> for a tensor of any rank
double gaussian_average(const GaussianModel& m, const Tens& T);

// sparse polynomial in y^1..y^n
class Polynomial {
public:
    explicit Polynomial(int n = 1) : n_(n) {}
    static Polynomial constant(int n, double c);

    int dim() const { return n_; }
    void add(const std::vector<int>& exps, double c);
    Polynomial derivative(int i) const;
    Polynomial times_coordinate(int j, double c = 1.0) const;
    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial scaled(double c) const;
    double operator()(const Eigen::VectorXd& y) const;
    double average(const GaussianModel& m) const;   // through gaussian_moment
    int degree() const;
    const std::map<std::vector<int>, double>& terms() const { return t_; }

private:
    int n_;
    std::map<std::vector<int>, double> t_;   // exponent vector -> coefficient
};

// H_{i1..ik} = (-1)^k D_{i1} ... D_{ik} 1 with D_i = d_i - 1/2 G_ij y^j
Polynomial hermite(const GaussianModel& m, const std::vector<int>& idx);
double hermite_eval(const GaussianModel& m, const std::vector<int>& idx, const Eigen::VectorXd& y);
// Gram matrix <H_I H_J> over all index tuples of length k (row-major tuple order)
Eigen::MatrixXd hermite_orthogonality(const GaussianModel& m, int k);
// k!/2^k G_{i1(j1} ... G_{|ik| jk)}, same layout
Eigen::MatrixXd hermite_orthogonality_expected(const GaussianModel& m, int k);

// phi jet: jet[k] holds the rank-k array of partial derivatives at the origin
using Jet = std::vector<Tens>;

// flat Gaussian: F(eps) = (4 pi eps)^{-n/2} int exp(-<y,Gy>/4eps) phi ~ sum eps^k c_k
std::vector<double> flat_expansion(const GaussianModel& m, const Jet& phi, int k_max);
// same coefficients as (1/k!) (Delta_G^k G^{-1/2} phi)(0) on the Taylor polynomial
std::vector<double> flat_expansion_laplacian(const GaussianModel& m, const Jet& phi, int k_max);

// Taylor data at the critical point. phi entries are derivatives of the scalar g^{-1/2} phi.
struct TaylorData {
    Eigen::MatrixXd G;           // Sigma_ij
    Tens S3, S4;                 // Sigma_ijk, Sigma_ijkl (totally symmetric)
    double phi0 = 0.0;
    Tens phi1, phi2, phi3, phi4;
    Eigen::MatrixXd g;           // base metric at the point, identity in flat mode
    Tens ricci;                  // R^g_ij, zero in flat mode
    double scalar = 0.0;         // R_g, checked against g^ij R_ij

    static TaylorData flat(const Eigen::MatrixXd& G);   // all jets zero, g = 1
    int dim() const { return static_cast<int>(G.rows()); }
    void validate(double tol = 1e-12) const;
};

struct MorseOptions {
    bool as_printed = false;     // 1/72 instead of 1/12 in the Sigma3 Sigma3 block of F2
    double vanish_tol = 1e-14;   // F2 hypothesis [phi] = [d phi] = 0
};

struct MorseCoefficients {
    double F0 = 0.0, F1 = 0.0;
    std::optional<double> F2;
};

// closed tensor formulas; order 2 needs phi0 = phi1 = 0
MorseCoefficients morse_expansion(const TaylorData& d, int order = 1, const MorseOptions& opt = {});
// Gaussian average of psi_k built from explicit pair partitions
MorseCoefficients morse_expansion_wick(const TaylorData& d, int order = 1);

struct QuadratureValue {
    double eps = 0.0, value = 0.0, error = 0.0;
};

// F(eps) on a box domain; n = 1 or 2. Sigma and phi take coordinates relative to the critical point.
std::vector<QuadratureValue> quadrature_oracle(const std::function<double(const Eigen::VectorXd&)>& Sigma,
                                               const std::function<double(const Eigen::VectorXd&)>& phi,
                                               const std::vector<double>& eps, const Eigen::VectorXd& lo,
                                               const Eigen::VectorXd& hi, double abs_tol = 1e-12);
// half-width r of the box on which Sigma >= 25 eps ln(1e14) outside, for Sigma ~ G y^2/2 with smallest eigenvalue
double quadrature_radius(const GaussianModel& m, double eps);

struct IdentityCheck {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    bool pass = false;
};
// G^ij G^kl G^mn Sigma_(ijk Sigma_lmn) = 1/5 G G G (2 Sigma_ikm Sigma_jln + 3 Sigma_ijm Sigma_kln)
IdentityCheck symmetrization_identity_check(const GaussianModel& m, const Tens& S3, double tol = 1e-12);
// the two F2 identities: Sigma4 phi2 (1/5 ...) and Sigma3 Sigma3 phi2 (1/35 ...)
std::vector<IdentityCheck> f2_symmetrization_checks(const GaussianModel& m, const Tens& S3, const Tens& S4,
                                                    const Tens& phi2, double tol = 1e-12);

// shipped integrands with known Taylor data; phi vanishes to second order so F0..F2 are all live
struct LaplaceFixture {
    std::string name;
    TaylorData data;
    std::function<double(const Eigen::VectorXd&)> Sigma, phi;
    Eigen::VectorXd lo, hi;
};
// cubic_1d, aniso_2d, sphere_normal (unit sphere in normal coordinates, curved input mode)
std::vector<LaplaceFixture> laplace_fixtures();

struct ConvergenceReport {
    std::string name;
    MorseCoefficients coeffs;
    std::vector<double> eps, value, residual;   // residual = |F - F0 - eps F1 - eps^2 F2|
    double slope = 0.0;                         // least-squares log-log slope
    bool pass = false;
};
ConvergenceReport oracle_convergence(const LaplaceFixture& f, const std::vector<double>& eps, double min_slope = 2.7);

Tens outer(const Tens& a, const Tens& b);
// T_{i1 i2 i3 i4 ...} contracted with Ginv on slot pairs (0,1), (2,3), ...
double contract_pairs(const Tens& T, const Eigen::MatrixXd& Ginv);

} // namespace heatrace
