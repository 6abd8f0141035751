#pragma once
// Small-epsilon regression of spectral traces against their asymptotic series.
#include <Eigen/Dense>
#include <string>
#include <vector>

namespace heatrace {

// X-type traces: (4 pi eps)^{n/2} X(eps t, eps s) = sum eps^k B_k
// Y-type traces: (4 pi eps)^{n/2} eps Y(eps t, eps s) = sum eps^k C_k
enum class FitKind { X, Y };

struct FitOptions {
    int k_max = 1;            // coefficients reported: 0..k_max
    int extra_terms = 5;      // higher powers fitted and discarded
    double max_condition = 1e8;
    bool weighted = true;     // weights eps^{-k_max-1}
};

struct AsymFit {
    std::string tag;
    double t = 0.0, s = 0.0;
    int n = 1;
    FitKind kind = FitKind::X;
    std::vector<double> eps;
    Eigen::VectorXd coeffs;       // k = 0..k_max
    Eigen::VectorXd all_coeffs;   // every fitted power
    Eigen::MatrixXd covariance;   // of all_coeffs
    double residual_norm = 0.0;
    double condition = 0.0;
    std::vector<std::string> warnings;

    double sigma(int k) const { return std::sqrt(std::max(0.0, covariance(k, k))); }
};

std::vector<double> log_grid(double lo, double hi, int count);

// values[i] is the raw trace at (eps[i] t, eps[i] s)
AsymFit epsilon_fit(const std::vector<double>& eps, const std::vector<double>& values, int n, FitKind kind,
                    const FitOptions& opt = {});

struct RelationCheck {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    double error = 0.0;       // relative unless |rhs| is tiny, then absolute
    double tolerance = 0.0;
    bool pass = false;
};
RelationCheck compare(const std::string& name, double lhs, double rhs, double tol, double abs_floor = 1e-12);

// Psi_k = (t+s)^{k-n/2}(A_k+ + A_k-) - B_k(t,s) - B_k(s,t)
RelationCheck psi_relation(int k, int n, double t, double s, double Aplus, double Aminus, double Bts, double Bst,
                           double psi_fit, double tol);
// Phi_k = -(k-n/2)(t+s)^{k-1-n/2}(A_k+ + A_k-) - C_k(t,s) - C_k(s,t)
RelationCheck phi_relation(int k, int n, double t, double s, double Aplus, double Aminus, double Cts, double Cst,
                           double phi_fit, double tol);

} // namespace heatrace
