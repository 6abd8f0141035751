#include "heatrace/fit_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "heatrace/errors.hpp"

namespace heatrace {

std::vector<double> log_grid(double lo, double hi, int count)
{
    if (!(lo > 0.0) || !(hi > lo) || count < 2) throw DomainError("log_grid needs 0 < lo < hi and count >= 2");
    std::vector<double> out(count);
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) out[i] = std::exp(a + (b - a) * i / (count - 1));
    return out;
}

namespace {

struct Solve {
    Eigen::VectorXd c;
    Eigen::MatrixXd cov;
    double rss = 0.0, cond = 0.0;
};

Solve least_squares(const std::vector<double>& eps, const Eigen::VectorXd& y, int terms, int k_max, bool weighted)
{
    const int m = static_cast<int>(eps.size());
    const double scale = *std::max_element(eps.begin(), eps.end());
    Eigen::MatrixXd A(m, terms);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
        const double w = weighted ? std::pow(eps[i] / scale, -(k_max + 1)) : 1.0;
        for (int k = 0; k < terms; ++k) A(i, k) = w * std::pow(eps[i] / scale, k);
        b[i] = w * y[i];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Solve s;
    const auto& sv = svd.singularValues();
    s.cond = sv[0] / sv[sv.size() - 1];
    Eigen::VectorXd cs = svd.solve(b);
    Eigen::VectorXd r = A * cs - b;
    s.rss = r.squaredNorm();
    const double dof = std::max(1, m - terms);
    Eigen::MatrixXd inv = svd.matrixV() * sv.cwiseInverse().cwiseAbs2().asDiagonal() * svd.matrixV().transpose();
    Eigen::MatrixXd cov = (s.rss / dof) * inv;
    // undo the column scaling
    Eigen::VectorXd unscale(terms);
    for (int k = 0; k < terms; ++k) unscale[k] = std::pow(scale, -k);
    s.c = cs.cwiseProduct(unscale);
    s.cov = unscale.asDiagonal() * cov * unscale.asDiagonal();
    return s;
}

} // namespace

AsymFit epsilon_fit(const std::vector<double>& eps, const std::vector<double>& values, int n, FitKind kind,
                    const FitOptions& opt)
{
    if (eps.size() != values.size()) throw PreconditionError("epsilon_fit: eps and values differ in length");
    if (opt.k_max < 0 || opt.k_max > 2) throw DomainError("epsilon_fit: k_max must be 0, 1 or 2");
    const int terms = opt.k_max + 1 + opt.extra_terms;
    const int m = static_cast<int>(eps.size());
    if (m <= terms) throw PreconditionError("epsilon_fit: need more epsilon points than fitted terms");
    for (std::size_t i = 0; i < eps.size(); ++i)
        if (!(eps[i] > 0.0) || !std::isfinite(values[i])) throw DomainError("epsilon_fit: bad sample");

    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        double v = std::pow(4.0 * M_PI * eps[i], 0.5 * n) * values[i];
        if (kind == FitKind::Y) v *= eps[i];
        y[i] = v;
    }
    AsymFit f;
    f.n = n;
    f.kind = kind;
    f.eps = eps;
    Solve s = least_squares(eps, y, terms, opt.k_max, opt.weighted);
    f.all_coeffs = s.c;
    f.coeffs = s.c.head(opt.k_max + 1);
    f.covariance = s.cov;
    f.residual_norm = std::sqrt(s.rss);
    f.condition = s.cond;
    if (s.cond > opt.max_condition) {
        throw ConsistencyError("epsilon_fit: design matrix condition number " + std::to_string(s.cond) + " too large",
                               s.cond);
    }
    // residual should shrink as terms are added; otherwise the window is likely wrong
    double prev = std::numeric_limits<double>::infinity();
    for (int k = opt.k_max + 1; k <= terms; ++k) {
        double r = least_squares(eps, y, k, opt.k_max, opt.weighted).rss;
        if (r > prev * (1.0 + 1e-6) && r > 1e-28) {
            f.warnings.push_back("residual grows from " + std::to_string(k - 1) + " to " + std::to_string(k) +
                                 " terms; check the epsilon window");
            break;
        }
        prev = r;
    }
    return f;
}

RelationCheck compare(const std::string& name, double lhs, double rhs, double tol, double abs_floor)
{
    RelationCheck c;
    c.name = name;
    c.lhs = lhs;
    c.rhs = rhs;
    c.tolerance = tol;
    const double denom = std::abs(rhs) > abs_floor ? std::abs(rhs) : 1.0;
    c.error = std::abs(lhs - rhs) / denom;
    c.pass = c.error <= tol;
    return c;
}

RelationCheck psi_relation(int k, int n, double t, double s, double Aplus, double Aminus, double Bts, double Bst,
                           double psi_fit, double tol)
{
    const double pred = std::pow(t + s, k - 0.5 * n) * (Aplus + Aminus) - Bts - Bst;
    return compare("Psi" + std::to_string(k), psi_fit, pred, tol);
}

RelationCheck phi_relation(int k, int n, double t, double s, double Aplus, double Aminus, double Cts, double Cst,
                           double phi_fit, double tol)
{
    const double pred = -(k - 0.5 * n) * std::pow(t + s, k - 1 - 0.5 * n) * (Aplus + Aminus) - Cts - Cst;
    return compare("Phi" + std::to_string(k), phi_fit, pred, tol);
}

} // namespace heatrace
