#include "heatrace/laplace_asym.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "heatrace/errors.hpp"
#include "heatrace/parallel.hpp"

namespace heatrace {

namespace {

double factorial(int k)
{
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// pair-partition recursion over the remaining indices
double wick(const Eigen::MatrixXd& Hi, std::vector<int>& rest)
{
    if (rest.empty()) return 1.0;
    const int a = rest.front();
    double acc = 0.0;
    for (std::size_t j = 1; j < rest.size(); ++j) {
        const double c = 2.0 * Hi(a, rest[j]);
        if (c == 0.0) continue;
        std::vector<int> sub;
        sub.reserve(rest.size() - 2);
        for (std::size_t q = 1; q < rest.size(); ++q)
            if (q != j) sub.push_back(rest[q]);
        acc += c * wick(Hi, sub);
    }
    return acc;
}

void check_dim(const Tens& t, int n, int rank, const char* what)
{
    if (t.dim() != n || t.rank() != rank)
        throw PreconditionError(std::string("TaylorData: ") + what + " has wrong shape");
}

// all index tuples of a given length
std::vector<std::vector<int>> tuples(int n, int k)
{
    std::vector<std::vector<int>> out;
    std::vector<int> t(k, 0);
    while (true) {
        out.push_back(t);
        int a = k - 1;
        while (a >= 0 && ++t[a] == n) t[a--] = 0;
        if (a < 0) break;
    }
    return out;
}

Polynomial taylor_polynomial(const Jet& jet, int n)
{
    Polynomial P(n);
    for (std::size_t r = 0; r < jet.size(); ++r) {
        const Tens& T = jet[r];
        const double w = 1.0 / factorial(static_cast<int>(r));
        std::vector<int> idx(r);
        for (std::size_t f = 0; f < T.size(); ++f) {
            if (T[f] == 0.0) continue;
            T.unravel(f, idx.data());
            std::vector<int> e(n, 0);
            for (int i : idx) ++e[i];
            P.add(e, w * T[f]);
        }
    }
    return P;
}

Eigen::MatrixXd as_matrix(const Tens& t)
{
    Eigen::MatrixXd m(t.dim(), t.dim());
    for (int i = 0; i < t.dim(); ++i)
        for (int j = 0; j < t.dim(); ++j) m(i, j) = t({i, j});
    return m;
}

} // namespace

GaussianModel::GaussianModel(const Eigen::MatrixXd& hessian)
{
    if (hessian.rows() != hessian.cols() || hessian.rows() < 1)
        throw GeometryError("GaussianModel: Hessian must be square");
    if ((hessian - hessian.transpose()).norm() > 1e-12 * std::max(1.0, hessian.norm()))
        throw GeometryError("GaussianModel: Hessian not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) throw GeometryError("GaussianModel: Hessian not positive definite");
    n = static_cast<int>(hessian.rows());
    G = hessian;
    Ginv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    const double res = (G * Ginv - Eigen::MatrixXd::Identity(n, n)).norm();
    if (res > 1e-10) throw ConsistencyError("GaussianModel: inverse residual too large", res);
    det = hessian.determinant();
}

double gaussian_moment(const GaussianModel& m, const std::vector<int>& idx)
{
    if (idx.size() % 2) return 0.0;
    std::vector<int> rest = idx;
    return wick(m.Ginv, rest);
}

double gaussian_moment_symmetrized(const GaussianModel& m, const std::vector<int>& idx)
{
    if (idx.size() % 2) return 0.0;
    const int k2 = static_cast<int>(idx.size());
    if (k2 == 0) return 1.0;
    const auto& perms = permutations(k2);
    double acc = 0.0;
    for (const auto& p : perms) {
        double prod = 1.0;
        for (int a = 0; a < k2; a += 2) prod *= m.Ginv(idx[p[a]], idx[p[a + 1]]);
        acc += prod;
    }
    const int k = k2 / 2;
    return factorial(k2) / factorial(k) * acc / static_cast<double>(perms.size());
}

double gaussian_average(const GaussianModel& m, const Tens& T)
{
    if (T.rank() % 2) return 0.0;
    std::vector<int> idx(T.rank());
    double acc = 0.0;
    for (std::size_t f = 0; f < T.size(); ++f) {
        if (T[f] == 0.0) continue;
        T.unravel(f, idx.data());
        acc += T[f] * gaussian_moment(m, idx);
    }
    return acc;
}

// ---- polynomials ----

Polynomial Polynomial::constant(int n, double c)
{
    Polynomial p(n);
    p.add(std::vector<int>(n, 0), c);
    return p;
}

void Polynomial::add(const std::vector<int>& exps, double c)
{
    if (static_cast<int>(exps.size()) != n_) throw PreconditionError("Polynomial: exponent length mismatch");
    if (c == 0.0) return;
    auto it = t_.find(exps);
    if (it == t_.end()) {
        t_.emplace(exps, c);
    } else {
        it->second += c;
        if (it->second == 0.0) t_.erase(it);
    }
}

Polynomial Polynomial::derivative(int i) const
{
    Polynomial out(n_);
    for (const auto& [e, c] : t_) {
        if (e[i] == 0) continue;
        auto d = e;
        --d[i];
        out.add(d, c * e[i]);
    }
    return out;
}

Polynomial Polynomial::times_coordinate(int j, double c) const
{
    Polynomial out(n_);
    for (const auto& [e, v] : t_) {
        auto d = e;
        ++d[j];
        out.add(d, c * v);
    }
    return out;
}

Polynomial Polynomial::operator+(const Polynomial& o) const
{
    Polynomial out = *this;
    for (const auto& [e, c] : o.t_) out.add(e, c);
    return out;
}

Polynomial Polynomial::operator*(const Polynomial& o) const
{
    Polynomial out(n_);
    for (const auto& [e1, c1] : t_)
        for (const auto& [e2, c2] : o.t_) {
            std::vector<int> e(n_);
            for (int i = 0; i < n_; ++i) e[i] = e1[i] + e2[i];
            out.add(e, c1 * c2);
        }
    return out;
}

Polynomial Polynomial::scaled(double c) const
{
    Polynomial out(n_);
    for (const auto& [e, v] : t_) out.add(e, c * v);
    return out;
}

double Polynomial::operator()(const Eigen::VectorXd& y) const
{
    double acc = 0.0;
    for (const auto& [e, c] : t_) {
        double term = c;
        for (int i = 0; i < n_; ++i) term *= std::pow(y[i], e[i]);
        acc += term;
    }
    return acc;
}

double Polynomial::average(const GaussianModel& m) const
{
    double acc = 0.0;
    for (const auto& [e, c] : t_) {
        std::vector<int> idx;
        for (int i = 0; i < n_; ++i) idx.insert(idx.end(), e[i], i);
        acc += c * gaussian_moment(m, idx);
    }
    return acc;
}

int Polynomial::degree() const
{
    int d = -1;
    for (const auto& [e, c] : t_) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    return d;
}

Polynomial hermite(const GaussianModel& m, const std::vector<int>& idx)
{
    Polynomial p = Polynomial::constant(m.n, 1.0);
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        const int i = *it;
        Polynomial d = p.derivative(i);
        for (int j = 0; j < m.n; ++j)
            if (m.G(i, j) != 0.0) d = d + p.times_coordinate(j, -0.5 * m.G(i, j));
        p = d;
    }
    return idx.size() % 2 ? p.scaled(-1.0) : p;
}

double hermite_eval(const GaussianModel& m, const std::vector<int>& idx, const Eigen::VectorXd& y)
{
    return hermite(m, idx)(y);
}

Eigen::MatrixXd hermite_orthogonality(const GaussianModel& m, int k)
{
    const auto T = tuples(m.n, k);
    std::vector<Polynomial> H;
    for (const auto& t : T) H.push_back(hermite(m, t));
    const int N = static_cast<int>(T.size());
    Eigen::MatrixXd gram(N, N);
    for (int a = 0; a < N; ++a)
        for (int b = a; b < N; ++b) gram(a, b) = gram(b, a) = (H[a] * H[b]).average(m);
    return gram;
}

Eigen::MatrixXd hermite_orthogonality_expected(const GaussianModel& m, int k)
{
    const auto T = tuples(m.n, k);
    const int N = static_cast<int>(T.size());
    const auto& perms = permutations(k);
    Eigen::MatrixXd e(N, N);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            double acc = 0.0;
            for (const auto& p : perms) {
                double prod = 1.0;
                for (int q = 0; q < k; ++q) prod *= m.G(T[a][q], T[b][p[q]]);
                acc += prod;
            }
            e(a, b) = acc / std::pow(2.0, k);
        }
    return e;
}

// ---- flat expansion ----

Tens outer(const Tens& a, const Tens& b)
{
    if (a.dim() != b.dim()) throw PreconditionError("outer: dimension mismatch");
    Tens out(a.dim(), a.rank() + b.rank());
    std::size_t f = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[f++] = a[i] * b[j];
    return out;
}

double contract_pairs(const Tens& T, const Eigen::MatrixXd& Ginv)
{
    if (T.rank() % 2) throw PreconditionError("contract_pairs: odd rank");
    std::vector<int> idx(T.rank());
    double acc = 0.0;
    for (std::size_t f = 0; f < T.size(); ++f) {
        if (T[f] == 0.0) continue;
        T.unravel(f, idx.data());
        double w = T[f];
        for (int a = 0; a < T.rank(); a += 2) w *= Ginv(idx[a], idx[a + 1]);
        acc += w;
    }
    return acc;
}

std::vector<double> flat_expansion(const GaussianModel& m, const Jet& phi, int k_max)
{
    if (k_max < 0 || static_cast<int>(phi.size()) < 2 * k_max + 1)
        throw PreconditionError("flat_expansion: jet must reach order 2 k_max");
    std::vector<double> c(k_max + 1);
    const double pre = 1.0 / std::sqrt(m.det);
    for (int k = 0; k <= k_max; ++k) {
        const Tens& T = phi[2 * k];
        if (T.rank() != 2 * k || T.dim() != m.n) throw PreconditionError("flat_expansion: jet entry has wrong shape");
        c[k] = pre * contract_pairs(symmetrize(T), m.Ginv) / factorial(k);
    }
    return c;
}

std::vector<double> flat_expansion_laplacian(const GaussianModel& m, const Jet& phi, int k_max)
{
    if (k_max < 0 || static_cast<int>(phi.size()) < 2 * k_max + 1)
        throw PreconditionError("flat_expansion_laplacian: jet must reach order 2 k_max");
    Polynomial P = taylor_polynomial(Jet(phi.begin(), phi.begin() + 2 * k_max + 1), m.n);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.n);
    std::vector<double> c(k_max + 1);
    const double pre = 1.0 / std::sqrt(m.det);
    for (int k = 0; k <= k_max; ++k) {
        c[k] = pre * P(zero) / factorial(k);
        Polynomial L(m.n);
        for (int i = 0; i < m.n; ++i)
            for (int j = 0; j < m.n; ++j)
                if (m.Ginv(i, j) != 0.0) L = L + P.derivative(i).derivative(j).scaled(m.Ginv(i, j));
        P = L;
    }
    return c;
}

// ---- Morse expansion ----

TaylorData TaylorData::flat(const Eigen::MatrixXd& G)
{
    const int n = static_cast<int>(G.rows());
    TaylorData d;
    d.G = G;
    d.S3 = Tens(n, 3);
    d.S4 = Tens(n, 4);
    d.phi1 = Tens(n, 1);
    d.phi2 = Tens(n, 2);
    d.phi3 = Tens(n, 3);
    d.phi4 = Tens(n, 4);
    d.g = Eigen::MatrixXd::Identity(n, n);
    d.ricci = Tens(n, 2);
    return d;
}

void TaylorData::validate(double tol) const
{
    const int n = dim();
    GaussianModel check(G);
    check_dim(S3, n, 3, "Sigma_ijk");
    check_dim(S4, n, 4, "Sigma_ijkl");
    check_dim(phi1, n, 1, "phi_i");
    check_dim(phi2, n, 2, "phi_ij");
    check_dim(phi3, n, 3, "phi_ijk");
    check_dim(phi4, n, 4, "phi_ijkl");
    check_dim(ricci, n, 2, "Ricci");
    if (g.rows() != n || g.cols() != n) throw PreconditionError("TaylorData: base metric has wrong shape");
    GaussianModel gcheck(g);
    for (const Tens* t : {&S3, &S4, &phi2, &phi3, &phi4, &ricci})
        if (!is_symmetric(*t, tol)) throw PreconditionError("TaylorData: array not totally symmetric");
    const double tr = (gcheck.Ginv.cwiseProduct(as_matrix(ricci))).sum();
    if (std::abs(tr - scalar) > 1e-10 * std::max(1.0, std::abs(scalar)))
        throw ConsistencyError("TaylorData: scalar curvature differs from g^ij R_ij", tr - scalar);
}

MorseCoefficients morse_expansion(const TaylorData& d, int order, const MorseOptions& opt)
{
    if (order < 0 || order > 2) throw DomainError("morse_expansion: order must be 0, 1 or 2");
    d.validate();
    const int n = d.dim();
    GaussianModel gm(d.G);
    const Eigen::MatrixXd& H = gm.Ginv;
    const double pre = std::sqrt(d.g.determinant() / gm.det);
    const Tens& S3 = d.S3;
    const Tens& S4 = d.S4;
    const Tens& R = d.ricci;

    MorseCoefficients out;
    out.F0 = pre * d.phi0;
    if (order == 0) return out;

    double lap = 0.0, drift = 0.0, ric = 0.0, s33 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            lap += H(i, j) * d.phi2({i, j});
            ric += H(i, j) * R({i, j});
            for (int p = 0; p < n; ++p)
                for (int q = 0; q < n; ++q) {
                    drift += H(i, j) * H(p, q) * S3({i, p, q}) * d.phi1({j});
                    s4 += H(i, j) * H(p, q) * S4({i, j, p, q});
                }
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    for (int m = 0; m < n; ++m)
                        for (int q = 0; q < n; ++q)
                            s33 += (2.0 * H(i, l) * H(j, m) + 3.0 * H(i, j) * H(l, m)) * H(k, q) * S3({i, j, k}) *
                                   S3({l, m, q});
    out.F1 = pre * (lap - drift + (-ric / 3.0 + s33 / 12.0 - 0.25 * s4) * d.phi0);
    if (order == 1) return out;

    if (std::abs(d.phi0) > opt.vanish_tol || max_abs(d.phi1) > opt.vanish_tol)
        throw PreconditionError("morse_expansion: F2 needs [phi] = [d phi] = 0");

    double a = 0.0, b = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    a += H(i, j) * H(k, l) * d.phi4({i, j, k, l});
                    for (int p = 0; p < n; ++p)
                        for (int q = 0; q < n; ++q)
                            b += (2.0 * H(i, j) * H(q, k) + 3.0 * H(i, q) * H(j, k)) * H(p, l) * S3({i, p, q}) *
                                 d.phi3({j, k, l});
                }
    const double c33 = opt.as_printed ? 1.0 / 72.0 : 1.0 / 12.0;
    double blk = 0.0;
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            const double f = d.phi2({k, l});
            if (f == 0.0) continue;
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    acc -= (H(i, j) * H(k, l) + 2.0 * H(i, k) * H(j, l)) * R({i, j}) / 3.0;
                    for (int p = 0; p < n; ++p)
                        for (int q = 0; q < n; ++q) {
                            // G^ij G^pq G^kl + 4 G^ij G^kp G^lq
                            acc -= 0.25 * (H(i, j) * H(p, q) * H(k, l) + 4.0 * H(i, j) * H(k, p) * H(l, q)) *
                                   S4({i, j, p, q});
                            for (int r = 0; r < n; ++r)
                                for (int s = 0; s < n; ++s) {
                                    const double w = 2.0 * H(i, j) * H(p, r) * H(q, s) * H(k, l) +
                                                     3.0 * H(i, j) * H(p, q) * H(r, s) * H(k, l) +
                                                     6.0 * H(i, k) * H(j, l) * H(p, q) * H(r, s) +
                                                     12.0 * H(i, j) * H(p, q) * H(k, r) * H(l, s) +
                                                     12.0 * H(i, j) * H(p, r) * H(k, q) * H(s, l);
                                    acc += c33 * w * S3({i, p, q}) * S3({j, r, s});
                                }
                        }
                }
            blk += acc * f;
        }
    out.F2 = pre * (0.5 * a - b / 3.0 + blk);
    return out;
}

MorseCoefficients morse_expansion_wick(const TaylorData& d, int order)
{
    if (order < 0 || order > 2) throw DomainError("morse_expansion_wick: order must be 0, 1 or 2");
    d.validate();
    const int n = d.dim();
    GaussianModel gm(d.G);
    const double pre = std::sqrt(d.g.determinant() / gm.det);
    // hatted jets: curvature corrections from the normal-coordinate volume
    Tens ph2 = d.phi2 - (d.phi0 / 3.0) * d.ricci;

    MorseCoefficients out;
    out.F0 = pre * d.phi0;
    if (order == 0) return out;
    double psi1 = 0.5 * gaussian_average(gm, ph2) - gaussian_average(gm, outer(d.S3, d.phi1)) / 12.0 -
                  d.phi0 * gaussian_average(gm, d.S4) / 48.0 +
                  d.phi0 * gaussian_average(gm, outer(d.S3, d.S3)) / 288.0;
    out.F1 = pre * psi1;
    if (order == 1) return out;

    if (d.phi0 != 0.0 || max_abs(d.phi1) != 0.0)
        throw PreconditionError("morse_expansion_wick: F2 needs [phi] = [d phi] = 0");
    Tens ph4 = d.phi4 - 2.0 * symmetrize(outer(d.ricci, d.phi2));
    (void)n;
    double psi2 = gaussian_average(gm, ph4) / 24.0 - gaussian_average(gm, outer(d.S3, d.phi3)) / 72.0 -
                  gaussian_average(gm, outer(d.S4, ph2)) / 96.0 +
                  gaussian_average(gm, outer(outer(d.S3, d.S3), ph2)) / 576.0;
    out.F2 = pre * psi2;
    return out;
}

// ---- quadrature ----

namespace {

using boost::math::quadrature::gauss_kronrod;

struct Piece {
    double value = 0.0, error = 0.0;
};

Piece integrate_1d(const std::function<double(double)>& f, double lo, double hi, unsigned depth, double tol)
{
    Piece out;
    auto run = [&](double a, double b) {
        double err = 0.0;
        out.value += gauss_kronrod<double, 61>::integrate(f, a, b, depth, tol, &err);
        out.error += err;
    };
    // split at the critical point so the peak sits on a panel edge
    if (lo < 0.0 && hi > 0.0) {
        run(lo, 0.0);
        run(0.0, hi);
    } else {
        run(lo, hi);
    }
    return out;
}

} // namespace

std::vector<QuadratureValue> quadrature_oracle(const std::function<double(const Eigen::VectorXd&)>& Sigma,
                                               const std::function<double(const Eigen::VectorXd&)>& phi,
                                               const std::vector<double>& eps, const Eigen::VectorXd& lo,
                                               const Eigen::VectorXd& hi, double abs_tol)
{
    const int n = static_cast<int>(lo.size());
    if (n < 1 || n > 2 || hi.size() != n) throw PreconditionError("quadrature_oracle: box must be 1D or 2D");
    for (int i = 0; i < n; ++i)
        if (!(hi[i] > lo[i])) throw DomainError("quadrature_oracle: empty box");
    for (double e : eps)
        if (!(e > 0.0)) throw DomainError("quadrature_oracle: eps must be positive");

    std::vector<QuadratureValue> out(eps.size());
    std::vector<std::string> failures(eps.size());
    parallel_for(static_cast<int>(eps.size()), [&](int idx) {
        const double e = eps[idx];
        const double pre = std::pow(4.0 * M_PI * e, -0.5 * n);
        auto integrand = [&](const Eigen::VectorXd& y) {
            const double s = Sigma(y);
            if (s < -1e-14) throw DomainError("quadrature_oracle: Sigma negative inside the box");
            return std::exp(-s / (2.0 * e)) * phi(y);
        };
        std::ostringstream trace;
        Piece p;
        for (unsigned depth : {8u, 12u, 16u}) {
            const double tol = 1e-13;
            if (n == 1) {
                p = integrate_1d([&](double x) { return integrand(Eigen::VectorXd::Constant(1, x)); }, lo[0], hi[0],
                                 depth, tol);
            } else {
                double inner_err = 0.0;
                auto row = [&](double x) {
                    Piece q = integrate_1d(
                        [&](double y) {
                            Eigen::VectorXd v(2);
                            v << x, y;
                            return integrand(v);
                        },
                        lo[1], hi[1], depth, tol);
                    inner_err = std::max(inner_err, q.error);
                    return q.value;
                };
                p = integrate_1d(row, lo[0], hi[0], depth, tol);
                p.error += inner_err * (hi[0] - lo[0]);
            }
            p.value *= pre;
            p.error *= pre;
            trace << " depth " << depth << ": error " << p.error << ";";
            if (p.error <= abs_tol) break;
        }
        out[idx] = {e, p.value, p.error};
        if (!(p.error <= abs_tol)) failures[idx] = "eps " + std::to_string(e) + trace.str();
    });
    for (const auto& f : failures)
        if (!f.empty()) throw ConvergenceError("quadrature_oracle did not reach tolerance at " + f);
    return out;
}

double quadrature_radius(const GaussianModel& m, double eps)
{
    if (!(eps > 0.0)) throw DomainError("quadrature_radius: eps must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.G);
    const double lmin = es.eigenvalues()[0];
    return std::sqrt(2.0 * 25.0 * eps * std::log(1e14) / lmin);
}

// ---- symmetrization identities ----

namespace {

// T_{I} = f(I) for every index tuple of given rank
template <class F>
Tens build(int n, int rank, F f)
{
    Tens t(n, rank);
    std::vector<int> idx(rank);
    for (std::size_t k = 0; k < t.size(); ++k) {
        t.unravel(k, idx.data());
        t[k] = f(idx.data());
    }
    return t;
}

IdentityCheck make_check(const std::string& name, double lhs, double rhs, double tol)
{
    IdentityCheck c;
    c.name = name;
    c.lhs = lhs;
    c.rhs = rhs;
    c.pass = std::abs(lhs - rhs) <= tol * std::max(1.0, std::abs(rhs));
    return c;
}

} // namespace

IdentityCheck symmetrization_identity_check(const GaussianModel& m, const Tens& S3, double tol)
{
    if (S3.rank() != 3 || S3.dim() != m.n) throw PreconditionError("symmetrization_identity_check: bad Sigma_ijk");
    const int n = m.n;
    const double lhs = contract_pairs(symmetrize(outer(S3, S3)), m.Ginv);
    // slots i j k l m n contracted as (ij)(kl)(mn)
    const Tens ex = build(n, 6, [&](const int* x) { return S3({x[0], x[2], x[4]}) * S3({x[1], x[3], x[5]}); });
    const Tens tr = build(n, 6, [&](const int* x) { return S3({x[0], x[1], x[4]}) * S3({x[2], x[3], x[5]}); });
    const double rhs = (2.0 * contract_pairs(ex, m.Ginv) + 3.0 * contract_pairs(tr, m.Ginv)) / 5.0;
    return make_check("Sigma3 Sigma3", lhs, rhs, tol);
}

std::vector<IdentityCheck> f2_symmetrization_checks(const GaussianModel& m, const Tens& S3, const Tens& S4,
                                                    const Tens& phi2, double tol)
{
    const int n = m.n;
    std::vector<IdentityCheck> out;
    {
        const double lhs = contract_pairs(symmetrize(outer(S4, phi2)), m.Ginv);
        // (ij)(kl)(mn): Sigma_ijkl phi_mn + 4 Sigma_ikmn phi_jl
        const Tens a = build(n, 6, [&](const int* x) { return S4({x[0], x[1], x[2], x[3]}) * phi2({x[4], x[5]}); });
        const Tens b = build(n, 6, [&](const int* x) { return S4({x[0], x[2], x[4], x[5]}) * phi2({x[1], x[3]}); });
        const double rhs = (contract_pairs(a, m.Ginv) + 4.0 * contract_pairs(b, m.Ginv)) / 5.0;
        out.push_back(make_check("Sigma4 phi2", lhs, rhs, tol));
    }
    {
        const double lhs = contract_pairs(symmetrize(outer(outer(S3, S3), phi2)), m.Ginv);
        // slots i j k l m n p q -> 0..7, contracted (ij)(kl)(mn)(pq)
        enum { I, J, K, L, M, N, P, Q };
        const Tens s1 = build(n, 8, [&](const int* x) {
            return S3({x[I], x[K], x[M]}) * S3({x[J], x[L], x[N]}) * phi2({x[P], x[Q]});
        });
        const Tens s2 = build(n, 8, [&](const int* x) {
            return S3({x[I], x[J], x[K]}) * S3({x[L], x[M], x[N]}) * phi2({x[P], x[Q]});
        });
        const Tens s3 = build(n, 8, [&](const int* x) {
            return S3({x[I], x[J], x[K]}) * S3({x[M], x[N], x[P]}) * phi2({x[L], x[Q]});
        });
        const Tens s4 = build(n, 8, [&](const int* x) {
            return S3({x[I], x[J], x[K]}) * S3({x[L], x[M], x[P]}) * phi2({x[N], x[Q]});
        });
        const Tens s5 = build(n, 8, [&](const int* x) {
            return S3({x[I], x[K], x[M]}) * S3({x[J], x[L], x[P]}) * phi2({x[N], x[Q]});
        });
        const auto& H = m.Ginv;
        const double rhs = (2.0 * contract_pairs(s1, H) + 3.0 * contract_pairs(s2, H) + 6.0 * contract_pairs(s3, H) +
                            12.0 * contract_pairs(s4, H) + 12.0 * contract_pairs(s5, H)) /
                           35.0;
        out.push_back(make_check("Sigma3 Sigma3 phi2", lhs, rhs, tol));
    }
    return out;
}

} // namespace heatrace

namespace heatrace {

std::vector<LaplaceFixture> laplace_fixtures()
{
    std::vector<LaplaceFixture> out;
    {
        // Sigma = y^2 + 0.3 y^3 + 0.2 y^4, phi = y^2 + 0.3 y^3 + 0.5 y^4
        LaplaceFixture f;
        f.name = "cubic_1d";
        f.data = TaylorData::flat(Eigen::MatrixXd::Constant(1, 1, 2.0));
        f.data.S3[0] = 6.0 * 0.3;
        f.data.S4[0] = 24.0 * 0.2;
        f.data.phi2[0] = 2.0;
        f.data.phi3[0] = 6.0 * 0.3;
        f.data.phi4[0] = 24.0 * 0.5;
        f.Sigma = [](const Eigen::VectorXd& y) {
            const double x = y[0];
            return x * x * (1.0 + 0.3 * x + 0.2 * x * x);
        };
        f.phi = [](const Eigen::VectorXd& y) {
            const double x = y[0];
            return x * x * (1.0 + 0.3 * x + 0.5 * x * x);
        };
        f.lo = Eigen::VectorXd::Constant(1, -1.5);
        f.hi = Eigen::VectorXd::Constant(1, 1.5);
        out.push_back(std::move(f));
    }
    {
        LaplaceFixture f;
        f.name = "aniso_2d";
        Eigen::Matrix2d G;
        G << 2.0, 0.4, 0.4, 1.5;
        f.data = TaylorData::flat(G);
        // cubic part 0.1 y1^3 + 0.05 y1^2 y2 - 0.08 y1 y2^2 + 0.06 y2^3
        auto& S3 = f.data.S3;
        S3({0, 0, 0}) = 0.6;
        S3({0, 0, 1}) = S3({0, 1, 0}) = S3({1, 0, 0}) = 0.1;
        S3({0, 1, 1}) = S3({1, 0, 1}) = S3({1, 1, 0}) = -0.16;
        S3({1, 1, 1}) = 0.36;
        // quartic part 0.25 |y|^4
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l)
                        f.data.S4({i, j, k, l}) = 2.0 * ((i == j) * (k == l) + (i == k) * (j == l) + (i == l) * (j == k));
        // phi = y1^2 + 0.5 y1 y2 + 0.3 y2^2 + 0.2 y1^3 - 0.1 y2^3 + 0.1 y1^2 y2^2
        f.data.phi2({0, 0}) = 2.0;
        f.data.phi2({0, 1}) = f.data.phi2({1, 0}) = 0.5;
        f.data.phi2({1, 1}) = 0.6;
        f.data.phi3({0, 0, 0}) = 1.2;
        f.data.phi3({1, 1, 1}) = -0.6;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l)
                        if (i + j + k + l == 2) f.data.phi4({i, j, k, l}) = 0.4;
        f.Sigma = [G](const Eigen::VectorXd& y) {
            const double a = y[0], b = y[1], r2 = a * a + b * b;
            return 0.5 * y.dot(G * y) + 0.1 * a * a * a + 0.05 * a * a * b - 0.08 * a * b * b + 0.06 * b * b * b +
                   0.25 * r2 * r2;
        };
        f.phi = [](const Eigen::VectorXd& y) {
            const double a = y[0], b = y[1];
            return a * a + 0.5 * a * b + 0.3 * b * b + 0.2 * a * a * a - 0.1 * b * b * b + 0.1 * a * a * b * b;
        };
        f.lo = Eigen::VectorXd::Constant(2, -2.0);
        f.hi = Eigen::VectorXd::Constant(2, 2.0);
        out.push_back(std::move(f));
    }
    {
        // unit sphere in normal coordinates at the pole: Sigma = |x|^2/2 is the world function,
        // density sin r / r, and g^{-1/2} phi = |x|^2
        LaplaceFixture f;
        f.name = "sphere_normal";
        f.data = TaylorData::flat(Eigen::Matrix2d::Identity());
        f.data.ricci({0, 0}) = f.data.ricci({1, 1}) = 1.0;
        f.data.scalar = 2.0;
        f.data.phi2({0, 0}) = f.data.phi2({1, 1}) = 2.0;
        f.Sigma = [](const Eigen::VectorXd& y) { return 0.5 * y.squaredNorm(); };
        f.phi = [](const Eigen::VectorXd& y) {
            const double r = y.norm();
            return r < 1e-8 ? r * r : r * std::sin(r);
        };
        f.lo = Eigen::VectorXd::Constant(2, -2.0);
        f.hi = Eigen::VectorXd::Constant(2, 2.0);
        out.push_back(std::move(f));
    }
    return out;
}

ConvergenceReport oracle_convergence(const LaplaceFixture& f, const std::vector<double>& eps, double min_slope)
{
    if (eps.size() < 2) throw PreconditionError("oracle_convergence: need at least two eps values");
    ConvergenceReport r;
    r.name = f.name;
    r.coeffs = morse_expansion(f.data, 2);
    const auto q = quadrature_oracle(f.Sigma, f.phi, eps, f.lo, f.hi);
    const int m = static_cast<int>(eps.size());
    Eigen::MatrixXd A(m, 2);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
        const double e = eps[i];
        const double pred = r.coeffs.F0 + e * r.coeffs.F1 + e * e * *r.coeffs.F2;
        r.eps.push_back(e);
        r.value.push_back(q[i].value);
        r.residual.push_back(std::abs(q[i].value - pred));
        A(i, 0) = 1.0;
        A(i, 1) = std::log(e);
        b[i] = std::log(std::max(r.residual.back(), 1e-300));
    }
    r.slope = A.colPivHouseholderQr().solve(b)[1];
    r.pass = r.slope >= min_slope;
    return r;
}

} // namespace heatrace
