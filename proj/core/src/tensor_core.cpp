#include "heatrace/tensor_core.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include "heatrace/errors.hpp"

namespace heatrace {

namespace {

using cd = std::complex<double>;
const cd I1(0.0, 1.0);

Eigen::MatrixXd mat2(const Tens& t)
{
    const int n = t.dim();
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = t({i, j});
    return m;
}

Tens tens2(const Eigen::MatrixXd& m)
{
    const int n = static_cast<int>(m.rows());
    Tens t(n, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t({i, j}) = m(i, j);
    return t;
}

TensorField lower_of(const TensorField& up)
{
    TensorField lo(up.n, 2, up.points());
    for (int p = 0; p < up.points(); ++p) lo.set(p, tens2(mat2(up.at(p)).inverse()));
    return lo;
}

} // namespace

// ---------------------------------------------------------------- geometry inputs

OperatorGeometry make_laplace(const ModelManifold& m, int fiber, TensorField ginv,
                              std::vector<EndoField> conn, EndoField Q)
{
    OperatorGeometry g;
    g.fiber = fiber;
    g.ginv = std::move(ginv);
    g.conn = std::move(conn);
    g.Q = std::move(Q);
    const int P = m.points();
    if (g.ginv.n != m.dim || g.ginv.rank != 2 || g.ginv.points() != P)
        throw GeometryError("inverse metric field has wrong shape");
    if (static_cast<int>(g.conn.size()) != m.dim) throw GeometryError("need one connection component per dimension");
    for (auto& A : g.conn)
        if (static_cast<int>(A.size()) != P) throw GeometryError("connection field has wrong size");
    if (static_cast<int>(g.Q.size()) != P) throw GeometryError("potential field has wrong size");
    double corr = 0.0;
    for (auto& A : g.conn) corr = std::max(corr, anti_hermitize(A));
    corr = std::max(corr, hermitize(g.Q));
    g.hermitian_correction = corr;
    return g;
}

std::vector<EndoField> dirac_gammas(const OperatorGeometry& g)
{
    if (!g.dirac) throw PreconditionError("geometry carries no Dirac data");
    const auto& d = *g.dirac;
    const int n = d.frame.n, P = d.frame.points();
    std::vector<EndoField> gam(n, EndoField(P));
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < P; ++p) {
            Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(g.fiber, g.fiber);
            for (int a = 0; a < n; ++a) acc += d.frame.comp[i * n + a][p] * d.gammas[a];
            gam[i][p] = acc;
        }
    return gam;
}

std::vector<EndoField> gauge_curvature(const SpectralDiff& sd, const std::vector<EndoField>& A)
{
    const int n = static_cast<int>(A.size());
    const int P = static_cast<int>(A[0].size());
    const int r = static_cast<int>(A[0][0].rows());
    // dA[i][j] = d_i A_j, entrywise
    std::vector<std::vector<EndoField>> dA(n, std::vector<EndoField>(n, EndoField(P, Eigen::MatrixXcd::Zero(r, r))));
    Eigen::VectorXcd v(P);
    for (int j = 0; j < n; ++j)
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
                for (int p = 0; p < P; ++p) v[p] = A[j][p](a, b);
                for (int i = 0; i < n; ++i) {
                    Eigen::VectorXcd dv = sd.d(v, i);
                    for (int p = 0; p < P; ++p) dA[i][j][p](a, b) = dv[p];
                }
            }
    std::vector<EndoField> R(n * n, EndoField(P));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < P; ++p)
                R[i * n + j][p] = dA[i][j][p] - dA[j][i][p] + A[i][p] * A[j][p] - A[j][p] * A[i][p];
    return R;
}

std::vector<EndoField> gauge_derivative(const SpectralDiff& sd, const EndoField& E, const std::vector<EndoField>& A)
{
    const int n = static_cast<int>(A.size());
    const int P = static_cast<int>(E.size());
    const int r = static_cast<int>(E[0].rows());
    std::vector<EndoField> out(n, EndoField(P, Eigen::MatrixXcd::Zero(r, r)));
    Eigen::VectorXcd v(P);
    for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) {
            for (int p = 0; p < P; ++p) v[p] = E[p](a, b);
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXcd dv = sd.d(v, i);
                for (int p = 0; p < P; ++p) out[i][p](a, b) = dv[p];
            }
        }
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < P; ++p) out[i][p] += A[i][p] * E[p] - E[p] * A[i][p];
    return out;
}

EndoField dirac_potential(const ModelManifold& m, const std::vector<EndoField>& gam,
                          const std::vector<EndoField>& A, const EndoField& S)
{
    SpectralDiff sd(m);
    const int n = m.dim, P = m.points();
    auto R = gauge_curvature(sd, A);
    auto dS = gauge_derivative(sd, S, A);
    EndoField Q(P);
    for (int p = 0; p < P; ++p) {
        Eigen::MatrixXcd q = S[p] * S[p];
        for (int j = 0; j < n; ++j) q += I1 * gam[j][p] * dS[j][p];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Eigen::MatrixXcd gij = 0.5 * (gam[i][p] * gam[j][p] - gam[j][p] * gam[i][p]);
                q -= 0.5 * gij * R[i * n + j][p];
            }
        Q[p] = q;
    }
    return Q;
}

OperatorGeometry make_dirac(const ModelManifold& m, std::vector<Eigen::MatrixXcd> gammas,
                            TensorField frame, std::vector<EndoField> conn, EndoField S)
{
    const int n = m.dim, P = m.points();
    if (static_cast<int>(gammas.size()) != n) throw GeometryError("need one Dirac matrix per dimension");
    if (frame.n != n || frame.rank != 2 || frame.points() != P) throw GeometryError("frame field has wrong shape");
    const int r = static_cast<int>(gammas[0].rows());
    TensorField ginv(n, 2, P);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) acc += frame.comp[i * n + a][p] * frame.comp[j * n + a][p];
                ginv.comp[i * n + j][p] = acc;
            }
    OperatorGeometry g = make_laplace(m, r, std::move(ginv), std::move(conn), EndoField(P, Eigen::MatrixXcd::Zero(r, r)));
    double corr = hermitize(S);
    g.hermitian_correction = std::max(g.hermitian_correction, corr);
    g.dirac = DiracData{std::move(gammas), std::move(frame), std::move(S)};
    auto gam = dirac_gammas(g);
    g.Q = dirac_potential(m, gam, g.conn, g.dirac->S);
    g.hermitian_correction = std::max(g.hermitian_correction, hermitize(g.Q));
    return g;
}

GeometryReport validate(const ModelManifold& m, const OperatorGeometry& g, double tol)
{
    GeometryReport rep;
    const int n = m.dim, P = m.points();
    rep.min_metric_eigenvalue = 1e300;
    for (int p = 0; p < P; ++p) {
        Eigen::MatrixXd gm = mat2(g.ginv.at(p));
        if ((gm - gm.transpose()).norm() > tol * std::max(1.0, gm.norm()))
            throw GeometryError("inverse metric not symmetric at grid point " + std::to_string(p), p);
        double ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gm).eigenvalues().minCoeff();
        rep.min_metric_eigenvalue = std::min(rep.min_metric_eigenvalue, ev);
        if (!(ev > 0.0)) {
            std::ostringstream os;
            os << "inverse metric not positive definite at grid point " << p << " (x = " << m.coord(p, 0);
            if (n == 2) os << ", " << m.coord(p, 1);
            os << ", min eigenvalue " << ev << ")";
            throw GeometryError(os.str(), p);
        }
    }
    if (!g.dirac) return rep;

    const auto& d = *g.dirac;
    const int r = g.fiber;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            Eigen::MatrixXcd ac = d.gammas[a] * d.gammas[b] + d.gammas[b] * d.gammas[a];
            if (a == b) ac -= 2.0 * Eigen::MatrixXcd::Identity(r, r);
            rep.max_gamma_anticommutator = std::max(rep.max_gamma_anticommutator, ac.norm());
        }
    if (rep.max_gamma_anticommutator > tol) throw GeometryError("frame Dirac matrices violate the Clifford relation");

    auto gam = dirac_gammas(g);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i < n; ++i) {
            double v = (d.S[p] * gam[i][p] + gam[i][p] * d.S[p]).norm();
            rep.max_S_anticommutator = std::max(rep.max_S_anticommutator, v);
            if (v > tol * std::max(1.0, d.S[p].norm()))
                throw GeometryError("S does not anticommute with gamma at grid point " + std::to_string(p), p);
        }

    // nabla_i gamma^j = d_i gamma^j + Gamma^j_ik gamma^k + [A_i, gamma^j]
    SpectralDiff sd(m);
    MetricData md = metric_data(sd, g.ginv);
    for (int j = 0; j < n; ++j) {
        auto dg = gauge_derivative(sd, gam[j], g.conn);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < P; ++p) {
                Eigen::MatrixXcd v = dg[i][p];
                for (int k = 0; k < n; ++k) v += md.christoffel.comp[(j * n + i) * n + k][p] * gam[k][p];
                rep.max_compatibility = std::max(rep.max_compatibility, v.norm());
            }
    }
    if (rep.max_compatibility > 1e-6)
        throw GeometryError("Dirac matrices not covariantly constant (max " + std::to_string(rep.max_compatibility) + ")");
    return rep;
}

// ---------------------------------------------------------------- metric calculus

MetricData metric_data(const SpectralDiff& sd, const TensorField& ginv)
{
    const int n = ginv.n, P = ginv.points();
    MetricData md;
    md.g_up = ginv;
    md.g_lo = lower_of(ginv);
    md.sqrt_det = ScalarField(P);
    for (int p = 0; p < P; ++p) {
        double det = mat2(md.g_lo.at(p)).determinant();
        if (!(det > 0.0)) throw GeometryError("metric not positive definite at grid point " + std::to_string(p), p);
        md.sqrt_det[p] = std::sqrt(det);
    }
    TensorField dg = sd.d(md.g_lo);   // [k][i][j] = d_k g_ij
    md.christoffel = TensorField(n, 3, P);
    for (int p = 0; p < P; ++p) {
        Tens gu = ginv.at(p), d = dg.at(p), G(n, 3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double acc = 0.0;
                    for (int m = 0; m < n; ++m)
                        acc += gu({i, m}) * (d({j, m, k}) + d({k, m, j}) - d({m, j, k}));
                    G({i, j, k}) = 0.5 * acc;
                }
        md.christoffel.set(p, G);
    }
    // R_jl = d_i Gamma^i_lj - d_l Gamma^i_ij + Gamma^i_im Gamma^m_lj - Gamma^i_lm Gamma^m_ij
    TensorField dG = sd.d(md.christoffel);   // [a][i][j][k]
    md.ricci = TensorField(n, 2, P);
    md.scalar = ScalarField::Zero(P);
    for (int p = 0; p < P; ++p) {
        Tens G = md.christoffel.at(p), D = dG.at(p), R(n, 2);
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    acc += D({i, i, l, j}) - D({l, i, i, j});
                    for (int m = 0; m < n; ++m) acc += G({i, i, m}) * G({m, l, j}) - G({i, l, m}) * G({m, i, j});
                }
                R({j, l}) = acc;
            }
        md.ricci.set(p, R);
        Tens gu = ginv.at(p);
        double sc = 0.0;
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) sc += gu({j, l}) * R({j, l});
        md.scalar[p] = sc;
    }
    return md;
}

TensorField covariant_derivative(const SpectralDiff& sd, const TensorField& T, const std::vector<bool>& upper,
                                 const TensorField& christoffel)
{
    const int n = T.n, r = T.rank, P = T.points();
    if (static_cast<int>(upper.size()) != r) throw std::invalid_argument("covariant_derivative: variance list size");
    TensorField out = sd.d(T);
    std::vector<int> idx(r + 1), src(r);
    const std::size_t total = out.comp.size();
    for (int p = 0; p < P; ++p) {
        Tens t = T.at(p), G = christoffel.at(p), o = out.at(p);
        for (std::size_t f = 0; f < total; ++f) {
            o.unravel(f, idx.data());
            const int i = idx[0];
            double acc = 0.0;
            for (int a = 0; a < r; ++a) {
                for (int b = 0; b < r; ++b) src[b] = idx[b + 1];
                for (int m = 0; m < n; ++m) {
                    src[a] = m;
                    if (upper[a])
                        acc += G({idx[a + 1], i, m}) * t.at(src.data());
                    else
                        acc -= G({m, i, idx[a + 1]}) * t.at(src.data());
                }
            }
            o[f] += acc;
        }
        out.set(p, o);
    }
    return out;
}

// ---------------------------------------------------------------- combined geometry stages

void combined_metric(const SpectralDiff& sd, const OperatorGeometry& p, const OperatorGeometry& m, double t,
                     double s, CombinedGeometry& cg)
{
    if (!(t >= 0.0) || !(s >= 0.0) || !(t + s > 0.0))
        throw DomainError("combined geometry needs t, s >= 0 and t + s > 0");
    const int n = p.ginv.n, P = p.ginv.points();
    if (m.ginv.n != n || m.ginv.points() != P) throw GeometryError("operators live on different grids");
    if (p.fiber != m.fiber) throw GeometryError("operators act on different fiber dimensions");
    cg.t = t;
    cg.s = s;
    cg.n = n;
    cg.points = P;
    cg.fiber = p.fiber;
    TensorField gi(n, 2, P);
    for (std::size_t c = 0; c < gi.comp.size(); ++c) gi.comp[c] = t * p.ginv.comp[c] + s * m.ginv.comp[c];
    cg.plus = metric_data(sd, p.ginv);
    cg.minus = metric_data(sd, m.ginv);
    cg.g = metric_data(sd, gi);
}

void dual_metric(const OperatorGeometry&, const OperatorGeometry&, CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points;
    cg.G_lo = TensorField(n, 2, P);
    for (std::size_t c = 0; c < cg.G_lo.comp.size(); ++c)
        cg.G_lo.comp[c] = cg.s * cg.plus.g_lo.comp[c] + cg.t * cg.minus.g_lo.comp[c];
    cg.G_up = lower_of(cg.G_lo);
    double res = 0.0, resdet = 0.0;
    for (int q = 0; q < P; ++q) {
        Eigen::MatrixXd gp = mat2(cg.plus.g_lo.at(q)), gm = mat2(cg.minus.g_lo.at(q)), gu = mat2(cg.g.g_up.at(q));
        Eigen::MatrixXd G = mat2(cg.G_lo.at(q));
        double sc = std::max(1.0, G.norm());
        res = std::max(res, (gp * gu * gm - G).norm() / sc);
        res = std::max(res, (gm * gu * gp - G).norm() / sc);
        double g = cg.g.sqrt_det[q] * cg.g.sqrt_det[q];
        double lhs = G.determinant(), rhs = gp.determinant() * gm.determinant() / g;
        resdet = std::max(resdet, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300));
    }
    cg.res_dual_factorization = res;
    cg.res_det = resdet;
}

void combined_connection(const OperatorGeometry& p, const OperatorGeometry& m, CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points, r = cg.fiber;
    cg.A.assign(n, EndoField(P));
    cg.C_plus.assign(n, EndoField(P));
    cg.C_minus.assign(n, EndoField(P));
    double res = 0.0;
    for (int q = 0; q < P; ++q) {
        Tens gl = cg.g.g_lo.at(q), gp = p.ginv.at(q), gm = m.ginv.at(q);
        std::vector<Eigen::MatrixXcd> mix(n, Eigen::MatrixXcd::Zero(r, r));
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) mix[j] += cg.t * gp({j, k}) * p.conn[k][q] + cg.s * gm({j, k}) * m.conn[k][q];
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(r, r);
            for (int j = 0; j < n; ++j) a += gl({i, j}) * mix[j];
            cg.A[i][q] = a;
            cg.C_plus[i][q] = p.conn[i][q] - a;
            cg.C_minus[i][q] = m.conn[i][q] - a;
        }
        double sc = 1.0;
        for (int i = 0; i < n; ++i) sc = std::max(sc, p.conn[i][q].norm() + m.conn[i][q].norm());
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(r, r);
            for (int j = 0; j < n; ++j)
                v += cg.t * gp({i, j}) * cg.C_plus[j][q] + cg.s * gm({i, j}) * cg.C_minus[j][q];
            res = std::max(res, v.norm() / sc);
        }
    }
    cg.res_connection_identity = res;
}

void noncompat_tensors(const SpectralDiff& sd, CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points;
    const TensorField& Gam = cg.g.christoffel;
    auto build = [&](const MetricData& h, TensorField& K, TensorField& W, TensorField& Wv, ScalarField& W0,
                     TensorField& DW) {
        K = covariant_derivative(sd, h.g_lo, {false, false}, Gam);
        W = TensorField(n, 3, P);
        Wv = TensorField(n, 1, P);
        W0 = ScalarField(P);
        for (int q = 0; q < P; ++q) {
            Tens k = K.at(q), hu = h.g_up.at(q), w(n, 3), v(n, 1);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int l = 0; l < n; ++l) {
                        double acc = 0.0;
                        for (int m = 0; m < n; ++m) acc += hu({i, m}) * (k({j, l, m}) + k({l, j, m}) - k({m, j, l}));
                        w({i, j, l}) = 0.5 * acc;
                    }
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += w({i, i, j});
                v[j] = acc;
            }
            W.set(q, w);
            Wv.set(q, v);
            W0[q] = std::log(h.sqrt_det[q] / cg.g.sqrt_det[q]);
        }
        DW = covariant_derivative(sd, W, {true, false, false}, Gam);
    };
    build(cg.plus, cg.K_plus, cg.W_plus, cg.Wv_plus, cg.W0_plus, cg.DW_plus);
    build(cg.minus, cg.K_minus, cg.W_minus, cg.Wv_minus, cg.W0_minus, cg.DW_minus);

    // W^±_j against d_j W^±
    double res = 0.0, sc = 1.0;
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd dp = sd.d(cg.W0_plus, j), dm = sd.d(cg.W0_minus, j);
        res = std::max(res, (dp - cg.Wv_plus.comp[j]).cwiseAbs().maxCoeff());
        res = std::max(res, (dm - cg.Wv_minus.comp[j]).cwiseAbs().maxCoeff());
        sc = std::max(sc, dp.cwiseAbs().maxCoeff());
    }
    cg.res_W_two_ways = res / sc;

    cg.W_vec = TensorField(n, 1, P);
    for (int j = 0; j < n; ++j) cg.W_vec.comp[j] = 0.5 * (cg.Wv_plus.comp[j] + cg.Wv_minus.comp[j]);
    TensorField dW = covariant_derivative(sd, cg.W_vec, {false}, Gam);   // [i][j] = nabla_i W_j
    cg.W_hess = TensorField(n, 2, P);
    for (int q = 0; q < P; ++q) cg.W_hess.set(q, symmetrize(dW.at(q)));
}

namespace {

// S_ijkl = Sym[4 h_mi nabla_j W^m_kl + 4 h_mi W^n_jk W^m_ln + 3 h_nm W^n_ij W^m_kl]
Tens s4_point(const Tens& h, const Tens& W, const Tens& DW)
{
    const int n = h.dim();
    Tens out(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double acc = 0.0;
                    for (int m = 0; m < n; ++m) {
                        acc += 4.0 * h({m, i}) * DW({j, m, k, l});
                        for (int a = 0; a < n; ++a) {
                            acc += 4.0 * h({m, i}) * W({a, j, k}) * W({m, l, a});
                            acc += 3.0 * h({a, m}) * W({a, i, j}) * W({m, k, l});
                        }
                    }
                    out({i, j, k, l}) = acc;
                }
    return symmetrize(out);
}

} // namespace

void sigma_tensors(const SpectralDiff&, CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points;
    cg.Sigma3 = TensorField(n, 3, P);
    cg.Sigma4 = TensorField(n, 4, P);
    cg.S4_plus = TensorField(n, 4, P);
    cg.S4_minus = TensorField(n, 4, P);
    for (int q = 0; q < P; ++q) {
        Tens k3 = cg.s * cg.K_plus.at(q) + cg.t * cg.K_minus.at(q);
        cg.Sigma3.set(q, 1.5 * symmetrize(k3));
        Tens sp = s4_point(cg.plus.g_lo.at(q), cg.W_plus.at(q), cg.DW_plus.at(q));
        Tens sm = s4_point(cg.minus.g_lo.at(q), cg.W_minus.at(q), cg.DW_minus.at(q));
        cg.S4_plus.set(q, sp);
        cg.S4_minus.set(q, sm);
        cg.Sigma4.set(q, cg.s * sp + cg.t * sm);
    }
}

void aux_tensors(CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points;
    cg.N = TensorField(n, 3, P);
    cg.M = TensorField(n, 2, P);
    cg.V6 = TensorField(n, 6, P);
    for (int q = 0; q < P; ++q) {
        Tens G = cg.G_up.at(q), S3 = cg.Sigma3.at(q), S4 = cg.Sigma4.at(q);
        Tens Wv = cg.W_vec.at(q), Wh = cg.W_hess.at(q);
        auto g = [&](int a, int b) { return G({a, b}); };

        // N^{jkl} = 2 G^{ij}G^{kl}W_i - 1/3 (2 G^{ij}G^{qk} + 3 G^{iq}G^{jk}) G^{pl} Sigma_ipq
        Tens N(n, 3);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        acc += 2.0 * g(i, j) * g(k, l) * Wv[i];
                        for (int a = 0; a < n; ++a)
                            for (int b = 0; b < n; ++b)
                                acc -= (2.0 * g(i, j) * g(b, k) + 3.0 * g(i, b) * g(j, k)) * g(a, l) * S3({i, a, b}) / 3.0;
                    }
                    N({j, k, l}) = acc;
                }
        cg.N.set(q, N);

        // M^{kl}; the Sigma4 block uses the resolved index assignment
        // -1/4 (G^{ij}G^{pq}G^{kl} + 4 G^{ij}G^{kp}G^{lq}) Sigma_ijpq
        Tens M(n, 2);
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        acc += (g(k, l) * g(i, j) + 2.0 * g(i, k) * g(j, l)) * (Wh({i, j}) + Wv[i] * Wv[j]);
                        for (int m = 0; m < n; ++m)
                            for (int p = 0; p < n; ++p)
                                acc -= (2.0 * g(i, j) * g(m, k) * g(p, l) + 2.0 * g(i, m) * g(j, k) * g(p, l) +
                                        g(k, l) * g(i, m) * g(p, j)) *
                                       S3({p, i, m}) * Wv[j];
                        for (int p = 0; p < n; ++p)
                            for (int r = 0; r < n; ++r)
                                acc -= 0.25 * (g(i, j) * g(p, r) * g(k, l) + 4.0 * g(i, j) * g(k, p) * g(l, r)) *
                                       S4({i, j, p, r});
                    }
                double acc72 = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        for (int p = 0; p < n; ++p)
                            for (int qq = 0; qq < n; ++qq)
                                for (int r = 0; r < n; ++r)
                                    for (int s = 0; s < n; ++s) {
                                        double c = 2.0 * g(i, j) * g(p, r) * g(qq, s) * g(k, l) +
                                                   3.0 * g(i, j) * g(p, qq) * g(r, s) * g(k, l) +
                                                   6.0 * g(i, k) * g(j, l) * g(p, qq) * g(r, s) +
                                                   12.0 * g(i, j) * g(p, qq) * g(k, r) * g(l, s) +
                                                   12.0 * g(i, j) * g(p, r) * g(k, qq) * g(s, l);
                                        acc72 += c * S3({i, p, qq}) * S3({j, r, s});
                                    }
                M({k, l}) = acc + acc72 / 12.0;   // 1/12, not 1/72
            }
        cg.M.set(q, M);

        // V_pqijkl
        Tens hp = cg.plus.g_lo.at(q), hm = cg.minus.g_lo.at(q);
        Tens Wp = cg.W_plus.at(q), Wm = cg.W_minus.at(q), Dp = cg.DW_plus.at(q), Dm = cg.DW_minus.at(q);
        auto block = [&](const Tens& h, const Tens& W, const Tens& D, int p, int i, int j, int k) {
            double acc = 0.0;
            for (int m = 0; m < n; ++m) {
                acc += 4.0 * h({m, p}) * D({k, m, i, j});
                // no extra 12 h W W - 6 h W W pair: it cancels against the second derivative of the
                // transported gamma trace
                for (int a = 0; a < n; ++a) acc += 4.0 * h({m, p}) * W({a, j, k}) * W({m, i, a});
            }
            return acc;
        };
        Tens V(n, 6);
        int idx[6];
        for (std::size_t f = 0; f < V.size(); ++f) {
            V.unravel(f, idx);
            const int p = idx[0], qq = idx[1], i = idx[2], j = idx[3], k = idx[4], l = idx[5];
            double acc = block(hp, Wp, Dp, p, i, j, k) * hm({l, qq}) + hp({l, p}) * block(hm, Wm, Dm, qq, i, j, k);
            for (int m = 0; m < n; ++m)
                for (int a = 0; a < n; ++a) acc += 6.0 * hp({m, p}) * Wp({m, i, j}) * hm({a, qq}) * Wm({a, k, l});
            V[f] = acc;
        }
        cg.V6.set(q, symmetrize(V, {2, 3, 4, 5}));
    }
}

void effective_potential(const SpectralDiff& sd, const OperatorGeometry& p, const OperatorGeometry& m,
                         CombinedGeometry& cg)
{
    const int n = cg.n, P = cg.points, r = cg.fiber;
    // vectors g±^{ij} W±_i and their divergences
    auto divergence = [&](const TensorField& gup, const TensorField& Wv) {
        TensorField v(n, 1, P);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) v.comp[j] += gup.comp[i * n + j].cwiseProduct(Wv.comp[i]);
        TensorField dv = covariant_derivative(sd, v, {true}, cg.g.christoffel);
        ScalarField div = ScalarField::Zero(P);
        for (int j = 0; j < n; ++j) div += dv.comp[j * n + j];
        return div;
    };
    ScalarField dp = divergence(p.ginv, cg.Wv_plus), dm = divergence(m.ginv, cg.Wv_minus);
    cg.Q.assign(P, Eigen::MatrixXcd::Zero(r, r));
    const Eigen::MatrixXcd Id = Eigen::MatrixXcd::Identity(r, r);
    for (int q = 0; q < P; ++q) {
        Tens gp = p.ginv.at(q), gm = m.ginv.at(q), wp = cg.Wv_plus.at(q), wm = cg.Wv_minus.at(q);
        Eigen::MatrixXcd Qc = cg.t * p.Q[q] + cg.s * m.Q[q];
        double scal = 0.5 * cg.t * dp[q] + 0.5 * cg.s * dm[q];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Qc -= cg.t * gp({i, j}) * cg.C_plus[i][q] * cg.C_plus[j][q];
                Qc -= cg.s * gm({i, j}) * cg.C_minus[i][q] * cg.C_minus[j][q];
                scal += 0.25 * cg.t * gp({i, j}) * wp[i] * wp[j] + 0.25 * cg.s * gm({i, j}) * wm[i] * wm[j];
            }
        cg.Q[q] = Qc + scal * Id;
    }
}

CombinedGeometry build_combined(const ModelManifold& mf, const OperatorGeometry& p, const OperatorGeometry& m,
                                double t, double s, double tol)
{
    SpectralDiff sd(mf);
    CombinedGeometry cg;
    combined_metric(sd, p, m, t, s, cg);
    dual_metric(p, m, cg);
    if (cg.res_dual_factorization > tol)
        throw ConsistencyError("dual metric factorizations disagree", cg.res_dual_factorization);
    combined_connection(p, m, cg);
    if (cg.res_connection_identity > tol)
        throw ConsistencyError("t g+ C+ + s g- C- != 0", cg.res_connection_identity);
    noncompat_tensors(sd, cg);
    if (cg.res_W_two_ways > std::max(tol, 1e-7))
        throw ConsistencyError("W_j computed two ways disagree; refine the grid", cg.res_W_two_ways);
    sigma_tensors(sd, cg);
    aux_tensors(cg);
    effective_potential(sd, p, m, cg);
    return cg;
}

ScalarField s4_kform_1d(const SpectralDiff& sd, const CombinedGeometry& cg, bool plus)
{
    if (cg.n != 1) throw PreconditionError("s4_kform_1d is one-dimensional");
    const TensorField& K = plus ? cg.K_plus : cg.K_minus;
    const TensorField& hu = plus ? cg.plus.g_up : cg.minus.g_up;
    const ScalarField& k = K.comp[0];
    const ScalarField& G = cg.g.christoffel.comp[0];
    ScalarField dk = sd.d(k, 0);
    // 2 nabla K - h^{11} K^2 + h^{11} K^2 - 1/4 h^{11} K^2
    return 2.0 * (dk - 3.0 * G.cwiseProduct(k)) - 0.25 * hu.comp[0].cwiseProduct(k.cwiseProduct(k));
}

} // namespace heatrace
