#include "heatrace/coeff_engine.hpp"

#include <cmath>
#include <complex>

#include "heatrace/errors.hpp"

namespace heatrace {

namespace {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
const cd I1(0.0, 1.0);

// accumulates named density contributions and integrates them against g^{1/2}
struct TermTable {
    std::vector<std::string> names;
    std::vector<Eigen::VectorXd> dens;
    double imag = 0.0;

    TermTable(std::vector<std::string> n, int points) : names(std::move(n)), dens(names.size(), Eigen::VectorXd::Zero(points)) {}
    void add(int term, int p, cd v)
    {
        dens[term][p] += v.real();
        imag = std::max(imag, std::abs(v.imag()));
    }
    CoefficientReport report(const ModelManifold& m, const std::string& label, double t, double s,
                             const Eigen::VectorXd& weight) const
    {
        CoefficientReport r;
        r.label = label;
        r.t = t;
        r.s = s;
        r.density = Eigen::VectorXd::Zero(weight.size());
        for (std::size_t k = 0; k < names.size(); ++k) {
            r.density += dens[k];
            r.terms.push_back({names[k], m.integrate(weight.cwiseProduct(dens[k]))});
        }
        r.value = m.integrate(weight.cwiseProduct(r.density));
        r.imag_residual = imag;
        return r;
    }
};

Tens ricci_at(const MetricData& md, const std::optional<Eigen::MatrixXd>& override_, int p)
{
    if (!override_) return md.ricci.at(p);
    const int n = md.ricci.n;
    if (override_->rows() != n || override_->cols() != n) throw PreconditionError("curvature override has wrong size");
    Tens t(n, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t({i, j}) = (*override_)(i, j);
    return t;
}

double scalar_at(const MetricData& md, const std::optional<double>& override_, int p)
{
    return override_ ? *override_ : md.scalar[p];
}

// G^(ij G^kl)
double gsym(const Tens& G, int i, int j, int k, int l)
{
    return (G({i, j}) * G({k, l}) + G({i, k}) * G({j, l}) + G({i, l}) * G({j, k})) / 3.0;
}

// antisymmetrized product gamma^{[a_1} ... gamma^{a_k]}
Mat antisym(const std::vector<Mat>& gam, const std::vector<int>& idx)
{
    const int k = static_cast<int>(idx.size());
    const int r = static_cast<int>(gam[0].rows());
    Mat acc = Mat::Zero(r, r);
    double fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    for (const auto& perm : permutations(k)) {
        int inv = 0;
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b)
                if (perm[a] > perm[b]) ++inv;
        Mat prod = Mat::Identity(r, r);
        for (int a = 0; a < k; ++a) prod = prod * gam[idx[perm[a]]];
        acc += (inv % 2 ? -1.0 : 1.0) * prod;
    }
    return acc / fact;
}

} // namespace

ClassicalA classical_A(const ModelManifold& m, const OperatorGeometry& g, std::optional<double> scalar_curvature)
{
    SpectralDiff sd(m);
    MetricData md = metric_data(sd, g.ginv);
    const int P = m.points();
    Eigen::VectorXd a1(P);
    for (int p = 0; p < P; ++p)
        a1[p] = scalar_at(md, scalar_curvature, p) / 6.0 * g.fiber - g.Q[p].trace().real();
    return {m.integrate(md.sqrt_det) * g.fiber, m.integrate(md.sqrt_det.cwiseProduct(a1))};
}

DiracH dirac_H(const ModelManifold& m, const OperatorGeometry& g, std::optional<double> scalar_curvature)
{
    if (!g.dirac) throw PreconditionError("dirac_H needs Dirac data");
    SpectralDiff sd(m);
    MetricData md = metric_data(sd, g.ginv);
    const int P = m.points();
    const int r = g.fiber;
    Eigen::VectorXd h0(P), h1(P);
    for (int p = 0; p < P; ++p) {
        const Mat& S = g.dirac->S[p];
        h0[p] = S.trace().real();
        Mat inner = scalar_at(md, scalar_curvature, p) / 6.0 * Mat::Identity(r, r) - g.Q[p];
        h1[p] = (S * inner).trace().real();
    }
    return {m.integrate(md.sqrt_det.cwiseProduct(h0)), m.integrate(md.sqrt_det.cwiseProduct(h1))};
}

CoeffPair b_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                   double s, const CoeffOptions& opt)
{
    CombinedGeometry cg = build_combined(m, plus, minus, t, s, opt.tolerance);
    return b_coeffs(m, plus, minus, cg, opt);
}

CoeffPair b_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus,
                   const CombinedGeometry& cg, const CoeffOptions& opt)
{
    const int n = cg.n, P = cg.points, r = cg.fiber;
    const double t = cg.t, s = cg.s, ts = t * s;
    const double kappa = opt.w_block == WBlockConvention::Corrected ? 1.0 : 1.0 / 6.0;
    const auto& cv = opt.curvature;

    TermTable b0({"trI"}, P);
    TermTable b1({"potential", "curvature", "W", "SigmaW", "Sigma4", "Sigma3Sigma3", "C"}, P);
    for (int p = 0; p < P; ++p) {
        b0.add(0, p, static_cast<double>(r));
        const double Rp = scalar_at(cg.plus, cv.scalar_plus, p), Rm = scalar_at(cg.minus, cv.scalar_minus, p);
        cd pot = t * (Rp / 6.0 * r - plus.Q[p].trace()) + s * (Rm / 6.0 * r - minus.Q[p].trace());
        b1.add(0, p, pot);

        Tens G = cg.G_up.at(p), Ric = ricci_at(cg.plus, cv.ricci_plus, p) + ricci_at(cg.minus, cv.ricci_minus, p) -
                                      2.0 * ricci_at(cg.g, cv.ricci_g, p);
        Tens Wv = cg.W_vec.at(p), Wh = cg.W_hess.at(p), S3 = cg.Sigma3.at(p), S4 = cg.Sigma4.at(p);
        double curv = 0.0, w = 0.0, sw = 0.0, s4 = 0.0, s33 = 0.0;
        cd cc(0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                curv += G({i, j}) * Ric({i, j});
                w += G({i, j}) * (Wh({i, j}) + Wv[i] * Wv[j]);
                Mat dCi = cg.C_plus[i][p] - cg.C_minus[i][p], dCj = cg.C_plus[j][p] - cg.C_minus[j][p];
                cc += G({i, j}) * (dCi * dCj).trace();
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        sw += G({i, j}) * G({k, l}) * S3({i, k, l}) * Wv[j];
                        s4 += G({i, j}) * G({k, l}) * S4({i, j, k, l});
                        for (int mm = 0; mm < n; ++mm)
                            for (int nn = 0; nn < n; ++nn)
                                s33 += (2.0 * G({i, l}) * G({j, mm}) + 3.0 * G({i, j}) * G({l, mm})) * G({k, nn}) *
                                       S3({i, j, k}) * S3({l, mm, nn});
                    }
            }
        b1.add(1, p, ts * curv / 6.0 * r);
        b1.add(2, p, ts * kappa * w * r);
        b1.add(3, p, -ts * sw * r);
        b1.add(4, p, -0.25 * ts * s4 * r);
        b1.add(5, p, ts * s33 / 12.0 * r);
        b1.add(6, p, ts * cc);
    }
    return {b0.report(m, "B0", t, s, cg.g.sqrt_det), b1.report(m, "B1", t, s, cg.g.sqrt_det)};
}

CoeffPair c_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                   double s, const CoeffOptions& opt)
{
    CombinedGeometry cg = build_combined(m, plus, minus, t, s, opt.tolerance);
    return c_coeffs(m, plus, minus, cg, opt);
}

CoeffPair c_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus,
                   const CombinedGeometry& cg, const CoeffOptions& opt)
{
    if (!plus.dirac || !minus.dirac) throw PreconditionError("c_coeffs needs two Dirac geometries");
    validate(m, plus);
    validate(m, minus);
    SpectralDiff sd(m);
    const int n = cg.n, P = cg.points;
    const double t = cg.t, s = cg.s, ts = t * s;
    const auto& cv = opt.curvature;

    auto gp = dirac_gammas(plus), gm = dirac_gammas(minus);
    auto Rp_gauge = gauge_curvature(sd, plus.conn), Rm_gauge = gauge_curvature(sd, minus.conn);
    auto dSp = gauge_derivative(sd, plus.dirac->S, plus.conn), dSm = gauge_derivative(sd, minus.dirac->S, minus.conn);
    // nabla^{g,A}_k (C+_l - C-_l), stored [k*n+l]
    std::vector<EndoField> dC(n * n, EndoField(P));
    {
        EndoField diff(P);
        for (int l = 0; l < n; ++l) {
            for (int p = 0; p < P; ++p) diff[p] = cg.C_plus[l][p] - cg.C_minus[l][p];
            auto d = gauge_derivative(sd, diff, cg.A);
            for (int k = 0; k < n; ++k)
                for (int p = 0; p < P; ++p) dC[k * n + l][p] = d[k][p];
        }
        for (int p = 0; p < P; ++p) {
            Tens Gam = cg.g.christoffel.at(p);
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    for (int mm = 0; mm < n; ++mm)
                        dC[k * n + l][p] -= Gam({mm, k, l}) * (cg.C_plus[mm][p] - cg.C_minus[mm][p]);
        }
    }

    TermTable c0({"gamma"}, P);
    TermTable c1({"curv_plus", "curv_minus", "gauge_plus", "gauge_minus", "SS", "S2_plus", "S2_minus", "dS_plus",
                  "dS_minus", "ts_curvature", "ts_V", "ts_N", "ts_M", "ts_dC", "ts_WC", "ts_CC"},
                 P);
    for (int p = 0; p < P; ++p) {
        Tens gl = cg.g.g_lo.at(p), G = cg.G_up.at(p), hp = cg.plus.g_lo.at(p), hm = cg.minus.g_lo.at(p);
        Tens hpu = cg.plus.g_up.at(p), hmu = cg.minus.g_up.at(p);
        std::vector<Mat> Gp(n), Gm(n);
        for (int i = 0; i < n; ++i) {
            Gp[i] = gp[i][p];
            Gm[i] = gm[i][p];
        }
        const Mat& Sp = plus.dirac->S[p];
        const Mat& Sm = minus.dirac->S[p];
        // T^{pq} = tr(gamma+^p gamma-^q)
        Eigen::MatrixXcd trpm(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) trpm(a, b) = (Gp[a] * Gm[b]).trace();

        cd v0(0.0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) v0 += 0.5 * gl({a, b}) * trpm(a, b);
        c0.add(0, p, v0);

        const double Rp = scalar_at(cg.plus, cv.scalar_plus, p), Rm = scalar_at(cg.minus, cv.scalar_minus, p);
        Tens Ricp = ricci_at(cg.plus, cv.ricci_plus, p), Ricm = ricci_at(cg.minus, cv.ricci_minus, p);
        Tens Ricg = ricci_at(cg.g, cv.ricci_g, p);

        cd T[16];
        for (auto& x : T) x = 0.0;
        for (int a = 0; a < n; ++a)        // p
            for (int b = 0; b < n; ++b) {  // q
                double w1 = 0.5 * gl({a, b}) * Rp, w2 = 0.5 * gl({a, b}) * Rm;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        w1 -= gl({b, i}) * hpu({i, j}) * Ricp({j, a});
                        w2 -= gl({a, i}) * hmu({i, j}) * Ricm({j, b});
                    }
                T[0] += t / 6.0 * w1 * trpm(a, b);
                T[1] += s / 6.0 * w2 * trpm(a, b);
                T[5] += -0.5 * t * gl({a, b}) * (Gm[b] * Gp[a] * Sp * Sp).trace();
                T[6] += -0.5 * s * gl({a, b}) * (Gp[a] * Gm[b] * Sm * Sm).trace();
                for (int j = 0; j < n; ++j) {
                    T[7] += -0.5 * t * gl({b, a}) * (I1 * Gm[b] * antisym(Gp, {a, j}) * dSp[j][p]).trace();
                    T[8] += -0.5 * s * gl({a, b}) * (I1 * Gp[a] * antisym(Gm, {b, j}) * dSm[j][p]).trace();
                }
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        T[2] += 0.25 * t * gl({a, b}) * (Gm[b] * antisym(Gp, {a, i, j}) * Rp_gauge[i * n + j][p]).trace();
                        T[3] += 0.25 * s * gl({a, b}) * (Gp[a] * antisym(Gm, {b, i, j}) * Rm_gauge[i * n + j][p]).trace();
                    }
            }
        T[4] = (Sp * Sm).trace();

        // ts block
        Tens V6 = cg.V6.at(p), N = symmetrize(cg.N.at(p)), M = cg.M.at(p);
        Tens Wp = cg.W_plus.at(p), Wm = cg.W_minus.at(p);
        // g+_{p(k} g-_{l)q}
        auto gg = [&](int a, int k, int l, int b) { return 0.5 * (hp({a, k}) * hm({l, b}) + hp({a, l}) * hm({k, b})); };
        std::vector<Mat> dCl(n);
        for (int l = 0; l < n; ++l) dCl[l] = cg.C_plus[l][p] - cg.C_minus[l][p];
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                const cd tr = trpm(a, b);
                const Mat comm = Gp[a] * Gm[b] - Gm[b] * Gp[a];
                double curv = 0.0, vv = 0.0, nn = 0.0, mm = 0.0;
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        mm += M({k, l}) * gg(a, k, l, b);
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < n; ++j) {
                                curv += (G({k, l}) * G({i, j}) + 2.0 * G({i, k}) * G({j, l})) *
                                        (Ricp({i, j}) + Ricm({i, j}) - 2.0 * Ricg({i, j})) * gg(a, k, l, b);
                                vv += gsym(G, i, j, k, l) * V6({a, b, i, j, k, l});
                            }
                        for (int j = 0; j < n; ++j) {
                            // symmetrize W^m_(jk g_l) over (j,k,l)
                            double sym = 0.0;
                            for (const auto& pr : permutations(3)) {
                                int id[3] = {j, k, l};
                                int jj = id[pr[0]], kk = id[pr[1]], ll = id[pr[2]];
                                for (int q = 0; q < n; ++q)
                                    sym += hp({q, a}) * Wp({q, jj, kk}) * hm({ll, b}) + hm({q, b}) * Wm({q, jj, kk}) * hp({ll, a});
                            }
                            nn += N({j, k, l}) * sym / 6.0;
                        }
                    }
                T[9] += ts / 12.0 * curv * tr;
                T[10] += ts / 8.0 * vv * tr;
                T[11] += ts * 0.75 * nn * tr;
                T[12] += ts * 0.5 * mm * tr;

                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        double c14 = 0.0, c15 = 0.0;
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < n; ++j) {
                                const double gs = gsym(G, i, j, k, l);
                                c14 += gs * hp({j, a}) * hm({b, i});
                                double wsum = 0.0;
                                for (int q = 0; q < n; ++q)
                                    wsum += hp({q, a}) * Wp({q, i, j}) * hm({k, b}) + hp({k, a}) * hm({q, b}) * Wm({q, i, j});
                                c15 += gs * wsum;
                            }
                        for (int j = 0; j < n; ++j) c15 += N({j, k, l}) * hp({a, k}) * hm({j, b});
                        T[13] += -0.75 * ts * c14 * (comm * dC[k * n + l][p]).trace();
                        T[14] += -0.75 * ts * c15 * (comm * dCl[l]).trace();
                    }
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double pre = 0.75 * ts * hp({a, i}) * hm({j, b});
                        if (pre == 0.0) continue;
                        for (int k = 0; k < n; ++k)
                            for (int l = 0; l < n; ++l) {
                                const double gs = gsym(G, i, j, k, l);
                                if (gs == 0.0) continue;
                                const Mat& Cpk = cg.C_plus[k][p];
                                const Mat& Cpl = cg.C_plus[l][p];
                                const Mat& Cmk = cg.C_minus[k][p];
                                const Mat& Cml = cg.C_minus[l][p];
                                Mat X = (Cpk * Cpl + Cmk * Cml) * (Gp[a] * Gm[b] + Gm[b] * Gp[a]) -
                                        2.0 * Cpk * Cml * Gp[a] * Gm[b] - 2.0 * Cml * Cpk * Gm[b] * Gp[a];
                                T[15] += pre * gs * X.trace();
                            }
                    }
            }
        for (int k = 0; k < 16; ++k) c1.add(k, p, T[k]);
    }
    return {c0.report(m, "C0", t, s, cg.g.sqrt_det), c1.report(m, "C1", t, s, cg.g.sqrt_det)};
}

CoeffPair psi_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                     double s, const CoeffOptions& opt)
{
    const int n = m.dim;
    ClassicalA ap = classical_A(m, plus, opt.curvature.scalar_plus), am = classical_A(m, minus, opt.curvature.scalar_minus);
    CoeffPair bts = b_coeffs(m, plus, minus, t, s, opt), bst = b_coeffs(m, plus, minus, s, t, opt);
    CoeffPair out;
    out.k0.label = "Psi0";
    out.k1.label = "Psi1";
    out.k0.t = out.k1.t = t;
    out.k0.s = out.k1.s = s;
    const double T = t + s;
    out.k0.value = std::pow(T, -0.5 * n) * (ap.A0 + am.A0) - bts.k0.value - bst.k0.value;
    out.k1.value = std::pow(T, 1.0 - 0.5 * n) * (ap.A1 + am.A1) - bts.k1.value - bst.k1.value;
    out.k0.terms = {{"classical", std::pow(T, -0.5 * n) * (ap.A0 + am.A0)}, {"B0(t,s)", bts.k0.value}, {"B0(s,t)", bst.k0.value}};
    out.k1.terms = {{"classical", std::pow(T, 1.0 - 0.5 * n) * (ap.A1 + am.A1)}, {"B1(t,s)", bts.k1.value}, {"B1(s,t)", bst.k1.value}};
    return out;
}

CoeffPair phi_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                     double s, const CoeffOptions& opt)
{
    const int n = m.dim;
    ClassicalA ap = classical_A(m, plus, opt.curvature.scalar_plus), am = classical_A(m, minus, opt.curvature.scalar_minus);
    CoeffPair cts = c_coeffs(m, plus, minus, t, s, opt), cst = c_coeffs(m, plus, minus, s, t, opt);
    CoeffPair out;
    out.k0.label = "Phi0";
    out.k1.label = "Phi1";
    out.k0.t = out.k1.t = t;
    out.k0.s = out.k1.s = s;
    const double T = t + s;
    const double cl0 = 0.5 * n * std::pow(T, -1.0 - 0.5 * n) * (ap.A0 + am.A0);
    const double cl1 = (0.5 * n - 1.0) * std::pow(T, -0.5 * n) * (ap.A1 + am.A1);
    out.k0.value = cl0 - cts.k0.value - cst.k0.value;
    out.k1.value = cl1 - cts.k1.value - cst.k1.value;
    out.k0.terms = {{"classical", cl0}, {"C0(t,s)", cts.k0.value}, {"C0(s,t)", cst.k0.value}};
    out.k1.terms = {{"classical", cl1}, {"C1(t,s)", cts.k1.value}, {"C1(s,t)", cst.k1.value}};
    return out;
}

} // namespace heatrace
