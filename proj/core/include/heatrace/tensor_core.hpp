#pragma once
// Geometry of a pair of operators on a model manifold and the (t,s)-dependent
// tensors built from it.
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "heatrace/fields.hpp"
#include "heatrace/manifold.hpp"

namespace heatrace {

struct DiracData {
    std::vector<Eigen::MatrixXcd> gammas;   // constant frame matrices gamma^a
    TensorField frame;                      // e^i_a(x), stored [i][a]
    EndoField S;                            // anticommutes with every gamma^i
};

struct OperatorGeometry {
    int fiber = 1;
    TensorField ginv;                 // g^{ij}(x)
    std::vector<EndoField> conn;      // A_i(x), anti-Hermitian
    EndoField Q;                      // Laplace potential. For Dirac geometries this is the D^2 potential.
    std::optional<DiracData> dirac;
    double hermitian_correction = 0.0;
};

// Laplace-type geometry. Connection and potential are symmetrized (anti-Hermitian /
// Hermitian parts) and the correction norm is kept.
OperatorGeometry make_laplace(const ModelManifold& m, int fiber, TensorField ginv,
                              std::vector<EndoField> conn, EndoField Q);
// Dirac-type geometry: metric from the frame, Q from the Lichnerowicz-type formula.
OperatorGeometry make_dirac(const ModelManifold& m, std::vector<Eigen::MatrixXcd> gammas,
                            TensorField frame, std::vector<EndoField> conn, EndoField S);

// gamma^i(x) = e^i_a gamma^a
std::vector<EndoField> dirac_gammas(const OperatorGeometry& g);

struct GeometryReport {
    double max_gamma_anticommutator = 0.0;    // |{g^a,g^b} - 2 delta|
    double max_S_anticommutator = 0.0;        // |{S, gamma^i}|
    double max_compatibility = 0.0;           // |nabla_i gamma^j|
    double min_metric_eigenvalue = 0.0;
};
// throws GeometryError naming the failing grid point
GeometryReport validate(const ModelManifold& m, const OperatorGeometry& g, double tol = 1e-9);

// Levi-Civita data of a metric field
struct MetricData {
    TensorField g_up, g_lo;
    ScalarField sqrt_det;      // (det g_ij)^{1/2}
    TensorField christoffel;   // Gamma^i_{jk}, stored [i][j][k]
    TensorField ricci;         // R_ij
    ScalarField scalar;        // R
};
MetricData metric_data(const SpectralDiff& sd, const TensorField& ginv);

// nabla_i T, derivative slot first. upper[a] marks contravariant slots of T.
TensorField covariant_derivative(const SpectralDiff& sd, const TensorField& T,
                                 const std::vector<bool>& upper, const TensorField& christoffel);
// R_ij = d_i A_j - d_j A_i + [A_i, A_j], stored [i*n+j]
std::vector<EndoField> gauge_curvature(const SpectralDiff& sd, const std::vector<EndoField>& A);
// nabla_i E = d_i E + [A_i, E]
std::vector<EndoField> gauge_derivative(const SpectralDiff& sd, const EndoField& E,
                                        const std::vector<EndoField>& A);
// D^2 potential: -1/2 gamma^{ij} R_ij + S^2 + i gamma^j nabla_j S
EndoField dirac_potential(const ModelManifold& m, const std::vector<EndoField>& gam,
                          const std::vector<EndoField>& A, const EndoField& S);

struct CombinedGeometry {
    double t = 0.0, s = 0.0;
    int n = 1, fiber = 1, points = 0;

    MetricData g;              // g(t,s)
    MetricData plus, minus;    // own metrics of the two operators
    TensorField G_lo, G_up;    // dual metric

    std::vector<EndoField> A, C_plus, C_minus;
    TensorField K_plus, K_minus;          // K_ijk = nabla_i g_jk
    TensorField W_plus, W_minus;          // W^i_jk
    TensorField Wv_plus, Wv_minus;        // W^±_j
    ScalarField W0_plus, W0_minus;        // W^± = 1/2 log(g±/g)
    TensorField W_vec, W_hess;            // W_i, W_ij
    TensorField DW_plus, DW_minus;        // nabla_k W^m_ij, stored [k][m][i][j]
    TensorField S4_plus, S4_minus;        // S±_ijkl
    TensorField Sigma3, Sigma4;
    TensorField N, M;                     // N^{jkl}, M^{kl} (unsymmetrized)
    TensorField V6;                       // V_pqijkl, symmetrized over ijkl
    EndoField Q;                          // Q(t,s)

    // residuals of the built-in consistency identities
    double res_dual_factorization = 0.0;
    double res_connection_identity = 0.0;
    double res_W_two_ways = 0.0;
    double res_det = 0.0;
};

// Individual stages, each usable on its own.
void combined_metric(const SpectralDiff& sd, const OperatorGeometry& p, const OperatorGeometry& m,
                     double t, double s, CombinedGeometry& cg);
void dual_metric(const OperatorGeometry& p, const OperatorGeometry& m, CombinedGeometry& cg);
void combined_connection(const OperatorGeometry& p, const OperatorGeometry& m, CombinedGeometry& cg);
void noncompat_tensors(const SpectralDiff& sd, CombinedGeometry& cg);
void sigma_tensors(const SpectralDiff& sd, CombinedGeometry& cg);
void aux_tensors(CombinedGeometry& cg);
void effective_potential(const SpectralDiff& sd, const OperatorGeometry& p, const OperatorGeometry& m,
                         CombinedGeometry& cg);

// Runs every stage and checks the identities against tol (relative).
CombinedGeometry build_combined(const ModelManifold& mf, const OperatorGeometry& p,
                                const OperatorGeometry& m, double t, double s, double tol = 1e-9);

// Symmetric S_ijkl in K form, 1D only: 2(K' - 3 Gamma K) - c K^2/4 per metric (used as a cross-check).
ScalarField s4_kform_1d(const SpectralDiff& sd, const CombinedGeometry& cg, bool plus);

} // namespace heatrace
