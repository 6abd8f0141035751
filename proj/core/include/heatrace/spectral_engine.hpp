#pragma once
// Spectral path: pseudospectral assembly, dense eigendecomposition and every
// trace as an explicit spectral sum, each with a truncation-tail bound.
#include <Eigen/Dense>
#include <complex>
#include <string>
#include <utility>

#include "heatrace/manifold.hpp"
#include "heatrace/tensor_core.hpp"

namespace heatrace {

// L = -g^{-1/4}(d_i + A_i) g^{1/2} g^{ij} (d_j + A_j) g^{-1/4} + Q on half-densities.
// hermitian_defect (optional) receives ||H - H^dagger|| / ||H|| before symmetrization.
Eigen::MatrixXcd assemble_laplace(const ModelManifold& m, const OperatorGeometry& g,
                                  double* hermitian_defect = nullptr);
// D = g^{1/4} i gamma^j (d_j + A_j) g^{-1/4} + S
Eigen::MatrixXcd assemble_dirac(const ModelManifold& m, const OperatorGeometry& g,
                                double* hermitian_defect = nullptr);
// relative mismatch of D^2 and the induced Laplace matrix on smooth band-limited sections
double dirac_square_residual(const ModelManifold& m, const OperatorGeometry& g);

struct SpectralOptions {
    double trust_fraction = 2.0 / 3.0;   // share of the basis kept as resolved modes
    double tail_tolerance = 1e-8;        // traces refuse when tail > tol * |value|
    bool check = true;                   // residual and orthonormality checks
};

struct SpectralDecomposition {
    bool dirac = false;
    int dim = 1, fiber = 1, grid = 0;
    Eigen::VectorXd values;     // trusted modes only, ascending
    Eigen::MatrixXcd vectors;   // columns, unit grid norm
    int mode_cutoff = 0;        // number of trusted modes
    int basis_size = 0;
    double lambda_cut = 0.0;    // eigenvalue of L (or D^2) at the cutoff
    double weyl_a0 = 0.0;       // int g^{1/2} tr I, for the Weyl tail
    double max_residual = 0.0, orthonormality = 0.0;
    double trust_fraction = 2.0 / 3.0, tail_tolerance = 1e-8;

    // eigenvalues of the Laplace-type operator (mu^2 for Dirac)
    Eigen::VectorXd laplace_values() const { return dirac ? values.cwiseAbs2() : values; }
    double lowest() const;
};

SpectralDecomposition eigendecompose(const Eigen::MatrixXcd& H, const ModelManifold& m, int fiber,
                                     double weyl_a0, bool dirac, const SpectralOptions& opt = {});
SpectralDecomposition decompose_laplace(const ModelManifold& m, const OperatorGeometry& g,
                                        const SpectralOptions& opt = {});
SpectralDecomposition decompose_dirac(const ModelManifold& m, const OperatorGeometry& g,
                                      const SpectralOptions& opt = {});

struct Overlap {
    Eigen::MatrixXcd O;   // O_jk = (phi^-_j, phi^+_k)
    Eigen::MatrixXd P;    // |O_jk|^2
    double max_column_sum = 0.0, min_column_sum = 0.0;
};
Overlap overlap(const SpectralDecomposition& plus, const SpectralDecomposition& minus);

struct TraceValue {
    double value = 0.0;
    double tail = 0.0;
};

// Weyl-law bounds for the discarded part of a spectral sum
double tail_theta(const SpectralDecomposition& d, double t);          // sum e^{-t lambda}
double tail_theta_dt(const SpectralDecomposition& d, double t);       // sum lambda e^{-t lambda}
double tail_abs_eta(const SpectralDecomposition& d, double t);        // sum |mu| e^{-t mu^2}
// grid size per axis that would bring the Theta tail at time t below tol * value
int suggest_grid(const SpectralDecomposition& d, double t, double tol);
// smallest time at which the relative Theta tail drops below tol
double min_safe_time(const SpectralDecomposition& d, double tol);
// epsilon window [lo, hi] for fits along the direction (t, s); hi = ratio * lo
std::pair<double, double> safe_epsilon_window(const SpectralDecomposition& p, const SpectralDecomposition& m,
                                              double t, double s, double tol, double ratio = 12.5);

TraceValue theta(const SpectralDecomposition& d, double t);
TraceValue theta_dt(const SpectralDecomposition& d, double t);   // d/dt Theta, analytic
TraceValue eta(const SpectralDecomposition& d, double t);        // H(t) = sum mu e^{-t mu^2}

TraceValue combined_X(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                      double t, double s);
TraceValue combined_Y(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                      double t, double s);
TraceValue relative_psi(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                        double t, double s);
TraceValue relative_phi(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                        double t, double s);

// W(t, alpha) = sum exp(-t mu^2 + i alpha mu); V(t,s;alpha,beta) with overlaps
std::complex<double> generalized_W(const SpectralDecomposition& d, double t, double alpha);
std::complex<double> generalized_V(const SpectralDecomposition& p, const SpectralDecomposition& m,
                                   const Overlap& o, double t, double s, double alpha, double beta);

struct ZetaValues {
    double Z_X = 0.0, Z_Y = 0.0, Z_Psi = 0.0, Z_Phi = 0.0;
    double tail = 0.0;
    int zero_modes_plus = 0, zero_modes_minus = 0;
};
// zero modes (|lambda| < zero_tol) are dropped and counted; Z_Y, Z_Phi only for Dirac pairs
ZetaValues relative_zeta(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                         double pp, double q, double zero_tol = 1e-9);
double spectral_zeta(const SpectralDecomposition& d, double s, double zero_tol = 1e-9);

// Tr P1+ P1-: overlap of the bottom eigenspaces (large-time limit of X)
double bottom_overlap(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                      double degeneracy_tol = 1e-8);

} // namespace heatrace
