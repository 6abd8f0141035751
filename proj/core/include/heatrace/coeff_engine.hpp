#pragma once
// Geometric path: closed-form heat trace coefficients as densities and integrals.
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "heatrace/manifold.hpp"
#include "heatrace/tensor_core.hpp"

namespace heatrace {

// Coefficient of the W block in b1: 1 (Corrected, default) or 1/6 (AsPrinted, kept for comparison).
enum class WBlockConvention { Corrected, AsPrinted };

// Curvature overrides. Unset entries are computed from the metric fields
// (identically zero in 1D); set entries replace them by constants everywhere.
struct CurvatureInputs {
    std::optional<Eigen::MatrixXd> ricci_plus, ricci_minus, ricci_g;
    std::optional<double> scalar_plus, scalar_minus;
};

struct CoeffOptions {
    WBlockConvention w_block = WBlockConvention::Corrected;
    CurvatureInputs curvature;
    double tolerance = 1e-9;   // consistency tolerance passed to build_combined
};

struct SubTerm {
    std::string name;
    double value = 0.0;   // integrated contribution
};

struct CoefficientReport {
    std::string label;
    double t = 0.0, s = 0.0;
    Eigen::VectorXd density;   // empty for classical/relative coefficients
    double value = 0.0;
    std::string method = "geometric";
    std::vector<SubTerm> terms;
    double imag_residual = 0.0;   // largest imaginary part of a fiber trace, should be ~0
};

struct ClassicalA {
    double A0 = 0.0, A1 = 0.0;
};
ClassicalA classical_A(const ModelManifold& m, const OperatorGeometry& g, std::optional<double> scalar_curvature = {});

struct DiracH {
    double H0 = 0.0, H1 = 0.0;
};
DiracH dirac_H(const ModelManifold& m, const OperatorGeometry& g, std::optional<double> scalar_curvature = {});

struct CoeffPair {
    CoefficientReport k0, k1;
};

// b0, b1 densities and B0, B1
CoeffPair b_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                   double s, const CoeffOptions& opt = {});
CoeffPair b_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus,
                   const CombinedGeometry& cg, const CoeffOptions& opt = {});
// c0, c1 densities and C0, C1 (both geometries Dirac)
CoeffPair c_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                   double s, const CoeffOptions& opt = {});
CoeffPair c_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus,
                   const CombinedGeometry& cg, const CoeffOptions& opt = {});

CoeffPair psi_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                     double s, const CoeffOptions& opt = {});
CoeffPair phi_coeffs(const ModelManifold& m, const OperatorGeometry& plus, const OperatorGeometry& minus, double t,
                     double s, const CoeffOptions& opt = {});

} // namespace heatrace
