#pragma once
// Shipped operator pairs used by the tests, the acceptance suite and `verify`.
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "heatrace/manifold.hpp"
#include "heatrace/tensor_core.hpp"

namespace heatrace {

struct OperatorPair {
    std::string name;
    ModelManifold manifold;
    OperatorGeometry plus, minus;
    bool dirac = false;
};

Eigen::MatrixXcd pauli(int k);   // k = 0 (identity), 1, 2, 3

// scalar fiber on the circle: L = -c^{1/4}(d + i a)c^{1/2}(d + i a)c^{1/4} + q
OperatorGeometry laplace_1d(const ModelManifold& m, const ScalarField& c, const ScalarField& a, const ScalarField& q);
// fiber 2: D = sigma1 c^{1/4} i(d + i a) c^{1/4} + s sigma2 + mass sigma3
OperatorGeometry dirac_1d(const ModelManifold& m, const ScalarField& c, const ScalarField& a, const ScalarField& s,
                          const ScalarField& mass);
// constant inverse metric on the flat 2-torus, scalar fiber, U(1) twists (a0, a1), potential q
OperatorGeometry laplace_2d_const(const ModelManifold& m, const Eigen::Matrix2d& ginv, double a0, double a1, double q);

// names: equal_laplace, equal_dirac, shifted_laplace, shifted_dirac, two_scale,
// variable_metric, dirac_twist, dirac_variable, torus_pair
std::vector<std::string> fixture_names();
OperatorPair make_fixture(const std::string& name, int grid = 0);   // grid 0: fixture default

constexpr double kShiftMass = 0.7;

} // namespace heatrace
