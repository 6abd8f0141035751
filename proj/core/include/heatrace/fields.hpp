#pragma once
#include <Eigen/Dense>
#include <vector>

#include "heatrace/tensor.hpp"

namespace heatrace {

using ScalarField = Eigen::VectorXd;
using EndoField = std::vector<Eigen::MatrixXcd>;   // one fiber matrix per grid point

// component-major tensor field: comp[flat index] is a grid vector
struct TensorField {
    int n = 1, rank = 0;
    std::vector<Eigen::VectorXd> comp;

    TensorField() = default;
    TensorField(int n_, int rank_, int points);

    int points() const { return comp.empty() ? 0 : static_cast<int>(comp[0].size()); }
    Tens at(int p) const;
    void set(int p, const Tens& t);
};

EndoField endo_constant(int points, const Eigen::MatrixXcd& m);
EndoField endo_scale(const EndoField& a, const ScalarField& f);
EndoField endo_add(const EndoField& a, const EndoField& b, double cb = 1.0);
// max over points of ||m - m^dagger||, then replace by the Hermitian part
double hermitize(EndoField& f);
double anti_hermitize(EndoField& f);

} // namespace heatrace
