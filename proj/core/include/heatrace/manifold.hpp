#pragma once
#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "heatrace/fields.hpp"

namespace heatrace {

struct ModelManifold {
    enum class Kind { Circle, FlatTorus };
    Kind kind = Kind::Circle;
    int dim = 1;
    std::vector<double> periods{6.283185307179586};
    int grid = 64;

    static ModelManifold circle(double circumference, int grid);
    static ModelManifold torus(std::vector<double> periods, int grid);

    void validate() const;
    int points() const;
    double cell_volume() const;
    // coordinate along axis of flat point p (axis 0 runs fastest)
    double coord(int p, int axis) const;
    Eigen::VectorXd coords(int axis) const;
    double integrate(const ScalarField& f) const { return f.sum() * cell_volume(); }
    bool same_as(const ModelManifold& o) const;
};

// Fourier differentiation on the periodic grid.
class SpectralDiff {
public:
    explicit SpectralDiff(const ModelManifold& m);

    // real fields: Nyquist mode dropped so the result stays real
    Eigen::VectorXd d(const Eigen::VectorXd& f, int axis) const;
    Eigen::VectorXcd d(const Eigen::VectorXcd& f, int axis) const;
    TensorField d(const TensorField& f) const;   // appends the derivative slot first: (d_i T)_{i...}
    // dense operator for assembly. Nyquist is treated as the +N/2 mode, which keeps the
    // matrix anti-Hermitian and exact on every resolved plane wave, twisted ones included.
    Eigen::MatrixXcd matrix(int axis) const;
    // fraction of spectral energy in the outermost resolved shell
    double tail_energy(const Eigen::VectorXd& f) const;

    const ModelManifold& manifold() const { return m_; }

private:
    Eigen::VectorXcd apply(const Eigen::VectorXcd& f, int axis, bool keep_nyquist) const;
    ModelManifold m_;
    std::vector<double> k_;   // angular wavenumbers per axis (same grid count on all axes)
};

} // namespace heatrace
