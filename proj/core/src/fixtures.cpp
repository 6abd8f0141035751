#include "heatrace/fixtures.hpp"

#include <cmath>

#include "heatrace/errors.hpp"

namespace heatrace {

namespace {
using cd = std::complex<double>;

ScalarField constant(const ModelManifold& m, double v) { return ScalarField::Constant(m.points(), v); }

ScalarField cosine(const ModelManifold& m, double c0, double c1)
{
    return (c0 + c1 * m.coords(0).array().cos()).matrix();
}

ScalarField sine(const ModelManifold& m, double c0, double c1)
{
    return (c0 + c1 * m.coords(0).array().sin()).matrix();
}
} // namespace

Eigen::MatrixXcd pauli(int k)
{
    Eigen::MatrixXcd s(2, 2);
    switch (k) {
    case 0: s << 1, 0, 0, 1; break;
    case 1: s << 0, 1, 1, 0; break;
    case 2: s << 0, cd(0, -1), cd(0, 1), 0; break;
    case 3: s << 1, 0, 0, -1; break;
    default: throw std::invalid_argument("pauli: index must be 0..3");
    }
    return s;
}

OperatorGeometry laplace_1d(const ModelManifold& m, const ScalarField& c, const ScalarField& a, const ScalarField& q)
{
    const int P = m.points();
    TensorField ginv(1, 2, P);
    ginv.comp[0] = c;
    std::vector<EndoField> conn(1, EndoField(P));
    EndoField Q(P);
    for (int p = 0; p < P; ++p) {
        conn[0][p] = Eigen::MatrixXcd::Constant(1, 1, cd(0.0, a[p]));
        Q[p] = Eigen::MatrixXcd::Constant(1, 1, q[p]);
    }
    return make_laplace(m, 1, std::move(ginv), std::move(conn), std::move(Q));
}

OperatorGeometry dirac_1d(const ModelManifold& m, const ScalarField& c, const ScalarField& a, const ScalarField& s,
                          const ScalarField& mass)
{
    const int P = m.points();
    TensorField frame(1, 2, P);
    frame.comp[0] = c.array().sqrt().matrix();
    std::vector<EndoField> conn(1, EndoField(P));
    EndoField S(P);
    for (int p = 0; p < P; ++p) {
        conn[0][p] = cd(0.0, a[p]) * pauli(0);
        S[p] = s[p] * pauli(2) + mass[p] * pauli(3);
    }
    return make_dirac(m, {pauli(1)}, std::move(frame), std::move(conn), std::move(S));
}

OperatorGeometry laplace_2d_const(const ModelManifold& m, const Eigen::Matrix2d& gi, double a0, double a1, double q)
{
    const int P = m.points();
    TensorField ginv(2, 2, P);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) ginv.comp[i * 2 + j].setConstant(gi(i, j));
    std::vector<EndoField> conn{EndoField(P, Eigen::MatrixXcd::Constant(1, 1, cd(0.0, a0))),
                                EndoField(P, Eigen::MatrixXcd::Constant(1, 1, cd(0.0, a1)))};
    EndoField Q(P, Eigen::MatrixXcd::Constant(1, 1, q));
    return make_laplace(m, 1, std::move(ginv), std::move(conn), std::move(Q));
}

std::vector<std::string> fixture_names()
{
    return {"equal_laplace", "equal_dirac",  "shifted_laplace", "shifted_dirac", "two_scale",
            "variable_metric", "dirac_twist", "dirac_variable",  "torus_pair"};
}

OperatorPair make_fixture(const std::string& name, int grid)
{
    OperatorPair f;
    f.name = name;
    if (name == "torus_pair") {
        f.manifold = ModelManifold::torus({2.0 * M_PI, 2.0 * M_PI}, grid ? grid : 24);
        const auto& m = f.manifold;
        Eigen::Matrix2d gp, gm;
        gp << 1.0, 0.2, 0.2, 1.5;
        gm << 2.0, -0.1, -0.1, 0.8;
        f.plus = laplace_2d_const(m, gp, 0.3, -0.1, 0.5);
        f.minus = laplace_2d_const(m, gm, -0.2, 0.25, 1.1);
        return f;
    }
    f.manifold = ModelManifold::circle(2.0 * M_PI, grid ? grid : 256);
    const auto& m = f.manifold;
    const ScalarField zero = constant(m, 0.0);
    if (name == "equal_laplace") {
        f.plus = laplace_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.5));
        f.minus = f.plus;
    } else if (name == "equal_dirac") {
        f.dirac = true;
        f.plus = dirac_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.6), zero);
        f.minus = f.plus;
    } else if (name == "shifted_laplace") {
        f.minus = laplace_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.5));
        f.plus = laplace_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.5 + kShiftMass * kShiftMass));
    } else if (name == "shifted_dirac") {
        f.dirac = true;
        f.minus = dirac_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.6), zero);
        f.plus = dirac_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.2), constant(m, 0.6), constant(m, kShiftMass));
    } else if (name == "two_scale") {
        f.plus = laplace_1d(m, constant(m, 1.0), constant(m, 0.3), constant(m, 0.5));
        f.minus = laplace_1d(m, constant(m, 4.0), constant(m, -0.2), constant(m, 1.2));
    } else if (name == "variable_metric") {
        f.plus = laplace_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.3), sine(m, 0.5, 0.2));
        f.minus = laplace_1d(m, constant(m, 4.0), constant(m, -0.2), constant(m, 1.2));
    } else if (name == "dirac_twist") {
        f.dirac = true;
        f.plus = dirac_1d(m, constant(m, 1.0), constant(m, 0.3), constant(m, 0.6), zero);
        f.minus = dirac_1d(m, constant(m, 4.0), constant(m, -0.2), constant(m, 0.9), zero);
    } else if (name == "dirac_variable") {
        f.dirac = true;
        f.plus = dirac_1d(m, cosine(m, 1.0, 0.3), constant(m, 0.3), sine(m, 0.6, 0.2), zero);
        f.minus = dirac_1d(m, constant(m, 4.0), constant(m, -0.2), constant(m, 0.9), zero);
    } else {
        throw ConfigError("fixture", "unknown fixture '" + name + "'");
    }
    return f;
}

} // namespace heatrace
