#include "heatrace/manifold.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <string>

#include "heatrace/errors.hpp"

namespace heatrace {

TensorField::TensorField(int n_, int rank_, int points) : n(n_), rank(rank_)
{
    int sz = 1;
    for (int i = 0; i < rank; ++i) sz *= n;
    comp.assign(sz, Eigen::VectorXd::Zero(points));
}

Tens TensorField::at(int p) const
{
    Tens t(n, rank);
    for (std::size_t k = 0; k < comp.size(); ++k) t[k] = comp[k][p];
    return t;
}

void TensorField::set(int p, const Tens& t)
{
    for (std::size_t k = 0; k < comp.size(); ++k) comp[k][p] = t[k];
}

EndoField endo_constant(int points, const Eigen::MatrixXcd& m) { return EndoField(points, m); }

EndoField endo_scale(const EndoField& a, const ScalarField& f)
{
    EndoField out(a.size());
    for (std::size_t p = 0; p < a.size(); ++p) out[p] = a[p] * f[p];
    return out;
}

EndoField endo_add(const EndoField& a, const EndoField& b, double cb)
{
    EndoField out(a.size());
    for (std::size_t p = 0; p < a.size(); ++p) out[p] = a[p] + cb * b[p];
    return out;
}

double hermitize(EndoField& f)
{
    double worst = 0.0;
    for (auto& m : f) {
        Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
        worst = std::max(worst, (m - h).norm());
        m = h;
    }
    return worst;
}

double anti_hermitize(EndoField& f)
{
    double worst = 0.0;
    for (auto& m : f) {
        Eigen::MatrixXcd h = 0.5 * (m - m.adjoint());
        worst = std::max(worst, (m - h).norm());
        m = h;
    }
    return worst;
}

ModelManifold ModelManifold::circle(double circumference, int grid)
{
    ModelManifold m;
    m.kind = Kind::Circle;
    m.dim = 1;
    m.periods = {circumference};
    m.grid = grid;
    m.validate();
    return m;
}

ModelManifold ModelManifold::torus(std::vector<double> periods, int grid)
{
    ModelManifold m;
    m.kind = Kind::FlatTorus;
    m.dim = static_cast<int>(periods.size());
    m.periods = std::move(periods);
    m.grid = grid;
    m.validate();
    return m;
}

void ModelManifold::validate() const
{
    if (dim != 1 && dim != 2) throw GeometryError("manifold dimension must be 1 or 2");
    if (static_cast<int>(periods.size()) != dim) throw GeometryError("need one period per dimension");
    for (double L : periods)
        if (!(L > 0.0)) throw GeometryError("periods must be positive");
    if (grid < 8 || grid % 2 != 0) throw GeometryError("grid must be even and >= 8");
    if (kind == Kind::Circle && dim != 1) throw GeometryError("circle is one-dimensional");
}

int ModelManifold::points() const { return dim == 1 ? grid : grid * grid; }

double ModelManifold::cell_volume() const
{
    double v = 1.0;
    for (double L : periods) v *= L / grid;
    return v;
}

double ModelManifold::coord(int p, int axis) const
{
    int i = axis == 0 ? p % grid : p / grid;
    return periods[axis] * i / grid;
}

Eigen::VectorXd ModelManifold::coords(int axis) const
{
    Eigen::VectorXd x(points());
    for (int p = 0; p < points(); ++p) x[p] = coord(p, axis);
    return x;
}

bool ModelManifold::same_as(const ModelManifold& o) const
{
    return kind == o.kind && dim == o.dim && grid == o.grid && periods == o.periods;
}

SpectralDiff::SpectralDiff(const ModelManifold& m) : m_(m)
{
    m_.validate();
    k_.resize(m_.grid);
}

Eigen::VectorXcd SpectralDiff::apply(const Eigen::VectorXcd& f, int axis, bool keep_nyquist) const
{
    const int N = m_.grid;
    const double scale = 2.0 * M_PI / m_.periods[axis];
    Eigen::FFT<double> fft;
    Eigen::VectorXcd out(f.size());
    const int lines = m_.points() / N;
    std::vector<std::complex<double>> in(N), spec(N), back(N);
    for (int l = 0; l < lines; ++l) {
        // axis 0: contiguous runs; axis 1: stride N
        auto idx = [&](int j) { return axis == 0 ? l * N + j : j * N + l; };
        for (int j = 0; j < N; ++j) in[j] = f[idx(j)];
        fft.fwd(spec, in);
        for (int j = 0; j < N; ++j) {
            double k = j <= N / 2 ? j : j - N;
            if (j == N / 2) k = keep_nyquist ? N / 2 : 0.0;
            spec[j] *= std::complex<double>(0.0, k * scale);
        }
        fft.inv(back, spec);
        for (int j = 0; j < N; ++j) out[idx(j)] = back[j];
    }
    return out;
}

Eigen::VectorXd SpectralDiff::d(const Eigen::VectorXd& f, int axis) const
{
    return apply(f.cast<std::complex<double>>(), axis, false).real();
}

Eigen::VectorXcd SpectralDiff::d(const Eigen::VectorXcd& f, int axis) const
{
    return apply(f, axis, false);
}

TensorField SpectralDiff::d(const TensorField& f) const
{
    const int n = f.n;
    TensorField out(n, f.rank + 1, f.points());
    const std::size_t block = f.comp.size();
    for (int i = 0; i < n; ++i)
        for (std::size_t c = 0; c < block; ++c) out.comp[i * block + c] = d(f.comp[c], i);
    return out;
}

Eigen::MatrixXcd SpectralDiff::matrix(int axis) const
{
    const int P = m_.points();
    Eigen::MatrixXcd D(P, P);
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(P);
    for (int c = 0; c < P; ++c) {
        e[c] = 1.0;
        D.col(c) = apply(e, axis, true);
        e[c] = 0.0;
    }
    return D;
}

double SpectralDiff::tail_energy(const Eigen::VectorXd& f) const
{
    const int N = m_.grid;
    Eigen::FFT<double> fft;
    double total = 0.0, tail = 0.0;
    const int lines = m_.points() / N;
    std::vector<std::complex<double>> in(N), spec(N);
    for (int axis = 0; axis < m_.dim; ++axis) {
        for (int l = 0; l < lines; ++l) {
            auto idx = [&](int j) { return axis == 0 ? l * N + j : j * N + l; };
            for (int j = 0; j < N; ++j) in[j] = f[idx(j)];
            fft.fwd(spec, in);
            for (int j = 0; j < N; ++j) {
                double e = std::norm(spec[j]);
                total += e;
                int k = j <= N / 2 ? j : N - j;
                if (k >= N / 2 - 1) tail += e;
            }
        }
    }
    return total > 0.0 ? tail / total : 0.0;
}

} // namespace heatrace
