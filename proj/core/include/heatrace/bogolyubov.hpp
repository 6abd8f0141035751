#pragma once
// h-kernels (theta-type series and principal-value integrals) and the Bogolyubov
// invariants B_b, B_f as double integrals of the relative invariants Psi, Phi.
#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "heatrace/spectral_engine.hpp"

namespace heatrace {

enum class KernelTag { boson, fermion, zero };
std::string to_string(KernelTag k);
KernelTag kernel_from_string(const std::string& s);

enum class KernelRoute { series, principal_value };

struct KernelValue {
    double value = 0.0;
    double error = 0.0;
    KernelRoute route = KernelRoute::series;
    int terms = 0;          // series terms, or pole intervals for the integral
    bool switched = false;  // series route requested but too many terms needed
};

struct KernelOptions {
    double rel_tol = 1e-15;   // series stops when the next term is below rel_tol * partial sum
    int max_terms = 200;      // beyond this h_kernel falls back to the integral route
    double quad_tol = 1e-13;
};

// h_b = (4pi)^{-1/2} t^{-3/2} sum_{k>=1} k e^{-k^2/4t}, h_f with (-1)^{k+1}, h_0 over odd k
KernelValue h_kernel_series(KernelTag tag, double t, const KernelOptions& opt = {});
// (1/2pi) PV int p tan(p/2) e^{-t p^2} (fermion), p cot(p/2) (boson), p / sin p (zero);
// pole intervals are folded onto u in (0, w] as f(c + u) + f(c - u)
KernelValue h_kernel_pv(KernelTag tag, double t, const KernelOptions& opt = {});
// series first, principal-value route when the series would need more than max_terms
KernelValue h_kernel(KernelTag tag, double t, const KernelOptions& opt = {});

// E_f = 1/(e^x+1), E_b = 1/(e^x-1), E_0 = 1/(2 sinh x); the kernels' Laplace transforms
double occupation(KernelTag tag, double x);

// a relative invariant as a function of two times, tabulated on product grids
struct TraceSurface {
    std::string name;
    double lo = 0.0;                                           // support in both arguments
    double hi = std::numeric_limits<double>::infinity();
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> table;   // (a, b) -> F(t_a, s_b)
    // for interpolated surfaces: same data on every other lattice point, for the interpolation error
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> coarse;
};

TraceSurface surface_from_function(std::function<double(double, double)> f, double lo = 0.0,
                                   double hi = std::numeric_limits<double>::infinity(), std::string name = "function");

// values on a log-spaced lattice, values(i, j) = F(times[i], times[j]); bilinear in log t
struct TraceGrid {
    Eigen::VectorXd times;   // ascending, positive
    Eigen::MatrixXd values;
};
TraceSurface surface_from_grid(const TraceGrid& g, std::string name = "grid");

// Psi and Phi from spectral data, built by matrix products over the modes
TraceSurface spectral_psi_surface(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o);
TraceSurface spectral_phi_surface(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o);

struct BogolyubovOptions {
    double step = 0.05;          // trapezoid step in log t; the check halves it
    double kernel_cut = 1e-14;   // lower limit t_lo = 1 / (4 log(1/kernel_cut))
    double t_max = 400.0;        // initial upper limit in units of 1/beta^2
    double tail_tol = 1e-10;     // truncated tail relative to |B|
    int max_extend = 6;          // quadrupling of the upper limit for unbounded surfaces
};

struct BogolyubovValue {
    double beta = 0.0;
    double value = 0.0;
    double error = 0.0;          // quad + tail + interpolation
    double quad_error = 0.0;     // |B(step) - B(step/2)|
    double tail = 0.0;
    double interp_error = 0.0;
    double t_lo = 0.0, t_hi = 0.0;
    int nodes = 0;
};

enum class BogolyubovKind { boson, fermion };
std::string to_string(BogolyubovKind k);

// boson:   int dt ds h_f(s) h_b(t) Psi(beta^2 s, beta^2 t)
// fermion: int dt ds h_0(s) h_0(t) 2 beta^2 Phi(beta^2 t, beta^2 s)
BogolyubovValue bogolyubov_invariant(BogolyubovKind kind, const TraceSurface& surface, double beta,
                                     const BogolyubovOptions& opt = {});
std::vector<BogolyubovValue> bogolyubov_scan(BogolyubovKind kind, const TraceSurface& surface,
                                             const std::vector<double>& betas, const BogolyubovOptions& opt = {});

// the defining traces by functional calculus on the trusted modes (omega = sqrt(lambda), D = mu)
double bogolyubov_direct(BogolyubovKind kind, const SpectralDecomposition& p, const SpectralDecomposition& m,
                         const Overlap& o, double beta);

} // namespace heatrace
