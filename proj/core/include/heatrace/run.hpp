#pragma once
// Orchestration of the CLI tasks. Each task has an in-memory form used by the tests;
// run() writes the artifacts and returns the exit status.
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "heatrace/config.hpp"
#include "heatrace/csv_io.hpp"

namespace heatrace {

struct RunOptions {
    std::string out_dir;               // empty: config output.dir
    int threads = 0;                   // 0: config, then HEATRACE_THREADS, then 1
    std::optional<double> tolerance;   // replaces the task's main tolerance
    bool emit_gnuplot = false;
    std::string suite = "all";         // verify: all | laplace | synge | spectral
    std::string input;                 // fit / bogolyubov: trace CSV, overrides the config
};

struct VerifyLine {
    std::string suite, name;
    bool pass = false;
    double error = 0.0, tolerance = 0.0;
};

struct RunResult {
    int status = 0;
    std::vector<std::string> artifacts;
    std::vector<VerifyLine> checks;
};

// traces columns: t, s, theta_plus, theta_minus, X, Y, Psi, Phi, tailbound, t0, s0, eps
// Theta at t+s; Y and Phi are nan for Laplace pairs; (t0, s0) is the direction, (t, s) = eps (t0, s0)
CsvTable traces_table(const RunConfig& c);
// coeffs columns: t, s, label, value, method, imag_residual, terms ("name=value;...")
CsvTable coeffs_table(const RunConfig& c);
// agreement of eps-fits of a traces table with the geometric coefficients, as JSON text
struct FitOutcome {
    std::string json;
    bool agree = true;
};
FitOutcome fit_report(const RunConfig& c, const CsvTable& traces);
// columns: beta, B, error, quad_error, tail, interp_error, t_lo, t_hi, nodes
CsvTable bogolyubov_table(const RunConfig& c, const CsvTable* lattice = nullptr);
struct SyngeOutcome {
    std::string json;
    bool pass = true;
};
SyngeOutcome synge_report(const RunConfig& c);
std::vector<VerifyLine> verify_suite(const std::string& suite, const RunConfig& c);

RunResult run(const std::string& task, RunConfig c, const RunOptions& o, std::ostream& log);

} // namespace heatrace
