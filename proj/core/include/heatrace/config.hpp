#pragma once
// Run configuration: JSON schema, validation with field paths, operator construction.
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "heatrace/fixtures.hpp"

namespace heatrace {

// c0 + c1 cos x + c2 sin x on the circle
struct FieldSpec {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

struct OperatorSpec {
    std::string type = "laplace";   // laplace | dirac
    // circle
    FieldSpec metric{1.0, 0.0, 0.0}, connection, potential, s, mass;
    // torus (constant coefficients)
    Eigen::Matrix2d ginv = Eigen::Matrix2d::Identity();
    double twist0 = 0.0, twist1 = 0.0, q = 0.0;
};

struct ManifoldSpec {
    std::string kind = "circle";   // circle | torus
    std::vector<double> periods;   // default 2 pi per axis
    int grid = 0;                  // 0: fixture default (256 circle, 24 torus)
};

struct EpsSpec {
    // automatic: window from the spectral tails per direction; range: lo..hi log grid;
    // none: traces at the (t, s) points themselves
    enum Mode { automatic, range, none } mode = automatic;
    double lo = 1e-4, hi = 1e-2;
    int count = 12;
};

struct SyngeSpec {
    std::string metric = "sphere";          // flat | sphere | wavy
    std::string second_metric = "wavy";     // for the two-metric tensors
    std::vector<double> base{0.2, 0.15};
    double radius = 0.8;
    double h = 0.04;
    double tolerance = 1e-6;
    bool transport = true;
};

struct RunConfig {
    std::string source;      // file the config came from, "" for inline text
    std::string hash;        // sha256 of the canonical JSON
    std::string task;        // optional default subcommand

    std::optional<std::string> fixture;
    ManifoldSpec manifold;
    std::optional<OperatorSpec> plus, minus;

    std::vector<double> t, s;                            // product grid
    std::vector<std::pair<double, double>> directions;   // explicit (t, s) pairs
    EpsSpec eps;
    std::vector<double> beta, alpha;

    double tail_tolerance = 1e-8;
    double fit_tolerance = 1e-4;
    double consistency_tolerance = 1e-9;
    std::string w_block = "corrected";   // corrected | as_printed
    int k_max = 1;

    std::string fit_input;               // trace CSV for `fit`
    std::string bogolyubov_kind = "boson";
    std::string bogolyubov_input;        // trace CSV for `bogolyubov`, empty: spectral surface
    double bogolyubov_step = 0.05;
    double bogolyubov_tail = 1e-10;      // truncated large-time tail relative to |B|
    SyngeSpec synge;

    std::string out_dir = "out";
    int threads = 0;
    bool emit_gnuplot = false;

    // every (t, s) requested: directions first, then the t x s product;
    // (1,1), (0.5,1.5), (1.5,0.5) when the config names none
    std::vector<std::pair<double, double>> all_directions() const;
};

// throws ConfigError with the JSON path of the offending field ("/grids/t/2")
RunConfig parse_config(const std::string& text, const std::string& source = "");
RunConfig load_config(const std::string& path);
std::string sha256_hex(const std::string& data);

OperatorPair build_pair(const RunConfig& c);

} // namespace heatrace
