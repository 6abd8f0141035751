// heatrace command line: traces, coeffs, fit, verify, bogolyubov, synge
#include <CLI11.hpp>

#include <iostream>

#include "heatrace/config.hpp"
#include "heatrace/errors.hpp"
#include "heatrace/run.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"heatrace: relative heat trace invariants of operator pairs"};
    app.require_subcommand(1, 1);
    app.fallthrough();   // global flags may follow the subcommand

    std::string config_path, out_dir, input, suite = "all";
    int threads = 0;
    double tolerance = 0.0;
    bool gnuplot = false;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (default: config output.dir, else ./out)");
    app.add_option("--threads", threads, "worker threads (default: HEATRACE_THREADS, else 1)")
        ->check(CLI::NonNegativeNumber);
    auto* tol = app.add_option("--tolerance", tolerance, "replaces the task's main tolerance")->check(CLI::PositiveNumber);
    app.add_flag("--emit-gnuplot", gnuplot, "also write a gnuplot script next to each CSV");

    app.add_subcommand("traces", "spectral traces Theta, X, Y, Psi, Phi on the eps grids");
    app.add_subcommand("coeffs", "geometric coefficients with sub-term breakdown");
    auto* fit = app.add_subcommand("fit", "eps-fit of a trace CSV against the geometric coefficients");
    fit->add_option("--input", input, "trace CSV (default: config fit.input, else OUT/traces.csv)");
    auto* verify = app.add_subcommand("verify", "property suites; exit 1 on any failure");
    verify->add_option("suite", suite, "all | laplace | synge | spectral")
        ->check(CLI::IsMember({"all", "laplace", "synge", "spectral"}));
    auto* bog = app.add_subcommand("bogolyubov", "Bogolyubov invariants over the beta grid");
    bog->add_option("--input", input, "trace CSV on a square (t, s) lattice (default: spectral surface)");
    app.add_subcommand("synge", "coincidence limits, two-metric tensors, transport, metric recovery");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const heatrace::RunConfig cfg =
            config_path.empty() ? heatrace::parse_config("{}") : heatrace::load_config(config_path);
        heatrace::RunOptions opt;
        opt.out_dir = out_dir;
        opt.threads = threads;
        if (tol->count()) opt.tolerance = tolerance;
        opt.emit_gnuplot = gnuplot;
        opt.suite = suite;
        opt.input = input;
        const std::string task = app.get_subcommands().front()->get_name();
        return heatrace::run(task, cfg, opt, std::cout).status;
    } catch (const heatrace::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const heatrace::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
