#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "heatrace/config.hpp"
#include "heatrace/csv_io.hpp"
#include "heatrace/errors.hpp"
#include "heatrace/run.hpp"

using namespace heatrace;
namespace fs = std::filesystem;

namespace {

std::string error_path(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.path;
    }
    return "<accepted>";
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("heatrace_cli_io_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Proc {
    int code = -1;
    std::string out;
};

Proc shell(const std::string& cmd)
{
    Proc r;
    FILE* f = ::popen((cmd + " 2>&1").c_str(), "r");
    REQUIRE(f);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, f)) r.out += buf;
    const int st = ::pclose(f);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

const std::string cli = HEATRACE_CLI;
const std::string configs = HEATRACE_EXAMPLES;

} // namespace

TEST_CASE("config errors name the field path")
{
    CHECK(error_path(R"({"grids": {"t": [0.5, -1.0], "s": [1.0, 1.0]}})") == "/grids/t/1");
    CHECK(error_path(R"({"fixture": "nope"})") == "/fixture");
    CHECK(error_path(R"({"grids": {"bogus": 1}})") == "/grids/bogus");
    CHECK(error_path(R"({"threads": "four"})") == "/threads");
    CHECK(error_path(R"({"grids": {"eps": {"lo": 1e-2, "hi": 1e-3}}})") == "/grids/eps/hi");
    CHECK(error_path(R"({"coeffs": {"k_max": 2}})") == "/coeffs/k_max");
    CHECK(error_path(R"({"manifold": {"kind": "circle", "grid": 7}})") == "/manifold/grid");
    CHECK(error_path(R"({"operator_plus": {"type": "laplace"}})") == "/operator_minus");
    CHECK(error_path(R"({"grids": {"directions": [[1.0, 1.0], [0.5]]}})") == "/grids/directions/1");
    CHECK(error_path("{\"fixture\": ") == "/");
    CHECK(error_path(R"({"fixture": "two_scale"})") == "<accepted>");
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config hash")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto a = parse_config(R"({"fixture": "two_scale", "threads": 2})");
    const auto b = parse_config("{ \"threads\" : 2,\n  \"fixture\":\"two_scale\" }");
    const auto c = parse_config(R"({"fixture": "two_scale", "threads": 3})");
    CHECK(a.hash.size() == 64);
    CHECK(a.hash == b.hash);
    CHECK(a.hash != c.hash);
}

TEST_CASE("config defaults and custom operators")
{
    const auto d = parse_config("{}");
    CHECK(d.all_directions().size() == 3);
    CHECK(d.eps.mode == EpsSpec::automatic);
    const auto c = load_config(configs + "/dirac_custom.json");
    const auto pair = build_pair(c);
    CHECK(pair.dirac);
    CHECK(pair.plus.fiber == 2);
    const auto g = parse_config(R"({"grids": {"t": [0.5, 1.0], "s": [2.0], "directions": [[1.0, 1.0]]}})");
    const auto all = g.all_directions();
    REQUIRE(all.size() == 3);
    CHECK(all[0] == std::pair{1.0, 1.0});
    CHECK(all[2] == std::pair{1.0, 2.0});
}

TEST_CASE("floats keep 17 significant digits")
{
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-INFINITY) == "-inf");
    CHECK(std::isnan(parse_double("nan")));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::exp(u(rng)) * (i % 2 ? 1.0 : -1.0);
        CHECK(parse_double(format_double(x)) == x);
    }
    CHECK_THROWS(parse_double("1.0abc"));
}

TEST_CASE("CSV round trip")
{
    CsvTable t = make_table("test/1", "deadbeef", {"a", "label", "b"});
    t.add_row({format_double(1.0 / 3.0), "B1, corrected", format_double(-2e-300)});
    t.add_row({format_double(2.5), "say \"hi\"", "nan"});
    CHECK_THROWS(t.add_row({"1"}));
    const fs::path dir = scratch("csv");
    write_csv((dir / "t.csv").string(), t);
    const auto r = read_csv((dir / "t.csv").string());
    CHECK(r.columns == t.columns);
    CHECK(r.rows == t.rows);
    CHECK(r.meta_value("config_hash") == "deadbeef");
    CHECK(r.meta_value("schema") == "test/1");
    CHECK(r.meta_value("heatrace") == kVersion);
    CHECK(r.number(0, "a") == 1.0 / 3.0);
    CHECK(r.text(1, "label") == "say \"hi\"");
    CHECK(to_csv(r) == slurp(dir / "t.csv"));
    const auto gp = gnuplot_script("t.csv", t, "a", {"b"}, true, false);
    CHECK(gp.find("set logscale x") != std::string::npos);
    CHECK(gp.find("deadbeef") != std::string::npos);
}

TEST_CASE("identical runs give byte-identical CSV")
{
    auto cfg = parse_config(R"({"fixture": "variable_metric", "manifold": {"grid": 128},
                                "grids": {"directions": [[1.0, 1.0], [0.5, 1.5]], "eps": {"lo": 0.1, "hi": 0.5, "count": 6}}})");
    std::string first;
    for (int threads : {1, 1, 3}) {
        RunOptions o;
        o.threads = threads;
        o.out_dir = scratch("det" + std::to_string(threads)).string();
        std::ostringstream log;
        REQUIRE(run("traces", cfg, o, log).status == 0);
        const std::string text = slurp(fs::path(o.out_dir) / "traces.csv");
        CHECK(text.find(cfg.hash) != std::string::npos);
        if (first.empty())
            first = text;
        else
            CHECK(text == first);
    }
}

TEST_CASE("in-memory traces, fit and coefficients")
{
    const auto cfg = load_config(configs + "/two_scale.json");
    const auto tr = traces_table(cfg);
    CHECK(tr.columns.front() == "t");
    CHECK(tr.has("tailbound"));
    CHECK(tr.rows.size() == 36);
    const auto fit = fit_report(cfg, tr);
    CHECK(fit.agree);
    const auto j = nlohmann::json::parse(fit.json);
    CHECK(j["schema"] == "fit/1");
    CHECK(j["hash_match"] == true);
    const auto co = coeffs_table(cfg);
    CHECK(co.has("imag_residual"));
    CHECK(co.meta_value("config_hash") == cfg.hash);
}

TEST_CASE("command line")
{
    const fs::path dir = scratch("cli");
    {
        std::ofstream(dir / "bad.json") << R"({"grids": {"t": [0.5, -1.0], "s": [1.0, 1.0]}})";
        const auto r = shell(cli + " traces --config " + (dir / "bad.json").string());
        CHECK(r.code == 2);
        CHECK(r.out.find("/grids/t/1") != std::string::npos);
    }
    {
        std::ofstream(dir / "broken.json") << "{\"fixture\": ";
        CHECK(shell(cli + " coeffs --config " + (dir / "broken.json").string()).code == 2);
    }
    CHECK(shell(cli + " traces --config " + (dir / "missing.json").string()).code == 2);
    CHECK(shell(cli + " frobnicate").code == 2);

    // traces -> fit -> coeffs on the two-scale fixture, flags after the subcommand
    const std::string out = (dir / "two_scale").string();
    const std::string base = " --config " + configs + "/two_scale.json --out " + out;
    auto r = shell(cli + " traces" + base + " --threads 2 --emit-gnuplot");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(fs::path(out) / "traces.csv"));
    CHECK(fs::exists(fs::path(out) / "traces.gp"));
    r = shell(cli + " fit" + base);
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(fs::path(out) / "fit.json"));
    CHECK(j["all_agree"] == true);
    CHECK(j["hash_match"] == true);
    r = shell(cli + " coeffs" + base);
    CHECK(r.code == 0);
    CHECK(read_csv((fs::path(out) / "coeffs.csv").string()).meta_value("config_hash") ==
          load_config(configs + "/two_scale.json").hash);

    // an impossible tolerance makes fit fail without crashing
    r = shell(cli + " fit" + base + " --tolerance 1e-15");
    CHECK(r.code == 1);

    // HEATRACE_THREADS fallback and the verify contract
    r = shell("HEATRACE_THREADS=2 " + cli + " verify laplace --out " + (dir / "verify").string());
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "verify" / "verify.csv"));
}
