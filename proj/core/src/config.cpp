#include "heatrace/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "heatrace/errors.hpp"

namespace heatrace {

using json = nlohmann::json;

namespace {

// walks a JSON object, remembers which keys were read and rejects the rest
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_.empty() ? "/" : path_, msg); }
    std::string at(const std::string& key) const { return path_ + "/" + key; }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }
    const json& get(const std::string& key)
    {
        seen_.insert(key);
        return j_.at(key);
    }
    Node child(const std::string& key) { return Node(get(key), at(key)); }

    double number(const std::string& key, double def)
    {
        if (!has(key)) return def;
        return as_number(get(key), at(key));
    }
    int integer(const std::string& key, int def)
    {
        if (!has(key)) return def;
        const json& v = get(key);
        if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        return v.get<int>();
    }
    bool boolean(const std::string& key, bool def)
    {
        if (!has(key)) return def;
        const json& v = get(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& key, const std::string& def, const std::vector<std::string>& allowed = {})
    {
        if (!has(key)) return def;
        const json& v = get(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        const std::string s = v.get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError(at(key), "'" + s + "' is not one of " + list);
        }
        return s;
    }
    std::vector<double> numbers(const std::string& key)
    {
        if (!has(key)) return {};
        const json& v = get(key);
        if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], at(key) + "/" + std::to_string(i)));
        return out;
    }

    // call after reading: unknown keys are errors
    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(at(k), "unknown field");
    }

    static double as_number(const json& v, const std::string& path)
    {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
        return d;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

FieldSpec field(Node& n, const std::string& key, FieldSpec def)
{
    if (!n.has(key)) return def;
    const json& v = n.get(key);
    if (v.is_number()) return {Node::as_number(v, n.at(key)), 0.0, 0.0};
    Node f(v, n.at(key));
    FieldSpec s;
    s.c0 = f.number("const", 0.0);
    s.c1 = f.number("cos", 0.0);
    s.c2 = f.number("sin", 0.0);
    f.finish();
    return s;
}

OperatorSpec operator_spec(Node n, bool torus)
{
    OperatorSpec o;
    o.type = n.string("type", "laplace", {"laplace", "dirac"});
    if (torus) {
        if (o.type != "laplace") n.fail("torus operators must be of type laplace");
        if (n.has("ginv")) {
            const json& g = n.get("ginv");
            const std::string p = n.at("ginv");
            if (!g.is_array() || g.size() != 2) throw ConfigError(p, "expected a 2x2 array");
            for (int i = 0; i < 2; ++i) {
                if (!g[i].is_array() || g[i].size() != 2) throw ConfigError(p + "/" + std::to_string(i), "expected 2 numbers");
                for (int j = 0; j < 2; ++j)
                    o.ginv(i, j) = Node::as_number(g[i][j], p + "/" + std::to_string(i) + "/" + std::to_string(j));
            }
            if (std::abs(o.ginv(0, 1) - o.ginv(1, 0)) > 1e-14) throw ConfigError(p, "must be symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(o.ginv);
            if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError(p, "must be positive definite");
        }
        const auto tw = n.numbers("twist");
        if (!tw.empty()) {
            if (tw.size() != 2) throw ConfigError(n.at("twist"), "expected 2 numbers");
            o.twist0 = tw[0];
            o.twist1 = tw[1];
        }
        o.q = n.number("potential", 0.0);
    } else {
        o.metric = field(n, "metric", o.metric);
        o.connection = field(n, "connection", {});
        if (o.metric.c0 - std::abs(o.metric.c1) - std::abs(o.metric.c2) <= 0.0)
            throw ConfigError(n.at("metric"), "metric must stay positive: const > |cos| + |sin|");
        if (o.type == "laplace") {
            o.potential = field(n, "potential", {});
        } else {
            o.s = field(n, "s", {});
            o.mass = field(n, "mass", {});
        }
    }
    n.finish();
    return o;
}

void positive_list(const std::vector<double>& v, const std::string& path)
{
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0)) throw ConfigError(path + "/" + std::to_string(i), "must be positive");
}

} // namespace

std::vector<std::pair<double, double>> RunConfig::all_directions() const
{
    std::vector<std::pair<double, double>> out = directions;
    for (double a : t)
        for (double b : s) out.emplace_back(a, b);
    if (out.empty()) out = {{1.0, 1.0}, {0.5, 1.5}, {1.5, 0.5}};
    return out;
}

std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) {
        static const char* hex = "0123456789abcdef";
        os << hex[md[i] >> 4] << hex[md[i] & 15];
    }
    return os.str();
}

RunConfig parse_config(const std::string& text, const std::string& source)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("malformed JSON: ") + e.what());
    }
    RunConfig c;
    c.source = source;
    c.hash = sha256_hex(j.dump());
    Node root(j, "");
    c.task = root.string("task", "", {"traces", "coeffs", "fit", "verify", "bogolyubov", "synge"});
    if (root.has("fixture")) {
        const auto names = fixture_names();
        c.fixture = root.string("fixture", "", names);
    }
    if (root.has("manifold")) {
        Node m = root.child("manifold");
        c.manifold.kind = m.string("kind", "circle", {"circle", "torus"});
        c.manifold.periods = m.numbers("periods");
        positive_list(c.manifold.periods, m.at("periods"));
        const std::size_t dim = c.manifold.kind == "circle" ? 1 : 2;
        if (!c.manifold.periods.empty() && c.manifold.periods.size() != dim)
            throw ConfigError(m.at("periods"), "expected " + std::to_string(dim) + " period(s)");
        c.manifold.grid = m.integer("grid", 0);
        if (c.manifold.grid != 0 && (c.manifold.grid < 8 || c.manifold.grid % 2))
            throw ConfigError(m.at("grid"), "grid must be an even number >= 8");
        m.finish();
    }
    const bool torus = c.manifold.kind == "torus";
    if (root.has("operator_plus")) c.plus = operator_spec(root.child("operator_plus"), torus);
    if (root.has("operator_minus")) c.minus = operator_spec(root.child("operator_minus"), torus);
    if (c.fixture && (c.plus || c.minus)) throw ConfigError("/fixture", "give either a fixture or operator blocks");
    if (c.plus.has_value() != c.minus.has_value())
        throw ConfigError(c.plus ? "/operator_minus" : "/operator_plus", "both operator blocks are required");
    if (c.plus && c.plus->type != c.minus->type) throw ConfigError("/operator_minus/type", "must match operator_plus");

    if (root.has("grids")) {
        Node g = root.child("grids");
        c.t = g.numbers("t");
        positive_list(c.t, g.at("t"));
        c.s = g.numbers("s");
        positive_list(c.s, g.at("s"));
        if (c.t.empty() != c.s.empty()) throw ConfigError(g.at(c.t.empty() ? "t" : "s"), "t and s go together");
        if (g.has("directions")) {
            const json& d = g.get("directions");
            const std::string p = g.at("directions");
            if (!d.is_array()) throw ConfigError(p, "expected an array of [t, s] pairs");
            for (std::size_t i = 0; i < d.size(); ++i) {
                const std::string pi = p + "/" + std::to_string(i);
                if (!d[i].is_array() || d[i].size() != 2) throw ConfigError(pi, "expected [t, s]");
                const double a = Node::as_number(d[i][0], pi + "/0"), b = Node::as_number(d[i][1], pi + "/1");
                if (!(a > 0.0 && b > 0.0)) throw ConfigError(pi, "t and s must be positive");
                c.directions.emplace_back(a, b);
            }
        }
        if (g.has("eps")) {
            const json& e = g.get("eps");
            if (e.is_string()) {
                const std::string m = e.get<std::string>();
                if (m == "none") c.eps.mode = EpsSpec::none;
                else if (m != "auto") throw ConfigError(g.at("eps"), "expected \"auto\", \"none\" or {lo, hi, count}");
            } else {
                Node en(e, g.at("eps"));
                c.eps.mode = EpsSpec::range;
                c.eps.lo = en.number("lo", c.eps.lo);
                c.eps.hi = en.number("hi", c.eps.hi);
                c.eps.count = en.integer("count", c.eps.count);
                if (!(c.eps.lo > 0.0)) throw ConfigError(en.at("lo"), "must be positive");
                if (!(c.eps.hi > c.eps.lo)) throw ConfigError(en.at("hi"), "must exceed lo");
                if (c.eps.count < 3) throw ConfigError(en.at("count"), "at least 3 points");
                en.finish();
            }
        }
        c.beta = g.numbers("beta");
        positive_list(c.beta, g.at("beta"));
        c.alpha = g.numbers("alpha");
        g.finish();
    }
    if (root.has("tolerances")) {
        Node t = root.child("tolerances");
        c.tail_tolerance = t.number("tail", c.tail_tolerance);
        c.fit_tolerance = t.number("fit", c.fit_tolerance);
        c.consistency_tolerance = t.number("consistency", c.consistency_tolerance);
        for (const char* k : {"tail", "fit", "consistency"})
            if (t.has(k) && !(t.get(k).get<double>() > 0.0)) throw ConfigError(t.at(k), "must be positive");
        t.finish();
    }
    if (root.has("coeffs")) {
        Node k = root.child("coeffs");
        c.w_block = k.string("w_block", c.w_block, {"corrected", "as_printed"});
        c.k_max = k.integer("k_max", c.k_max);
        if (c.k_max < 0 || c.k_max > 1) throw ConfigError(k.at("k_max"), "must be 0 or 1");
        k.finish();
    }
    if (root.has("fit")) {
        Node f = root.child("fit");
        c.fit_input = f.string("input", "");
        f.finish();
    }
    if (root.has("bogolyubov")) {
        Node b = root.child("bogolyubov");
        c.bogolyubov_kind = b.string("kind", c.bogolyubov_kind, {"boson", "fermion"});
        c.bogolyubov_input = b.string("input", "");
        c.bogolyubov_step = b.number("step", c.bogolyubov_step);
        c.bogolyubov_tail = b.number("tail", c.bogolyubov_tail);
        if (!(c.bogolyubov_step > 0.0)) throw ConfigError(b.at("step"), "must be positive");
        if (!(c.bogolyubov_tail > 0.0)) throw ConfigError(b.at("tail"), "must be positive");
        b.finish();
    }
    if (root.has("synge")) {
        Node s = root.child("synge");
        c.synge.metric = s.string("metric", c.synge.metric, {"flat", "sphere", "wavy"});
        c.synge.second_metric = s.string("second_metric", c.synge.second_metric, {"flat", "sphere", "wavy"});
        if (s.has("base")) {
            c.synge.base = s.numbers("base");
            if (c.synge.base.size() != 2) throw ConfigError(s.at("base"), "expected 2 coordinates");
        }
        c.synge.radius = s.number("radius", c.synge.radius);
        c.synge.h = s.number("h", c.synge.h);
        c.synge.tolerance = s.number("tolerance", c.synge.tolerance);
        c.synge.transport = s.boolean("transport", c.synge.transport);
        if (!(c.synge.radius > 0.0)) throw ConfigError(s.at("radius"), "must be positive");
        if (!(c.synge.h > 0.0)) throw ConfigError(s.at("h"), "must be positive");
        if (!(c.synge.tolerance > 0.0)) throw ConfigError(s.at("tolerance"), "must be positive");
        s.finish();
    }
    if (root.has("output")) {
        Node o = root.child("output");
        c.out_dir = o.string("dir", c.out_dir);
        c.emit_gnuplot = o.boolean("gnuplot", c.emit_gnuplot);
        o.finish();
    }
    c.threads = root.integer("threads", 0);
    if (c.threads < 0) throw ConfigError("/threads", "must be >= 0");
    root.finish();
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("/", "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

namespace {

ScalarField eval(const ModelManifold& m, const FieldSpec& f)
{
    const Eigen::ArrayXd x = m.coords(0).array();
    return (f.c0 + f.c1 * x.cos() + f.c2 * x.sin()).matrix();
}

} // namespace

OperatorPair build_pair(const RunConfig& c)
{
    if (c.fixture) return make_fixture(*c.fixture, c.manifold.grid);
    if (!c.plus) throw ConfigError("/operator_plus", "no operators: give a fixture or operator blocks");
    OperatorPair f;
    f.name = "custom";
    if (c.manifold.kind == "torus") {
        std::vector<double> periods = c.manifold.periods;
        if (periods.empty()) periods = {2.0 * M_PI, 2.0 * M_PI};
        f.manifold = ModelManifold::torus(periods, c.manifold.grid ? c.manifold.grid : 24);
        f.plus = laplace_2d_const(f.manifold, c.plus->ginv, c.plus->twist0, c.plus->twist1, c.plus->q);
        f.minus = laplace_2d_const(f.manifold, c.minus->ginv, c.minus->twist0, c.minus->twist1, c.minus->q);
        return f;
    }
    const double L = c.manifold.periods.empty() ? 2.0 * M_PI : c.manifold.periods[0];
    f.manifold = ModelManifold::circle(L, c.manifold.grid ? c.manifold.grid : 256);
    auto build = [&](const OperatorSpec& o) {
        if (o.type == "dirac")
            return dirac_1d(f.manifold, eval(f.manifold, o.metric), eval(f.manifold, o.connection), eval(f.manifold, o.s),
                            eval(f.manifold, o.mass));
        return laplace_1d(f.manifold, eval(f.manifold, o.metric), eval(f.manifold, o.connection),
                          eval(f.manifold, o.potential));
    };
    f.dirac = c.plus->type == "dirac";
    f.plus = build(*c.plus);
    f.minus = build(*c.minus);
    return f;
}

} // namespace heatrace
