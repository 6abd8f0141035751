#include "heatrace/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "heatrace/errors.hpp"

namespace heatrace {

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s)
{
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw DomainError("not a number: '" + s + "'");
    return v;
}

int CsvTable::column(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

const std::string& CsvTable::text(std::size_t row, const std::string& name) const
{
    const int c = column(name);
    if (c < 0) throw DomainError("csv has no column '" + name + "'");
    return rows.at(row).at(c);
}

double CsvTable::number(std::size_t row, const std::string& name) const
{
    try {
        return parse_double(text(row, name));
    } catch (const DomainError& e) {
        throw DomainError("row " + std::to_string(row + 1) + ", column " + name + ": " + e.what());
    }
}

std::string CsvTable::meta_value(const std::string& key, const std::string& def) const
{
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    return def;
}

void CsvTable::add_row(std::vector<std::string> r)
{
    if (r.size() != columns.size())
        throw DomainError("row has " + std::to_string(r.size()) + " cells, expected " + std::to_string(columns.size()));
    rows.push_back(std::move(r));
}

CsvTable make_table(const std::string& schema, const std::string& config_hash, std::vector<std::string> columns)
{
    CsvTable t;
    t.meta = {{"heatrace", kVersion}, {"schema", schema}, {"config_hash", config_hash}};
    t.columns = std::move(columns);
    return t;
}

std::string to_csv(const CsvTable& t)
{
    std::ostringstream os;
    for (const auto& [k, v] : t.meta) os << "# " << k << '=' << v << '\n';
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::string& c = cells[i];
            if (i) os << ',';
            if (c.find_first_of(",\"\n") != std::string::npos) {
                os << '"';
                for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
                os << '"';
            } else {
                os << c;
            }
        }
        os << '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
    return os.str();
}

void write_text(const std::string& path, const std::string& text)
{
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

void write_csv(const std::string& path, const CsvTable& t) { write_text(path, to_csv(t)); }

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t lineno)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw DomainError("line " + std::to_string(lineno) + ": unterminated quote");
    out.push_back(cur);
    return out;
}

} // namespace

CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string k = line.substr(1, eq - 1);
                k.erase(0, k.find_first_not_of(' '));
                t.meta.emplace_back(k, line.substr(eq + 1));
            }
            continue;
        }
        auto cells = split_line(line, lineno);
        if (t.columns.empty()) {
            t.columns = std::move(cells);
        } else {
            if (cells.size() != t.columns.size())
                throw DomainError(path + ":" + std::to_string(lineno) + ": " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(t.columns.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.columns.empty()) throw DomainError(path + ": no header line");
    return t;
}

std::string gnuplot_script(const std::string& csv_path, const CsvTable& t, const std::string& x,
                           const std::vector<std::string>& ys, bool logx, bool logy)
{
    const int xc = t.column(x);
    if (xc < 0) throw DomainError("gnuplot: no column '" + x + "'");
    std::ostringstream os;
    os << "# heatrace " << kVersion << " config_hash=" << t.meta_value("config_hash") << '\n';
    os << "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n";
    os << "set xlabel '" << x << "'\n";
    if (logx) os << "set logscale x\n";
    if (logy) os << "set logscale y\n";
    os << "plot ";
    bool first = true;
    for (const auto& y : ys) {
        const int yc = t.column(y);
        if (yc < 0) continue;
        if (!first) os << ", \\\n     ";
        os << "'" << csv_path << "' using " << xc + 1 << ':' << yc + 1 << " with linespoints title '" << y << "'";
        first = false;
    }
    os << '\n';
    return os.str();
}

} // namespace heatrace
