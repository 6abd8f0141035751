#pragma once
// CSV artifacts: fixed 17-digit floats, metadata comment lines, a versioned column list.
#include <string>
#include <utility>
#include <vector>

namespace heatrace {

constexpr const char* kVersion = "0.1.0";

std::string format_double(double v);   // %.17g, "nan" / "inf" / "-inf"
double parse_double(const std::string& s);

struct CsvTable {
    std::vector<std::pair<std::string, std::string>> meta;   // "# key=value" lines
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;   // -1 if absent
    bool has(const std::string& name) const { return column(name) >= 0; }
    double number(std::size_t row, const std::string& name) const;
    const std::string& text(std::size_t row, const std::string& name) const;
    std::string meta_value(const std::string& key, const std::string& def = "") const;
    void add_row(std::vector<std::string> r);
};

// meta: heatrace version, schema name/version, config hash
CsvTable make_table(const std::string& schema, const std::string& config_hash, std::vector<std::string> columns);

std::string to_csv(const CsvTable& t);
void write_text(const std::string& path, const std::string& text);
void write_csv(const std::string& path, const CsvTable& t);
CsvTable read_csv(const std::string& path);

// plot script for columns of a written CSV, one line per y column
std::string gnuplot_script(const std::string& csv_path, const CsvTable& t, const std::string& x,
                           const std::vector<std::string>& ys, bool logx = false, bool logy = false);

} // namespace heatrace
