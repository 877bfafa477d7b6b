#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdt::csv {

// Shortest round-trippable form is not required; traces use a fixed
// 17-significant-digit "%.17g" rendering so output is byte-stable.
std::string fmt(double v);
std::string fmt(long long v);

std::vector<std::string> split(std::string_view line, char sep = ',');

// Header plus rows; lines starting with '#' are kept as comments.
struct Table {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; throws std::out_of_range listing the columns.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
    std::vector<double> numeric_column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

double parse_double(const std::string& s);

}  // namespace cdt::csv
