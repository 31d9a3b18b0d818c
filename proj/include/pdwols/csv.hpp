#pragma once

#include <string>
#include <vector>

namespace pdwols {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // column index by name, -1 if absent
    int col(const std::string& name) const;
    std::size_t n_rows() const { return rows.size(); }
};

CsvTable read_csv(const std::string& path);

// Strict numeric conversion; `where` names the offending cell in the error.
double parse_double(const std::string& cell, const std::string& where);

// Shortest round-trippable decimal representation (std::to_chars).
std::string format_double(double x);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace pdwols
