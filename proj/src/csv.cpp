#include "pdwols/csv.hpp"

#include "pdwols/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pdwols {

int CsvTable::col(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<int>(j);
    return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (quoted) {
            if (c == '"') quoted = false;
            else cell.push_back(c);
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    for (auto& s : cells) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        s = (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    }
    return cells;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("file '" + path + "' is empty");
    table.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != table.header.size())
            throw ParseError("file '" + path + "' line " + std::to_string(lineno) + ": expected " +
                             std::to_string(table.header.size()) + " fields, got " +
                             std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

double parse_double(const std::string& cell, const std::string& where) {
    if (cell.empty()) throw ParseError(where + ": missing value");
    double value = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError(where + ": cannot parse '" + cell + "' as a number");
    return value;
}

std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file '" + path + "'");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
        out << "\n";
    }
}

}  // namespace pdwols
