#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbv::csv {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Read all rows of a CSV file; the first line must equal `header`.
/// Rows are returned without the header. No quoting is supported.
inline std::vector<std::vector<std::string>> read(const std::string& path,
                                                  const std::string& header) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line))
        throw std::runtime_error("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header)
        throw std::runtime_error("csv: bad header in " + path + ": expected '" +
                                 header + "', got '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split(line));
    }
    return rows;
}

}  // namespace qbv::csv
