#pragma once

#include <cstdio>
#include <istream>
#include <string>
#include <vector>

#include "sigdoc/error.hpp"

namespace sigdoc {

// %.9g keeps CSV output identical across runs and still readable; consumers
// needing bit-exact values use the binary formats instead.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Our CSVs never quote fields; a plain comma split is the whole grammar.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::string& expected_header) {
    std::string line;
    if (!std::getline(in, line))
        throw FormatError("csv: missing header row");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != expected_header)
        throw FormatError("csv: unexpected header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || (line.size() == 1 && line[0] == '\r'))
            continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

} // namespace sigdoc
