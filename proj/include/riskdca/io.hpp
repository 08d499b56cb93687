#pragma once

#include <string>
#include <vector>

namespace riskdca {

// Writes content to `path` via a temporary file in the same directory
// followed by rename, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Shortest decimal string that round-trips the double exactly.
std::string format_double(double x);

// Fixed shorter form for plot-ready series (12 significant digits).
std::string format_double_short(double x);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace riskdca
