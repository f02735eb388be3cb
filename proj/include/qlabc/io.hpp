#pragma once

#include <string>
#include <vector>

namespace qlabc {

// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
// Strict parse of a whole field; throws ConfigError naming `where`.
double parse_double(const std::string& text, const std::string& where);

std::vector<std::string> split(const std::string& line, char sep);

// Whole-file write through a temporary sibling and rename. Creates missing
// parent directories.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace qlabc
