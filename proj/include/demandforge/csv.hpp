#pragma once

#include <string>
#include <vector>

namespace df {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

// Plain comma-separated values, UTF-8, LF line endings, no quoting.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

// Shortest round-trip decimal representation (std::to_chars).
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit, hex-encoded; used for run manifests.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace df
