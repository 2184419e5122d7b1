#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lfsr::io {

/// RFC-4180 style table: first row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`; throws FormatError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

}  // namespace lfsr::io
