#include "lfsr/csv.hpp"

#include <fstream>
#include <sstream>

#include "lfsr/errors.hpp"

namespace lfsr::io {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t n = 0; n < header.size(); ++n)
    if (header[n] == name) return n;
  throw FormatError("CSV is missing column \"" + name + "\"");
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t n = 0; n < text.size(); ++n) {
    const char c = text[n];
    if (quoted) {
      if (c == '"') {
        if (n + 1 < text.size() && text[n + 1] == '"') {
          field += '"';
          ++n;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw FormatError("stray quote inside unquoted CSV field");
        quoted = field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !record.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        field_started = false;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw FormatError("CSV has no header row");
  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t n = 1; n < records.size(); ++n) {
    if (records[n].size() != t.header.size())
      throw FormatError("CSV row " + std::to_string(n) + " has " + std::to_string(records[n].size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[n]));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_csv(ss.str());
}

namespace {

void append_field(std::string& out, const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) {
    out += f;
    return;
  }
  out += '"';
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_record(std::string& out, const std::vector<std::string>& r) {
  for (std::size_t n = 0; n < r.size(); ++n) {
    if (n) out += ',';
    append_field(out, r[n]);
  }
  out += "\r\n";
}

}  // namespace

std::string format_csv(const CsvTable& t) {
  std::string out;
  append_record(out, t.header);
  for (const auto& r : t.rows) append_record(out, r);
  return out;
}

void write_csv(const CsvTable& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << format_csv(t);
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace lfsr::io
