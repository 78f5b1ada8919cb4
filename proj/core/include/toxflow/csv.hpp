#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace toxflow {

// Minimal CSV plumbing for the flat numeric schemas used by the pipeline.
// No quoting or escaping: fields are numbers, enum letters, or plain ids.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row i is data line i+2 in file

  int column(std::string_view name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

// Parse helpers. `where` feeds the error message ("file:line col").
std::int64_t parse_i64(std::string_view field, const std::string& where);
double parse_f64(std::string_view field, const std::string& where);

// Prices ride as decimals with at most six fractional digits and are held
// internally as integer micro-units (1e-6). Parsing is exact, no rounding.
std::int64_t parse_price_micro(std::string_view field, const std::string& where);
std::string format_price_micro(std::int64_t micro);

// Fixed-format doubles for reproducible artifacts.
std::string format_f64(double v);          // shortest round-trip
std::string format_f64_fixed(double v, int digits);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header);
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
  std::string path_;
};

}  // namespace toxflow
