#include "toxflow/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "toxflow/errors.hpp"

namespace toxflow {

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw DataError(path + ": empty file, header missing");
  return t;
}

std::int64_t parse_i64(std::string_view field, const std::string& where) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError(where + ": bad integer '" + std::string(field) + "'");
  }
  return v;
}

double parse_f64(std::string_view field, const std::string& where) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError(where + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

std::int64_t parse_price_micro(std::string_view field, const std::string& where) {
  if (field.empty()) throw DataError(where + ": empty price");
  bool neg = false;
  std::size_t i = 0;
  if (field[0] == '-') {
    neg = true;
    i = 1;
  } else if (field[0] == '+') {
    i = 1;
  }
  std::int64_t int_part = 0;
  bool any_digit = false;
  for (; i < field.size() && field[i] != '.'; ++i) {
    if (field[i] < '0' || field[i] > '9') {
      throw DataError(where + ": bad price '" + std::string(field) + "'");
    }
    int_part = int_part * 10 + (field[i] - '0');
    any_digit = true;
  }
  std::int64_t frac = 0;
  int frac_digits = 0;
  if (i < field.size()) {  // fractional part
    for (++i; i < field.size(); ++i) {
      if (field[i] < '0' || field[i] > '9') {
        throw DataError(where + ": bad price '" + std::string(field) + "'");
      }
      if (++frac_digits > 6) {
        throw DataError(where + ": price '" + std::string(field) +
                        "' has more than 6 fractional digits");
      }
      frac = frac * 10 + (field[i] - '0');
      any_digit = true;
    }
  }
  if (!any_digit) throw DataError(where + ": bad price '" + std::string(field) + "'");
  while (frac_digits < 6) {
    frac *= 10;
    ++frac_digits;
  }
  std::int64_t v = int_part * 1000000 + frac;
  return neg ? -v : v;
}

std::string format_price_micro(std::int64_t micro) {
  bool neg = micro < 0;
  std::uint64_t m = neg ? static_cast<std::uint64_t>(-micro)
                        : static_cast<std::uint64_t>(micro);
  std::uint64_t int_part = m / 1000000;
  std::uint64_t frac = m % 1000000;
  char buf[40];
  if (frac == 0) {
    std::snprintf(buf, sizeof(buf), "%s%llu", neg ? "-" : "",
                  static_cast<unsigned long long>(int_part));
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%s%llu.%06llu", neg ? "-" : "",
                static_cast<unsigned long long>(int_part),
                static_cast<unsigned long long>(frac));
  std::string s(buf);
  while (s.back() == '0') s.pop_back();
  return s;
}

std::string format_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char cand[40];
    std::snprintf(cand, sizeof(cand), "%.*g", prec, v);
    double back = 0;
    std::sscanf(cand, "%lf", &back);
    if (back == v) return cand;
  }
  return buf;
}

std::string format_f64_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header)
    : out_(path), path_(path) {
  if (!out_) throw DataError("cannot write " + path);
  out_ << header << '\n';
  n_cols_ = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != n_cols_) {
    throw DataError(path_ + ": row with " + std::to_string(fields.size()) +
                    " fields, header has " + std::to_string(n_cols_));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw DataError("failed writing " + path_);
}

}  // namespace toxflow
