#pragma once

// CSV ingestion and emission. Numbers are written in the shortest form that
// parses back to the same double.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sprobit/errors.hpp"
#include "sprobit/model_core.hpp"

namespace sprobit::io {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  if (s.empty())
    return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  std::vector<std::vector<std::string>> rows;
};

/// Splits one CSV record; double quotes delimit fields containing commas.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

/// Reads a CSV file. The first record is taken as a header when any of its
/// fields is not a number.
inline CsvTable read_csv(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  bool first = true;
  std::size_t width = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto fields = split_csv_line(line);
    if (first) {
      first = false;
      width = fields.size();
      bool numeric = true;
      for (const auto &f : fields)
        numeric = numeric && parse_double(f).has_value();
      if (!numeric) {
        table.header = std::move(fields);
        continue;
      }
    }
    if (fields.size() != width)
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                                std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                            {line_no});
    table.rows.push_back(std::move(fields));
  }
  return table;
}

/// Column-wise standardization statistics (sample standard deviation).
struct Standardization {
  std::vector<double> means;
  std::vector<double> sds;  // a constant column keeps sd 1

  static Standardization fit(const MatrixXd &X) {
    Standardization s;
    const double n = static_cast<double>(X.rows());
    for (Index j = 0; j < X.cols(); ++j) {
      const double mean = X.col(j).mean();
      double sd = 1.0;
      if (X.rows() > 1) {
        sd = std::sqrt((X.col(j).array() - mean).square().sum() / (n - 1.0));
        if (!(sd > 0.0))
          sd = 1.0;
      }
      s.means.push_back(mean);
      s.sds.push_back(sd);
    }
    return s;
  }

  void apply(MatrixXd &X) const {
    for (Index j = 0; j < X.cols(); ++j)
      X.col(j) = (X.col(j).array() - means[static_cast<std::size_t>(j)]) / sds[static_cast<std::size_t>(j)];
  }
};

inline constexpr const char *kInterceptName = "(Intercept)";

inline void append_intercept(MatrixXd &X, std::vector<std::string> &names) {
  X.conservativeResize(Eigen::NoChange, X.cols() + 1);
  X.col(X.cols() - 1).setOnes();
  names.emplace_back(kInterceptName);
}

/// Parsed covariate block; `names` follows the header or defaults to x1..xp.
struct RawDesign {
  MatrixXd X;
  std::vector<std::string> names;
};

inline bool is_index_spec(const std::string &s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

/// Column position of `response` (name or 0-based index) in `table`.
inline std::size_t resolve_column(const CsvTable &table, const std::string &response) {
  const std::size_t width = table.header.empty() ? (table.rows.empty() ? 0 : table.rows[0].size())
                                                 : table.header.size();
  if (is_index_spec(response)) {
    const std::size_t idx = std::stoul(response);
    if (idx >= width)
      throw ValidationError("response index " + response + " out of range for " + std::to_string(width) +
                            " columns");
    return idx;
  }
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c] == response)
      return c;
  throw ValidationError("response column '" + response + "' not found" +
                        (table.header.empty() ? " (file has no header)" : ""));
}

/// Numeric block of `table` without column `skip` (pass npos to keep all).
inline RawDesign numeric_block(const CsvTable &table, std::size_t skip) {
  RawDesign out;
  const std::size_t width = table.header.empty() ? (table.rows.empty() ? 0 : table.rows[0].size())
                                                 : table.header.size();
  for (std::size_t c = 0; c < width; ++c)
    if (c != skip)
      out.names.push_back(table.header.empty() ? "x" + std::to_string(out.names.size() + 1) : table.header[c]);
  out.X.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(out.names.size()));
  std::vector<std::size_t> bad;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Index j = 0;
    bool ok = true;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == skip)
        continue;
      const auto v = parse_double(table.rows[r][c]);
      ok = ok && v.has_value() && std::isfinite(*v);
      out.X(static_cast<Index>(r), j++) = v.value_or(0.0);
    }
    if (!ok)
      bad.push_back(r);
  }
  if (!bad.empty()) {
    std::string msg = "non-numeric or non-finite covariates in data rows";
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k)
      msg += " " + std::to_string(bad[k]);
    throw ValidationError(msg, std::move(bad));
  }
  return out;
}

/// Dataset from a CSV table with the response selected by name or index.
inline Dataset dataset_from_table(const CsvTable &table, const std::string &response) {
  const std::size_t resp = resolve_column(table, response);
  RawDesign design = numeric_block(table, resp);
  Dataset data;
  data.X = std::move(design.X);
  data.feature_names = std::move(design.names);
  data.y.resize(static_cast<Index>(table.rows.size()));
  std::vector<std::size_t> bad;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto v = parse_double(table.rows[r][resp]);
    if (!v || (*v != 0.0 && *v != 1.0)) {
      bad.push_back(r);
      data.y(static_cast<Index>(r)) = 0;
    } else {
      data.y(static_cast<Index>(r)) = static_cast<int>(*v);
    }
  }
  if (!bad.empty()) {
    std::string msg = "response outside {0,1} in data rows";
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k)
      msg += " " + std::to_string(bad[k]);
    throw ValidationError(msg, std::move(bad));
  }
  return data;
}

/// Streams CSV rows to a file; throws on open failure.
class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path &path) : out_(path, std::ios::binary) {
    if (!out_)
      throw std::runtime_error("cannot write '" + path.string() + "'");
  }

  CsvWriter &field(const std::string &s) {
    sep();
    if (s.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (char c : s)
        out_ << (c == '"' ? "\"\"" : std::string(1, c));
      out_ << '"';
    } else {
      out_ << s;
    }
    return *this;
  }
  CsvWriter &field(double v) { return raw(format_double(v)); }
  CsvWriter &field(long long v) { return raw(std::to_string(v)); }
  CsvWriter &field(int v) { return raw(std::to_string(v)); }
  CsvWriter &field(long v) { return raw(std::to_string(v)); }
  CsvWriter &field(std::size_t v) { return raw(std::to_string(v)); }
  CsvWriter &empty() { return raw(""); }
  CsvWriter &end_row() {
    out_ << '\n';
    first_ = true;
    return *this;
  }

  template <typename... Ts>
  CsvWriter &row(const Ts &...vals) {
    (field(vals), ...);
    return end_row();
  }

private:
  CsvWriter &raw(const std::string &s) {
    sep();
    out_ << s;
    return *this;
  }
  void sep() {
    if (!first_)
      out_ << ',';
    first_ = false;
  }

  std::ofstream out_;
  bool first_ = true;
};

} // namespace sprobit::io
