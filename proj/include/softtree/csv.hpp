#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"

namespace softtree {
namespace detail {

// RFC-4180-style parser: quoted fields may contain commas, newlines, and
// doubled quotes; rows end on LF or CRLF; a trailing newline does not create
// an empty row.
inline std::vector<std::vector<std::string>> parse_csv_text(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;

  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  const auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        end_field();
        row_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(ch);
        row_started = true;
    }
  }
  if (in_quotes) throw SchemaError("csv: unterminated quoted field");
  if (row_started || !row.empty()) end_row();
  return rows;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Full-cell numeric parse; non-finite and partial parses count as missing.
inline std::optional<double> parse_double(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);  // from_chars rejects a leading '+'
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Label match: exact string equality after trimming, or numeric equality when
// both sides parse (so "1" matches "1.0").
inline bool label_matches(std::string_view cell, std::string_view positive) {
  if (trim(cell) == trim(positive)) return true;
  const auto a = parse_double(cell);
  const auto b = parse_double(positive);
  return a && b && *a == *b;
}

inline double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace detail

// Load a header-ed CSV into a fully numeric Dataset.
//   - label_column is binarized: cells matching positive_label map to 1, all
//     others to 0; rows with an empty label cell are dropped.
//   - columns listed in drop_columns are removed (unknown names are a schema
//     error).
//   - a column is numeric when at least half of its non-empty cells parse as
//     finite numbers; unparseable or empty numeric cells are imputed with the
//     column median (of the parsed cells).
//   - other columns are one-hot encoded in alphabetical category order with
//     feature names "column=category"; an empty cell sets no indicator.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& positive_label,
                        const std::vector<std::string>& drop_columns = {}) {
  const auto rows = detail::parse_csv_text(detail::read_file(path));
  if (rows.empty()) throw SchemaError(path + ": empty file");
  const auto& header = rows.front();

  std::size_t label_idx = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == label_column) {
      label_idx = c;
      break;
    }
  if (label_idx == header.size())
    throw SchemaError(path + ": label column '" + label_column + "' not found");

  std::vector<bool> dropped(header.size(), false);
  for (const auto& name : drop_columns) {
    bool hit = false;
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) {
        dropped[c] = true;
        hit = true;
      }
    if (!hit)
      throw SchemaError(path + ": drop column '" + name + "' not found");
  }
  if (dropped[label_idx])
    throw SchemaError(path + ": cannot drop the label column");

  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r].size() != header.size())
      throw SchemaError(path + ": row " + std::to_string(r + 1) + " has " +
                        std::to_string(rows[r].size()) + " fields, expected " +
                        std::to_string(header.size()));

  // Keep rows whose label cell is non-empty.
  std::vector<std::size_t> kept;
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (!detail::trim(rows[r][label_idx]).empty()) kept.push_back(r);
  if (kept.empty()) throw InputError(path + ": no rows with labels");

  const std::size_t n = kept.size();
  Dataset out;
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.y[i] = detail::label_matches(rows[kept[i]][label_idx], positive_label) ? 1 : 0;
  out.positive_label = positive_label;
  out.source = path;

  // Column-by-column assembly in file order.
  std::vector<std::vector<double>> columns;  // column-major staging
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_idx || dropped[c]) continue;

    std::size_t non_empty = 0;
    std::vector<double> parsed;
    std::vector<std::optional<double>> cell(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& raw = rows[kept[i]][c];
      if (!detail::trim(raw).empty()) ++non_empty;
      cell[i] = detail::parse_double(raw);
      if (cell[i]) parsed.push_back(*cell[i]);
    }

    if (parsed.size() * 2 >= non_empty && non_empty > 0) {
      // numeric column: impute missing with the median of the parsed cells
      const double med = detail::median_of(parsed);
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = cell[i] ? *cell[i] : med;
      out.feature_names.push_back(header[c]);
      columns.push_back(std::move(col));
    } else {
      // categorical column: indicators in alphabetical category order
      std::map<std::string, std::size_t> cats;
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = detail::trim(rows[kept[i]][c]);
        if (!v.empty()) cats.emplace(std::string(v), 0);
      }
      std::size_t next = columns.size();
      for (auto& [cat, idx] : cats) {
        idx = next++;
        out.feature_names.push_back(header[c] + "=" + cat);
        columns.emplace_back(n, 0.0);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = detail::trim(rows[kept[i]][c]);
        if (v.empty()) continue;
        columns[cats.at(std::string(v))][i] = 1.0;
      }
    }
  }

  out.X = Matrix(n, columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) out.X(i, c) = columns[c][i];
  return out;
}

namespace detail {

inline std::string csv_escape(std::string_view field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Write a Dataset as CSV: feature columns in order, then a final "label"
// column with the 0/1 labels. Values use shortest round-trip formatting, so
// load_csv(write_csv(d)) reproduces d.X exactly.
inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw IoError("cannot write " + path);
  for (std::size_t c = 0; c < data.feature_names.size(); ++c) {
    if (c) outf << ',';
    outf << detail::csv_escape(data.feature_names[c]);
  }
  outf << (data.feature_names.empty() ? "label" : ",label") << '\n';
  for (std::size_t r = 0; r < data.X.rows(); ++r) {
    for (std::size_t c = 0; c < data.X.cols(); ++c) {
      if (c) outf << ',';
      outf << detail::format_double(data.X(r, c));
    }
    outf << ',' << data.y[r] << '\n';
  }
  if (!outf) throw IoError("failed writing " + path);
}

}  // namespace softtree
