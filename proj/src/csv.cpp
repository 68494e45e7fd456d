#include "cde/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cde/errors.hpp"

namespace cde {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty()) {
        table.header = std::move(record);
      } else {
        if (record.size() != table.header.size()) {
          throw ParseError("CSV line " + std::to_string(record_line) + ": expected " +
                           std::to_string(table.header.size()) + " fields, got " + std::to_string(record.size()));
        }
        table.rows.push_back(std::move(record));
      }
    }
    record.clear();
    record_line = line;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      ++line;
      end_record();
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("CSV line " + std::to_string(record_line) + ": unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (table.header.empty()) throw ParseError("CSV input has no header row");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  return read_csv(in);
}

std::vector<std::string> dataset_header(std::size_t x_dim, std::size_t y_dim) {
  std::vector<std::string> h;
  for (std::size_t j = 0; j < x_dim; ++j) h.push_back("x_" + std::to_string(j));
  for (std::size_t j = 0; j < y_dim; ++j) h.push_back("y_" + std::to_string(j));
  return h;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << csv_row(dataset_header(data.x_dim(), data.y_dim()));
  std::vector<std::string> fields(data.x_dim() + data.y_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.x_dim(); ++j) fields[j] = format_double(data.x(i, j));
    for (std::size_t j = 0; j < data.y_dim(); ++j) fields[data.x_dim() + j] = format_double(data.y(i, j));
    out << csv_row(fields);
  }
}

void write_dataset_csv_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_dataset_csv(out, data);
  if (!out) throw Error("failed writing '" + path + "'");
}

namespace {

double parse_cell(const std::string& text, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
  if (b < e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw ParseError("CSV line " + std::to_string(line) + ", column '" + column + "': not a number: '" + text + "'");
  }
  return v;
}

}  // namespace

Dataset parse_dataset(const CsvTable& table, std::size_t y_dim) {
  if (table.rows.empty()) throw ParseError("CSV has a header but no data rows");
  std::vector<std::size_t> xs, ys;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind("x_", 0) == 0) xs.push_back(c);
    else if (h.rfind("y_", 0) == 0) ys.push_back(c);
  }
  if (xs.empty() || ys.empty() || xs.size() + ys.size() != table.header.size()) {
    const std::size_t cols = table.header.size();
    if (y_dim == 0 || y_dim >= cols) throw ParseError("CSV needs at least one input and one target column");
    xs.clear();
    ys.clear();
    for (std::size_t c = 0; c < cols; ++c) (c < cols - y_dim ? xs : ys).push_back(c);
  }
  const std::size_t n = table.rows.size();
  Matrix x(n, xs.size()), y(n, ys.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t line = i + 2;
    for (std::size_t j = 0; j < xs.size(); ++j) x(i, j) = parse_cell(table.rows[i][xs[j]], line, table.header[xs[j]]);
    for (std::size_t j = 0; j < ys.size(); ++j) y(i, j) = parse_cell(table.rows[i][ys[j]], line, table.header[ys[j]]);
  }
  try {
    return Dataset(std::move(x), std::move(y));
  } catch (const Error& e) {
    throw ParseError(std::string("CSV dataset: ") + e.what());
  }
}

Dataset read_dataset_csv_file(const std::string& path, std::size_t y_dim) {
  return parse_dataset(read_csv_file(path), y_dim);
}

}  // namespace cde
