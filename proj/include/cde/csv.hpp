#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cde/dataset.hpp"

namespace cde {

// Shortest decimal text that parses back to exactly `v`; "inf", "-inf", "nan"
// for non-finite values.
std::string format_double(double v);

// RFC 4180 field quoting (only when needed).
std::string csv_field(std::string_view text);
std::string csv_row(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 reader (quoted fields, embedded commas/quotes/newlines, CRLF).
// Requires a header row; ragged rows raise ParseError naming the line.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Header x_0..x_{l-1}, y_0..y_{m-1}.
std::vector<std::string> dataset_header(std::size_t x_dim, std::size_t y_dim);
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv_file(const std::string& path, const Dataset& data);

// Columns named x_* are inputs and y_* targets; any other layout treats the
// last `y_dim` columns as targets. Non-numeric cells raise ParseError with the
// line number.
Dataset parse_dataset(const CsvTable& table, std::size_t y_dim = 1);
Dataset read_dataset_csv_file(const std::string& path, std::size_t y_dim = 1);

}  // namespace cde
