#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "granule/noise.hpp"

namespace granule {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_double(std::string_view s, std::size_t line, std::size_t column) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw CsvError(line, "column " + std::to_string(column) + ": '" + std::string(s) + "' is not a finite number");
  }
  return v;
}

ClassId parse_label(std::string_view s, std::size_t line, std::size_t column) {
  s = trim(s);
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw CsvError(line, "column " + std::to_string(column) + ": '" + std::string(s) + "' is not a class id");
  }
  return v;
}

void put_double(std::ostream& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

CsvError::CsvError(std::size_t line, const std::string& what)
    : DomainError("line " + std::to_string(line) + ": " + what), line_(line) {}

Dataset read_csv(std::istream& in, std::size_t classes) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  const auto header = split_fields(line);
  std::size_t dim = 0;
  while (dim < header.size() && trim(header[dim]) == "f" + std::to_string(dim)) ++dim;
  if (dim == 0) throw CsvError(1, "header must start with f0");
  const std::size_t rest = header.size() - dim;
  if (rest == 0 || trim(header[dim]) != "label" || (rest == 2 && trim(header[dim + 1]) != "clean_label") || rest > 2) {
    throw CsvError(1, "header must be f0,...,f{d-1},label[,clean_label]");
  }
  const bool has_clean = rest == 2;

  Dataset data;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw CsvError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) values.push_back(parse_double(fields[j], line_no, j + 1));
    data.labels.push_back(parse_label(fields[dim], line_no, dim + 1));
    if (has_clean) data.clean_labels.emplace_back(parse_label(fields[dim + 1], line_no, dim + 2));
  }
  if (data.labels.empty()) throw CsvError(line_no, "no data rows");
  data.features = Matrix(data.labels.size(), dim, std::move(values));
  ClassId max_label = *std::max_element(data.labels.begin(), data.labels.end());
  for (const auto& c : data.clean_labels) max_label = std::max(max_label, *c);
  if (classes != 0 && max_label >= classes) {
    throw DomainError("label " + std::to_string(max_label) + " exceeds the configured class count");
  }
  data.classes = classes != 0 ? classes : static_cast<std::size_t>(max_label) + 1;
  return data;
}

Dataset read_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path.string());
  return read_csv(in, classes);
}

void write_csv(const Dataset& data, std::ostream& out) {
  data.validate();
  const bool has_clean = data.has_clean_labels();
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << "label";
  if (has_clean) out << ",clean_label";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) {
      put_double(out, v);
      out << ',';
    }
    out << data.labels[i];
    if (has_clean) out << ',' << *data.clean_labels[i];
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(data, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace granule
