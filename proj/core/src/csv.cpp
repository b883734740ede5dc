#include "gnnx/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "gnnx/error.hpp"

namespace gnnx {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  long long v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed integer '" + s + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string chomp(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  return line;
}

}  // namespace

void write_arcs_csv(const std::filesystem::path& path, const std::vector<Arc>& arcs) {
  auto out = open_out(path);
  out << "src,dst,weight\n";
  for (const Arc& a : arcs) {
    out << a.src << "," << a.dst << "," << format_double(a.weight) << "\n";
  }
}

std::vector<Arc> read_arcs_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Arc> arcs;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("src", 0) == 0) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected src,dst,weight");
    }
    arcs.push_back({static_cast<int>(parse_int(fields[0], path, line_no)),
                    static_cast<int>(parse_int(fields[1], path, line_no)),
                    parse_double(fields[2], path, line_no)});
  }
  return arcs;
}

void write_features_csv(const std::filesystem::path& path, const DenseMatrix& features) {
  auto out = open_out(path);
  out << "node";
  for (std::size_t c = 0; c < features.cols; ++c) out << ",f" << c;
  out << "\n";
  for (std::size_t r = 0; r < features.rows; ++r) {
    out << r;
    for (std::size_t c = 0; c < features.cols; ++c) out << "," << format_double(features.at(r, c));
    out << "\n";
  }
}

DenseMatrix read_features_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("node", 0) == 0) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 2) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected node,f0,...");
    }
    const auto node = static_cast<std::size_t>(parse_int(fields[0], path, line_no));
    if (node != rows.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": node ids must be contiguous");
    }
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(parse_double(fields[i], path, line_no));
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": inconsistent feature dimension");
    }
    rows.push_back(std::move(row));
  }
  DenseMatrix m(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < dim; ++c) m.at(r, c) = rows[r][c];
  return m;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  out << "node,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << "," << labels[i] << "\n";
}

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("node", 0) == 0) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected node,label");
    }
    if (static_cast<std::size_t>(parse_int(fields[0], path, line_no)) != labels.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": node ids must be contiguous");
    }
    labels.push_back(static_cast<int>(parse_int(fields[1], path, line_no)));
  }
  return labels;
}

}  // namespace gnnx
