#include "marlab/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace marlab {

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : path_(path), out_(path) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << "\n";
  out_.flush();
}

std::string CsvWriter::format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format(values[i]);
  out_ << "\n";
  out_.flush();
}

void CsvWriter::row_mixed(const std::vector<std::string>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
  out_ << "\n";
  out_.flush();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace marlab
