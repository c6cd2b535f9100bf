#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace marlab {

// Incremental CSV writer: header on open, one flush per row so partial runs
// leave readable files.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& values);
  const std::string& path() const { return path_; }

  static std::string format(double v);

 private:
  std::string path_;
  std::ofstream out_;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace marlab
