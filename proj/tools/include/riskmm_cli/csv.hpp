#pragma once

#include <string>
#include <vector>

namespace riskmm::cli {

/// Shortest round-trip decimal form; deterministic for identical doubles.
std::string format_double(double v);

/// Lines are '\n'-terminated; the header is written byte-for-byte.
class CsvWriter {
 public:
  explicit CsvWriter(std::string header);
  void add_row(const std::vector<std::string>& cells);
  void write(const std::string& path) const;
  const std::string& content() const { return buffer_; }

 private:
  std::string buffer_;
};

}  // namespace riskmm::cli
