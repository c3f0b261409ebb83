#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace v2x {

// Row-major table of doubles with named columns, stored little-endian:
// magic "V2XTAB01", u32 column count, u64 row count, per column a u16
// name length plus bytes, then rows*cols f64 values.
struct Table {
  std::vector<std::string> columns;
  std::vector<double> data;  // rows * cols

  std::size_t cols() const { return columns.size(); }
  std::size_t rows() const {
    return columns.empty() ? 0 : data.size() / columns.size();
  }
  double at(std::size_t r, std::size_t c) const {
    return data[r * columns.size() + c];
  }
  void append_row(const std::vector<double>& row);
};

void save_table(const Table& t, const std::string& path);
Table load_table(const std::string& path);

}  // namespace v2x
