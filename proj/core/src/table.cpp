#include "v2x/table.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace v2x {

namespace {
constexpr char kMagic[8] = {'V', '2', 'X', 'T', 'A', 'B', '0', '1'};
}

void Table::append_row(const std::vector<double>& row) {
  if (row.size() != columns.size())
    throw std::invalid_argument("Table::append_row: width mismatch");
  data.insert(data.end(), row.begin(), row.end());
}

void save_table(const Table& t, const std::string& path) {
  if (t.columns.empty())
    throw std::invalid_argument("save_table: table has no columns");
  if (t.data.size() % t.columns.size() != 0)
    throw std::invalid_argument("save_table: ragged data");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_table: cannot open " + tmp);
    f.write(kMagic, 8);
    auto put_u = [&f](std::uint64_t v, int bytes) {
      char b[8];
      for (int i = 0; i < bytes; ++i)
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
      f.write(b, bytes);
    };
    put_u(t.columns.size(), 4);
    put_u(t.rows(), 8);
    for (const std::string& name : t.columns) {
      if (name.size() > 0xffff)
        throw std::invalid_argument("save_table: column name too long");
      put_u(name.size(), 2);
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (double d : t.data) put_u(std::bit_cast<std::uint64_t>(d), 8);
    if (!f) throw std::runtime_error("save_table: write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("save_table: rename failed: " + path);
}

Table load_table(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_table: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_table: bad magic in " + path);
  auto get_u = [&f](int bytes) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  const std::uint64_t ncols = get_u(4);
  const std::uint64_t nrows = get_u(8);
  if (ncols == 0 || ncols > 1u << 20)
    throw std::runtime_error("load_table: corrupt column count");
  Table t;
  t.columns.resize(ncols);
  for (auto& name : t.columns) {
    const std::uint64_t len = get_u(2);
    name.resize(len);
    f.read(name.data(), static_cast<std::streamsize>(len));
  }
  t.data.resize(nrows * ncols);
  for (double& d : t.data) d = std::bit_cast<double>(get_u(8));
  if (!f) throw std::runtime_error("load_table: truncated file " + path);
  return t;
}

}  // namespace v2x
