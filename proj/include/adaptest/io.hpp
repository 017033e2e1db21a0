#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "errors.hpp"

namespace adaptest {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Reads a numeric CSV with one header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (first) {
      for (auto& c : cells) t.header.push_back(trim(c));
      first = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.push_back(parse_double(c));
    if (row.size() != t.header.size()) throw ConfigError("ragged CSV row");
    t.rows.push_back(std::move(row));
  }
  if (first) throw ConfigError("empty CSV");
  return t;
}

// Column-major binary container: a magic tag, then named matrix blocks.
namespace binary {

inline constexpr char kMagic[8] = {'A', 'D', 'P', 'T', 'B', 'I', 'N', '1'};

struct Block {
  std::string name;
  Eigen::MatrixXd data;
};

inline void write(std::ostream& os, const std::vector<Block>& blocks) {
  os.write(kMagic, 8);
  std::uint64_t count = blocks.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& b : blocks) {
    std::uint64_t len = b.name.size(), r = b.data.rows(), c = b.data.cols();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(b.name.data(), static_cast<std::streamsize>(len));
    os.write(reinterpret_cast<const char*>(&r), 8);
    os.write(reinterpret_cast<const char*>(&c), 8);
    os.write(reinterpret_cast<const char*>(b.data.data()),
             static_cast<std::streamsize>(r * c * sizeof(double)));
  }
  if (!os) throw Error("binary write failed");
}

inline std::vector<Block> read(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("not an adaptest binary file");
  std::uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 8);
  std::vector<Block> out;
  for (std::uint64_t i = 0; i < count && is; ++i) {
    std::uint64_t len = 0, r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&len), 8);
    std::string name(len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(len));
    is.read(reinterpret_cast<char*>(&r), 8);
    is.read(reinterpret_cast<char*>(&c), 8);
    Eigen::MatrixXd m(r, c);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(r * c * sizeof(double)));
    out.push_back({std::move(name), std::move(m)});
  }
  if (!is) throw ConfigError("truncated binary file");
  return out;
}

inline const Eigen::MatrixXd& find(const std::vector<Block>& blocks, const std::string& name) {
  for (const auto& b : blocks)
    if (b.name == name) return b.data;
  throw ConfigError("missing block '" + name + "'");
}

}  // namespace binary
}  // namespace adaptest
