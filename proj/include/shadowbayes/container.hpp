#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowbayes/common.hpp"

namespace shadowbayes {

// Binary container shared by dataset and checkpoint files:
//   "SBC1" | u32 header length | JSON header | raw little-endian arrays | u32 CRC32
// The header's "arrays" list fixes each array's name, dtype and shape; the
// CRC covers everything before it.

constexpr std::uint32_t kContainerVersion = 1;

std::uint32_t crc32(const std::uint8_t* data, std::size_t size, std::uint32_t seed = 0);

class ContainerWriter {
 public:
  void add_f64(const std::string& name, const std::vector<double>& data,
               std::vector<std::int64_t> shape);
  void add_i32(const std::string& name, const std::vector<std::int32_t>& data,
               std::vector<std::int64_t> shape);
  void add_u64(const std::string& name, const std::vector<std::uint64_t>& data,
               std::vector<std::int64_t> shape);
  // meta must not contain the reserved keys (format, version, kind, arrays)
  void write(const std::string& path, const std::string& kind, nlohmann::json meta) const;

 private:
  struct Entry {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };
  std::vector<Entry> entries_;
};

class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path);

  const nlohmann::json& header() const { return header_; }
  const std::string& kind() const { return kind_; }
  bool has(const std::string& name) const;
  std::vector<std::int64_t> shape(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<std::int32_t> i32(const std::string& name) const;
  std::vector<std::uint64_t> u64(const std::string& name) const;

 private:
  struct Entry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };
  const Entry& entry(const std::string& name, const std::string& dtype) const;

  nlohmann::json header_;
  std::string kind_;
  std::map<std::string, Entry> entries_;
};

}  // namespace shadowbayes
