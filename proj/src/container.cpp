#include "shadowbayes/container.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace shadowbayes {

namespace {

constexpr char kMagic[4] = {'S', 'B', 'C', '1'};

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t total = 1;
  for (auto s : shape) total *= static_cast<std::size_t>(s);
  return total;
}

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? (0xedb88320u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < size; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void ContainerWriter::add_f64(const std::string& name, const std::vector<double>& data,
                              std::vector<std::int64_t> shape) {
  if (data.size() != element_count(shape)) {
    throw validation_error("container: shape does not match data size for " + name);
  }
  Entry e{name, "f64", std::move(shape), {}};
  e.bytes.resize(data.size() * sizeof(double));
  std::memcpy(e.bytes.data(), data.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ContainerWriter::add_i32(const std::string& name, const std::vector<std::int32_t>& data,
                              std::vector<std::int64_t> shape) {
  if (data.size() != element_count(shape)) {
    throw validation_error("container: shape does not match data size for " + name);
  }
  Entry e{name, "i32", std::move(shape), {}};
  e.bytes.resize(data.size() * sizeof(std::int32_t));
  std::memcpy(e.bytes.data(), data.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ContainerWriter::add_u64(const std::string& name, const std::vector<std::uint64_t>& data,
                              std::vector<std::int64_t> shape) {
  if (data.size() != element_count(shape)) {
    throw validation_error("container: shape does not match data size for " + name);
  }
  Entry e{name, "u64", std::move(shape), {}};
  e.bytes.resize(data.size() * sizeof(std::uint64_t));
  std::memcpy(e.bytes.data(), data.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ContainerWriter::write(const std::string& path, const std::string& kind,
                            nlohmann::json meta) const {
  meta["format"] = "shadowbayes-container";
  meta["version"] = kContainerVersion;
  meta["kind"] = kind;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& e : entries_) {
    arrays.push_back({{"name", e.name}, {"dtype", e.dtype}, {"shape", e.shape}});
  }
  meta["arrays"] = arrays;
  const std::string header = meta.dump();

  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  append_u32(buf, static_cast<std::uint32_t>(header.size()));
  buf.insert(buf.end(), header.begin(), header.end());
  for (const auto& e : entries_) buf.insert(buf.end(), e.bytes.begin(), e.bytes.end());
  append_u32(buf, crc32(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw io_error("cannot open for writing: " + path);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw io_error("write failed: " + path);
  }
}

ContainerReader::ContainerReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open for reading: " + path);
  }
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12) {
    throw truncated_error("container file is truncated: " + path);
  }
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw format_error("bad magic bytes: " + path);
  }
  const std::uint32_t stored_crc = read_u32(buf.data() + buf.size() - 4);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc) {
    throw checksum_error("checksum mismatch: " + path);
  }
  const std::uint32_t header_len = read_u32(buf.data() + 4);
  if (8 + static_cast<std::size_t>(header_len) + 4 > buf.size()) {
    throw truncated_error("container header exceeds file size: " + path);
  }
  try {
    header_ = nlohmann::json::parse(buf.begin() + 8, buf.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("container header is not valid JSON: ") + e.what());
  }
  if (header_.value("format", "") != "shadowbayes-container") {
    throw format_error("not a shadowbayes container: " + path);
  }
  if (header_.value("version", 0u) != kContainerVersion) {
    throw version_error("unsupported container version in " + path);
  }
  kind_ = header_.value("kind", "");

  std::size_t offset = 8 + header_len;
  const std::size_t payload_end = buf.size() - 4;
  for (const auto& a : header_.at("arrays")) {
    Entry e;
    e.dtype = a.at("dtype").get<std::string>();
    e.shape = a.at("shape").get<std::vector<std::int64_t>>();
    std::size_t width = 0;
    if (e.dtype == "f64" || e.dtype == "u64") {
      width = 8;
    } else if (e.dtype == "i32") {
      width = 4;
    } else {
      throw format_error("unknown dtype in container: " + e.dtype);
    }
    const std::size_t bytes = element_count(e.shape) * width;
    if (offset + bytes > payload_end) {
      throw truncated_error("array payload exceeds file size: " + path);
    }
    e.bytes.assign(buf.begin() + offset, buf.begin() + offset + bytes);
    offset += bytes;
    entries_.emplace(a.at("name").get<std::string>(), std::move(e));
  }
  if (offset != payload_end) {
    throw format_error("trailing bytes after declared arrays: " + path);
  }
}

bool ContainerReader::has(const std::string& name) const { return entries_.count(name) > 0; }

std::vector<std::int64_t> ContainerReader::shape(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw validation_error("container is missing array: " + name);
  }
  return it->second.shape;
}

const ContainerReader::Entry& ContainerReader::entry(const std::string& name,
                                                     const std::string& dtype) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw validation_error("container is missing array: " + name);
  }
  if (it->second.dtype != dtype) {
    throw validation_error("container array " + name + " has dtype " + it->second.dtype +
                           ", expected " + dtype);
  }
  return it->second;
}

std::vector<double> ContainerReader::f64(const std::string& name) const {
  const Entry& e = entry(name, "f64");
  std::vector<double> out(e.bytes.size() / sizeof(double));
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

std::vector<std::int32_t> ContainerReader::i32(const std::string& name) const {
  const Entry& e = entry(name, "i32");
  std::vector<std::int32_t> out(e.bytes.size() / sizeof(std::int32_t));
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

std::vector<std::uint64_t> ContainerReader::u64(const std::string& name) const {
  const Entry& e = entry(name, "u64");
  std::vector<std::uint64_t> out(e.bytes.size() / sizeof(std::uint64_t));
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

}  // namespace shadowbayes
