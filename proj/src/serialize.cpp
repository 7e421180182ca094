#include "fedsis/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace fedsis {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("checkpoint", "truncated stream");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail("checkpoint", "truncated stream");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr char kMagic[4] = {'F', 'S', 'I', 'S'};

}  // namespace

void save_tensors(std::ostream& os, const std::vector<NamedTensorView>& tensors) {
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put_u32(os, static_cast<uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_u32(os, static_cast<uint32_t>(nt.tensor->rank()));
    for (std::size_t e : nt.tensor->shape()) put_u64(os, e);
    for (double v : nt.tensor->values()) put_f64(os, v);
  }
  if (!os) fail("checkpoint", "write failed");
}

void save_tensors_file(const std::string& path, const std::vector<NamedTensorView>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("checkpoint", "cannot open '" + path + "' for writing");
  save_tensors(os, tensors);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    fail("checkpoint", "bad magic (not an FSIS stream)");
  }
  const uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    fail("checkpoint", "unsupported version " + std::to_string(version));
  }
  const uint32_t count = get_u32(is);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail("checkpoint", "truncated name");
    const uint32_t rank = get_u32(is);
    Shape shape(rank);
    for (uint32_t a = 0; a < rank; ++a) shape[a] = get_u64(is);
    Tensor t(shape);
    for (double& v : t.values()) v = get_f64(is);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> load_tensors_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("checkpoint", "cannot open '" + path + "'");
  return load_tensors(is);
}

void load_into(const std::string& path, const std::vector<NamedTensorRef>& targets) {
  auto loaded = load_tensors_file(path);
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, tensor] : loaded) by_name[name] = &tensor;
  for (const auto& target : targets) {
    auto it = by_name.find(target.name);
    if (it == by_name.end()) {
      fail("checkpoint", "tensor '" + target.name + "' missing from '" + path + "'");
    }
    if (it->second->shape() != target.tensor->shape()) {
      fail("checkpoint", "tensor '" + target.name + "' has shape " +
                             shape_str(it->second->shape()) + ", expected " +
                             shape_str(target.tensor->shape()));
    }
    target.tensor->values() = it->second->values();
  }
}

std::size_t serialized_size(const std::vector<NamedTensorView>& tensors) {
  std::size_t n = 4 + 4 + 4;
  for (const auto& nt : tensors) {
    n += 4 + nt.name.size() + 4 + 8 * nt.tensor->rank() + 8 * nt.tensor->size();
  }
  return n;
}

}  // namespace fedsis
