#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedsis/tensor.hpp"

namespace fedsis {

// Checkpoint / parameter-broadcast encoding: magic "FSIS", version u32,
// tensor count u32, then per tensor: name length u32 + name bytes + rank u32
// + extents u64[rank] + values as little-endian 64-bit floats.
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensorView {
  std::string name;
  const Tensor* tensor = nullptr;
};

struct NamedTensorRef {
  std::string name;
  Tensor* tensor = nullptr;
};

void save_tensors(std::ostream& os, const std::vector<NamedTensorView>& tensors);
void save_tensors_file(const std::string& path, const std::vector<NamedTensorView>& tensors);

std::vector<std::pair<std::string, Tensor>> load_tensors(std::istream& is);
std::vector<std::pair<std::string, Tensor>> load_tensors_file(const std::string& path);

// Loads a checkpoint into existing tensors, matched by name; every target
// must be present with an identical shape.
void load_into(const std::string& path, const std::vector<NamedTensorRef>& targets);

// On-the-wire size of the encoding (header + names + extents + data).
std::size_t serialized_size(const std::vector<NamedTensorView>& tensors);

}  // namespace fedsis
