#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmn/layers.hpp"

namespace nmn {

// Layout, all little-endian:
//   "YATK" | u32 version | u32 count
//   count × (u32 name_len | name | u32 rank | rank × u64 dim | u64 offset)
//   fp32 payload; offsets are bytes from the start of the payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

template <typename Scalar>
std::vector<NamedTensor> to_tensors(const ParamList<Scalar>& params) {
  std::vector<NamedTensor> out;
  for (const auto* p : params) {
    NamedTensor t{p->name, {std::uint64_t(p->value.rows()), std::uint64_t(p->value.cols())}, {}};
    t.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Index i = 0; i < p->value.size(); ++i) t.data[std::size_t(i)] = static_cast<float>(p->value.data()[i]);
    out.push_back(std::move(t));
  }
  return out;
}

/// Copies tensors into params by name; every param must be present with the same shape.
template <typename Scalar>
void from_tensors(const std::vector<NamedTensor>& tensors, const ParamList<Scalar>& params) {
  for (auto* p : params) {
    const NamedTensor* hit = nullptr;
    for (const auto& t : tensors) {
      if (t.name == p->name) hit = &t;
    }
    if (!hit) throw std::runtime_error("checkpoint: missing tensor " + p->name);
    if (hit->shape.size() != 2 || hit->shape[0] != std::uint64_t(p->value.rows()) ||
        hit->shape[1] != std::uint64_t(p->value.cols())) {
      throw ShapeError("checkpoint: tensor " + p->name + " has the wrong shape");
    }
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(hit->data[std::size_t(i)]);
  }
}

}  // namespace nmn
