#ifndef ONESHOT_OSWT_H_
#define ONESHOT_OSWT_H_

// "OSWT" binary tensor container shared by embedding weights, PCA
// parameters, feature caches and model checkpoints.
//
//   char[4]  "OSWT"
//   u32      version (1)
//   u32      layer count
//   per layer:  u32 kind, u32 attribute (conv stride, else 0),
//               u32 tensor count, tensors
//   u32      named tensor count
//   per named:  u32 name length, name bytes, tensor
//   tensor:     u32 rank, u32 dims[rank], f32 values[prod(dims)]
//
// All integers and floats little-endian; values row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/nn.h"

namespace oneshot::io {

inline constexpr std::uint32_t kOswtVersion = 1;

enum class LayerKind : std::uint32_t {
  kConv1d = 1,
  kDense = 2,
  kRelu = 3,
  kFlatten = 4,
};

const char *layer_kind_name(LayerKind kind);

struct LayerRecord {
  LayerKind kind = LayerKind::kRelu;
  std::uint32_t attribute = 0;
  std::vector<nn::Tensor> tensors;  // weight then bias for conv1d / dense
};

struct Container {
  std::vector<LayerRecord> layers;
  std::vector<std::pair<std::string, nn::Tensor>> named;

  const nn::Tensor *find(const std::string &name) const;
  const nn::Tensor &get(const std::string &name) const;  // throws DataError
  // Replaces an existing entry in place, else appends.
  void put(const std::string &name, nn::Tensor tensor);
};

std::string serialize(const Container &container);
Container deserialize(const std::string &bytes, const std::string &origin = "<memory>");

// Writes via a temporary file and rename, so readers never see a partial file.
void write_oswt(const std::filesystem::path &path, const Container &container);
Container read_oswt(const std::filesystem::path &path);

}  // namespace oneshot::io

#endif  // ONESHOT_OSWT_H_
