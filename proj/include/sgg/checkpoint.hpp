#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sgg/matrix.hpp"

namespace sgg::io {

// Flat named-tensor archive shared by every checkpoint: a magic + version
// header, then named f64 matrices and named byte blobs (for RNG state and
// JSON metadata). Little-endian on-disk layout.
struct NamedTensorArchive {
  static constexpr uint32_t kVersion = 1;

  std::map<std::string, Mat> tensors;
  std::map<std::string, std::string> blobs;

  void save(const std::string& path) const;
  static NamedTensorArchive load(const std::string& path);

  const Mat& tensor(const std::string& name) const;
  const std::string& blob(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors.count(name) > 0; }
  bool has_blob(const std::string& name) const { return blobs.count(name) > 0; }
};

}  // namespace sgg::io
