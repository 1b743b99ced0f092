#pragma once

#include <filesystem>

#include "curvlab/network.hpp"

namespace curvlab {

/// Binary checkpoint layout (all integers little-endian):
///   8 bytes  magic "CURVLAB\0"
///   u32      format version (currently 1)
///   u32      layer count
///   per layer: u8 kind tag, then kind-specific u32 dims
///     1 affine     [in, out]
///     2 relu       []
///     3 conv2d     [in_c, out_c, kernel, in_h, in_w]
///     4 maxpool2d  [window]
///     5 flatten    []
///   per parameter, in layer order (W then b):
///     u16 name length, name bytes, u64 value count, f64 values
///   u64      init seed
///   u32      epoch
void save_checkpoint(const Network& net, const std::filesystem::path& path);

/// Strict reader: throws IoError on bad magic, unknown version or layer
/// tag, and truncation (reported with the byte offset).
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace curvlab
