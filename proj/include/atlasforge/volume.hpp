#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atlasforge/errors.hpp"

namespace atlasforge {

enum class Dtype : std::uint8_t { Float32 = 0, Label16 = 1 };

struct Dims3 {
  std::uint32_t x = 0, y = 0, z = 0;
  bool operator==(const Dims3&) const = default;
  std::uint64_t voxels() const {
    return static_cast<std::uint64_t>(x) * y * z;
  }
};

// Voxel (x,y,z) -> flat index, x fastest.
inline std::uint64_t flatIndex(const Dims3& d, std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  return (static_cast<std::uint64_t>(z) * d.y + y) * d.x + x;
}

// A dense 3D scalar grid, either float intensities or integer labels
// (0 means background). Immutable by convention once filled: operations
// return new volumes.
class Volume {
 public:
  Volume() = default;  // empty placeholder; any sized volume has positive dims
  Volume(Dims3 dims, Dtype dtype);

  static Volume fromFloats(Dims3 dims, std::vector<float> data);
  static Volume fromLabels(Dims3 dims, std::vector<std::uint16_t> data);

  bool empty() const { return dims_.voxels() == 0; }
  const Dims3& dims() const { return dims_; }
  Dtype dtype() const { return dtype_; }

  std::vector<float>& floats();
  const std::vector<float>& floats() const;
  std::vector<std::uint16_t>& labels();
  const std::vector<std::uint16_t>& labels() const;

  float floatAt(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return f32_[flatIndex(dims_, x, y, z)];
  }
  std::uint16_t labelAt(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return u16_[flatIndex(dims_, x, y, z)];
  }

  bool operator==(const Volume& o) const {
    return dims_ == o.dims_ && dtype_ == o.dtype_ && f32_ == o.f32_ && u16_ == o.u16_;
  }

  // Millimetre voxel spacing; informational only, never serialized.
  std::optional<std::array<float, 3>> spacing;

 private:
  Dims3 dims_{0, 0, 0};
  Dtype dtype_ = Dtype::Float32;
  std::vector<float> f32_;
  std::vector<std::uint16_t> u16_;
};

// Per-voxel displacement on the fixed (output) grid, in voxel units,
// 3 components per voxel, x fastest, components interleaved innermost.
struct DisplacementField {
  Dims3 dims;
  std::vector<float> vectors;
};

enum class Interpolation { Trilinear, Nearest };

// --- bit-exact volume file format -------------------------------------------
//
// bytes 0-5   magic "RVOL1\0"
// bytes 6-17  three little-endian u32 dims (dx, dy, dz)
// byte  18    dtype code (0 = float32, 1 = label16)
// byte  19    channel count (1 for volumes, 3 for displacement fields)
// byte  20    reserved, 0
// payload     dx*dy*dz*channels scalars, little endian, x fastest,
//             channels interleaved innermost

Volume loadVolume(const std::string& path);
void saveVolume(const Volume& v, const std::string& path);

DisplacementField loadDisplacementField(const std::string& path);
void saveDisplacementField(const DisplacementField& f, const std::string& path);

// 256-bin quantile mapping of source intensities onto the reference
// distribution. Monotone non-decreasing; output values lie within the
// reference range. Throws DegenerateReferenceError on a constant reference.
Volume histogramMatch(const Volume& source, const Volume& reference);

// Resamples `volume` through a precomputed displacement field:
// out[v] = volume[v + field[v]], sampled with the requested interpolation,
// 0 outside the input grid. The output grid is the field's grid.
// field == nullptr means the identity transform (exact copy).
// Labels require nearest interpolation, intensities trilinear.
Volume applyTransform(const Volume& volume, const DisplacementField* field,
                      Interpolation interpolation);

}  // namespace atlasforge
