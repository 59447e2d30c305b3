#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "atlasforge/rng.hpp"
#include "atlasforge/volume.hpp"

namespace atlasforge {

struct BinaryMask {
  Dims3 dims;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  explicit BinaryMask(Dims3 d) : dims(d), bits(d.voxels(), 0) {}

  bool test(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return bits[flatIndex(dims, x, y, z)] != 0;
  }
  void set(std::uint32_t x, std::uint32_t y, std::uint32_t z, bool v = true) {
    bits[flatIndex(dims, x, y, z)] = v ? 1 : 0;
  }
  std::uint64_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

// Axis-aligned voxel box: inclusive min corner plus size (all components >= 1).
struct Cuboid {
  std::array<int, 3> min{0, 0, 0};
  std::array<int, 3> size{1, 1, 1};
  bool operator==(const Cuboid&) const = default;
};

// Per-ROI patch shape: the adaptive size plus the patch centre inside every
// volume it was computed for (keyed by volume id).
struct PatchGeometry {
  std::uint16_t roi = 0;
  std::array<int, 3> size{0, 0, 0};     // size used downstream (floored at 8)
  std::array<int, 3> sizeRaw{0, 0, 0};  // exact per-axis max of target cuboids
  std::map<std::string, std::array<int, 3>> centers;
};

// Voxels where any input volume carries the given label. Throws
// EmptyMaskError when the label is absent from every volume.
BinaryMask roiUnion(const std::vector<const Volume*>& labelVolumes, std::uint16_t roi);

// Chebyshev (cube) dilation, clipped at the grid bounds.
BinaryMask dilate(const BinaryMask& mask, int radius);

// Tightest axis-aligned box containing all set voxels.
Cuboid boundingCuboid(const BinaryMask& mask);

// Component-wise maximum of the per-target cuboid sizes.
std::array<int, 3> roiPatchSize(const std::vector<Cuboid>& perTargetCuboids);

// Integer floor of the cuboid midpoint.
std::array<int, 3> cuboidCenter(const Cuboid& c);

std::array<int, 3> roiPatchCenter(const std::vector<const Volume*>& labelVolumes,
                                  std::uint16_t roi, int dilationRadius);

struct SampledCenter {
  enum class Pool { Interior, Boundary, Grid };
  std::array<int, 3> pos{0, 0, 0};
  Pool pool = Pool::Interior;
};

// Regular-grid step per axis: ceil(size / 10).
std::array<int, 3> gridStep(const std::array<int, 3>& patchSize);

// Draws exactly `count` training-patch centres from three pools: ROI
// interior voxels, ROI boundary voxels (6-neighbourhood), and a regular grid
// over the ROI's dilated bounding cuboid. 40% / 30% / 30% split, remainder
// to the interior pool. Pools are drawn without replacement while they last.
std::vector<SampledCenter> sampleTrainingCenters(const Volume& targetLabel, std::uint16_t roi,
                                                 const std::array<int, 3>& patchSize, int count,
                                                 int dilationRadius, Rng& rng);

// Dense sub-array of the given size centred at `center` (patch voxel
// size/2 sits on the centre); voxels outside the grid read as 0.
Volume extractPatch(const Volume& volume, const std::array<int, 3>& center,
                    const std::array<int, 3>& size);

}  // namespace atlasforge
