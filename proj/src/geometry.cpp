#include "atlasforge/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace atlasforge {

std::uint64_t BinaryMask::count() const {
  std::uint64_t n = 0;
  for (auto b : bits) n += b;
  return n;
}

BinaryMask roiUnion(const std::vector<const Volume*>& labelVolumes, std::uint16_t roi) {
  if (labelVolumes.empty()) throw InvalidArgumentError("roiUnion needs at least one volume");
  const Dims3 dims = labelVolumes.front()->dims();
  for (const Volume* v : labelVolumes) {
    if (v->dtype() != Dtype::Label16) throw InvalidArgumentError("roiUnion expects label volumes");
    if (!(v->dims() == dims)) throw DimsMismatchError("label volumes differ in dims");
  }
  BinaryMask mask(dims);
  bool any = false;
  for (const Volume* v : labelVolumes) {
    const auto& lab = v->labels();
    for (std::uint64_t i = 0; i < lab.size(); ++i)
      if (lab[i] == roi) {
        mask.bits[i] = 1;
        any = true;
      }
  }
  if (!any)
    throw EmptyMaskError("roi " + std::to_string(roi) + " absent from every label volume");
  return mask;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius < 0) throw InvalidArgumentError("dilation radius must be non-negative");
  if (radius == 0) return mask;
  // Chebyshev ball dilation is separable: a 1-D window max along each axis.
  const Dims3 d = mask.dims;
  auto pass = [&](const std::vector<std::uint8_t>& in, int stride, int extent,
                  std::uint64_t lineStart, std::vector<std::uint8_t>& out) {
    for (int i = 0; i < extent; ++i) {
      std::uint8_t v = 0;
      int lo = std::max(0, i - radius), hi = std::min(extent - 1, i + radius);
      for (int j = lo; j <= hi; ++j)
        if (in[lineStart + static_cast<std::uint64_t>(j) * stride]) {
          v = 1;
          break;
        }
      out[lineStart + static_cast<std::uint64_t>(i) * stride] = v;
    }
  };

  std::vector<std::uint8_t> cur = mask.bits, next(mask.bits.size());
  // x axis
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < d.y; ++y)
      pass(cur, 1, static_cast<int>(d.x), flatIndex(d, 0, y, z), next);
  cur.swap(next);
  // y axis
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t x = 0; x < d.x; ++x)
      pass(cur, static_cast<int>(d.x), static_cast<int>(d.y), flatIndex(d, x, 0, z), next);
  cur.swap(next);
  // z axis
  for (std::uint32_t y = 0; y < d.y; ++y)
    for (std::uint32_t x = 0; x < d.x; ++x)
      pass(cur, static_cast<int>(d.x) * static_cast<int>(d.y), static_cast<int>(d.z),
           flatIndex(d, x, y, 0), next);

  BinaryMask out;
  out.dims = d;
  out.bits = std::move(next);
  return out;
}

Cuboid boundingCuboid(const BinaryMask& mask) {
  const Dims3 d = mask.dims;
  int lo[3] = {static_cast<int>(d.x), static_cast<int>(d.y), static_cast<int>(d.z)};
  int hi[3] = {-1, -1, -1};
  std::uint64_t i = 0;
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t x = 0; x < d.x; ++x, ++i) {
        if (!mask.bits[i]) continue;
        int p[3] = {static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
      }
  if (hi[0] < 0) throw EmptyMaskError("bounding cuboid of an empty mask");
  Cuboid c;
  for (int a = 0; a < 3; ++a) {
    c.min[a] = lo[a];
    c.size[a] = hi[a] - lo[a] + 1;
  }
  return c;
}

std::array<int, 3> roiPatchSize(const std::vector<Cuboid>& perTargetCuboids) {
  if (perTargetCuboids.empty()) throw InvalidArgumentError("roiPatchSize needs >= 1 cuboid");
  std::array<int, 3> size{0, 0, 0};
  for (const Cuboid& c : perTargetCuboids)
    for (int a = 0; a < 3; ++a) size[a] = std::max(size[a], c.size[a]);
  return size;
}

std::array<int, 3> cuboidCenter(const Cuboid& c) {
  std::array<int, 3> mid;
  for (int a = 0; a < 3; ++a) mid[a] = (c.min[a] + c.min[a] + c.size[a] - 1) / 2;
  return mid;
}

std::array<int, 3> roiPatchCenter(const std::vector<const Volume*>& labelVolumes,
                                  std::uint16_t roi, int dilationRadius) {
  return cuboidCenter(boundingCuboid(dilate(roiUnion(labelVolumes, roi), dilationRadius)));
}

std::array<int, 3> gridStep(const std::array<int, 3>& patchSize) {
  std::array<int, 3> step;
  for (int a = 0; a < 3; ++a) step[a] = (patchSize[a] + 9) / 10;
  return step;
}

namespace {

// Draws k centres from a pool: without replacement while the pool lasts
// (partial Fisher-Yates), then with replacement.
void drawFromPool(std::vector<std::array<int, 3>>& pool, int k, SampledCenter::Pool tag,
                  Rng& rng, std::vector<SampledCenter>& out) {
  int taken = 0;
  std::size_t n = pool.size();
  while (taken < k && static_cast<std::size_t>(taken) < n) {
    std::size_t remaining = n - static_cast<std::size_t>(taken);
    std::size_t j = taken + rng.below(remaining);
    std::swap(pool[taken], pool[j]);
    out.push_back({pool[taken], tag});
    ++taken;
  }
  while (taken < k) {
    out.push_back({pool[rng.below(n)], tag});
    ++taken;
  }
}

}  // namespace

std::vector<SampledCenter> sampleTrainingCenters(const Volume& targetLabel, std::uint16_t roi,
                                                 const std::array<int, 3>& patchSize, int count,
                                                 int dilationRadius, Rng& rng) {
  if (count < 3) throw InvalidArgumentError("sampleTrainingCenters needs count >= 3");
  const Dims3 d = targetLabel.dims();
  BinaryMask roiMask = roiUnion({&targetLabel}, roi);

  std::vector<std::array<int, 3>> interior, boundary;
  std::uint64_t i = 0;
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t x = 0; x < d.x; ++x, ++i) {
        if (!roiMask.bits[i]) continue;
        // Boundary: some 6-face neighbour is outside the ROI (off-grid counts
        // as outside).
        bool isBoundary = false;
        const int px = static_cast<int>(x), py = static_cast<int>(y), pz = static_cast<int>(z);
        const int nbr[6][3] = {{px - 1, py, pz}, {px + 1, py, pz}, {px, py - 1, pz},
                               {px, py + 1, pz}, {px, py, pz - 1}, {px, py, pz + 1}};
        for (const auto& q : nbr) {
          if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= static_cast<int>(d.x) ||
              q[1] >= static_cast<int>(d.y) || q[2] >= static_cast<int>(d.z) ||
              !roiMask.test(q[0], q[1], q[2])) {
            isBoundary = true;
            break;
          }
        }
        (isBoundary ? boundary : interior).push_back({px, py, pz});
      }
  if (interior.empty()) interior = boundary;  // degenerate thin ROI

  Cuboid box = boundingCuboid(dilate(roiMask, dilationRadius));
  std::array<int, 3> step = gridStep(patchSize);
  std::vector<std::array<int, 3>> grid;
  for (int z = box.min[2]; z < box.min[2] + box.size[2]; z += step[2])
    for (int y = box.min[1]; y < box.min[1] + box.size[1]; y += step[1])
      for (int x = box.min[0]; x < box.min[0] + box.size[0]; x += step[0])
        grid.push_back({x, y, z});

  int nInterior = count * 40 / 100;
  int nBoundary = count * 30 / 100;
  int nGrid = count * 30 / 100;
  nInterior += count - (nInterior + nBoundary + nGrid);

  std::vector<SampledCenter> out;
  out.reserve(count);
  drawFromPool(interior, nInterior, SampledCenter::Pool::Interior, rng, out);
  drawFromPool(boundary, nBoundary, SampledCenter::Pool::Boundary, rng, out);
  drawFromPool(grid, nGrid, SampledCenter::Pool::Grid, rng, out);
  return out;
}

Volume extractPatch(const Volume& volume, const std::array<int, 3>& center,
                    const std::array<int, 3>& size) {
  if (size[0] < 1 || size[1] < 1 || size[2] < 1)
    throw InvalidArgumentError("patch size must be positive");
  Dims3 pd{static_cast<std::uint32_t>(size[0]), static_cast<std::uint32_t>(size[1]),
           static_cast<std::uint32_t>(size[2])};
  Volume patch(pd, volume.dtype());
  const Dims3 vd = volume.dims();
  const int ox = center[0] - size[0] / 2;
  const int oy = center[1] - size[1] / 2;
  const int oz = center[2] - size[2] / 2;
  std::uint64_t i = 0;
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y)
      for (int x = 0; x < size[0]; ++x, ++i) {
        int sx = ox + x, sy = oy + y, sz = oz + z;
        if (sx < 0 || sy < 0 || sz < 0 || sx >= static_cast<int>(vd.x) ||
            sy >= static_cast<int>(vd.y) || sz >= static_cast<int>(vd.z))
          continue;  // zero padding
        if (volume.dtype() == Dtype::Float32)
          patch.floats()[i] = volume.floatAt(sx, sy, sz);
        else
          patch.labels()[i] = volume.labelAt(sx, sy, sz);
      }
  return patch;
}

}  // namespace atlasforge
