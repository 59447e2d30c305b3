#include <doctest.h>

#include "atlasforge/geometry.hpp"
#include "support/oracles.hpp"

using namespace atlasforge;

namespace {

Volume labelsWith(Dims3 dims, const std::vector<std::array<int, 3>>& voxels,
                  std::uint16_t roi = 1) {
  std::vector<std::uint16_t> data(dims.voxels(), 0);
  for (const auto& v : voxels) data[flatIndex(dims, v[0], v[1], v[2])] = roi;
  return Volume::fromLabels(dims, std::move(data));
}

Volume randomLabels(Dims3 dims, int maxRoi, Rng& rng, double fillProb = 0.08) {
  std::vector<std::uint16_t> data(dims.voxels(), 0);
  for (auto& v : data)
    if (rng.uniform01() < fillProb) v = static_cast<std::uint16_t>(1 + rng.below(maxRoi));
  return Volume::fromLabels(dims, std::move(data));
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("single-volume union is the label mask itself") {
  Volume v = labelsWith({4, 4, 4}, {{1, 1, 1}, {2, 1, 1}});
  BinaryMask m = roiUnion({&v}, 1);
  CHECK(m.count() == 2);
  CHECK(m.test(1, 1, 1));
  CHECK(m.test(2, 1, 1));
}

TEST_CASE("two-volume union is the set union") {
  Rng rng(21);
  Volume a = randomLabels({10, 9, 8}, 2, rng);
  Volume b = randomLabels({10, 9, 8}, 2, rng);
  BinaryMask got = roiUnion({&a, &b}, 1);
  BinaryMask expect = oracle::roiUnion({&a, &b}, 1);
  CHECK(got.bits == expect.bits);
}

TEST_CASE("absent roi raises empty-mask") {
  Volume v = labelsWith({4, 4, 4}, {{1, 1, 1}}, 2);
  CHECK_THROWS_AS(roiUnion({&v}, 5), EmptyMaskError);
}

TEST_CASE("union rejects mismatched dims") {
  Volume a = labelsWith({4, 4, 4}, {{0, 0, 0}});
  Volume b = labelsWith({4, 4, 3}, {{0, 0, 0}});
  CHECK_THROWS_AS(roiUnion({&a, &b}, 1), DimsMismatchError);
}

TEST_CASE("dilation radius 0 is the identity") {
  Rng rng(22);
  Volume v = randomLabels({8, 8, 8}, 1, rng);
  BinaryMask m = roiUnion({&v}, 1);
  CHECK(dilate(m, 0).bits == m.bits);
}

TEST_CASE("dilating a centre voxel by 3 gives a 7x7x7 block") {
  BinaryMask m(Dims3{9, 9, 9});
  m.set(4, 4, 4);
  BinaryMask d = dilate(m, 3);
  CHECK(d.count() == 7 * 7 * 7);
  CHECK(d.test(1, 1, 1));
  CHECK(!d.test(0, 4, 4));
}

TEST_CASE("dilation clips at the grid corner") {
  BinaryMask m(Dims3{9, 9, 9});
  m.set(0, 0, 0);
  BinaryMask d = dilate(m, 3);
  CHECK(d.count() == 4 * 4 * 4);
}

TEST_CASE("dilation is monotone in the radius") {
  Rng rng(23);
  Volume v = randomLabels({10, 10, 10}, 1, rng, 0.02);
  BinaryMask m = roiUnion({&v}, 1);
  BinaryMask d1 = dilate(m, 1);
  BinaryMask d2 = dilate(m, 2);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i]) CHECK(d1.bits[i]);
    if (d1.bits[i]) CHECK(d2.bits[i]);
  }
}

TEST_CASE("bounding cuboid basics") {
  BinaryMask point(Dims3{8, 8, 8});
  point.set(2, 3, 4);
  Cuboid c = boundingCuboid(point);
  CHECK(c.min == std::array<int, 3>{2, 3, 4});
  CHECK(c.size == std::array<int, 3>{1, 1, 1});

  BinaryMask two(Dims3{8, 8, 8});
  two.set(1, 1, 1);
  two.set(4, 2, 1);
  c = boundingCuboid(two);
  CHECK(c.min == std::array<int, 3>{1, 1, 1});
  CHECK(c.size == std::array<int, 3>{4, 2, 1});

  BinaryMask full(Dims3{5, 6, 7});
  std::fill(full.bits.begin(), full.bits.end(), 1);
  c = boundingCuboid(full);
  CHECK(c.min == std::array<int, 3>{0, 0, 0});
  CHECK(c.size == std::array<int, 3>{5, 6, 7});

  BinaryMask empty(Dims3{3, 3, 3});
  CHECK_THROWS_AS(boundingCuboid(empty), EmptyMaskError);
}

TEST_CASE("patch size is the component-wise maximum") {
  CHECK(roiPatchSize({Cuboid{{0, 0, 0}, {10, 12, 8}}, Cuboid{{0, 0, 0}, {9, 14, 8}}}) ==
        std::array<int, 3>{10, 14, 8});
  CHECK(roiPatchSize({Cuboid{{2, 2, 2}, {5, 5, 5}}}) == std::array<int, 3>{5, 5, 5});
  std::vector<Cuboid> same(3, Cuboid{{0, 0, 0}, {3, 3, 3}});
  CHECK(roiPatchSize(same) == std::array<int, 3>{3, 3, 3});
  CHECK_THROWS_AS(roiPatchSize({}), InvalidArgumentError);
}

TEST_CASE("patch size is permutation invariant") {
  std::vector<Cuboid> a = {Cuboid{{0, 0, 0}, {3, 9, 2}}, Cuboid{{1, 1, 1}, {7, 1, 5}},
                           Cuboid{{2, 0, 0}, {4, 4, 4}}};
  std::vector<Cuboid> b = {a[2], a[0], a[1]};
  CHECK(roiPatchSize(a) == roiPatchSize(b));
}

TEST_CASE("patch centre is the floored cuboid midpoint") {
  CHECK(cuboidCenter(Cuboid{{2, 2, 2}, {5, 5, 5}}) == std::array<int, 3>{4, 4, 4});
  // radius-0 dilation keeps the cuboid
  Volume v = labelsWith({12, 12, 12},
                        {{2, 2, 2}, {6, 6, 6}});
  CHECK(roiPatchCenter({&v}, 1, 0) == std::array<int, 3>{4, 4, 4});
}

TEST_CASE("point roi keeps its centre under dilation") {
  Volume v = labelsWith({9, 9, 9}, {{3, 3, 3}});
  CHECK(roiPatchCenter({&v}, 1, 3) == std::array<int, 3>{3, 3, 3});
}

TEST_CASE("roi hugging a face shifts the centre inward") {
  Volume v = labelsWith({10, 12, 12}, {{0, 5, 5}});
  // dilated box: x in [0,3], y,z in [2,8]
  CHECK(roiPatchCenter({&v}, 1, 3) == std::array<int, 3>{1, 5, 5});
}

TEST_CASE("union-dilate-bound pipeline matches the per-voxel oracle") {
  Rng rng(31);
  for (int iter = 0; iter < 12; ++iter) {
    const Dims3 dims{static_cast<std::uint32_t>(6 + rng.below(10)),
                     static_cast<std::uint32_t>(6 + rng.below(10)),
                     static_cast<std::uint32_t>(6 + rng.below(10))};
    std::vector<Volume> vols;
    for (int j = 0; j < 3; ++j) vols.push_back(randomLabels(dims, 2, rng, 0.05));
    std::vector<const Volume*> refs{&vols[0], &vols[1], &vols[2]};
    for (std::uint16_t roi : {std::uint16_t{1}, std::uint16_t{2}}) {
      BinaryMask u1, u2;
      try {
        u1 = roiUnion(refs, roi);
      } catch (const EmptyMaskError&) {
        continue;
      }
      u2 = oracle::roiUnion(refs, roi);
      REQUIRE(u1.bits == u2.bits);
      BinaryMask d1 = dilate(u1, 3);
      BinaryMask d2 = oracle::dilate(u2, 3);
      REQUIRE(d1.bits == d2.bits);
      Cuboid c = boundingCuboid(d1);
      std::array<int, 3> omin{}, osize{};
      REQUIRE(oracle::boundingBox(d2, omin, osize));
      CHECK(c.min == omin);
      CHECK(c.size == osize);
    }
  }
}

TEST_CASE("grid step follows the ceil rule") {
  CHECK(gridStep({25, 60, 40}) == std::array<int, 3>{3, 6, 4});
  CHECK(gridStep({10, 10, 10}) == std::array<int, 3>{1, 1, 1});
  CHECK(gridStep({11, 1, 99}) == std::array<int, 3>{2, 1, 10});
}

TEST_CASE("training centres: counts, pools and boundary predicate") {
  Rng rng(41);
  Dims3 dims{16, 16, 16};
  std::vector<std::array<int, 3>> roiVox;
  for (int z = 5; z < 11; ++z)
    for (int y = 5; y < 11; ++y)
      for (int x = 5; x < 11; ++x) roiVox.push_back({x, y, z});
  Volume label = labelsWith(dims, roiVox);

  auto centers = sampleTrainingCenters(label, 1, {12, 12, 12}, 100, 3, rng);
  REQUIRE(centers.size() == 100);
  int interior = 0, boundary = 0, grid = 0;
  for (const auto& c : centers) {
    switch (c.pool) {
      case SampledCenter::Pool::Interior: ++interior; break;
      case SampledCenter::Pool::Boundary: ++boundary; break;
      case SampledCenter::Pool::Grid: ++grid; break;
    }
    if (c.pool == SampledCenter::Pool::Boundary) {
      // must be a roi voxel with a 6-neighbour outside the roi
      CHECK(label.labelAt(c.pos[0], c.pos[1], c.pos[2]) == 1);
      bool outsideNeighbour = false;
      const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& o : d) {
        const int nx = c.pos[0] + o[0], ny = c.pos[1] + o[1], nz = c.pos[2] + o[2];
        if (nx < 0 || ny < 0 || nz < 0 || nx >= 16 || ny >= 16 || nz >= 16 ||
            label.labelAt(nx, ny, nz) != 1)
          outsideNeighbour = true;
      }
      CHECK(outsideNeighbour);
    }
    if (c.pool == SampledCenter::Pool::Interior)
      CHECK(label.labelAt(c.pos[0], c.pos[1], c.pos[2]) == 1);
  }
  CHECK(interior == 40);
  CHECK(boundary == 30);
  CHECK(grid == 30);
}

TEST_CASE("single-voxel roi degenerates to that voxel") {
  Rng rng(42);
  Volume label = labelsWith({10, 10, 10}, {{4, 4, 4}});
  auto centers = sampleTrainingCenters(label, 1, {8, 8, 8}, 20, 1, rng);
  for (const auto& c : centers)
    if (c.pool != SampledCenter::Pool::Grid)
      CHECK(c.pos == std::array<int, 3>{4, 4, 4});
}

TEST_CASE("extract patch: constant volume, corner padding, round trip") {
  Volume v = Volume::fromFloats({5, 5, 5}, std::vector<float>(125, 7.f));
  Volume p = extractPatch(v, {2, 2, 2}, {3, 3, 3});
  for (float f : p.floats()) CHECK(f == 7.f);

  Volume corner = extractPatch(v, {0, 0, 0}, {3, 3, 3});
  int zeros = 0;
  for (float f : corner.floats()) zeros += f == 0.f;
  CHECK(zeros == 19);  // only the 2x2x2 in-bounds corner survives

  // extract then re-embed reproduces the in-bounds voxels
  Rng rng(43);
  std::vector<float> data(125);
  for (auto& f : data) f = static_cast<float>(rng.uniform01());
  Volume noisy = Volume::fromFloats({5, 5, 5}, data);
  Volume patch = extractPatch(noisy, {1, 2, 3}, {4, 3, 2});
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        const int vx = 1 - 2 + x, vy = 2 - 1 + y, vz = 3 - 1 + z;
        if (vx < 0 || vy < 0 || vz < 0 || vx >= 5 || vy >= 5 || vz >= 5) continue;
        CHECK(patch.floatAt(x, y, z) == noisy.floatAt(vx, vy, vz));
      }
}

}  // TEST_SUITE
