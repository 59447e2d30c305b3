#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "atlasforge/rng.hpp"
#include "atlasforge/volume.hpp"

using namespace atlasforge;

namespace {

std::string tmpPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<std::uint8_t> fileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Volume randomFloatVolume(Dims3 dims, Rng& rng, float lo = -10.f, float hi = 10.f) {
  std::vector<float> data(dims.voxels());
  for (auto& v : data) v = static_cast<float>(rng.uniform(lo, hi));
  return Volume::fromFloats(dims, std::move(data));
}

}  // namespace

TEST_SUITE("volume") {

TEST_CASE("smallest legal file round-trips") {
  const std::string path = tmpPath("af_one_voxel.rvol");
  saveVolume(Volume::fromFloats({1, 1, 1}, {0.0f}), path);
  Volume v = loadVolume(path);
  CHECK(v.dims() == Dims3{1, 1, 1});
  CHECK(v.floats()[0] == 0.0f);
}

TEST_CASE("save emits the exact byte layout") {
  const std::string path = tmpPath("af_layout.rvol");
  saveVolume(Volume::fromFloats({2, 1, 1}, {1.0f, 2.0f}), path);
  const auto bytes = fileBytes(path);
  REQUIRE(bytes.size() == 21 + 8);
  CHECK(bytes[0] == 'R');
  CHECK(bytes[1] == 'V');
  CHECK(bytes[2] == 'O');
  CHECK(bytes[3] == 'L');
  CHECK(bytes[4] == '1');
  CHECK(bytes[5] == 0);
  // dims 2,1,1 little endian
  CHECK(bytes[6] == 2);
  CHECK(bytes[10] == 1);
  CHECK(bytes[14] == 1);
  CHECK(bytes[18] == 0);  // float32
  CHECK(bytes[19] == 1);  // single channel
  CHECK(bytes[20] == 0);
  // 1.0f = 0x3f800000, 2.0f = 0x40000000, little endian
  CHECK(bytes[21] == 0x00);
  CHECK(bytes[22] == 0x00);
  CHECK(bytes[23] == 0x80);
  CHECK(bytes[24] == 0x3f);
  CHECK(bytes[27] == 0x00);
  CHECK(bytes[28] == 0x40);
}

TEST_CASE("round-trip is byte identical") {
  Rng rng(11);
  const std::string a = tmpPath("af_rt_a.rvol"), b = tmpPath("af_rt_b.rvol");
  Volume v = randomFloatVolume({7, 5, 3}, rng);
  saveVolume(v, a);
  Volume reloaded = loadVolume(a);
  CHECK(reloaded == v);
  saveVolume(reloaded, b);
  CHECK(fileBytes(a) == fileBytes(b));

  // label volumes too
  std::vector<std::uint16_t> lab(7 * 5 * 3);
  for (auto& l : lab) l = static_cast<std::uint16_t>(rng.below(5));
  Volume lv = Volume::fromLabels({7, 5, 3}, lab);
  saveVolume(lv, a);
  CHECK(loadVolume(a) == lv);
}

TEST_CASE("bad magic is rejected") {
  const std::string path = tmpPath("af_bad_magic.rvol");
  std::ofstream(path, std::ios::binary) << "XXXX" << std::string(30, '\0');
  CHECK_THROWS_AS(loadVolume(path), BadMagicError);
}

TEST_CASE("truncated payload and trailing bytes are distinct errors") {
  const std::string path = tmpPath("af_trunc.rvol");
  saveVolume(Volume::fromFloats({2, 2, 2}, std::vector<float>(8, 1.f)), path);
  auto bytes = fileBytes(path);

  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size() - 4);
  CHECK_THROWS_AS(loadVolume(path), TruncatedFileError);

  bytes.push_back(0);
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  CHECK_THROWS_AS(loadVolume(path), PayloadSizeError);
}

TEST_CASE("zero-voxel dims are rejected at construction") {
  CHECK_THROWS_AS(Volume({0, 1, 1}, Dtype::Float32), InvalidArgumentError);
  CHECK_THROWS_AS(Volume({3, 0, 3}, Dtype::Label16), InvalidArgumentError);
}

TEST_CASE("displacement field io round-trips") {
  const std::string path = tmpPath("af_field.rvol");
  DisplacementField f;
  f.dims = {2, 2, 1};
  f.vectors = {0.5f, 0, 0, -1, 0.25f, 0, 0, 0, 1, 2, 3, -0.5f};
  saveDisplacementField(f, path);
  DisplacementField g = loadDisplacementField(path);
  CHECK(g.dims == f.dims);
  CHECK(g.vectors == f.vectors);
  // single-channel loader refuses a 3-channel file
  CHECK_THROWS_AS(loadVolume(path), PayloadSizeError);
}

TEST_CASE("histogram match: identity stays within one bin width") {
  Rng rng(3);
  Volume v = randomFloatVolume({9, 8, 7}, rng, 0.f, 100.f);
  Volume matched = histogramMatch(v, v);
  const float binWidth = 100.0f / 256.0f * 1.001f;  // range is ~[0,100]
  float lo = v.floats()[0], hi = v.floats()[0];
  for (float x : v.floats()) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const float width = (hi - lo) / 256.0f;
  (void)binWidth;
  for (std::size_t i = 0; i < v.floats().size(); ++i)
    CHECK(std::fabs(matched.floats()[i] - v.floats()[i]) <= width + 1e-5f);
}

TEST_CASE("histogram match: shifted source lands on the reference") {
  Rng rng(4);
  Volume ref = randomFloatVolume({8, 8, 8}, rng, 10.f, 50.f);
  Volume src(ref.dims(), Dtype::Float32);
  for (std::size_t i = 0; i < ref.floats().size(); ++i)
    src.floats()[i] = ref.floats()[i] + 10.0f;
  Volume matched = histogramMatch(src, ref);
  const float width = 40.0f / 256.0f * 1.2f;  // one bin, with range slack
  for (std::size_t i = 0; i < ref.floats().size(); ++i)
    CHECK(std::fabs(matched.floats()[i] - ref.floats()[i]) <= width + 1e-4f);
}

TEST_CASE("histogram match is monotone and bounded by the reference range") {
  Rng rng(5);
  Volume src = randomFloatVolume({6, 6, 6}, rng, -3.f, 12.f);
  Volume ref = randomFloatVolume({5, 5, 5}, rng, 100.f, 220.f);
  Volume matched = histogramMatch(src, ref);
  const auto& s = src.floats();
  const auto& m = matched.floats();
  for (std::size_t i = 1; i < s.size(); ++i)
    for (std::size_t j = 0; j < 3 && j < i; ++j) {
      if (s[i - 1 - j] < s[i]) CHECK(m[i - 1 - j] <= m[i]);
      if (s[i - 1 - j] > s[i]) CHECK(m[i - 1 - j] >= m[i]);
    }
  for (float v : m) {
    CHECK(v >= 100.f);
    CHECK(v <= 220.f);
  }
}

TEST_CASE("histogram match is idempotent within one bin width") {
  Rng rng(6);
  Volume src = randomFloatVolume({7, 7, 7}, rng, 0.f, 1.f);
  Volume ref = randomFloatVolume({7, 7, 7}, rng, 2.f, 4.f);
  Volume once = histogramMatch(src, ref);
  Volume twice = histogramMatch(once, ref);
  const float width = 2.0f / 256.0f;
  for (std::size_t i = 0; i < once.floats().size(); ++i)
    CHECK(std::fabs(once.floats()[i] - twice.floats()[i]) <= width + 1e-5f);
}

TEST_CASE("constant reference is degenerate") {
  Volume ref = Volume::fromFloats({2, 2, 2}, std::vector<float>(8, 5.f));
  Volume src = Volume::fromFloats({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK_THROWS_AS(histogramMatch(src, ref), DegenerateReferenceError);
}

TEST_CASE("identity transform is exact") {
  Rng rng(8);
  Volume v = randomFloatVolume({5, 4, 3}, rng);
  CHECK(applyTransform(v, nullptr, Interpolation::Trilinear) == v);
}

TEST_CASE("integer translation shifts a labelled cube exactly") {
  Dims3 dims{8, 8, 8};
  std::vector<std::uint16_t> lab(dims.voxels(), 0);
  for (std::uint32_t z = 3; z < 6; ++z)
    for (std::uint32_t y = 3; y < 6; ++y)
      for (std::uint32_t x = 3; x < 6; ++x) lab[flatIndex(dims, x, y, z)] = 2;
  Volume cube = Volume::fromLabels(dims, lab);

  DisplacementField field;
  field.dims = dims;
  field.vectors.assign(dims.voxels() * 3, 0.f);
  for (std::uint64_t i = 0; i < dims.voxels(); ++i) field.vectors[3 * i] = 1.0f;  // +1 in x

  Volume warped = applyTransform(cube, &field, Interpolation::Nearest);
  // out[v] = in[v + (1,0,0)]: content moves one voxel towards -x.
  std::vector<std::uint16_t> expected(dims.voxels(), 0);
  for (std::uint32_t z = 3; z < 6; ++z)
    for (std::uint32_t y = 3; y < 6; ++y)
      for (std::uint32_t x = 2; x < 5; ++x) expected[flatIndex(dims, x, y, z)] = 2;
  CHECK(warped.labels() == expected);
}

TEST_CASE("nearest resampling cannot invent labels") {
  Rng rng(9);
  Dims3 dims{6, 6, 6};
  std::vector<std::uint16_t> lab(dims.voxels());
  for (auto& l : lab) l = static_cast<std::uint16_t>(rng.below(4));
  Volume v = Volume::fromLabels(dims, lab);

  DisplacementField field;
  field.dims = dims;
  field.vectors.resize(dims.voxels() * 3);
  for (auto& d : field.vectors) d = static_cast<float>(rng.uniform(-4.0, 4.0));

  Volume warped = applyTransform(v, &field, Interpolation::Nearest);
  for (std::uint16_t l : warped.labels()) CHECK(l <= 3);
}

TEST_CASE("interpolation mode must match dtype") {
  Volume lab = Volume::fromLabels({2, 2, 2}, std::vector<std::uint16_t>(8, 1));
  Volume img = Volume::fromFloats({2, 2, 2}, std::vector<float>(8, 1.f));
  DisplacementField field;
  field.dims = {2, 2, 2};
  field.vectors.assign(24, 0.f);
  CHECK_THROWS_AS(applyTransform(lab, &field, Interpolation::Trilinear), InvalidArgumentError);
  CHECK_THROWS_AS(applyTransform(img, &field, Interpolation::Nearest), InvalidArgumentError);
}

TEST_CASE("trilinear warp onto a different grid samples fractional positions") {
  // 1-D ramp along x; shifting by +0.5 averages neighbours.
  Dims3 dims{4, 1, 1};
  Volume v = Volume::fromFloats(dims, {0.f, 1.f, 2.f, 3.f});
  DisplacementField field;
  field.dims = dims;
  field.vectors.assign(12, 0.f);
  for (int i = 0; i < 4; ++i) field.vectors[3 * i] = 0.5f;
  Volume w = applyTransform(v, &field, Interpolation::Trilinear);
  CHECK(w.floats()[0] == doctest::Approx(0.5));
  CHECK(w.floats()[1] == doctest::Approx(1.5));
  CHECK(w.floats()[2] == doctest::Approx(2.5));
  CHECK(w.floats()[3] == doctest::Approx(1.5));  // half outside, zero padded
}

}  // TEST_SUITE
