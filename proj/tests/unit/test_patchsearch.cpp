#include <doctest.h>

#include "atlasforge/patchsearch.hpp"
#include "support/oracles.hpp"

using namespace atlasforge;

namespace {

Volume randomImage(Dims3 dims, Rng& rng) {
  std::vector<float> data(dims.voxels());
  for (auto& v : data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return Volume::fromFloats(dims, std::move(data));
}

}  // namespace

TEST_SUITE("patchsearch") {

TEST_CASE("identical template self-matches at zero offset") {
  Rng rng(51);
  Volume img = randomImage({12, 12, 12}, rng);
  Volume query = extractPatch(img, {6, 6, 6}, {5, 5, 5});
  SearchResult r = mostSimilar(query, img, {6, 6, 6}, {3, 3, 3});
  CHECK(r.offset == std::array<int, 3>{0, 0, 0});
  CHECK(r.distance == doctest::Approx(0.0));
  CHECK(r.imagePatch == query);
}

TEST_CASE("translation is recovered") {
  Rng rng(52);
  // constant background with a bright blob; template shifted by +2 in x
  Dims3 dims{14, 14, 14};
  std::vector<float> tgt(dims.voxels(), 0.2f), tpl(dims.voxels(), 0.2f);
  for (int z = 5; z < 9; ++z)
    for (int y = 5; y < 9; ++y)
      for (int x = 5; x < 9; ++x) {
        tgt[flatIndex(dims, x, y, z)] = 1.0f;
        tpl[flatIndex(dims, x + 2, y, z)] = 1.0f;
      }
  Volume target = Volume::fromFloats(dims, tgt);
  Volume templ = Volume::fromFloats(dims, tpl);
  Volume query = extractPatch(target, {7, 7, 7}, {7, 7, 7});
  SearchResult r = mostSimilar(query, templ, {7, 7, 7}, {3, 3, 3});
  CHECK(r.offset == std::array<int, 3>{2, 0, 0});
  CHECK(r.distance == doctest::Approx(0.0));
}

TEST_CASE("constant difference gives the closed-form distance and the lexicographic tie") {
  // target patch constant a, template constant b: every interior offset has
  // distance V * (a-b)^2; ties resolve to the smallest (z,y,x) offset.
  Dims3 dims{20, 20, 20};
  Volume templ = Volume::fromFloats(dims, std::vector<float>(dims.voxels(), 0.5f));
  Volume query = Volume::fromFloats({3, 3, 3}, std::vector<float>(27, 0.75f));
  SearchResult r = mostSimilar(query, templ, {10, 10, 10}, {2, 2, 2});
  CHECK(r.offset == std::array<int, 3>{-2, -2, -2});
  CHECK(r.distance == doctest::Approx(27 * 0.25 * 0.25));
}

TEST_CASE("matches the exhaustive oracle on random instances") {
  Rng rng(53);
  for (int iter = 0; iter < 25; ++iter) {
    const Dims3 dims{static_cast<std::uint32_t>(8 + rng.below(9)),
                     static_cast<std::uint32_t>(8 + rng.below(9)),
                     static_cast<std::uint32_t>(8 + rng.below(9))};
    Volume img = randomImage(dims, rng);
    Volume tpl = randomImage(dims, rng);
    const std::array<int, 3> size{static_cast<int>(3 + rng.below(3)),
                                  static_cast<int>(3 + rng.below(3)),
                                  static_cast<int>(3 + rng.below(3))};
    const std::array<int, 3> center{static_cast<int>(rng.below(dims.x)),
                                    static_cast<int>(rng.below(dims.y)),
                                    static_cast<int>(rng.below(dims.z))};
    const int rad = static_cast<int>(1 + rng.below(4));
    Volume query = extractPatch(img, center, size);
    SearchResult got = mostSimilar(query, tpl, center, {rad, rad, rad});
    oracle::SearchHit expect = oracle::mostSimilar(query, tpl, center, {rad, rad, rad});
    CHECK(got.offset == expect.offset);
    CHECK(got.distance == doctest::Approx(expect.distance).epsilon(1e-9));
  }
}

TEST_CASE("minimising offset is invariant under a joint shift") {
  Rng rng(54);
  Volume img = randomImage({16, 16, 16}, rng);
  Volume tpl = randomImage({16, 16, 16}, rng);
  auto runAt = [&](const std::array<int, 3>& c) {
    Volume q = extractPatch(img, c, {5, 5, 5});
    return mostSimilar(q, tpl, c, {2, 2, 2}).offset;
  };
  // shift both images by one voxel: equivalent to querying a shifted centre
  auto shiftVolume = [&](const Volume& v) {
    Dims3 d = v.dims();
    std::vector<float> out(d.voxels(), 0.f);
    for (std::uint32_t z = 0; z + 1 < d.z; ++z)
      for (std::uint32_t y = 0; y < d.y; ++y)
        for (std::uint32_t x = 0; x < d.x; ++x)
          out[flatIndex(d, x, y, z + 1)] = v.floatAt(x, y, z);
    return Volume::fromFloats(d, out);
  };
  Volume imgS = shiftVolume(img);
  Volume tplS = shiftVolume(tpl);
  Volume q = extractPatch(img, {8, 8, 8}, {5, 5, 5});
  Volume qS = extractPatch(imgS, {8, 8, 9}, {5, 5, 5});
  REQUIRE(q == qS);
  CHECK(mostSimilar(q, tpl, {8, 8, 8}, {2, 2, 2}).offset ==
        mostSimilar(qS, tplS, {8, 8, 9}, {2, 2, 2}).offset);
  (void)runAt;
}

TEST_CASE("topK sorts by distance with deterministic ties") {
  auto mk = [](int id, double dist) {
    SearchResult r;
    r.templateId = id;
    r.distance = dist;
    return r;
  };
  auto out = topK({mk(0, 5), mk(1, 1), mk(2, 3), mk(3, 2)}, 3);
  REQUIRE(out.size() == 3);
  CHECK(out[0].distance == 1);
  CHECK(out[1].distance == 2);
  CHECK(out[2].distance == 3);

  // equal distances order by template id
  auto tie = topK({mk(2, 1), mk(0, 1), mk(1, 1)}, 3);
  CHECK(tie[0].templateId == 0);
  CHECK(tie[1].templateId == 1);
  CHECK(tie[2].templateId == 2);

  // m == K returns everything sorted
  auto all = topK({mk(0, 9), mk(1, 4)}, 2);
  CHECK(all[0].templateId == 1);

  CHECK_THROWS_AS(topK({mk(0, 1), mk(1, 2)}, 3), InsufficientTemplatesError);
}

TEST_CASE("topK distances are non-decreasing and a subset of the input") {
  Rng rng(55);
  std::vector<SearchResult> in;
  std::vector<double> dists;
  for (int i = 0; i < 8; ++i) {
    SearchResult r;
    r.templateId = i;
    r.distance = rng.below(5);  // force ties
    in.push_back(r);
    dists.push_back(r.distance);
  }
  auto out = topK(in, 4);
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].distance <= out[i].distance);
  for (const auto& r : out)
    CHECK(std::count(dists.begin(), dists.end(), r.distance) > 0);
}

TEST_CASE("self-atlas training sample") {
  Rng rng(56);
  Dims3 dims{14, 14, 14};
  Volume img = randomImage(dims, rng);
  std::vector<std::uint16_t> lab(dims.voxels(), 0);
  for (int z = 5; z < 9; ++z)
    for (int y = 5; y < 9; ++y)
      for (int x = 5; x < 9; ++x) lab[flatIndex(dims, x, y, z)] = 1;
  Volume label = Volume::fromLabels(dims, lab);

  std::vector<const Volume*> images{&img, &img, &img};
  std::vector<const Volume*> labels{&label, &label, &label};
  TrainingSample s =
      buildTrainingSample(img, label, 1, {7, 7, 7}, {6, 6, 6}, images, labels, 3, {2, 2, 2});

  REQUIRE(s.atlasImages.size() == 3);
  REQUIRE(s.atlasLabels.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(s.atlasImages[k] == s.x);  // identical template, offset 0
    CHECK(s.atlasImages[k].dims() == Dims3{6, 6, 6});
  }
  // y is exactly the indicator of the roi
  Volume expectY = extractPatch(label, {7, 7, 7}, {6, 6, 6});
  for (std::size_t i = 0; i < s.y.labels().size(); ++i)
    CHECK(s.y.labels()[i] == (expectY.labels()[i] == 1 ? 1 : 0));
}

TEST_CASE("insufficient templates propagates") {
  Rng rng(57);
  Volume img = randomImage({10, 10, 10}, rng);
  Volume label = Volume::fromLabels({10, 10, 10},
                                    std::vector<std::uint16_t>(1000, 1));
  std::vector<const Volume*> images{&img, &img};
  std::vector<const Volume*> labels{&label, &label};
  CHECK_THROWS_AS(
      buildTrainingSample(img, label, 1, {5, 5, 5}, {4, 4, 4}, images, labels, 3, {1, 1, 1}),
      InsufficientTemplatesError);
}

TEST_CASE("default search radius is floor(0.75 R)") {
  CHECK(searchRadiusFor({25, 60, 40}) == std::array<int, 3>{18, 45, 30});
  CHECK(searchRadiusFor({8, 8, 8}, 0.25) == std::array<int, 3>{2, 2, 2});
}

}  // TEST_SUITE
