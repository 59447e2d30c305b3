#include "atlasforge/patchsearch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace atlasforge {

std::array<int, 3> searchRadiusFor(const std::array<int, 3>& patchSize, double factor) {
  std::array<int, 3> r;
  for (int a = 0; a < 3; ++a) r[a] = static_cast<int>(std::floor(factor * patchSize[a]));
  return r;
}

namespace {

// Distance between the query patch and the template patch centred at
// (cx,cy,cz), with voxels outside the template grid reading as 0. Bails out
// early once the partial sum exceeds `bound`.
double patchDistance(const std::vector<float>& q, const std::array<int, 3>& size,
                     const Volume& image, int cx, int cy, int cz, double bound) {
  const Dims3 vd = image.dims();
  const auto& img = image.floats();
  const int ox = cx - size[0] / 2, oy = cy - size[1] / 2, oz = cz - size[2] / 2;
  double acc = 0.0;
  std::size_t qi = 0;
  for (int z = 0; z < size[2]; ++z) {
    const int sz = oz + z;
    const bool zin = sz >= 0 && sz < static_cast<int>(vd.z);
    for (int y = 0; y < size[1]; ++y) {
      const int sy = oy + y;
      const bool yin = zin && sy >= 0 && sy < static_cast<int>(vd.y);
      if (yin && ox >= 0 && ox + size[0] <= static_cast<int>(vd.x)) {
        const float* row = &img[flatIndex(vd, static_cast<std::uint32_t>(ox),
                                          static_cast<std::uint32_t>(sy),
                                          static_cast<std::uint32_t>(sz))];
        for (int x = 0; x < size[0]; ++x, ++qi) {
          double dv = static_cast<double>(q[qi]) - row[x];
          acc += dv * dv;
        }
      } else {
        for (int x = 0; x < size[0]; ++x, ++qi) {
          const int sx = ox + x;
          double t = 0.0;
          if (yin && sx >= 0 && sx < static_cast<int>(vd.x))
            t = image.floatAt(sx, sy, sz);
          double dv = static_cast<double>(q[qi]) - t;
          acc += dv * dv;
        }
      }
    }
    if (acc > bound) return acc;
  }
  return acc;
}

}  // namespace

SearchResult mostSimilar(const Volume& queryPatch, const Volume& templateImage,
                         const std::array<int, 3>& center, const std::array<int, 3>& radius,
                         int templateId, int stride) {
  if (queryPatch.dtype() != Dtype::Float32 || templateImage.dtype() != Dtype::Float32)
    throw InvalidArgumentError("patch search operates on float32 volumes");
  if (stride < 1) throw InvalidArgumentError("search stride must be >= 1");
  const std::array<int, 3> size = {static_cast<int>(queryPatch.dims().x),
                                   static_cast<int>(queryPatch.dims().y),
                                   static_cast<int>(queryPatch.dims().z)};
  const auto& q = queryPatch.floats();

  double best = std::numeric_limits<double>::infinity();
  std::array<int, 3> bestOff{0, 0, 0};
  // Ascending (z, y, x) scan with strict improvement keeps the
  // lexicographically smallest offset on ties.
  for (int oz = -radius[2]; oz <= radius[2]; oz += stride)
    for (int oy = -radius[1]; oy <= radius[1]; oy += stride)
      for (int ox = -radius[0]; ox <= radius[0]; ox += stride) {
        double dist = patchDistance(q, size, templateImage, center[0] + ox, center[1] + oy,
                                    center[2] + oz, best);
        if (dist < best) {
          best = dist;
          bestOff = {ox, oy, oz};
        }
      }

  SearchResult r;
  r.templateId = templateId;
  r.offset = bestOff;
  r.distance = best;
  r.imagePatch = extractPatch(
      templateImage, {center[0] + bestOff[0], center[1] + bestOff[1], center[2] + bestOff[2]},
      size);
  return r;
}

std::vector<SearchResult> topK(std::vector<SearchResult> results, int k) {
  if (k < 1) throw InvalidArgumentError("topK needs k >= 1");
  if (static_cast<int>(results.size()) < k)
    throw InsufficientTemplatesError("need at least " + std::to_string(k) + " templates, got " +
                                     std::to_string(results.size()));
  auto key = [](const SearchResult& r) {
    return std::make_tuple(r.distance, r.templateId, r.offset[2], r.offset[1], r.offset[0]);
  };
  std::stable_sort(results.begin(), results.end(),
                   [&](const SearchResult& a, const SearchResult& b) { return key(a) < key(b); });
  results.resize(k);
  return results;
}

Volume binarizeToRoi(const Volume& label, std::uint16_t roi) {
  if (label.dtype() != Dtype::Label16) throw InvalidArgumentError("binarizeToRoi expects labels");
  Volume out(label.dims(), Dtype::Label16);
  const auto& in = label.labels();
  auto& dst = out.labels();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = in[i] == roi ? 1 : 0;
  return out;
}

TrainingSample buildTrainingSample(const Volume& targetImage, const Volume& targetLabel,
                                   std::uint16_t roi, const std::array<int, 3>& center,
                                   const std::array<int, 3>& patchSize,
                                   const std::vector<const Volume*>& templateImages,
                                   const std::vector<const Volume*>& templateLabels, int k,
                                   const std::array<int, 3>& searchRadius) {
  if (templateImages.size() != templateLabels.size())
    throw InvalidArgumentError("template image/label count mismatch");

  TrainingSample s;
  s.x = extractPatch(targetImage, center, patchSize);
  s.y = binarizeToRoi(extractPatch(targetLabel, center, patchSize), roi);

  std::vector<SearchResult> candidates;
  candidates.reserve(templateImages.size());
  for (std::size_t m = 0; m < templateImages.size(); ++m) {
    SearchResult r = mostSimilar(s.x, *templateImages[m], center, searchRadius,
                                 static_cast<int>(m));
    // The label patch travels with the winning image patch: same offset.
    std::array<int, 3> at = {center[0] + r.offset[0], center[1] + r.offset[1],
                             center[2] + r.offset[2]};
    r.labelPatch = binarizeToRoi(extractPatch(*templateLabels[m], at, patchSize), roi);
    candidates.push_back(std::move(r));
  }
  for (auto& r : topK(std::move(candidates), k)) {
    s.atlasImages.push_back(std::move(r.imagePatch));
    s.atlasLabels.push_back(std::move(r.labelPatch));
  }
  return s;
}

}  // namespace atlasforge
