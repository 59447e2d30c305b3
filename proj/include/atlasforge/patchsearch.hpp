#pragma once

#include <array>
#include <vector>

#include "atlasforge/geometry.hpp"
#include "atlasforge/volume.hpp"

namespace atlasforge {

struct SearchResult {
  int templateId = 0;
  std::array<int, 3> offset{0, 0, 0};  // winning centre relative to the query centre
  double distance = 0.0;               // sum of squared intensity differences
  Volume imagePatch;                   // float32, patch at the winning offset
  Volume labelPatch;                   // label16 {0,1}, same offset; may be empty
};

// One supervised example: the target patch, the K most similar template
// image patches, their co-located ROI-binarized label patches, and the
// binary ground truth from the target label.
struct TrainingSample {
  Volume x;                         // float32
  std::vector<Volume> atlasImages;  // K float32 patches
  std::vector<Volume> atlasLabels;  // K label16 {0,1} patches
  Volume y;                         // label16 {0,1}
};

// Per-axis search radius: floor(factor * patch size).
std::array<int, 3> searchRadiusFor(const std::array<int, 3>& patchSize, double factor = 0.75);

// Exhaustively scans the cubic neighbourhood of `center` in the template
// image for the patch minimising the sum of squared differences against the
// query patch. Ties go to the lexicographically smallest offset (z, y, x).
// `stride` subsamples the offsets and is 1 everywhere in practice.
SearchResult mostSimilar(const Volume& queryPatch, const Volume& templateImage,
                         const std::array<int, 3>& center, const std::array<int, 3>& radius,
                         int templateId = 0, int stride = 1);

// The k results with smallest distance, ascending; ties ordered by
// (templateId, offset). Throws InsufficientTemplatesError when fewer than k
// results are supplied.
std::vector<SearchResult> topK(std::vector<SearchResult> results, int k);

TrainingSample buildTrainingSample(const Volume& targetImage, const Volume& targetLabel,
                                   std::uint16_t roi, const std::array<int, 3>& center,
                                   const std::array<int, 3>& patchSize,
                                   const std::vector<const Volume*>& templateImages,
                                   const std::vector<const Volume*>& templateLabels, int k,
                                   const std::array<int, 3>& searchRadius);

// Binary {0,1} patch marking where `label` equals roi.
Volume binarizeToRoi(const Volume& label, std::uint16_t roi);

}  // namespace atlasforge
