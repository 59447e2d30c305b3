#pragma once

// Independent reference implementations used only by tests. Everything here
// is written in the most direct form possible (nested loops, per-voxel
// scans) and must stay independent of the library code paths it checks.

#include <functional>
#include <vector>

#include "atlasforge/geometry.hpp"
#include "atlasforge/ensemble.hpp"
#include "atlasforge/nn.hpp"

namespace oracle {

using atlasforge::BinaryMask;
using atlasforge::ConvParams;
using atlasforge::Dims3;
using atlasforge::RoiPrediction;
using atlasforge::Tensor5;
using atlasforge::Volume;

// Direct six-nested-loop convolution sum.
Tensor5 conv3d(const Tensor5& x, const ConvParams& p);

// Per-voxel exhaustive union / Chebyshev dilation / bounding box.
BinaryMask roiUnion(const std::vector<const Volume*>& labels, std::uint16_t roi);
BinaryMask dilate(const BinaryMask& mask, int radius);
bool boundingBox(const BinaryMask& mask, std::array<int, 3>& minOut, std::array<int, 3>& sizeOut);

// Exhaustive patch search with the (distance, z, y, x) tie ordering.
struct SearchHit {
  std::array<int, 3> offset{0, 0, 0};
  double distance = 0.0;
};
SearchHit mostSimilar(const Volume& query, const Volume& image, const std::array<int, 3>& center,
                      const std::array<int, 3>& radius);

// Per-voxel evaluation of the label-fusion argmax.
void fuse(const std::vector<RoiPrediction>& preds, const Dims3& dims,
          std::vector<std::uint16_t>& labelsOut, std::vector<double>& confOut);

// Central finite differences of a scalar functional with respect to the
// entries of `params`; restores the vector afterwards.
std::vector<double> finiteDiff(const std::function<double()>& eval, std::vector<double>& params,
                               double eps);

// Largest |a-b| relative to the largest magnitude seen in either vector.
double maxRelError(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace oracle
