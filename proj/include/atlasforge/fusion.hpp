#pragma once

#include "atlasforge/ensemble.hpp"
#include "atlasforge/volume.hpp"

namespace atlasforge {

struct FuseResult {
  Volume labels;      // label16
  Volume confidence;  // float32, winning product per voxel
};

// Resolves overlapping per-ROI binary predictions into one label map. At
// each voxel the ROI maximising binary * probability wins; when every
// product is 0 the voxel stays background (0); ties go to the smallest ROI
// id. Patch regions outside the volume are clipped.
FuseResult fuse(const std::vector<RoiPrediction>& predictions, const Dims3& volumeDims);

// Writes the in-bounds voxels of a patch into `target` at the
// patch-extraction centre convention; out-of-bounds voxels are discarded.
void embedPatch(const Volume& patch, const std::array<int, 3>& center, Volume& target);

}  // namespace atlasforge
