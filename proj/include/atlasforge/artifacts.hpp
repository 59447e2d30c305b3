#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "atlasforge/geometry.hpp"
#include "atlasforge/sfcn.hpp"

namespace atlasforge {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hexU64(std::uint64_t v);

// --- geometry file (geo.json) ------------------------------------------------

struct GeometryFile {
  int dilation = 3;
  int roiCount = 0;
  std::vector<PatchGeometry> rois;

  const PatchGeometry& forRoi(std::uint16_t roi) const;
  // Stable digest of the geometry content; training and segmentation refuse
  // artifacts built against a different geometry.
  std::string contentHash() const;
};

void saveGeometry(const GeometryFile& g, const std::string& path);
GeometryFile loadGeometry(const std::string& path);

// --- training sample sets (one binary file per ROI) --------------------------

struct SampleSet {
  std::uint16_t roi = 0;
  int k = 3;
  std::array<int, 3> patchSize{0, 0, 0};
  double searchRadiusFactor = 0.75;
  std::uint64_t seed = 0;
  std::string geometryHash;
  std::vector<TrainingSample> samples;
};

std::string sampleSetPath(const std::string& dir, std::uint16_t roi);
void saveSampleSet(const SampleSet& s, const std::string& path);
SampleSet loadSampleSet(const std::string& path);

// --- trained model store ------------------------------------------------------

struct MemberRecord {
  std::string file;  // relative to the index file
  double widthMultiplier = 1.0;
  std::uint64_t seed = 0;
  int bestEpoch = 0;
  int stoppedEpoch = 0;
};

struct ModelIndex {
  std::uint16_t roi = 0;
  int k = 3;
  std::array<int, 3> patchSize{0, 0, 0};
  double searchRadiusFactor = 0.75;
  std::string geometryHash;
  std::vector<MemberRecord> members;
};

std::string modelIndexPath(const std::string& dir, std::uint16_t roi);
void saveModelIndex(const ModelIndex& idx, const std::string& path);
ModelIndex loadModelIndex(const std::string& path);
// ROIs that have an index file in the directory, ascending.
std::vector<std::uint16_t> listModelRois(const std::string& dir);

// Parameter blobs (all named state vectors of the network) plus a header
// describing the architecture the blob belongs to.
void saveMemberModel(const TrainedSfcn& member, std::uint16_t roi, int memberIndex,
                     const std::string& path);
// Rebuilds the network from the stored header and loads its state.
TrainedSfcn loadMemberModel(const std::string& path);

}  // namespace atlasforge
