#pragma once

#include <cstdint>
#include <vector>

#include "atlasforge/sfcn.hpp"

namespace atlasforge {

struct EnsembleSpec {
  int members = 3;
  std::vector<double> widthMultipliers{1.0, 0.75, 1.25};
  std::vector<std::uint64_t> memberSeeds;  // derived from the base seed when empty
};

// One ROI's averaged prediction, placed back into volume space by
// (center, size) with the patch-extraction centre convention.
struct RoiPrediction {
  std::uint16_t roi = 0;
  std::array<int, 3> center{0, 0, 0};
  std::array<int, 3> size{0, 0, 0};
  std::vector<double> probability;  // foreground channel, x fastest
  std::vector<std::uint8_t> binary; // 1 iff probability > 0.5
};

// Trains `members` independent networks on the same data, each with its own
// width multiplier and its own seed governing initialization, shuffling and
// dropout.
std::vector<TrainedSfcn> trainMfcn(std::uint16_t roi, const std::vector<TrainingSample>& trainSet,
                                   const std::vector<TrainingSample>& valSet,
                                   const EnsembleSpec& ensemble, const SFCNSpec& base,
                                   const TrainConfig& config);

// Arithmetic mean of per-member foreground maps; all maps must agree in size.
std::vector<double> averageProbabilityMaps(const std::vector<const std::vector<double>*>& maps);

// Probability at or below 0.5 maps to background.
inline std::uint8_t binarizeStrict(double s) { return s > 0.5 ? 1 : 0; }

// Runs every member on the test sample in eval mode, averages the
// foreground probability maps and thresholds the average.
RoiPrediction predictRoi(std::vector<TrainedSfcn>& members, const TrainingSample& testSample,
                         std::uint16_t roi, const std::array<int, 3>& center);

// Foreground probability patch of one member, flattened x fastest.
std::vector<double> memberProbability(TrainedSfcn& member, const TrainingSample& sample);

}  // namespace atlasforge
