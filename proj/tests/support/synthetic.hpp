#pragma once

// Synthetic two-ellipsoid datasets for integration and end-to-end tests.

#include <string>

#include "atlasforge/rng.hpp"
#include "atlasforge/volume.hpp"

namespace synth {

struct Config {
  std::uint32_t gridSize = 32;
  int templates = 3;
  int targets = 3;
  int tests = 2;
  std::uint64_t seed = 7;
  double background = 0.30;
  double roi1Intensity = 0.85;
  double roi2Intensity = 0.10;
  double noiseSigma = 0.03;
  double radius1 = 3.5;  // base semi-axes; jittered per volume
  double radius2 = 3.5;
};

struct VolumePair {
  atlasforge::Volume image;  // float32
  atlasforge::Volume label;  // label16 with rois {1, 2}
};

// One jittered instance of the two-ellipsoid phantom.
VolumePair makeVolume(const Config& cfg, atlasforge::Rng& rng);

// Writes images, labels and a manifest (identity transforms) into `dir`;
// returns the manifest path.
std::string writeDataset(const std::string& dir, const Config& cfg);

}  // namespace synth
