#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atlasforge/eval.hpp"
#include "atlasforge/manifest.hpp"

namespace atlasforge {

struct PrepOptions {
  std::string manifestPath;
  std::string outDir;
  std::string referenceId;  // empty: first template
  bool verbose = false;
};
// Histogram-matches every image to the reference and warps every template
// onto every target and test grid. Writes prep.json into outDir.
void runPrep(const PrepOptions& opt);

struct GeometryOptions {
  std::string prepManifestPath;
  int dilationRadius = 3;
  std::string outPath;
  bool verbose = false;
};
void runGeometry(const GeometryOptions& opt);

struct SampleOptions {
  std::string prepManifestPath;
  std::string geometryPath;
  int roi = 0;
  int count = 1000;
  int k = 3;
  std::uint64_t seed = 0;
  double searchRadiusFactor = 0.75;
  std::string outDir;
  bool verbose = false;
};
void runSample(const SampleOptions& opt);

struct TrainOptions {
  std::string samplesDir;
  std::string geometryPath;
  std::string outDir;
  int roi = 0;
  int members = 3;
  double learningRate = 0.01;
  std::uint64_t seed = 0;
  std::vector<double> widthMultipliers;  // empty: {1.0, 0.75, 1.25}
  int batchSize = 2;
  int warmupEpochs = 5;
  int maxEpochs = 15;
  bool verbose = false;
};
void runTrain(const TrainOptions& opt);

struct SegmentOptions {
  std::string prepManifestPath;
  std::string geometryPath;
  std::string imageRef;  // test id or prepped image path
  std::string modelsDir;
  std::string outPath;
  std::string confidencePath;  // empty: skip
  bool verbose = false;
};
void runSegment(const SegmentOptions& opt);

struct EvaluateOptions {
  std::vector<std::string> predPaths;
  std::vector<std::string> truthPaths;
  std::vector<std::uint16_t> rois;
  std::string outPath;  // empty: skip writing
  bool verbose = false;
};
EvaluationReport runEvaluate(const EvaluateOptions& opt);

}  // namespace atlasforge
