#pragma once

#include <string>
#include <utility>
#include <vector>

#include "atlasforge/geometry.hpp"

namespace atlasforge {

// Dice overlap 2|a n b| / (|a| + |b|). Two empty masks count as perfect
// agreement (1.0).
double dsc(const BinaryMask& a, const BinaryMask& b);

struct RoiScore {
  std::uint16_t roi = 0;  // 0 marks the all-labels row
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvaluationReport {
  std::vector<RoiScore> rois;
  RoiScore allLabels;  // foreground-vs-foreground union of all labels
};

// Scores each (predicted, truth) volume pair: per-ROI overlap of the
// binarized masks plus the overall foreground overlap, aggregated into
// mean and (population) standard deviation over the pairs.
EvaluationReport evaluate(const std::vector<std::pair<const Volume*, const Volume*>>& pairs,
                          const std::vector<std::uint16_t>& roiIds);

void writeReportJson(const EvaluationReport& report, const std::string& path);

}  // namespace atlasforge
