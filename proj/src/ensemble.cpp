#include "atlasforge/ensemble.hpp"

#include "atlasforge/rng.hpp"

namespace atlasforge {

std::vector<TrainedSfcn> trainMfcn(std::uint16_t roi, const std::vector<TrainingSample>& trainSet,
                                   const std::vector<TrainingSample>& valSet,
                                   const EnsembleSpec& ensemble, const SFCNSpec& base,
                                   const TrainConfig& config) {
  if (ensemble.members < 1) throw InvalidArgumentError("ensemble needs >= 1 member");
  if (ensemble.widthMultipliers.empty())
    throw InvalidArgumentError("ensemble needs width multipliers");

  std::vector<TrainedSfcn> members;
  members.reserve(ensemble.members);
  for (int m = 0; m < ensemble.members; ++m) {
    SFCNSpec spec = base;
    spec.widthMultiplier =
        ensemble.widthMultipliers[m % ensemble.widthMultipliers.size()];
    TrainConfig memberConfig = config;
    memberConfig.seed = m < static_cast<int>(ensemble.memberSeeds.size())
                            ? ensemble.memberSeeds[m]
                            : deriveSeed(config.seed, roi, static_cast<std::uint64_t>(m));
    members.push_back(trainSfcn(spec, trainSet, valSet, memberConfig));
  }
  return members;
}

std::vector<double> averageProbabilityMaps(const std::vector<const std::vector<double>*>& maps) {
  if (maps.empty()) throw InvalidArgumentError("averageProbabilityMaps needs >= 1 map");
  const std::size_t n = maps.front()->size();
  for (const auto* m : maps)
    if (m->size() != n) throw DimsMismatchError("probability maps differ in size");
  std::vector<double> mean(n, 0.0);
  for (const auto* m : maps)
    for (std::size_t i = 0; i < n; ++i) mean[i] += (*m)[i];
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (double& v : mean) v *= inv;
  return mean;
}

std::vector<double> memberProbability(TrainedSfcn& member, const TrainingSample& sample) {
  Tensor5 probs = forwardSfcn(member.net, member.spec, sample, false, nullptr);
  const std::size_t spatial = static_cast<std::size_t>(probs.d) * probs.h * probs.w;
  return {probs.data.begin() + spatial, probs.data.begin() + 2 * spatial};  // channel 1
}

RoiPrediction predictRoi(std::vector<TrainedSfcn>& members, const TrainingSample& testSample,
                         std::uint16_t roi, const std::array<int, 3>& center) {
  if (members.empty()) throw InvalidArgumentError("predictRoi needs >= 1 member");
  std::vector<std::vector<double>> maps;
  maps.reserve(members.size());
  for (TrainedSfcn& m : members) maps.push_back(memberProbability(m, testSample));
  std::vector<const std::vector<double>*> refs;
  for (const auto& m : maps) refs.push_back(&m);

  RoiPrediction pred;
  pred.roi = roi;
  pred.center = center;
  pred.size = {static_cast<int>(testSample.x.dims().x), static_cast<int>(testSample.x.dims().y),
               static_cast<int>(testSample.x.dims().z)};
  pred.probability = averageProbabilityMaps(refs);
  pred.binary.resize(pred.probability.size());
  for (std::size_t i = 0; i < pred.probability.size(); ++i)
    pred.binary[i] = binarizeStrict(pred.probability[i]);
  return pred;
}

}  // namespace atlasforge
