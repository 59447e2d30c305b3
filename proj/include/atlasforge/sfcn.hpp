#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "atlasforge/network.hpp"
#include "atlasforge/patchsearch.hpp"

namespace atlasforge {

// Architecture description of one multi-atlas guided FCN. Channel widths
// are the base configuration; `widthMultiplier` rescales every hidden
// width to the nearest even count (minimum 2), the 2-channel head is fixed.
struct SFCNSpec {
  int k = 3;
  std::array<int, 3> patchSize{0, 0, 0};
  double widthMultiplier = 1.0;
  std::array<int, 2> branchChannels{32, 64};
  std::array<int, 7> encoderChannels{256, 64, 128, 128, 256, 256, 512};
  std::array<int, 10> decoderChannels{768, 256, 256, 384, 128, 128, 192, 64, 64, 2};
  double dropout = 0.1;

  int scaled(int base) const;
};

// Network wiring:
//   - per input patch (target image; K image+label pairs), a branch of
//     conv+BN+ReLU x2 and a 2x2x2 max pool;
//   - branch outputs concatenated into a 7-conv encoder (3^3, stride 1,
//     BN+ReLU) with a stride-2 downsampling conv stage after encoder
//     layers 3 and 6;
//   - a 10-layer decoder of transposed convolutions (stride-2 2^3 kernels
//     at layers 1, 4 and 9, 3^3 elsewhere), each non-final layer followed
//     by ReLU and dropout;
//   - long skips concatenate encoder layer 6 (after decoder layer 1),
//     encoder layer 3 (after layer 4) and the target branch output (after
//     layer 7);
//   - the final 2-channel layer emits logits for a per-voxel softmax.
Network buildSfcn(const SFCNSpec& spec);

struct SfcnBatch {
  std::vector<Tensor5> inputs;  // target patch, then the K atlas pairs
  Tensor5 targets;              // (n,1,d,h,w) in {0,1}
};
SfcnBatch assembleBatch(const std::vector<const TrainingSample*>& samples, const SFCNSpec& spec,
                        bool withTargets);

// Per-voxel foreground/background probabilities for one sample.
Tensor5 forwardSfcn(Network& net, const SFCNSpec& spec, const TrainingSample& sample, bool train,
                    Rng* rng);

// Binarizes the foreground channel at the strict 0.5 threshold (0.5 itself
// maps to background) and scores against the sample mask. Both empty -> 1.
double dscFromProbability(const Tensor5& probabilities, const Volume& y);

double validateDsc(Network& net, const SFCNSpec& spec, const std::vector<TrainingSample>& samples);

struct TrainConfig {
  int batchSize = 2;
  int warmupEpochs = 5;
  int maxEpochs = 15;
  double learningRate = 0.01;
  std::uint64_t seed = 0;
};

// Validation-score stopping rule: track the maximum over the warmup
// epochs, keep raising it afterwards, and stop at the first later epoch
// strictly below the running maximum.
class EarlyStopper {
 public:
  EarlyStopper(int warmupEpochs, int maxEpochs)
      : warmup_(warmupEpochs), maxEpochs_(maxEpochs) {}

  // Feeds the score of a finished 1-based epoch. Returns true when
  // training should stop. `improved()` tells whether this epoch became the
  // new best.
  bool observe(int epoch, double score);
  bool improved() const { return improved_; }
  int bestEpoch() const { return bestEpoch_; }
  double bestScore() const { return best_; }

 private:
  int warmup_, maxEpochs_;
  double best_ = -1.0;
  int bestEpoch_ = 0;
  bool improved_ = false;
};

struct EpochStats {
  double meanLoss = 0.0;
  double valDsc = 0.0;
};

struct TrainedSfcn {
  SFCNSpec spec;
  Network net;
  std::vector<EpochStats> history;
  int bestEpoch = 0;
  int stoppedEpoch = 0;
};

TrainedSfcn trainSfcn(const SFCNSpec& spec, const std::vector<TrainingSample>& trainSet,
                      const std::vector<TrainingSample>& valSet, const TrainConfig& config);

}  // namespace atlasforge
