#include "atlasforge/sfcn.hpp"

#include <cmath>
#include <limits>

namespace atlasforge {

int SFCNSpec::scaled(int base) const {
  const double w = base * widthMultiplier;
  int even = 2 * static_cast<int>(std::lround(w / 2.0));
  return std::max(2, even);
}

Network buildSfcn(const SFCNSpec& spec) {
  if (spec.k < 1) throw InvalidArgumentError("sfcn needs k >= 1");
  for (int a = 0; a < 3; ++a)
    if (spec.patchSize[a] < 8)
      throw InvalidArgumentError("patch too small to survive the downsampling stages");
  // The listed skip-stage widths must agree with the widths they join.
  if (spec.decoderChannels[0] != spec.encoderChannels[6] + spec.encoderChannels[5] ||
      spec.decoderChannels[3] != spec.decoderChannels[2] + spec.encoderChannels[2] ||
      spec.decoderChannels[6] != spec.decoderChannels[5] + spec.branchChannels[1])
    throw InvalidArgumentError("sfcn width configuration is inconsistent");

  const int b1 = spec.scaled(spec.branchChannels[0]);
  const int b2 = spec.scaled(spec.branchChannels[1]);
  std::array<int, 7> enc;
  for (int i = 0; i < 7; ++i) enc[i] = spec.scaled(spec.encoderChannels[i]);
  const int d2 = spec.scaled(spec.decoderChannels[1]);
  const int d3 = spec.scaled(spec.decoderChannels[2]);
  const int d5 = spec.scaled(spec.decoderChannels[4]);
  const int d6 = spec.scaled(spec.decoderChannels[5]);
  const int d7 = spec.scaled(spec.decoderChannels[5]);
  const int d8 = spec.scaled(spec.decoderChannels[7]);
  const int d9 = spec.scaled(spec.decoderChannels[8]);

  const std::array<int, 3> k3{3, 3, 3}, k2{2, 2, 2}, p1{1, 1, 1}, p0{0, 0, 0};

  Network net;
  const int inTarget = net.addInput("in.target");
  std::vector<int> branchOuts;

  auto branch = [&](const std::string& prefix, int input, int cIn) {
    int c = net.addConv(prefix + ".conv1", input, cIn, b1, k3, 1, p1);
    c = net.addBatchNorm(prefix + ".bn1", c, b1);
    c = net.addReLU(prefix + ".relu1", c);
    c = net.addConv(prefix + ".conv2", c, b1, b2, k3, 1, p1);
    c = net.addBatchNorm(prefix + ".bn2", c, b2);
    c = net.addReLU(prefix + ".relu2", c);
    return net.addMaxPool(prefix + ".pool", c);
  };

  branchOuts.push_back(branch("branch0", inTarget, 1));
  for (int i = 1; i <= spec.k; ++i) {
    const int in = net.addInput("in.atlas" + std::to_string(i));
    branchOuts.push_back(branch("branch" + std::to_string(i), in, 2));
  }
  const int targetBranchOut = branchOuts[0];
  const int trunk = net.addConcat("trunk.concat", branchOuts);

  auto encStage = [&](const std::string& name, int input, int cIn, int cOut, int stride) {
    int c = net.addConv(name, input, cIn, cOut, k3, stride, p1);
    c = net.addBatchNorm(name + ".bn", c, cOut);
    return net.addReLU(name + ".relu", c);
  };

  int e = encStage("enc.conv1", trunk, (spec.k + 1) * b2, enc[0], 1);
  e = encStage("enc.conv2", e, enc[0], enc[1], 1);
  const int enc3 = encStage("enc.conv3", e, enc[1], enc[2], 1);
  e = encStage("enc.down1", enc3, enc[2], enc[2], 2);
  e = encStage("enc.conv4", e, enc[2], enc[3], 1);
  e = encStage("enc.conv5", e, enc[3], enc[4], 1);
  const int enc6 = encStage("enc.conv6", e, enc[4], enc[5], 1);
  e = encStage("enc.down2", enc6, enc[5], enc[5], 2);
  const int enc7 = encStage("enc.conv7", e, enc[5], enc[6], 1);

  auto decStage = [&](const std::string& name, int input, int cIn, int cOut, bool upsample) {
    int c = upsample ? net.addDeconv(name, input, cIn, cOut, k2, 2, p0)
                     : net.addDeconv(name, input, cIn, cOut, k3, 1, p1);
    c = net.addReLU(name + ".relu", c);
    return net.addDropout(name + ".drop", c, spec.dropout);
  };

  int d = decStage("dec.up1", enc7, enc[6], enc[6], true);
  d = net.addCropLike("dec.up1.crop", d, enc6);
  d = net.addConcat("dec.skip1", {d, enc6});
  d = decStage("dec.conv2", d, enc[6] + enc[5], d2, false);
  d = decStage("dec.conv3", d, d2, d3, false);
  d = decStage("dec.up2", d, d3, d3, true);
  d = net.addCropLike("dec.up2.crop", d, enc3);
  d = net.addConcat("dec.skip2", {d, enc3});
  d = decStage("dec.conv5", d, d3 + enc[2], d5, false);
  d = decStage("dec.conv6", d, d5, d6, false);
  d = decStage("dec.conv7", d, d6, d7, false);
  d = net.addConcat("dec.skip3", {d, targetBranchOut});
  d = decStage("dec.conv8", d, d7 + b2, d8, false);
  d = decStage("dec.up3", d, d8, d9, true);
  d = net.addCropLike("dec.up3.crop", d, inTarget);
  // Final layer emits logits; the softmax head is applied by the caller.
  d = net.addDeconv("dec.conv10", d, d9, 2, k3, 1, p1);
  net.setOutput(d);
  return net;
}

SfcnBatch assembleBatch(const std::vector<const TrainingSample*>& samples, const SFCNSpec& spec,
                        bool withTargets) {
  if (samples.empty()) throw InvalidArgumentError("assembleBatch: empty batch");
  const int n = static_cast<int>(samples.size());
  const int D = spec.patchSize[2], H = spec.patchSize[1], W = spec.patchSize[0];

  auto checkDims = [&](const Volume& v) {
    if (v.dims().x != static_cast<std::uint32_t>(W) ||
        v.dims().y != static_cast<std::uint32_t>(H) ||
        v.dims().z != static_cast<std::uint32_t>(D))
      throw DimsMismatchError("sample patch does not match the configured patch size");
  };

  SfcnBatch batch;
  batch.inputs.emplace_back(n, 1, D, H, W);
  for (int k = 0; k < spec.k; ++k) batch.inputs.emplace_back(n, 2, D, H, W);
  if (withTargets) batch.targets = Tensor5(n, 1, D, H, W);

  const std::size_t spatial = static_cast<std::size_t>(D) * H * W;
  for (int i = 0; i < n; ++i) {
    const TrainingSample& s = *samples[i];
    if (static_cast<int>(s.atlasImages.size()) != spec.k ||
        static_cast<int>(s.atlasLabels.size()) != spec.k)
      throw DimsMismatchError("sample has a different atlas count than the network");
    checkDims(s.x);
    const auto& xf = s.x.floats();
    double* out = &batch.inputs[0].data[batch.inputs[0].index(i, 0, 0, 0, 0)];
    for (std::size_t v = 0; v < spatial; ++v) out[v] = xf[v];
    for (int k = 0; k < spec.k; ++k) {
      checkDims(s.atlasImages[k]);
      checkDims(s.atlasLabels[k]);
      const auto& pf = s.atlasImages[k].floats();
      const auto& lf = s.atlasLabels[k].labels();
      Tensor5& t = batch.inputs[k + 1];
      double* img = &t.data[t.index(i, 0, 0, 0, 0)];
      double* lab = &t.data[t.index(i, 1, 0, 0, 0)];
      for (std::size_t v = 0; v < spatial; ++v) {
        img[v] = pf[v];
        lab[v] = lf[v];
      }
    }
    if (withTargets) {
      checkDims(s.y);
      const auto& yl = s.y.labels();
      double* t = &batch.targets.data[batch.targets.index(i, 0, 0, 0, 0)];
      for (std::size_t v = 0; v < spatial; ++v) t[v] = yl[v];
    }
  }
  return batch;
}

Tensor5 forwardSfcn(Network& net, const SFCNSpec& spec, const TrainingSample& sample, bool train,
                    Rng* rng) {
  SfcnBatch batch = assembleBatch({&sample}, spec, false);
  std::vector<const Tensor5*> ins;
  for (const Tensor5& t : batch.inputs) ins.push_back(&t);
  return softmaxChannels(net.forward(ins, train, rng));
}

double dscFromProbability(const Tensor5& probabilities, const Volume& y) {
  if (probabilities.c != 2) throw DimsMismatchError("expected 2-channel probabilities");
  const auto& lab = y.labels();
  const std::size_t spatial =
      static_cast<std::size_t>(probabilities.d) * probabilities.h * probabilities.w;
  if (lab.size() != spatial) throw DimsMismatchError("mask does not match probability extents");
  std::uint64_t inter = 0, a = 0, b = 0;
  const double* fg = &probabilities.data[spatial];  // channel 1 of sample 0
  for (std::size_t i = 0; i < spatial; ++i) {
    const bool pred = fg[i] > 0.5;  // 0.5 itself is background
    const bool truth = lab[i] != 0;
    a += pred;
    b += truth;
    inter += pred && truth;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double validateDsc(Network& net, const SFCNSpec& spec, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw InvalidArgumentError("validateDsc needs >= 1 sample");
  double acc = 0.0;
  for (const TrainingSample& s : samples)
    acc += dscFromProbability(forwardSfcn(net, spec, s, false, nullptr), s.y);
  return acc / static_cast<double>(samples.size());
}

bool EarlyStopper::observe(int epoch, double score) {
  improved_ = score > best_;
  if (improved_) {
    best_ = score;
    bestEpoch_ = epoch;
  }
  if (epoch >= maxEpochs_) return true;
  return epoch > warmup_ && score < best_;
}

TrainedSfcn trainSfcn(const SFCNSpec& spec, const std::vector<TrainingSample>& trainSet,
                      const std::vector<TrainingSample>& valSet, const TrainConfig& config) {
  if (trainSet.empty() || valSet.empty())
    throw InvalidArgumentError("training and validation sets must be non-empty");
  if (config.warmupEpochs < 1) throw InvalidArgumentError("warmupEpochs must be >= 1");
  if (config.batchSize < 1) throw InvalidArgumentError("batchSize must be >= 1");

  TrainedSfcn result;
  result.spec = spec;
  result.net = buildSfcn(spec);
  Rng rng(config.seed);
  result.net.initParams(rng);

  std::vector<std::size_t> order(trainSet.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  EarlyStopper stopper(config.warmupEpochs, config.maxEpochs);
  std::vector<std::vector<double>> bestState;

  for (int epoch = 1; epoch <= config.maxEpochs; ++epoch) {
    rng.shuffle(order);
    double lossSum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += config.batchSize) {
      std::vector<const TrainingSample*> chunk;
      for (std::size_t i = at; i < std::min(order.size(), at + config.batchSize); ++i)
        chunk.push_back(&trainSet[order[i]]);
      SfcnBatch batch = assembleBatch(chunk, spec, true);
      std::vector<const Tensor5*> ins;
      for (const Tensor5& t : batch.inputs) ins.push_back(&t);
      const Tensor5& logits = result.net.forward(ins, true, &rng);
      XentResult xent = crossEntropy(softmaxChannels(logits), batch.targets);
      if (!std::isfinite(xent.loss)) throw DivergenceError("training loss is not finite");
      lossSum += xent.loss * static_cast<double>(chunk.size());
      result.net.zeroGrads();
      result.net.backward(xent.gradLogits);
      result.net.sgd(config.learningRate);
    }
    EpochStats stats;
    stats.meanLoss = lossSum / static_cast<double>(trainSet.size());
    stats.valDsc = validateDsc(result.net, spec, valSet);
    result.history.push_back(stats);

    const bool stop = stopper.observe(epoch, stats.valDsc);
    if (stopper.improved()) bestState = result.net.snapshotState();
    result.stoppedEpoch = epoch;
    if (stop) break;
  }
  result.bestEpoch = stopper.bestEpoch();
  result.net.restoreState(bestState);
  return result;
}

}  // namespace atlasforge
