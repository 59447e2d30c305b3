#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "atlasforge/rng.hpp"
#include "atlasforge/tensor.hpp"

namespace atlasforge {

// Shared parameter block for convolution and transposed convolution.
// weights shape: (dim0, dim1, kd, kh, kw). For convolution dim0 indexes
// output channels and dim1 input channels; a transposed convolution reads
// the same layout with dim0 as ITS input channels and dim1 as its outputs,
// which makes deconv3dForward the exact adjoint of conv3dForward for equal
// weights.
struct ConvParams {
  Tensor5 weights;            // (dim0, dim1, kd, kh, kw)
  std::vector<double> bias;   // one per output channel of the op
  int stride = 1;
  std::array<int, 3> pad{0, 0, 0};  // (pd, ph, pw)
};

struct ConvGrads {
  Tensor5 x;
  Tensor5 w;
  std::vector<double> b;
};

// Cross-correlation semantics (no kernel flip), zero padding, stride s.
// Output spatial extent per axis: (D + 2p - k) / s + 1 (floored).
Tensor5 conv3dForward(const Tensor5& x, const ConvParams& p);
ConvGrads conv3dBackward(const Tensor5& x, const ConvParams& p, const Tensor5& gradOut);

// Transposed convolution; output spatial extent: (D - 1) * s - 2p + k.
Tensor5 deconv3dForward(const Tensor5& x, const ConvParams& p);
ConvGrads deconv3dBackward(const Tensor5& x, const ConvParams& p, const Tensor5& gradOut);

// 2x2x2 max pooling with stride 2. Odd extents are padded by a -inf
// sentinel, so output extents are ceil(D/2). argmax holds the flat input
// index backing each output element; ties take the first index in scan
// order.
struct MaxPoolResult {
  Tensor5 y;
  std::vector<std::int64_t> argmax;
};
MaxPoolResult maxpool3dForward(const Tensor5& x);
Tensor5 maxpool3dBackward(const Tensor5& x, const MaxPoolResult& fwd, const Tensor5& gradOut);

struct BatchNormState {
  std::vector<double> gamma, beta;
  std::vector<double> runningMean, runningVar;
  double momentum = 0.1;
  double epsilon = 1e-5;

  explicit BatchNormState(int channels = 0)
      : gamma(channels, 1.0), beta(channels, 0.0), runningMean(channels, 0.0),
        runningVar(channels, 1.0) {}
};

// Values saved by the forward pass for the backward pass.
struct BatchNormAux {
  std::vector<double> mean, invStd;  // per channel, stats actually used
  Tensor5 xhat;
  bool trainMode = false;
};

// train: batch statistics over (n,d,h,w) per channel; updates running stats
// with `momentum` weight on the new batch. eval: running statistics.
Tensor5 batchnormForward(const Tensor5& x, BatchNormState& state, bool train, BatchNormAux* aux);

struct BatchNormGrads {
  Tensor5 x;
  std::vector<double> gamma, beta;
};
BatchNormGrads batchnormBackward(const Tensor5& gradOut, const BatchNormState& state,
                                 const BatchNormAux& aux);

// Inverted dropout: each element is zeroed with probability p and survivors
// are scaled by 1/(1-p). The mask stores the multiplier (0 or 1/(1-p)).
// Eval mode is the identity and consumes no randomness; so is p == 0.
Tensor5 dropoutForward(const Tensor5& x, double p, Rng* rng, bool train, Tensor5* maskOut);
Tensor5 dropoutApplyMask(const Tensor5& x, const Tensor5& mask);

Tensor5 reluForward(const Tensor5& x);
// Passes gradOut where x > 0; the subgradient at exactly 0 is 0.
Tensor5 reluBackward(const Tensor5& x, const Tensor5& gradOut);

// Per-voxel softmax over the channel axis, computed with max subtraction.
Tensor5 softmaxChannels(const Tensor5& x);

// Mean negative log-likelihood over every voxel of every sample in the
// batch, with the fused softmax gradient with respect to the logits:
// (p - onehot) / (batch * voxelsPerPatch). targets: (n,1,d,h,w) in {0,1}.
struct XentResult {
  double loss = 0.0;
  Tensor5 gradLogits;
};
XentResult crossEntropy(const Tensor5& probabilities, const Tensor5& targets);

Tensor5 concatChannels(const std::vector<const Tensor5*>& parts);
std::vector<Tensor5> splitChannels(const Tensor5& x, const std::vector<int>& widths);

// p <- p - lr * g, elementwise.
void sgdStep(std::vector<double>& params, const std::vector<double>& grads, double lr);

// I.i.d. U[-1/sqrt(fanIn), 1/sqrt(fanIn)].
Tensor5 initUniform(int n, int c, int d, int h, int w, int fanIn, Rng& rng);

}  // namespace atlasforge
