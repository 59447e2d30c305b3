#pragma once

#include <string>
#include <vector>

#include "atlasforge/nn.hpp"

namespace atlasforge {

enum class OpKind { Input, Conv, Deconv, MaxPool, BatchNorm, ReLU, Dropout, Concat, CropLike };

// Named view of one state vector (weights, bias, gamma, beta, running
// stats). `grads` is null for state that SGD does not touch.
struct ParamRef {
  std::string name;
  std::vector<double>* values = nullptr;
  std::vector<double>* grads = nullptr;
  int fanIn = 0;
};

// Ordered layer graph. Nodes are appended in topological order; node ids
// are indices into the list. Forward caches every node output; backward
// walks the list in reverse, accumulating gradients where an output feeds
// several consumers.
class Network {
 public:
  int addInput(const std::string& name);
  int addConv(const std::string& name, int input, int cIn, int cOut,
              const std::array<int, 3>& kernel, int stride, const std::array<int, 3>& pad);
  int addDeconv(const std::string& name, int input, int cIn, int cOut,
                const std::array<int, 3>& kernel, int stride, const std::array<int, 3>& pad);
  int addMaxPool(const std::string& name, int input);
  int addBatchNorm(const std::string& name, int input, int channels);
  int addReLU(const std::string& name, int input);
  int addDropout(const std::string& name, int input, double p);
  int addConcat(const std::string& name, const std::vector<int>& inputs);
  // Crops the input spatially (leading region kept) to match the reference
  // node's output extents; a no-op when they already agree.
  int addCropLike(const std::string& name, int input, int reference);
  void setOutput(int node) { output_ = node; }
  int outputNode() const { return output_; }

  // Runs the graph; `inputs` follow addInput order. The returned reference
  // stays valid until the next forward call.
  const Tensor5& forward(const std::vector<const Tensor5*>& inputs, bool train, Rng* rng);
  // Propagates a gradient at the output node back through the cached
  // forward state, filling parameter gradients.
  void backward(const Tensor5& gradAtOutput);

  void initParams(Rng& rng);  // U[-1/sqrt(fanIn), 1/sqrt(fanIn)] weights, zero biases
  void zeroGrads();
  void sgd(double lr);

  std::vector<ParamRef> trainableParams();
  std::vector<ParamRef> allState();  // trainable + running statistics, stable order

  const Tensor5& nodeOutput(int id) const { return nodes_[id].out; }
  const Tensor5& inputGrad(int id) const { return nodes_[id].grad; }

  // Flattened copies of all state, for best-epoch snapshots and byte-level
  // identity checks.
  std::vector<std::vector<double>> snapshotState() const;
  void restoreState(const std::vector<std::vector<double>>& snap);
  std::vector<std::uint8_t> stateBytes() const;

 private:
  struct Node {
    OpKind kind;
    std::string name;
    std::vector<int> inputs;
    ConvParams conv;
    ConvGrads convGrads;
    int fanIn = 0;
    BatchNormState bn;
    std::vector<double> bnGammaGrad, bnBetaGrad;
    double dropoutP = 0.0;
    int cropRef = -1;
    // forward caches
    Tensor5 out;
    Tensor5 grad;
    MaxPoolResult pool;
    BatchNormAux bnAux;
    Tensor5 dropMask;
  };

  int push(Node n);
  std::vector<Node> nodes_;
  std::vector<int> inputIds_;
  int output_ = -1;
};

}  // namespace atlasforge
