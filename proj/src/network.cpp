#include "atlasforge/network.hpp"

#include <algorithm>
#include <cstring>

namespace atlasforge {

int Network::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Network::addInput(const std::string& name) {
  Node n;
  n.kind = OpKind::Input;
  n.name = name;
  int id = push(std::move(n));
  inputIds_.push_back(id);
  return id;
}

int Network::addConv(const std::string& name, int input, int cIn, int cOut,
                     const std::array<int, 3>& kernel, int stride,
                     const std::array<int, 3>& pad) {
  Node n;
  n.kind = OpKind::Conv;
  n.name = name;
  n.inputs = {input};
  n.conv.weights = Tensor5(cOut, cIn, kernel[0], kernel[1], kernel[2]);
  n.conv.bias.assign(cOut, 0.0);
  n.conv.stride = stride;
  n.conv.pad = pad;
  n.fanIn = cIn * kernel[0] * kernel[1] * kernel[2];
  return push(std::move(n));
}

int Network::addDeconv(const std::string& name, int input, int cIn, int cOut,
                       const std::array<int, 3>& kernel, int stride,
                       const std::array<int, 3>& pad) {
  Node n;
  n.kind = OpKind::Deconv;
  n.name = name;
  n.inputs = {input};
  n.conv.weights = Tensor5(cIn, cOut, kernel[0], kernel[1], kernel[2]);  // dim0 = inputs
  n.conv.bias.assign(cOut, 0.0);
  n.conv.stride = stride;
  n.conv.pad = pad;
  n.fanIn = cIn * kernel[0] * kernel[1] * kernel[2];
  return push(std::move(n));
}

int Network::addMaxPool(const std::string& name, int input) {
  Node n;
  n.kind = OpKind::MaxPool;
  n.name = name;
  n.inputs = {input};
  return push(std::move(n));
}

int Network::addBatchNorm(const std::string& name, int input, int channels) {
  Node n;
  n.kind = OpKind::BatchNorm;
  n.name = name;
  n.inputs = {input};
  n.bn = BatchNormState(channels);
  return push(std::move(n));
}

int Network::addReLU(const std::string& name, int input) {
  Node n;
  n.kind = OpKind::ReLU;
  n.name = name;
  n.inputs = {input};
  return push(std::move(n));
}

int Network::addDropout(const std::string& name, int input, double p) {
  Node n;
  n.kind = OpKind::Dropout;
  n.name = name;
  n.inputs = {input};
  n.dropoutP = p;
  return push(std::move(n));
}

int Network::addConcat(const std::string& name, const std::vector<int>& inputs) {
  Node n;
  n.kind = OpKind::Concat;
  n.name = name;
  n.inputs = inputs;
  return push(std::move(n));
}

int Network::addCropLike(const std::string& name, int input, int reference) {
  Node n;
  n.kind = OpKind::CropLike;
  n.name = name;
  n.inputs = {input};
  n.cropRef = reference;
  return push(std::move(n));
}

const Tensor5& Network::forward(const std::vector<const Tensor5*>& inputs, bool train, Rng* rng) {
  if (inputs.size() != inputIds_.size())
    throw InvalidArgumentError("network expects " + std::to_string(inputIds_.size()) +
                               " inputs, got " + std::to_string(inputs.size()));
  if (output_ < 0) throw InvalidArgumentError("network has no output node");

  for (std::size_t i = 0; i < inputIds_.size(); ++i) nodes_[inputIds_[i]].out = *inputs[i];

  for (Node& n : nodes_) {
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv:
        n.out = conv3dForward(nodes_[n.inputs[0]].out, n.conv);
        break;
      case OpKind::Deconv:
        n.out = deconv3dForward(nodes_[n.inputs[0]].out, n.conv);
        break;
      case OpKind::MaxPool:
        n.pool = maxpool3dForward(nodes_[n.inputs[0]].out);
        n.out = n.pool.y;
        break;
      case OpKind::BatchNorm:
        n.out = batchnormForward(nodes_[n.inputs[0]].out, n.bn, train, &n.bnAux);
        break;
      case OpKind::ReLU:
        n.out = reluForward(nodes_[n.inputs[0]].out);
        break;
      case OpKind::Dropout:
        n.out = dropoutForward(nodes_[n.inputs[0]].out, n.dropoutP, rng, train, &n.dropMask);
        break;
      case OpKind::Concat: {
        std::vector<const Tensor5*> parts;
        for (int id : n.inputs) parts.push_back(&nodes_[id].out);
        n.out = concatChannels(parts);
        break;
      }
      case OpKind::CropLike: {
        const Tensor5& in = nodes_[n.inputs[0]].out;
        const Tensor5& ref = nodes_[n.cropRef].out;
        if (in.d < ref.d || in.h < ref.h || in.w < ref.w)
          throw DimsMismatchError("cropLike: input smaller than reference");
        if (in.d == ref.d && in.h == ref.h && in.w == ref.w) {
          n.out = in;
          break;
        }
        Tensor5 y(in.n, in.c, ref.d, ref.h, ref.w);
        for (int b = 0; b < in.n; ++b)
          for (int c = 0; c < in.c; ++c)
            for (int d = 0; d < ref.d; ++d)
              for (int h = 0; h < ref.h; ++h)
                std::copy_n(&in.data[in.index(b, c, d, h, 0)], ref.w,
                            &y.data[y.index(b, c, d, h, 0)]);
        n.out = std::move(y);
        break;
      }
    }
  }
  return nodes_[output_].out;
}

void Network::backward(const Tensor5& gradAtOutput) {
  for (Node& n : nodes_) {
    n.grad = Tensor5::zerosLike(n.out);
  }
  if (!gradAtOutput.sameShape(nodes_[output_].out))
    throw DimsMismatchError("backward: gradient shape does not match output");
  nodes_[output_].grad = gradAtOutput;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv: {
        ConvGrads g = conv3dBackward(nodes_[n.inputs[0]].out, n.conv, n.grad);
        for (std::size_t i = 0; i < g.w.size(); ++i) n.convGrads.w.data[i] += g.w.data[i];
        for (std::size_t i = 0; i < g.b.size(); ++i) n.convGrads.b[i] += g.b[i];
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.x.data[i];
        break;
      }
      case OpKind::Deconv: {
        ConvGrads g = deconv3dBackward(nodes_[n.inputs[0]].out, n.conv, n.grad);
        for (std::size_t i = 0; i < g.w.size(); ++i) n.convGrads.w.data[i] += g.w.data[i];
        for (std::size_t i = 0; i < g.b.size(); ++i) n.convGrads.b[i] += g.b[i];
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.x.data[i];
        break;
      }
      case OpKind::MaxPool: {
        Tensor5 g = maxpool3dBackward(nodes_[n.inputs[0]].out, n.pool, n.grad);
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
        break;
      }
      case OpKind::BatchNorm: {
        BatchNormGrads g = batchnormBackward(n.grad, n.bn, n.bnAux);
        for (std::size_t i = 0; i < g.gamma.size(); ++i) {
          n.bnGammaGrad[i] += g.gamma[i];
          n.bnBetaGrad[i] += g.beta[i];
        }
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.x.data[i];
        break;
      }
      case OpKind::ReLU: {
        Tensor5 g = reluBackward(nodes_[n.inputs[0]].out, n.grad);
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
        break;
      }
      case OpKind::Dropout: {
        Tensor5 g = dropoutApplyMask(n.grad, n.dropMask);
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
        break;
      }
      case OpKind::Concat: {
        std::vector<int> widths;
        for (int in : n.inputs) widths.push_back(nodes_[in].out.c);
        std::vector<Tensor5> parts = splitChannels(n.grad, widths);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Tensor5& dst = nodes_[n.inputs[k]].grad;
          for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += parts[k].data[i];
        }
        break;
      }
      case OpKind::CropLike: {
        Tensor5& dst = nodes_[n.inputs[0]].grad;
        // Zero-pad the gradient back onto the uncropped extents.
        for (int b = 0; b < n.grad.n; ++b)
          for (int c = 0; c < n.grad.c; ++c)
            for (int d = 0; d < n.grad.d; ++d)
              for (int h = 0; h < n.grad.h; ++h) {
                const double* src = &n.grad.data[n.grad.index(b, c, d, h, 0)];
                double* out = &dst.data[dst.index(b, c, d, h, 0)];
                for (int w = 0; w < n.grad.w; ++w) out[w] += src[w];
              }
        break;
      }
    }
  }
}

void Network::initParams(Rng& rng) {
  for (Node& n : nodes_) {
    if (n.kind == OpKind::Conv || n.kind == OpKind::Deconv) {
      n.conv.weights = initUniform(n.conv.weights.n, n.conv.weights.c, n.conv.weights.d,
                                   n.conv.weights.h, n.conv.weights.w, n.fanIn, rng);
      std::fill(n.conv.bias.begin(), n.conv.bias.end(), 0.0);
    } else if (n.kind == OpKind::BatchNorm) {
      std::fill(n.bn.gamma.begin(), n.bn.gamma.end(), 1.0);
      std::fill(n.bn.beta.begin(), n.bn.beta.end(), 0.0);
      std::fill(n.bn.runningMean.begin(), n.bn.runningMean.end(), 0.0);
      std::fill(n.bn.runningVar.begin(), n.bn.runningVar.end(), 1.0);
    }
  }
  zeroGrads();
}

void Network::zeroGrads() {
  for (Node& n : nodes_) {
    if (n.kind == OpKind::Conv || n.kind == OpKind::Deconv) {
      n.convGrads.w = Tensor5::zerosLike(n.conv.weights);
      n.convGrads.b.assign(n.conv.bias.size(), 0.0);
    } else if (n.kind == OpKind::BatchNorm) {
      n.bnGammaGrad.assign(n.bn.gamma.size(), 0.0);
      n.bnBetaGrad.assign(n.bn.beta.size(), 0.0);
    }
  }
}

void Network::sgd(double lr) {
  for (ParamRef& p : trainableParams()) sgdStep(*p.values, *p.grads, lr);
}

std::vector<ParamRef> Network::trainableParams() {
  std::vector<ParamRef> out;
  for (Node& n : nodes_) {
    if (n.kind == OpKind::Conv || n.kind == OpKind::Deconv) {
      out.push_back({n.name + ".weight", &n.conv.weights.data, &n.convGrads.w.data, n.fanIn});
      out.push_back({n.name + ".bias", &n.conv.bias, &n.convGrads.b, n.fanIn});
    } else if (n.kind == OpKind::BatchNorm) {
      out.push_back({n.name + ".gamma", &n.bn.gamma, &n.bnGammaGrad, 1});
      out.push_back({n.name + ".beta", &n.bn.beta, &n.bnBetaGrad, 1});
    }
  }
  return out;
}

std::vector<ParamRef> Network::allState() {
  std::vector<ParamRef> out = trainableParams();
  for (Node& n : nodes_) {
    if (n.kind == OpKind::BatchNorm) {
      out.push_back({n.name + ".running_mean", &n.bn.runningMean, nullptr, 1});
      out.push_back({n.name + ".running_var", &n.bn.runningVar, nullptr, 1});
    }
  }
  return out;
}

std::vector<std::vector<double>> Network::snapshotState() const {
  std::vector<std::vector<double>> snap;
  for (const ParamRef& p : const_cast<Network*>(this)->allState()) snap.push_back(*p.values);
  return snap;
}

void Network::restoreState(const std::vector<std::vector<double>>& snap) {
  auto refs = allState();
  if (snap.size() != refs.size()) throw InvalidArgumentError("state snapshot size mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (snap[i].size() != refs[i].values->size())
      throw InvalidArgumentError("state snapshot entry size mismatch");
    *refs[i].values = snap[i];
  }
}

std::vector<std::uint8_t> Network::stateBytes() const {
  std::vector<std::uint8_t> bytes;
  for (const ParamRef& p : const_cast<Network*>(this)->allState()) {
    const std::size_t off = bytes.size();
    bytes.resize(off + p.values->size() * sizeof(double));
    std::memcpy(bytes.data() + off, p.values->data(), p.values->size() * sizeof(double));
  }
  return bytes;
}

}  // namespace atlasforge
