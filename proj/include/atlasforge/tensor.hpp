#pragma once

#include <cstdint>
#include <vector>

#include "atlasforge/errors.hpp"

namespace atlasforge {

// Dense 5-D array (batch, channels, depth, height, width), w fastest.
struct Tensor5 {
  int n = 0, c = 0, d = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor5() = default;
  Tensor5(int n_, int c_, int d_, int h_, int w_)
      : n(n_), c(c_), d(d_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * d_ * h_ * w_, 0.0) {
    if (n_ < 1 || c_ < 1 || d_ < 1 || h_ < 1 || w_ < 1)
      throw InvalidArgumentError("tensor dims must be >= 1");
  }

  std::size_t size() const { return data.size(); }
  std::int64_t spatialSize() const { return static_cast<std::int64_t>(d) * h * w; }

  std::size_t index(int in, int ic, int id, int ih, int iw) const {
    return ((((static_cast<std::size_t>(in) * c + ic) * d + id) * h + ih) * w) + iw;
  }
  double& at(int in, int ic, int id, int ih, int iw) { return data[index(in, ic, id, ih, iw)]; }
  double at(int in, int ic, int id, int ih, int iw) const {
    return data[index(in, ic, id, ih, iw)];
  }

  bool sameShape(const Tensor5& o) const {
    return n == o.n && c == o.c && d == o.d && h == o.h && w == o.w;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  static Tensor5 zerosLike(const Tensor5& t) { return Tensor5(t.n, t.c, t.d, t.h, t.w); }
};

inline double dot(const Tensor5& a, const Tensor5& b) {
  if (!a.sameShape(b)) throw DimsMismatchError("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

}  // namespace atlasforge
