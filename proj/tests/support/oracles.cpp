#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Tensor5 conv3d(const Tensor5& x, const ConvParams& p) {
  const int co = p.weights.n, ci = p.weights.c;
  const int kd = p.weights.d, kh = p.weights.h, kw = p.weights.w;
  const int s = p.stride;
  const int od = (x.d + 2 * p.pad[0] - kd) / s + 1;
  const int oh = (x.h + 2 * p.pad[1] - kh) / s + 1;
  const int ow = (x.w + 2 * p.pad[2] - kw) / s + 1;
  Tensor5 y(x.n, co, od, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < co; ++c)
      for (int zd = 0; zd < od; ++zd)
        for (int zh = 0; zh < oh; ++zh)
          for (int zw = 0; zw < ow; ++zw) {
            double acc = p.bias[c];
            for (int ic = 0; ic < ci; ++ic)
              for (int a = 0; a < kd; ++a)
                for (int b = 0; b < kh; ++b)
                  for (int e = 0; e < kw; ++e) {
                    const int id = zd * s - p.pad[0] + a;
                    const int ih = zh * s - p.pad[1] + b;
                    const int iw = zw * s - p.pad[2] + e;
                    if (id < 0 || ih < 0 || iw < 0 || id >= x.d || ih >= x.h || iw >= x.w)
                      continue;
                    acc += p.weights.at(c, ic, a, b, e) * x.at(n, ic, id, ih, iw);
                  }
            y.at(n, c, zd, zh, zw) = acc;
          }
  return y;
}

BinaryMask roiUnion(const std::vector<const Volume*>& labels, std::uint16_t roi) {
  BinaryMask m(labels.front()->dims());
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    for (const Volume* v : labels)
      if (v->labels()[i] == roi) m.bits[i] = 1;
  return m;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  const Dims3 d = mask.dims;
  BinaryMask out(d);
  for (int z = 0; z < static_cast<int>(d.z); ++z)
    for (int y = 0; y < static_cast<int>(d.y); ++y)
      for (int x = 0; x < static_cast<int>(d.x); ++x) {
        bool hit = false;
        for (int dz = -radius; dz <= radius && !hit; ++dz)
          for (int dy = -radius; dy <= radius && !hit; ++dy)
            for (int dx = -radius; dx <= radius && !hit; ++dx) {
              const int ux = x + dx, uy = y + dy, uz = z + dz;
              if (ux < 0 || uy < 0 || uz < 0 || ux >= static_cast<int>(d.x) ||
                  uy >= static_cast<int>(d.y) || uz >= static_cast<int>(d.z))
                continue;
              hit = mask.test(ux, uy, uz);
            }
        out.set(x, y, z, hit);
      }
  return out;
}

bool boundingBox(const BinaryMask& mask, std::array<int, 3>& minOut, std::array<int, 3>& sizeOut) {
  const Dims3 d = mask.dims;
  std::array<int, 3> lo{static_cast<int>(d.x), static_cast<int>(d.y), static_cast<int>(d.z)};
  std::array<int, 3> hi{-1, -1, -1};
  for (int z = 0; z < static_cast<int>(d.z); ++z)
    for (int y = 0; y < static_cast<int>(d.y); ++y)
      for (int x = 0; x < static_cast<int>(d.x); ++x)
        if (mask.test(x, y, z)) {
          lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
          hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
        }
  if (hi[0] < 0) return false;
  minOut = lo;
  for (int a = 0; a < 3; ++a) sizeOut[a] = hi[a] - lo[a] + 1;
  return true;
}

namespace {

double paddedAt(const Volume& v, int x, int y, int z) {
  const Dims3 d = v.dims();
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<int>(d.x) || y >= static_cast<int>(d.y) ||
      z >= static_cast<int>(d.z))
    return 0.0;
  return v.floatAt(x, y, z);
}

}  // namespace

SearchHit mostSimilar(const Volume& query, const Volume& image, const std::array<int, 3>& center,
                      const std::array<int, 3>& radius) {
  const int sx = static_cast<int>(query.dims().x);
  const int sy = static_cast<int>(query.dims().y);
  const int sz = static_cast<int>(query.dims().z);
  SearchHit best;
  best.distance = std::numeric_limits<double>::infinity();
  std::array<int, 3> bestKey{0, 0, 0};
  bool first = true;
  for (int oz = -radius[2]; oz <= radius[2]; ++oz)
    for (int oy = -radius[1]; oy <= radius[1]; ++oy)
      for (int ox = -radius[0]; ox <= radius[0]; ++ox) {
        double dist = 0.0;
        for (int z = 0; z < sz; ++z)
          for (int y = 0; y < sy; ++y)
            for (int x = 0; x < sx; ++x) {
              const double q = query.floatAt(x, y, z);
              const double t = paddedAt(image, center[0] + ox - sx / 2 + x,
                                        center[1] + oy - sy / 2 + y,
                                        center[2] + oz - sz / 2 + z);
              dist += (q - t) * (q - t);
            }
        const std::array<int, 3> key{oz, oy, ox};
        if (first || dist < best.distance || (dist == best.distance && key < bestKey)) {
          first = false;
          best.distance = dist;
          best.offset = {ox, oy, oz};
          bestKey = key;
        }
      }
  return best;
}

void fuse(const std::vector<RoiPrediction>& preds, const Dims3& dims,
          std::vector<std::uint16_t>& labelsOut, std::vector<double>& confOut) {
  labelsOut.assign(dims.voxels(), 0);
  confOut.assign(dims.voxels(), 0.0);
  for (int z = 0; z < static_cast<int>(dims.z); ++z)
    for (int y = 0; y < static_cast<int>(dims.y); ++y)
      for (int x = 0; x < static_cast<int>(dims.x); ++x) {
        double bestProduct = 0.0;
        std::uint16_t bestRoi = 0;
        for (const RoiPrediction& p : preds) {
          const int px = x - (p.center[0] - p.size[0] / 2);
          const int py = y - (p.center[1] - p.size[1] / 2);
          const int pz = z - (p.center[2] - p.size[2] / 2);
          if (px < 0 || py < 0 || pz < 0 || px >= p.size[0] || py >= p.size[1] ||
              pz >= p.size[2])
            continue;
          const std::size_t i =
              (static_cast<std::size_t>(pz) * p.size[1] + py) * p.size[0] + px;
          const double product = p.binary[i] ? p.probability[i] : 0.0;
          if (product > bestProduct ||
              (product > 0.0 && product == bestProduct && p.roi < bestRoi)) {
            bestProduct = product;
            bestRoi = p.roi;
          }
        }
        const std::uint64_t vi = atlasforge::flatIndex(dims, x, y, z);
        labelsOut[vi] = bestRoi;
        confOut[vi] = bestProduct;
      }
}

std::vector<double> finiteDiff(const std::function<double()>& eval, std::vector<double>& params,
                               double eps) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = eval();
    params[i] = saved - eps;
    const double down = eval();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double maxRelError(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double scale = 0.0;
  for (double v : analytic) scale = std::max(scale, std::fabs(v));
  for (double v : numeric) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]));
  return worst / scale;
}

}  // namespace oracle
