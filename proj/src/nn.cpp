#include "atlasforge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace atlasforge {

namespace {

int floorDiv(int a, int b) {
  int q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int ceilDiv(int a, int b) { return -floorDiv(-a, b); }

// dst[od,oh,ow] += sum_k taps[(kd*3+kh)*3+kw] * src[od-1+kd, oh-1+kh, ow-1+kw]
// over the 3x3x3 neighbourhood, stride 1, padding 1, equal plane shapes.
// The w taps are fused so the inner loop is a contiguous 3-term update.
void corr3x3p1Plane(double* dst, const double* src, const double* taps, int D, int H, int W) {
  for (int kd = 0; kd < 3; ++kd) {
    const int od0 = std::max(0, 1 - kd), od1 = std::min(D, D + 1 - kd);
    for (int kh = 0; kh < 3; ++kh) {
      const int oh0 = std::max(0, 1 - kh), oh1 = std::min(H, H + 1 - kh);
      const double* t = &taps[(kd * 3 + kh) * 3];
      const double w0 = t[0], w1 = t[1], w2 = t[2];
      for (int od = od0; od < od1; ++od) {
        const int id = od - 1 + kd;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh - 1 + kh;
          double* dr = dst + (static_cast<std::size_t>(od) * H + oh) * W;
          const double* sr = src + (static_cast<std::size_t>(id) * H + ih) * W;
          if (W == 1) {
            dr[0] += w1 * sr[0];
            continue;
          }
          dr[0] += w1 * sr[0] + w2 * sr[1];
          for (int ow = 1; ow < W - 1; ++ow)
            dr[ow] += w0 * sr[ow - 1] + w1 * sr[ow] + w2 * sr[ow + 1];
          dr[W - 1] += w0 * sr[W - 2] + w1 * sr[W - 1];
        }
      }
    }
  }
}

// Four destination planes sharing one source plane; each source row is
// loaded once and feeds four accumulating output rows.
void corr3x3p1Plane4(double* d0, double* d1, double* d2, double* d3, const double* src,
                     const double* t0, const double* t1, const double* t2, const double* t3,
                     int D, int H, int W) {
  for (int kd = 0; kd < 3; ++kd) {
    const int od0 = std::max(0, 1 - kd), od1 = std::min(D, D + 1 - kd);
    for (int kh = 0; kh < 3; ++kh) {
      const int oh0 = std::max(0, 1 - kh), oh1 = std::min(H, H + 1 - kh);
      const std::size_t tb = (kd * 3 + kh) * 3;
      const double a0 = t0[tb], a1 = t0[tb + 1], a2 = t0[tb + 2];
      const double b0 = t1[tb], b1 = t1[tb + 1], b2 = t1[tb + 2];
      const double c0 = t2[tb], c1 = t2[tb + 1], c2 = t2[tb + 2];
      const double e0 = t3[tb], e1 = t3[tb + 1], e2 = t3[tb + 2];
      for (int od = od0; od < od1; ++od) {
        const int id = od - 1 + kd;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh - 1 + kh;
          const std::size_t db = (static_cast<std::size_t>(od) * H + oh) * W;
          const double* sr = src + (static_cast<std::size_t>(id) * H + ih) * W;
          double* r0 = d0 + db;
          double* r1 = d1 + db;
          double* r2 = d2 + db;
          double* r3 = d3 + db;
          if (W == 1) {
            r0[0] += a1 * sr[0];
            r1[0] += b1 * sr[0];
            r2[0] += c1 * sr[0];
            r3[0] += e1 * sr[0];
            continue;
          }
          r0[0] += a1 * sr[0] + a2 * sr[1];
          r1[0] += b1 * sr[0] + b2 * sr[1];
          r2[0] += c1 * sr[0] + c2 * sr[1];
          r3[0] += e1 * sr[0] + e2 * sr[1];
          for (int ow = 1; ow < W - 1; ++ow) {
            const double sm = sr[ow - 1], sz = sr[ow], sp = sr[ow + 1];
            r0[ow] += a0 * sm + a1 * sz + a2 * sp;
            r1[ow] += b0 * sm + b1 * sz + b2 * sp;
            r2[ow] += c0 * sm + c1 * sz + c2 * sp;
            r3[ow] += e0 * sm + e1 * sz + e2 * sp;
          }
          r0[W - 1] += a0 * sr[W - 2] + a1 * sr[W - 1];
          r1[W - 1] += b0 * sr[W - 2] + b1 * sr[W - 1];
          r2[W - 1] += c0 * sr[W - 2] + c1 * sr[W - 1];
          r3[W - 1] += e0 * sr[W - 2] + e1 * sr[W - 1];
        }
      }
    }
  }
}

bool is3x3s1p1(const ConvParams& p) {
  return p.weights.d == 3 && p.weights.h == 3 && p.weights.w == 3 && p.stride == 1 &&
         p.pad == std::array<int, 3>{1, 1, 1};
}

struct Shape3 {
  int d, h, w;
};

Shape3 convOutShape(const Tensor5& x, const ConvParams& p) {
  Shape3 o;
  o.d = (x.d + 2 * p.pad[0] - p.weights.d) / p.stride + 1;
  o.h = (x.h + 2 * p.pad[1] - p.weights.h) / p.stride + 1;
  o.w = (x.w + 2 * p.pad[2] - p.weights.w) / p.stride + 1;
  if (x.d + 2 * p.pad[0] < p.weights.d || x.h + 2 * p.pad[1] < p.weights.h ||
      x.w + 2 * p.pad[2] < p.weights.w)
    throw InvalidArgumentError("kernel larger than padded input");
  return o;
}

Shape3 deconvOutShape(const Tensor5& x, const ConvParams& p) {
  Shape3 o;
  o.d = (x.d - 1) * p.stride - 2 * p.pad[0] + p.weights.d;
  o.h = (x.h - 1) * p.stride - 2 * p.pad[1] + p.weights.h;
  o.w = (x.w - 1) * p.stride - 2 * p.pad[2] + p.weights.w;
  if (o.d < 1 || o.h < 1 || o.w < 1)
    throw InvalidArgumentError("transposed convolution output would be empty");
  return o;
}

inline double* plane(Tensor5& t, int n, int c) {
  return &t.data[t.index(n, c, 0, 0, 0)];
}
inline const double* plane(const Tensor5& t, int n, int c) {
  return &t.data[t.index(n, c, 0, 0, 0)];
}

void flip27(const double* w, double* out) {
  for (int i = 0; i < 27; ++i) out[i] = w[26 - i];
}

}  // namespace

Tensor5 conv3dForward(const Tensor5& x, const ConvParams& p) {
  const int CO = p.weights.n, CI = p.weights.c;
  if (x.c != CI) throw DimsMismatchError("conv3dForward: channel mismatch");
  if (static_cast<int>(p.bias.size()) != CO)
    throw DimsMismatchError("conv3dForward: bias size mismatch");
  const Shape3 os = convOutShape(x, p);
  Tensor5 y(x.n, CO, os.d, os.h, os.w);

  if (is3x3s1p1(p) && x.w >= 2) {
    const std::size_t ps = static_cast<std::size_t>(os.d) * os.h * os.w;
    for (int n = 0; n < x.n; ++n) {
      int co = 0;
      for (; co + 4 <= CO; co += 4) {
        double* d0 = plane(y, n, co);
        double* d1 = plane(y, n, co + 1);
        double* d2 = plane(y, n, co + 2);
        double* d3 = plane(y, n, co + 3);
        std::fill(d0, d0 + ps, p.bias[co]);
        std::fill(d1, d1 + ps, p.bias[co + 1]);
        std::fill(d2, d2 + ps, p.bias[co + 2]);
        std::fill(d3, d3 + ps, p.bias[co + 3]);
        for (int ci = 0; ci < CI; ++ci) {
          const double* src = plane(x, n, ci);
          const double* w = p.weights.data.data();
          corr3x3p1Plane4(d0, d1, d2, d3, src, &w[(static_cast<std::size_t>(co) * CI + ci) * 27],
                          &w[(static_cast<std::size_t>(co + 1) * CI + ci) * 27],
                          &w[(static_cast<std::size_t>(co + 2) * CI + ci) * 27],
                          &w[(static_cast<std::size_t>(co + 3) * CI + ci) * 27], os.d, os.h, os.w);
        }
      }
      for (; co < CO; ++co) {
        double* dst = plane(y, n, co);
        std::fill(dst, dst + ps, p.bias[co]);
        for (int ci = 0; ci < CI; ++ci)
          corr3x3p1Plane(dst, plane(x, n, ci),
                         &p.weights.data[(static_cast<std::size_t>(co) * CI + ci) * 27], os.d,
                         os.h, os.w);
      }
    }
    return y;
  }

  const int KD = p.weights.d, KH = p.weights.h, KW = p.weights.w, s = p.stride;
  const std::size_t ps = static_cast<std::size_t>(os.d) * os.h * os.w;
  for (int n = 0; n < x.n; ++n)
    for (int co = 0; co < CO; ++co) {
      double* dst = plane(y, n, co);
      std::fill(dst, dst + ps, p.bias[co]);
      for (int ci = 0; ci < CI; ++ci) {
        const double* src = plane(x, n, ci);
        for (int kd = 0; kd < KD; ++kd) {
          const int od0 = std::max(0, ceilDiv(p.pad[0] - kd, s));
          const int od1 = std::min(os.d, floorDiv(x.d - 1 + p.pad[0] - kd, s) + 1);
          for (int kh = 0; kh < KH; ++kh) {
            const int oh0 = std::max(0, ceilDiv(p.pad[1] - kh, s));
            const int oh1 = std::min(os.h, floorDiv(x.h - 1 + p.pad[1] - kh, s) + 1);
            for (int kw = 0; kw < KW; ++kw) {
              const int ow0 = std::max(0, ceilDiv(p.pad[2] - kw, s));
              const int ow1 = std::min(os.w, floorDiv(x.w - 1 + p.pad[2] - kw, s) + 1);
              const double wv =
                  p.weights.data[((static_cast<std::size_t>(co) * CI + ci) * KD + kd) * KH * KW +
                                 static_cast<std::size_t>(kh) * KW + kw];
              for (int od = od0; od < od1; ++od) {
                const int id = od * s - p.pad[0] + kd;
                for (int oh = oh0; oh < oh1; ++oh) {
                  const int ih = oh * s - p.pad[1] + kh;
                  double* dr = dst + (static_cast<std::size_t>(od) * os.h + oh) * os.w;
                  const double* sr = src + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  for (int ow = ow0; ow < ow1; ++ow)
                    dr[ow] += wv * sr[ow * s - p.pad[2] + kw];
                }
              }
            }
          }
        }
      }
    }
  return y;
}

ConvGrads conv3dBackward(const Tensor5& x, const ConvParams& p, const Tensor5& gradOut) {
  const int CO = p.weights.n, CI = p.weights.c;
  if (x.c != CI) throw DimsMismatchError("conv3dBackward: channel mismatch");
  const Shape3 os = convOutShape(x, p);
  if (gradOut.n != x.n || gradOut.c != CO || gradOut.d != os.d || gradOut.h != os.h ||
      gradOut.w != os.w)
    throw DimsMismatchError("conv3dBackward: gradOut shape mismatch");

  ConvGrads g;
  g.x = Tensor5::zerosLike(x);
  g.w = Tensor5::zerosLike(p.weights);
  g.b.assign(CO, 0.0);

  for (int n = 0; n < gradOut.n; ++n)
    for (int co = 0; co < CO; ++co) {
      const double* gr = plane(gradOut, n, co);
      double acc = 0.0;
      const std::size_t ps = static_cast<std::size_t>(os.d) * os.h * os.w;
      for (std::size_t i = 0; i < ps; ++i) acc += gr[i];
      g.b[co] += acc;
    }

  if (is3x3s1p1(p) && x.w >= 2) {
    // gradX: correlate gradOut with the flipped kernel, channels swapped.
    for (int n = 0; n < x.n; ++n) {
      int ci = 0;
      for (; ci + 4 <= CI; ci += 4) {
        double* d0 = plane(g.x, n, ci);
        double* d1 = plane(g.x, n, ci + 1);
        double* d2 = plane(g.x, n, ci + 2);
        double* d3 = plane(g.x, n, ci + 3);
        for (int co = 0; co < CO; ++co) {
          double t0[27], t1[27], t2[27], t3[27];
          const double* w = p.weights.data.data();
          flip27(&w[(static_cast<std::size_t>(co) * CI + ci) * 27], t0);
          flip27(&w[(static_cast<std::size_t>(co) * CI + ci + 1) * 27], t1);
          flip27(&w[(static_cast<std::size_t>(co) * CI + ci + 2) * 27], t2);
          flip27(&w[(static_cast<std::size_t>(co) * CI + ci + 3) * 27], t3);
          corr3x3p1Plane4(d0, d1, d2, d3, plane(gradOut, n, co), t0, t1, t2, t3, x.d, x.h, x.w);
        }
      }
      for (; ci < CI; ++ci) {
        double* dst = plane(g.x, n, ci);
        for (int co = 0; co < CO; ++co) {
          double t[27];
          flip27(&p.weights.data[(static_cast<std::size_t>(co) * CI + ci) * 27], t);
          corr3x3p1Plane(dst, plane(gradOut, n, co), t, x.d, x.h, x.w);
        }
      }
    }
    // gradW: 27 row-dot accumulations per (co, ci).
    for (int n = 0; n < x.n; ++n)
      for (int co = 0; co < CO; ++co)
        for (int ci = 0; ci < CI; ++ci) {
          double* gw = &g.w.data[(static_cast<std::size_t>(co) * CI + ci) * 27];
          const double* go = plane(gradOut, n, co);
          const double* xs = plane(x, n, ci);
          for (int kd = 0; kd < 3; ++kd) {
            const int od0 = std::max(0, 1 - kd), od1 = std::min(x.d, x.d + 1 - kd);
            for (int kh = 0; kh < 3; ++kh) {
              const int oh0 = std::max(0, 1 - kh), oh1 = std::min(x.h, x.h + 1 - kh);
              double s0 = 0.0, s1 = 0.0, s2 = 0.0;
              for (int od = od0; od < od1; ++od) {
                const int id = od - 1 + kd;
                for (int oh = oh0; oh < oh1; ++oh) {
                  const int ih = oh - 1 + kh;
                  const double* gr = go + (static_cast<std::size_t>(od) * x.h + oh) * x.w;
                  const double* xr = xs + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  for (int ow = 1; ow < x.w; ++ow) s0 += gr[ow] * xr[ow - 1];
                  for (int ow = 0; ow < x.w; ++ow) s1 += gr[ow] * xr[ow];
                  for (int ow = 0; ow < x.w - 1; ++ow) s2 += gr[ow] * xr[ow + 1];
                }
              }
              gw[(kd * 3 + kh) * 3 + 0] += s0;
              gw[(kd * 3 + kh) * 3 + 1] += s1;
              gw[(kd * 3 + kh) * 3 + 2] += s2;
            }
          }
        }
    return g;
  }

  const int KD = p.weights.d, KH = p.weights.h, KW = p.weights.w, s = p.stride;
  for (int n = 0; n < x.n; ++n)
    for (int co = 0; co < CO; ++co)
      for (int ci = 0; ci < CI; ++ci) {
        const double* go = plane(gradOut, n, co);
        const double* xs = plane(x, n, ci);
        double* gx = plane(g.x, n, ci);
        for (int kd = 0; kd < KD; ++kd) {
          const int od0 = std::max(0, ceilDiv(p.pad[0] - kd, s));
          const int od1 = std::min(os.d, floorDiv(x.d - 1 + p.pad[0] - kd, s) + 1);
          for (int kh = 0; kh < KH; ++kh) {
            const int oh0 = std::max(0, ceilDiv(p.pad[1] - kh, s));
            const int oh1 = std::min(os.h, floorDiv(x.h - 1 + p.pad[1] - kh, s) + 1);
            for (int kw = 0; kw < KW; ++kw) {
              const int ow0 = std::max(0, ceilDiv(p.pad[2] - kw, s));
              const int ow1 = std::min(os.w, floorDiv(x.w - 1 + p.pad[2] - kw, s) + 1);
              const std::size_t wi =
                  ((static_cast<std::size_t>(co) * CI + ci) * KD + kd) * KH * KW +
                  static_cast<std::size_t>(kh) * KW + kw;
              const double wv = p.weights.data[wi];
              double wacc = 0.0;
              for (int od = od0; od < od1; ++od) {
                const int id = od * s - p.pad[0] + kd;
                for (int oh = oh0; oh < oh1; ++oh) {
                  const int ih = oh * s - p.pad[1] + kh;
                  const double* gr = go + (static_cast<std::size_t>(od) * os.h + oh) * os.w;
                  const double* xr = xs + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  double* gxr = gx + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  for (int ow = ow0; ow < ow1; ++ow) {
                    const int iw = ow * s - p.pad[2] + kw;
                    wacc += gr[ow] * xr[iw];
                    gxr[iw] += wv * gr[ow];
                  }
                }
              }
              g.w.data[wi] += wacc;
            }
          }
        }
      }
  return g;
}

Tensor5 deconv3dForward(const Tensor5& x, const ConvParams& p) {
  const int CI = p.weights.n, CO = p.weights.c;  // dim0 = input channels here
  if (x.c != CI) throw DimsMismatchError("deconv3dForward: channel mismatch");
  if (static_cast<int>(p.bias.size()) != CO)
    throw DimsMismatchError("deconv3dForward: bias size mismatch");
  const Shape3 os = deconvOutShape(x, p);
  Tensor5 y(x.n, CO, os.d, os.h, os.w);
  const std::size_t ps = static_cast<std::size_t>(os.d) * os.h * os.w;

  if (is3x3s1p1(p) && x.w >= 2) {
    for (int n = 0; n < x.n; ++n) {
      int co = 0;
      for (; co + 4 <= CO; co += 4) {
        double* d0 = plane(y, n, co);
        double* d1 = plane(y, n, co + 1);
        double* d2 = plane(y, n, co + 2);
        double* d3 = plane(y, n, co + 3);
        std::fill(d0, d0 + ps, p.bias[co]);
        std::fill(d1, d1 + ps, p.bias[co + 1]);
        std::fill(d2, d2 + ps, p.bias[co + 2]);
        std::fill(d3, d3 + ps, p.bias[co + 3]);
        for (int ci = 0; ci < CI; ++ci) {
          double t0[27], t1[27], t2[27], t3[27];
          const double* w = p.weights.data.data();
          flip27(&w[(static_cast<std::size_t>(ci) * CO + co) * 27], t0);
          flip27(&w[(static_cast<std::size_t>(ci) * CO + co + 1) * 27], t1);
          flip27(&w[(static_cast<std::size_t>(ci) * CO + co + 2) * 27], t2);
          flip27(&w[(static_cast<std::size_t>(ci) * CO + co + 3) * 27], t3);
          corr3x3p1Plane4(d0, d1, d2, d3, plane(x, n, ci), t0, t1, t2, t3, os.d, os.h, os.w);
        }
      }
      for (; co < CO; ++co) {
        double* dst = plane(y, n, co);
        std::fill(dst, dst + ps, p.bias[co]);
        for (int ci = 0; ci < CI; ++ci) {
          double t[27];
          flip27(&p.weights.data[(static_cast<std::size_t>(ci) * CO + co) * 27], t);
          corr3x3p1Plane(dst, plane(x, n, ci), t, os.d, os.h, os.w);
        }
      }
    }
    return y;
  }

  const int KD = p.weights.d, KH = p.weights.h, KW = p.weights.w, s = p.stride;
  for (int n = 0; n < x.n; ++n)
    for (int co = 0; co < CO; ++co) {
      double* dst = plane(y, n, co);
      std::fill(dst, dst + ps, p.bias[co]);
      for (int ci = 0; ci < CI; ++ci) {
        const double* src = plane(x, n, ci);
        for (int kd = 0; kd < KD; ++kd) {
          const int id0 = std::max(0, ceilDiv(p.pad[0] - kd, s));
          const int id1 = std::min(x.d, floorDiv(os.d - 1 + p.pad[0] - kd, s) + 1);
          for (int kh = 0; kh < KH; ++kh) {
            const int ih0 = std::max(0, ceilDiv(p.pad[1] - kh, s));
            const int ih1 = std::min(x.h, floorDiv(os.h - 1 + p.pad[1] - kh, s) + 1);
            for (int kw = 0; kw < KW; ++kw) {
              const int iw0 = std::max(0, ceilDiv(p.pad[2] - kw, s));
              const int iw1 = std::min(x.w, floorDiv(os.w - 1 + p.pad[2] - kw, s) + 1);
              const double wv =
                  p.weights.data[((static_cast<std::size_t>(ci) * CO + co) * KD + kd) * KH * KW +
                                 static_cast<std::size_t>(kh) * KW + kw];
              for (int id = id0; id < id1; ++id) {
                const int od = id * s - p.pad[0] + kd;
                for (int ih = ih0; ih < ih1; ++ih) {
                  const int oh = ih * s - p.pad[1] + kh;
                  double* dr = dst + (static_cast<std::size_t>(od) * os.h + oh) * os.w;
                  const double* sr = src + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  for (int iw = iw0; iw < iw1; ++iw)
                    dr[iw * s - p.pad[2] + kw] += wv * sr[iw];
                }
              }
            }
          }
        }
      }
    }
  return y;
}

ConvGrads deconv3dBackward(const Tensor5& x, const ConvParams& p, const Tensor5& gradOut) {
  const int CI = p.weights.n, CO = p.weights.c;
  if (x.c != CI) throw DimsMismatchError("deconv3dBackward: channel mismatch");
  const Shape3 os = deconvOutShape(x, p);
  if (gradOut.n != x.n || gradOut.c != CO || gradOut.d != os.d || gradOut.h != os.h ||
      gradOut.w != os.w)
    throw DimsMismatchError("deconv3dBackward: gradOut shape mismatch");

  ConvGrads g;
  g.x = Tensor5::zerosLike(x);
  g.w = Tensor5::zerosLike(p.weights);
  g.b.assign(CO, 0.0);

  for (int n = 0; n < gradOut.n; ++n)
    for (int co = 0; co < CO; ++co) {
      const double* gr = plane(gradOut, n, co);
      double acc = 0.0;
      const std::size_t ps = static_cast<std::size_t>(os.d) * os.h * os.w;
      for (std::size_t i = 0; i < ps; ++i) acc += gr[i];
      g.b[co] += acc;
    }

  if (is3x3s1p1(p) && x.w >= 2) {
    // gradX: plain correlation of gradOut with the stored kernel.
    for (int n = 0; n < x.n; ++n) {
      int ci = 0;
      for (; ci + 4 <= CI; ci += 4) {
        double* d0 = plane(g.x, n, ci);
        double* d1 = plane(g.x, n, ci + 1);
        double* d2 = plane(g.x, n, ci + 2);
        double* d3 = plane(g.x, n, ci + 3);
        for (int co = 0; co < CO; ++co) {
          const double* w = p.weights.data.data();
          corr3x3p1Plane4(d0, d1, d2, d3, plane(gradOut, n, co),
                          &w[(static_cast<std::size_t>(ci) * CO + co) * 27],
                          &w[(static_cast<std::size_t>(ci + 1) * CO + co) * 27],
                          &w[(static_cast<std::size_t>(ci + 2) * CO + co) * 27],
                          &w[(static_cast<std::size_t>(ci + 3) * CO + co) * 27], x.d, x.h, x.w);
        }
      }
      for (; ci < CI; ++ci) {
        double* dst = plane(g.x, n, ci);
        for (int co = 0; co < CO; ++co)
          corr3x3p1Plane(dst, plane(gradOut, n, co),
                         &p.weights.data[(static_cast<std::size_t>(ci) * CO + co) * 27], x.d, x.h,
                         x.w);
      }
    }
    for (int n = 0; n < x.n; ++n)
      for (int ci = 0; ci < CI; ++ci)
        for (int co = 0; co < CO; ++co) {
          double* gw = &g.w.data[(static_cast<std::size_t>(ci) * CO + co) * 27];
          const double* go = plane(gradOut, n, co);
          const double* xs = plane(x, n, ci);
          for (int kd = 0; kd < 3; ++kd) {
            const int id0 = std::max(0, 1 - kd), id1 = std::min(x.d, x.d + 1 - kd);
            for (int kh = 0; kh < 3; ++kh) {
              const int ih0 = std::max(0, 1 - kh), ih1 = std::min(x.h, x.h + 1 - kh);
              double s0 = 0.0, s1 = 0.0, s2 = 0.0;
              for (int id = id0; id < id1; ++id) {
                const int od = id - 1 + kd;
                for (int ih = ih0; ih < ih1; ++ih) {
                  const int oh = ih - 1 + kh;
                  const double* xr = xs + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  const double* gr = go + (static_cast<std::size_t>(od) * os.h + oh) * os.w;
                  for (int iw = 1; iw < x.w; ++iw) s0 += xr[iw] * gr[iw - 1];
                  for (int iw = 0; iw < x.w; ++iw) s1 += xr[iw] * gr[iw];
                  for (int iw = 0; iw < x.w - 1; ++iw) s2 += xr[iw] * gr[iw + 1];
                }
              }
              gw[(kd * 3 + kh) * 3 + 0] += s0;
              gw[(kd * 3 + kh) * 3 + 1] += s1;
              gw[(kd * 3 + kh) * 3 + 2] += s2;
            }
          }
        }
    return g;
  }

  const int KD = p.weights.d, KH = p.weights.h, KW = p.weights.w, s = p.stride;
  for (int n = 0; n < x.n; ++n)
    for (int ci = 0; ci < CI; ++ci)
      for (int co = 0; co < CO; ++co) {
        const double* go = plane(gradOut, n, co);
        const double* xs = plane(x, n, ci);
        double* gx = plane(g.x, n, ci);
        for (int kd = 0; kd < KD; ++kd) {
          const int id0 = std::max(0, ceilDiv(p.pad[0] - kd, s));
          const int id1 = std::min(x.d, floorDiv(os.d - 1 + p.pad[0] - kd, s) + 1);
          for (int kh = 0; kh < KH; ++kh) {
            const int ih0 = std::max(0, ceilDiv(p.pad[1] - kh, s));
            const int ih1 = std::min(x.h, floorDiv(os.h - 1 + p.pad[1] - kh, s) + 1);
            for (int kw = 0; kw < KW; ++kw) {
              const int iw0 = std::max(0, ceilDiv(p.pad[2] - kw, s));
              const int iw1 = std::min(x.w, floorDiv(os.w - 1 + p.pad[2] - kw, s) + 1);
              const std::size_t wi =
                  ((static_cast<std::size_t>(ci) * CO + co) * KD + kd) * KH * KW +
                  static_cast<std::size_t>(kh) * KW + kw;
              const double wv = p.weights.data[wi];
              double wacc = 0.0;
              for (int id = id0; id < id1; ++id) {
                const int od = id * s - p.pad[0] + kd;
                for (int ih = ih0; ih < ih1; ++ih) {
                  const int oh = ih * s - p.pad[1] + kh;
                  const double* xr = xs + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  double* gxr = gx + (static_cast<std::size_t>(id) * x.h + ih) * x.w;
                  const double* gr = go + (static_cast<std::size_t>(od) * os.h + oh) * os.w;
                  for (int iw = iw0; iw < iw1; ++iw) {
                    const int ow = iw * s - p.pad[2] + kw;
                    wacc += xr[iw] * gr[ow];
                    gxr[iw] += wv * gr[ow];
                  }
                }
              }
              g.w.data[wi] += wacc;
            }
          }
        }
      }
  return g;
}

MaxPoolResult maxpool3dForward(const Tensor5& x) {
  const int od = (x.d + 1) / 2, oh = (x.h + 1) / 2, ow = (x.w + 1) / 2;
  MaxPoolResult r{Tensor5(x.n, x.c, od, oh, ow), {}};
  r.argmax.resize(r.y.size());
  std::size_t oi = 0;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int zd = 0; zd < od; ++zd)
        for (int zh = 0; zh < oh; ++zh)
          for (int zw = 0; zw < ow; ++zw, ++oi) {
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t bestIdx = -1;
            for (int kd = 0; kd < 2; ++kd)
              for (int kh = 0; kh < 2; ++kh)
                for (int kw = 0; kw < 2; ++kw) {
                  const int id = 2 * zd + kd, ih = 2 * zh + kh, iw = 2 * zw + kw;
                  if (id >= x.d || ih >= x.h || iw >= x.w) continue;
                  const double v = x.at(n, c, id, ih, iw);
                  if (v > best) {
                    best = v;
                    bestIdx = static_cast<std::int64_t>(x.index(n, c, id, ih, iw));
                  }
                }
            r.y.data[oi] = best;
            r.argmax[oi] = bestIdx;
          }
  return r;
}

Tensor5 maxpool3dBackward(const Tensor5& x, const MaxPoolResult& fwd, const Tensor5& gradOut) {
  if (!gradOut.sameShape(fwd.y)) throw DimsMismatchError("maxpool3dBackward: shape mismatch");
  Tensor5 gx = Tensor5::zerosLike(x);
  for (std::size_t i = 0; i < gradOut.size(); ++i) gx.data[fwd.argmax[i]] += gradOut.data[i];
  return gx;
}

Tensor5 batchnormForward(const Tensor5& x, BatchNormState& state, bool train, BatchNormAux* aux) {
  const int C = x.c;
  if (static_cast<int>(state.gamma.size()) != C)
    throw DimsMismatchError("batchnormForward: channel mismatch");
  const std::size_t spatial = static_cast<std::size_t>(x.d) * x.h * x.w;
  const double m = static_cast<double>(x.n) * spatial;

  std::vector<double> mean(C), var(C);
  if (train) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = plane(x, n, c);
        for (std::size_t i = 0; i < spatial; ++i) acc += p[i];
      }
      mean[c] = acc / m;
      double v = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = plane(x, n, c);
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = p[i] - mean[c];
          v += d * d;
        }
      }
      var[c] = v / m;  // biased; running stats store the same convention
      state.runningMean[c] = (1.0 - state.momentum) * state.runningMean[c] +
                             state.momentum * mean[c];
      state.runningVar[c] = (1.0 - state.momentum) * state.runningVar[c] +
                            state.momentum * var[c];
    }
  } else {
    mean = state.runningMean;
    var = state.runningVar;
  }

  Tensor5 y = Tensor5::zerosLike(x);
  Tensor5 xhat = Tensor5::zerosLike(x);
  std::vector<double> invStd(C);
  for (int c = 0; c < C; ++c) {
    invStd[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
    const double g = state.gamma[c], b = state.beta[c], mu = mean[c], is = invStd[c];
    for (int n = 0; n < x.n; ++n) {
      const double* px = plane(x, n, c);
      double* ph = plane(xhat, n, c);
      double* py = plane(y, n, c);
      for (std::size_t i = 0; i < spatial; ++i) {
        ph[i] = (px[i] - mu) * is;
        py[i] = g * ph[i] + b;
      }
    }
  }
  if (aux) {
    aux->mean = std::move(mean);
    aux->invStd = std::move(invStd);
    aux->xhat = std::move(xhat);
    aux->trainMode = train;
  }
  return y;
}

BatchNormGrads batchnormBackward(const Tensor5& gradOut, const BatchNormState& state,
                                 const BatchNormAux& aux) {
  const int C = gradOut.c;
  const std::size_t spatial = static_cast<std::size_t>(gradOut.d) * gradOut.h * gradOut.w;
  const double m = static_cast<double>(gradOut.n) * spatial;

  BatchNormGrads g;
  g.x = Tensor5::zerosLike(gradOut);
  g.gamma.assign(C, 0.0);
  g.beta.assign(C, 0.0);

  for (int c = 0; c < C; ++c) {
    double sumDy = 0.0, sumDyXhat = 0.0;
    for (int n = 0; n < gradOut.n; ++n) {
      const double* pd = plane(gradOut, n, c);
      const double* ph = plane(aux.xhat, n, c);
      for (std::size_t i = 0; i < spatial; ++i) {
        sumDy += pd[i];
        sumDyXhat += pd[i] * ph[i];
      }
    }
    g.beta[c] = sumDy;
    g.gamma[c] = sumDyXhat;
    const double k = state.gamma[c] * aux.invStd[c];
    if (aux.trainMode) {
      const double meanDy = sumDy / m, meanDyXhat = sumDyXhat / m;
      for (int n = 0; n < gradOut.n; ++n) {
        const double* pd = plane(gradOut, n, c);
        const double* ph = plane(aux.xhat, n, c);
        double* px = plane(g.x, n, c);
        for (std::size_t i = 0; i < spatial; ++i)
          px[i] = k * (pd[i] - meanDy - ph[i] * meanDyXhat);
      }
    } else {
      for (int n = 0; n < gradOut.n; ++n) {
        const double* pd = plane(gradOut, n, c);
        double* px = plane(g.x, n, c);
        for (std::size_t i = 0; i < spatial; ++i) px[i] = k * pd[i];
      }
    }
  }
  return g;
}

Tensor5 dropoutForward(const Tensor5& x, double p, Rng* rng, bool train, Tensor5* maskOut) {
  if (p < 0.0 || p >= 1.0) throw InvalidArgumentError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) {
    if (maskOut) {
      *maskOut = Tensor5::zerosLike(x);
      maskOut->fill(1.0);
    }
    return x;
  }
  if (!rng) throw InvalidArgumentError("dropout in train mode needs an rng");
  const double keepScale = 1.0 / (1.0 - p);
  Tensor5 mask = Tensor5::zerosLike(x);
  Tensor5 y = Tensor5::zerosLike(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng->uniform01() < p ? 0.0 : keepScale;
    mask.data[i] = m;
    y.data[i] = x.data[i] * m;
  }
  if (maskOut) *maskOut = std::move(mask);
  return y;
}

Tensor5 dropoutApplyMask(const Tensor5& x, const Tensor5& mask) {
  if (!x.sameShape(mask)) throw DimsMismatchError("dropout mask shape mismatch");
  Tensor5 y = Tensor5::zerosLike(x);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] * mask.data[i];
  return y;
}

Tensor5 reluForward(const Tensor5& x) {
  Tensor5 y = Tensor5::zerosLike(x);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor5 reluBackward(const Tensor5& x, const Tensor5& gradOut) {
  if (!x.sameShape(gradOut)) throw DimsMismatchError("reluBackward: shape mismatch");
  Tensor5 g = Tensor5::zerosLike(x);
  for (std::size_t i = 0; i < x.size(); ++i) g.data[i] = x.data[i] > 0.0 ? gradOut.data[i] : 0.0;
  return g;
}

Tensor5 softmaxChannels(const Tensor5& x) {
  Tensor5 y = Tensor5::zerosLike(x);
  const std::size_t spatial = static_cast<std::size_t>(x.d) * x.h * x.w;
  for (int n = 0; n < x.n; ++n)
    for (std::size_t v = 0; v < spatial; ++v) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < x.c; ++c)
        mx = std::max(mx, x.data[(static_cast<std::size_t>(n) * x.c + c) * spatial + v]);
      double z = 0.0;
      for (int c = 0; c < x.c; ++c) {
        const std::size_t i = (static_cast<std::size_t>(n) * x.c + c) * spatial + v;
        y.data[i] = std::exp(x.data[i] - mx);
        z += y.data[i];
      }
      for (int c = 0; c < x.c; ++c)
        y.data[(static_cast<std::size_t>(n) * x.c + c) * spatial + v] /= z;
    }
  return y;
}

XentResult crossEntropy(const Tensor5& probabilities, const Tensor5& targets) {
  if (targets.n != probabilities.n || targets.c != 1 || targets.d != probabilities.d ||
      targets.h != probabilities.h || targets.w != probabilities.w)
    throw DimsMismatchError("crossEntropy: target shape mismatch");
  const std::size_t spatial =
      static_cast<std::size_t>(probabilities.d) * probabilities.h * probabilities.w;
  const double scale = 1.0 / (static_cast<double>(probabilities.n) * spatial);

  XentResult r;
  r.gradLogits = Tensor5::zerosLike(probabilities);
  for (int n = 0; n < probabilities.n; ++n)
    for (std::size_t v = 0; v < spatial; ++v) {
      const int target = targets.data[static_cast<std::size_t>(n) * spatial + v] > 0.5 ? 1 : 0;
      for (int c = 0; c < probabilities.c; ++c) {
        const std::size_t i =
            (static_cast<std::size_t>(n) * probabilities.c + c) * spatial + v;
        const double p = probabilities.data[i];
        if (c == target) r.loss -= std::log(std::max(p, 1e-12));
        r.gradLogits.data[i] = (p - (c == target ? 1.0 : 0.0)) * scale;
      }
    }
  r.loss *= scale;
  return r;
}

Tensor5 concatChannels(const std::vector<const Tensor5*>& parts) {
  if (parts.empty()) throw InvalidArgumentError("concatChannels needs at least one tensor");
  const Tensor5& f = *parts.front();
  int totalC = 0;
  for (const Tensor5* t : parts) {
    if (t->n != f.n || t->d != f.d || t->h != f.h || t->w != f.w)
      throw DimsMismatchError("concatChannels: spatial/batch mismatch");
    totalC += t->c;
  }
  Tensor5 y(f.n, totalC, f.d, f.h, f.w);
  const std::size_t spatial = static_cast<std::size_t>(f.d) * f.h * f.w;
  for (int n = 0; n < f.n; ++n) {
    int cOut = 0;
    for (const Tensor5* t : parts)
      for (int c = 0; c < t->c; ++c, ++cOut)
        std::copy_n(plane(*t, n, c), spatial, plane(y, n, cOut));
  }
  return y;
}

std::vector<Tensor5> splitChannels(const Tensor5& x, const std::vector<int>& widths) {
  int total = 0;
  for (int w : widths) total += w;
  if (total != x.c) throw DimsMismatchError("splitChannels: widths do not sum to channels");
  std::vector<Tensor5> out;
  const std::size_t spatial = static_cast<std::size_t>(x.d) * x.h * x.w;
  int cBase = 0;
  for (int w : widths) {
    Tensor5 t(x.n, w, x.d, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < w; ++c)
        std::copy_n(plane(x, n, cBase + c), spatial, plane(t, n, c));
    out.push_back(std::move(t));
    cBase += w;
  }
  return out;
}

void sgdStep(std::vector<double>& params, const std::vector<double>& grads, double lr) {
  if (params.size() != grads.size()) throw DimsMismatchError("sgdStep: size mismatch");
  if (lr <= 0.0) throw InvalidArgumentError("learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

Tensor5 initUniform(int n, int c, int d, int h, int w, int fanIn, Rng& rng) {
  if (fanIn < 1) throw InvalidArgumentError("fanIn must be >= 1");
  Tensor5 t(n, c, d, h, w);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fanIn));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace atlasforge
