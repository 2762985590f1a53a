#include "mrf/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mrf/errors.hpp"
#include "mrf/parallel.hpp"
#include "mrf/rng.hpp"

namespace mrf {

NetTensor::NetTensor(std::vector<int64_t> d) : dims(std::move(d)) {
  v.assign(static_cast<std::size_t>(numel()), 0.0);
}

int64_t NetTensor::numel() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

int64_t NetTensor::spatial_numel() const {
  int64_t n = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) n *= dims[i];
  return n;
}

void NetTensor::ensure_grad() {
  if (g.size() != v.size()) g.assign(v.size(), 0.0);
}

void NetTensor::zero_grad() {
  if (g.size() != v.size()) g.assign(v.size(), 0.0);
  else std::fill(g.begin(), g.end(), 0.0);
}

namespace {

// All spatial work runs on a depth/height/width view; 2D tensors use depth 1.
struct Shape3 {
  int64_t c, d, h, w;
  int64_t plane() const { return d * h * w; }
};

Shape3 as3(const std::vector<int64_t>& dims) {
  if (dims.size() == 3) return {dims[0], 1, dims[1], dims[2]};
  if (dims.size() == 4) return {dims[0], dims[1], dims[2], dims[3]};
  throw ConfigError("net tensors must have 2 or 3 spatial dims");
}

struct AxisConv {
  int64_t k = 1, s = 1, p = 0;
  int64_t out(int64_t in) const { return (in + 2 * p - k) / s + 1; }
};

// ---------------------------------------------------------------------------
// Convolution

class ConvLayer : public Layer {
 public:
  ConvLayer(int spatial_rank, int in_ch, int out_ch, int k, int s, int p, bool bias,
            const std::string& name)
      : rank_(spatial_rank), cin_(in_ch), cout_(out_ch), use_bias_(bias) {
    az_ = rank_ == 3 ? AxisConv{k, s, p} : AxisConv{1, 1, 0};
    ay_ = AxisConv{k, s, p};
    ax_ = AxisConv{k, s, p};
    weight_.name = name + ".weight";
    weight_.t = NetTensor({cout_, cin_, az_.k, ay_.k, ax_.k});
    if (use_bias_) {
      bias_.name = name + ".bias";
      bias_.t = NetTensor({cout_});
    }
  }

  std::string describe() const override {
    std::ostringstream ss;
    ss << "conv" << rank_ << "d(" << cin_ << "->" << cout_ << ", k=" << ax_.k << ", s=" << ax_.s
       << ", p=" << ax_.p << (use_bias_ ? ", bias" : "") << ")";
    return ss.str();
  }

  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    const Shape3 s = as3(in.at(0));
    if (s.c != cin_) throw ConfigError(describe() + ": input channels mismatch");
    std::vector<int64_t> out{cout_};
    if (rank_ == 3) out.push_back(az_.out(s.d));
    out.push_back(ay_.out(s.h));
    out.push_back(ax_.out(s.w));
    for (std::size_t i = 1; i < out.size(); ++i)
      if (out[i] < 1) throw ConfigError(describe() + ": output dim < 1");
    return out;
  }

  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const double* w = weight_.t.v.data();
    const double* b = use_bias_ ? bias_.t.v.data() : nullptr;
    const double* x = in[0]->v.data();
    double* y = out.v.data();
    parallel_for(static_cast<std::size_t>(cout_), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t co = c0; co < c1; ++co) {
        double* yp = y + co * os.plane();
        const double init = b ? b[co] : 0.0;
        std::fill(yp, yp + os.plane(), init);
        for (int64_t ci = 0; ci < cin_; ++ci) {
          const double* xp = x + ci * is.plane();
          const double* wp = w + (static_cast<int64_t>(co) * cin_ + ci) * az_.k * ay_.k * ax_.k;
          accumulate_fwd(xp, wp, yp, is, os);
        }
      }
    });
  }

  void backward(const std::vector<const NetTensor*>& in, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const double* x = in[0]->v.data();
    const double* gy = out.g.data();
    // input gradient
    if (in_grads[0] != nullptr) {
      double* gx = in_grads[0]->g.data();
      const double* w = weight_.t.v.data();
      parallel_for(static_cast<std::size_t>(cin_), [&](std::size_t c0, std::size_t c1) {
        for (std::size_t ci = c0; ci < c1; ++ci) {
          double* gxp = gx + ci * is.plane();
          for (int64_t co = 0; co < cout_; ++co) {
            const double* gyp = gy + co * os.plane();
            const double* wp = w + (co * cin_ + static_cast<int64_t>(ci)) * az_.k * ay_.k * ax_.k;
            accumulate_bwd_input(gyp, wp, gxp, is, os);
          }
        }
      });
    }
    // weight/bias gradients
    double* gw = weight_.t.g.data();
    parallel_for(static_cast<std::size_t>(cout_), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t co = c0; co < c1; ++co) {
        const double* gyp = gy + co * os.plane();
        for (int64_t ci = 0; ci < cin_; ++ci) {
          const double* xp = x + ci * is.plane();
          double* gwp = gw + (static_cast<int64_t>(co) * cin_ + ci) * az_.k * ay_.k * ax_.k;
          accumulate_bwd_weight(xp, gyp, gwp, is, os);
        }
        if (use_bias_) {
          double acc = 0;
          for (int64_t i = 0; i < os.plane(); ++i) acc += gyp[i];
          bias_.t.g[co] += acc;
        }
      }
    });
  }

  std::vector<NetParam*> params() override {
    std::vector<NetParam*> p{&weight_};
    if (use_bias_) p.push_back(&bias_);
    return p;
  }

 private:
  // for fixed (kz,ky,kx): y[oz,oy,ox] += w * x[oz*s+kz-p, ...]
  void accumulate_fwd(const double* xp, const double* wp, double* yp, const Shape3& is,
                      const Shape3& os) const {
    for (int64_t kz = 0; kz < az_.k; ++kz) {
      const auto [oz0, oz1] = out_range(kz, az_, is.d, os.d);
      for (int64_t ky = 0; ky < ay_.k; ++ky) {
        const auto [oy0, oy1] = out_range(ky, ay_, is.h, os.h);
        for (int64_t kx = 0; kx < ax_.k; ++kx) {
          const auto [ox0, ox1] = out_range(kx, ax_, is.w, os.w);
          const double wv = wp[(kz * ay_.k + ky) * ax_.k + kx];
          for (int64_t oz = oz0; oz < oz1; ++oz) {
            const int64_t iz = oz * az_.s + kz - az_.p;
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t iy = oy * ay_.s + ky - ay_.p;
              const double* xrow = xp + (iz * is.h + iy) * is.w + (ox0 * ax_.s + kx - ax_.p);
              double* yrow = yp + (oz * os.h + oy) * os.w + ox0;
              const int64_t n = ox1 - ox0;
              if (ax_.s == 1) {
                for (int64_t i = 0; i < n; ++i) yrow[i] += wv * xrow[i];
              } else {
                for (int64_t i = 0; i < n; ++i) yrow[i] += wv * xrow[i * ax_.s];
              }
            }
          }
        }
      }
    }
  }

  void accumulate_bwd_input(const double* gyp, const double* wp, double* gxp, const Shape3& is,
                            const Shape3& os) const {
    for (int64_t kz = 0; kz < az_.k; ++kz) {
      const auto [oz0, oz1] = out_range(kz, az_, is.d, os.d);
      for (int64_t ky = 0; ky < ay_.k; ++ky) {
        const auto [oy0, oy1] = out_range(ky, ay_, is.h, os.h);
        for (int64_t kx = 0; kx < ax_.k; ++kx) {
          const auto [ox0, ox1] = out_range(kx, ax_, is.w, os.w);
          const double wv = wp[(kz * ay_.k + ky) * ax_.k + kx];
          for (int64_t oz = oz0; oz < oz1; ++oz) {
            const int64_t iz = oz * az_.s + kz - az_.p;
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t iy = oy * ay_.s + ky - ay_.p;
              double* gxrow = gxp + (iz * is.h + iy) * is.w + (ox0 * ax_.s + kx - ax_.p);
              const double* gyrow = gyp + (oz * os.h + oy) * os.w + ox0;
              const int64_t n = ox1 - ox0;
              if (ax_.s == 1) {
                for (int64_t i = 0; i < n; ++i) gxrow[i] += wv * gyrow[i];
              } else {
                for (int64_t i = 0; i < n; ++i) gxrow[i * ax_.s] += wv * gyrow[i];
              }
            }
          }
        }
      }
    }
  }

  void accumulate_bwd_weight(const double* xp, const double* gyp, double* gwp, const Shape3& is,
                             const Shape3& os) const {
    for (int64_t kz = 0; kz < az_.k; ++kz) {
      const auto [oz0, oz1] = out_range(kz, az_, is.d, os.d);
      for (int64_t ky = 0; ky < ay_.k; ++ky) {
        const auto [oy0, oy1] = out_range(ky, ay_, is.h, os.h);
        for (int64_t kx = 0; kx < ax_.k; ++kx) {
          const auto [ox0, ox1] = out_range(kx, ax_, is.w, os.w);
          double acc = 0;
          for (int64_t oz = oz0; oz < oz1; ++oz) {
            const int64_t iz = oz * az_.s + kz - az_.p;
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t iy = oy * ay_.s + ky - ay_.p;
              const double* xrow = xp + (iz * is.h + iy) * is.w + (ox0 * ax_.s + kx - ax_.p);
              const double* gyrow = gyp + (oz * os.h + oy) * os.w + ox0;
              const int64_t n = ox1 - ox0;
              if (ax_.s == 1) {
                for (int64_t i = 0; i < n; ++i) acc += xrow[i] * gyrow[i];
              } else {
                for (int64_t i = 0; i < n; ++i) acc += xrow[i * ax_.s] * gyrow[i];
              }
            }
          }
          gwp[(kz * ay_.k + ky) * ax_.k + kx] += acc;
        }
      }
    }
  }

  // valid output index range for a kernel offset
  static std::pair<int64_t, int64_t> out_range(int64_t k, const AxisConv& a, int64_t in,
                                               int64_t out) {
    int64_t lo = 0;
    if (a.p > k) lo = (a.p - k + a.s - 1) / a.s;
    const int64_t num = in - 1 - k + a.p;
    int64_t hi = num < 0 ? 0 : std::min<int64_t>(out, num / a.s + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
  }

  int rank_;
  int64_t cin_, cout_;
  bool use_bias_;
  AxisConv az_, ay_, ax_;
  NetParam weight_, bias_;
};

// ---------------------------------------------------------------------------
// Transpose convolution with k == s (each output cell receives one tap).

class TransposeConvLayer : public Layer {
 public:
  TransposeConvLayer(int spatial_rank, int in_ch, int out_ch, int k, bool bias,
                     const std::string& name)
      : rank_(spatial_rank), cin_(in_ch), cout_(out_ch), k_(k), use_bias_(bias) {
    kz_ = rank_ == 3 ? k : 1;
    weight_.name = name + ".weight";
    weight_.t = NetTensor({cin_, cout_, kz_, k_, k_});
    if (use_bias_) {
      bias_.name = name + ".bias";
      bias_.t = NetTensor({cout_});
    }
  }

  std::string describe() const override {
    std::ostringstream ss;
    ss << "tconv" << rank_ << "d(" << cin_ << "->" << cout_ << ", k=s=" << k_
       << (use_bias_ ? ", bias" : "") << ")";
    return ss.str();
  }

  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    const Shape3 s = as3(in.at(0));
    if (s.c != cin_) throw ConfigError(describe() + ": input channels mismatch");
    std::vector<int64_t> out{cout_};
    if (rank_ == 3) out.push_back(s.d * kz_);
    out.push_back(s.h * k_);
    out.push_back(s.w * k_);
    return out;
  }

  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const double* x = in[0]->v.data();
    const double* w = weight_.t.v.data();
    const double* b = use_bias_ ? bias_.t.v.data() : nullptr;
    double* y = out.v.data();
    parallel_for(static_cast<std::size_t>(cout_), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t co = c0; co < c1; ++co) {
        double* yp = y + co * os.plane();
        for (int64_t oz = 0; oz < os.d; ++oz) {
          const int64_t iz = oz / kz_, az = oz % kz_;
          for (int64_t oy = 0; oy < os.h; ++oy) {
            const int64_t iy = oy / k_, ay = oy % k_;
            double* yrow = yp + (oz * os.h + oy) * os.w;
            for (int64_t ox = 0; ox < os.w; ++ox) {
              const int64_t ix = ox / k_, ax = ox % k_;
              double acc = b ? b[co] : 0.0;
              for (int64_t ci = 0; ci < cin_; ++ci) {
                const double wv =
                    w[(((ci * cout_ + static_cast<int64_t>(co)) * kz_ + az) * k_ + ay) * k_ + ax];
                acc += wv * x[ci * is.plane() + (iz * is.h + iy) * is.w + ix];
              }
              yrow[ox] = acc;
            }
          }
        }
      }
    });
  }

  void backward(const std::vector<const NetTensor*>& in, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const double* x = in[0]->v.data();
    const double* gy = out.g.data();
    const double* w = weight_.t.v.data();
    if (in_grads[0] != nullptr) {
      double* gx = in_grads[0]->g.data();
      parallel_for(static_cast<std::size_t>(cin_), [&](std::size_t c0, std::size_t c1) {
        for (std::size_t ci = c0; ci < c1; ++ci) {
          double* gxp = gx + ci * is.plane();
          for (int64_t iz = 0; iz < is.d; ++iz)
            for (int64_t iy = 0; iy < is.h; ++iy)
              for (int64_t ix = 0; ix < is.w; ++ix) {
                double acc = 0;
                for (int64_t co = 0; co < cout_; ++co) {
                  const double* gyp = gy + co * os.plane();
                  for (int64_t az = 0; az < kz_; ++az)
                    for (int64_t ay = 0; ay < k_; ++ay)
                      for (int64_t ax = 0; ax < k_; ++ax) {
                        const double wv =
                            w[(((static_cast<int64_t>(ci) * cout_ + co) * kz_ + az) * k_ + ay) *
                                  k_ +
                              ax];
                        acc += wv * gyp[((iz * kz_ + az) * os.h + iy * k_ + ay) * os.w +
                                        ix * k_ + ax];
                      }
                }
                gxp[(iz * is.h + iy) * is.w + ix] += acc;
              }
        }
      });
    }
    // weight grads, parallel over ci (disjoint weight slices)
    double* gw = weight_.t.g.data();
    parallel_for(static_cast<std::size_t>(cin_), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t ci = c0; ci < c1; ++ci) {
        const double* xp = x + ci * is.plane();
        for (int64_t co = 0; co < cout_; ++co) {
          const double* gyp = gy + co * os.plane();
          for (int64_t az = 0; az < kz_; ++az)
            for (int64_t ay = 0; ay < k_; ++ay)
              for (int64_t ax = 0; ax < k_; ++ax) {
                double acc = 0;
                for (int64_t iz = 0; iz < is.d; ++iz)
                  for (int64_t iy = 0; iy < is.h; ++iy) {
                    const double* xrow = xp + (iz * is.h + iy) * is.w;
                    const double* gyrow =
                        gyp + ((iz * kz_ + az) * os.h + iy * k_ + ay) * os.w + ax;
                    for (int64_t ix = 0; ix < is.w; ++ix) acc += xrow[ix] * gyrow[ix * k_];
                  }
                gw[(((static_cast<int64_t>(ci) * cout_ + co) * kz_ + az) * k_ + ay) * k_ + ax] +=
                    acc;
              }
        }
      }
    });
    if (use_bias_) {
      for (int64_t co = 0; co < cout_; ++co) {
        const double* gyp = gy + co * os.plane();
        double acc = 0;
        for (int64_t i = 0; i < os.plane(); ++i) acc += gyp[i];
        bias_.t.g[co] += acc;
      }
    }
  }

  std::vector<NetParam*> params() override {
    std::vector<NetParam*> p{&weight_};
    if (use_bias_) p.push_back(&bias_);
    return p;
  }

 private:
  int rank_;
  int64_t cin_, cout_, k_, kz_;
  bool use_bias_;
  NetParam weight_, bias_;
};

// ---------------------------------------------------------------------------
// Linear (bilinear/trilinear) x2 upsampling, align_corners = false.

class UpsampleLayer : public Layer {
 public:
  explicit UpsampleLayer(int spatial_rank) : rank_(spatial_rank) {}

  std::string describe() const override {
    return rank_ == 3 ? "upsample(trilinear x2)" : "upsample(bilinear x2)";
  }

  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    std::vector<int64_t> out = in.at(0);
    for (std::size_t i = 1; i < out.size(); ++i) out[i] *= 2;
    return out;
  }

  struct AxisMap {
    std::vector<int64_t> i0, i1;
    std::vector<double> f;
  };

  static AxisMap build_map(int64_t n_in, int64_t n_out) {
    AxisMap m;
    m.i0.resize(n_out);
    m.i1.resize(n_out);
    m.f.resize(n_out);
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (int64_t o = 0; o < n_out; ++o) {
      double x = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (x < 0) x = 0;
      if (x > static_cast<double>(n_in - 1)) x = static_cast<double>(n_in - 1);
      const int64_t i0 = static_cast<int64_t>(x);
      m.i0[o] = i0;
      m.i1[o] = std::min(i0 + 1, n_in - 1);
      m.f[o] = x - static_cast<double>(i0);
    }
    return m;
  }

  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const AxisMap mz = build_map(is.d, os.d), my = build_map(is.h, os.h),
                  mx = build_map(is.w, os.w);
    const double* x = in[0]->v.data();
    double* y = out.v.data();
    parallel_for(static_cast<std::size_t>(is.c), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t c = c0; c < c1; ++c) {
        const double* xp = x + c * is.plane();
        double* yp = y + c * os.plane();
        for (int64_t oz = 0; oz < os.d; ++oz)
          for (int64_t oy = 0; oy < os.h; ++oy)
            for (int64_t ox = 0; ox < os.w; ++ox) {
              const double fz = mz.f[oz], fy = my.f[oy], fx = mx.f[ox];
              double acc = 0;
              for (int cz = 0; cz < 2; ++cz) {
                const double wz = cz ? fz : 1 - fz;
                if (wz == 0) continue;
                for (int cy = 0; cy < 2; ++cy) {
                  const double wy = cy ? fy : 1 - fy;
                  if (wy == 0) continue;
                  for (int cx = 0; cx < 2; ++cx) {
                    const double wx = cx ? fx : 1 - fx;
                    if (wx == 0) continue;
                    acc += wz * wy * wx *
                           xp[((cz ? mz.i1[oz] : mz.i0[oz]) * is.h +
                               (cy ? my.i1[oy] : my.i0[oy])) *
                                  is.w +
                              (cx ? mx.i1[ox] : mx.i0[ox])];
                  }
                }
              }
              yp[(oz * os.h + oy) * os.w + ox] = acc;
            }
      }
    });
  }

  void backward(const std::vector<const NetTensor*>& in, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    if (in_grads[0] == nullptr) return;
    const Shape3 is = as3(in[0]->dims), os = as3(out.dims);
    const AxisMap mz = build_map(is.d, os.d), my = build_map(is.h, os.h),
                  mx = build_map(is.w, os.w);
    const double* gy = out.g.data();
    double* gx = in_grads[0]->g.data();
    parallel_for(static_cast<std::size_t>(is.c), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t c = c0; c < c1; ++c) {
        const double* gyp = gy + c * os.plane();
        double* gxp = gx + c * is.plane();
        for (int64_t oz = 0; oz < os.d; ++oz)
          for (int64_t oy = 0; oy < os.h; ++oy)
            for (int64_t ox = 0; ox < os.w; ++ox) {
              const double g = gyp[(oz * os.h + oy) * os.w + ox];
              const double fz = mz.f[oz], fy = my.f[oy], fx = mx.f[ox];
              for (int cz = 0; cz < 2; ++cz) {
                const double wz = cz ? fz : 1 - fz;
                if (wz == 0) continue;
                for (int cy = 0; cy < 2; ++cy) {
                  const double wy = cy ? fy : 1 - fy;
                  if (wy == 0) continue;
                  for (int cx = 0; cx < 2; ++cx) {
                    const double wx = cx ? fx : 1 - fx;
                    if (wx == 0) continue;
                    gxp[((cz ? mz.i1[oz] : mz.i0[oz]) * is.h + (cy ? my.i1[oy] : my.i0[oy])) *
                            is.w +
                        (cx ? mx.i1[ox] : mx.i0[ox])] += g * wz * wy * wx;
                  }
                }
              }
            }
      }
    });
  }

 private:
  int rank_;
};

// ---------------------------------------------------------------------------

class ReluLayer : public Layer {
 public:
  std::string describe() const override { return "relu"; }
  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    return in.at(0);
  }
  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const auto& x = in[0]->v;
    for (std::size_t i = 0; i < x.size(); ++i) out.v[i] = x[i] > 0 ? x[i] : 0.0;
  }
  void backward(const std::vector<const NetTensor*>& in, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    if (in_grads[0] == nullptr) return;
    const auto& x = in[0]->v;
    auto& gx = in_grads[0]->g;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0) gx[i] += out.g[i];
  }
};

class AddLayer : public Layer {
 public:
  std::string describe() const override { return "add"; }
  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    if (in.at(0) != in.at(1)) throw ConfigError("add: operand dims differ");
    return in[0];
  }
  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const auto& a = in[0]->v;
    const auto& b = in[1]->v;
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a[i] + b[i];
  }
  void backward(const std::vector<const NetTensor*>&, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    for (int j = 0; j < 2; ++j) {
      if (in_grads[j] == nullptr) continue;
      auto& g = in_grads[j]->g;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.g[i];
    }
  }
};

class ConcatLayer : public Layer {
 public:
  std::string describe() const override { return "concat"; }
  std::vector<int64_t> infer_dims(const std::vector<std::vector<int64_t>>& in) const override {
    std::vector<int64_t> out = in.at(0);
    const auto& b = in.at(1);
    if (std::vector<int64_t>(out.begin() + 1, out.end()) !=
        std::vector<int64_t>(b.begin() + 1, b.end()))
      throw ConfigError("concat: spatial dims differ");
    out[0] += b[0];
    return out;
  }
  void forward(const std::vector<const NetTensor*>& in, NetTensor& out) override {
    const auto& a = in[0]->v;
    const auto& b = in[1]->v;
    std::copy(a.begin(), a.end(), out.v.begin());
    std::copy(b.begin(), b.end(), out.v.begin() + static_cast<int64_t>(a.size()));
  }
  void backward(const std::vector<const NetTensor*>& in, const std::vector<NetTensor*>& in_grads,
                const NetTensor& out) override {
    const std::size_t na = in[0]->v.size();
    if (in_grads[0] != nullptr)
      for (std::size_t i = 0; i < na; ++i) in_grads[0]->g[i] += out.g[i];
    if (in_grads[1] != nullptr)
      for (std::size_t i = 0; i < in[1]->v.size(); ++i) in_grads[1]->g[i] += out.g[na + i];
  }
};

}  // namespace

std::unique_ptr<Layer> make_conv(int spatial_rank, int in_ch, int out_ch, int k, int s, int p,
                                 bool bias, const std::string& name) {
  return std::make_unique<ConvLayer>(spatial_rank, in_ch, out_ch, k, s, p, bias, name);
}
std::unique_ptr<Layer> make_transpose_conv(int spatial_rank, int in_ch, int out_ch, int k,
                                           bool bias, const std::string& name) {
  return std::make_unique<TransposeConvLayer>(spatial_rank, in_ch, out_ch, k, bias, name);
}
std::unique_ptr<Layer> make_upsample(int spatial_rank) {
  return std::make_unique<UpsampleLayer>(spatial_rank);
}
std::unique_ptr<Layer> make_relu() { return std::make_unique<ReluLayer>(); }
std::unique_ptr<Layer> make_add() { return std::make_unique<AddLayer>(); }
std::unique_ptr<Layer> make_concat() { return std::make_unique<ConcatLayer>(); }

// ---------------------------------------------------------------------------
// Network

void Network::set_input_dims(std::vector<int64_t> dims) {
  input_dims_ = std::move(dims);
  input_ = NetTensor(input_dims_);
}

int Network::add(std::unique_ptr<Layer> layer, std::vector<int> inputs) {
  std::vector<std::vector<int64_t>> in_dims;
  for (int id : inputs) {
    if (id == 0) in_dims.push_back(input_dims_);
    else in_dims.push_back(nodes_.at(static_cast<std::size_t>(id - 1)).out.dims);
  }
  Node node;
  node.out = NetTensor(layer->infer_dims(in_dims));
  node.layer = std::move(layer);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size());
}

const NetTensor& Network::forward(const NetTensor& input) {
  if (input.dims != input_dims_) throw ConfigError("network input dims mismatch");
  input_.v = input.v;
  for (auto& node : nodes_) {
    std::vector<const NetTensor*> in;
    in.reserve(node.inputs.size());
    for (int id : node.inputs)
      in.push_back(id == 0 ? &input_ : &nodes_[static_cast<std::size_t>(id - 1)].out);
    node.layer->forward(in, node.out);
  }
  forward_done_ = true;
  return nodes_.back().out;
}

void Network::backward(const NetTensor& output_grad) {
  if (!forward_done_) throw NumericalError("backward called before forward");
  if (output_grad.v.size() != nodes_.back().out.v.size())
    throw ConfigError("output grad dims mismatch");
  input_.zero_grad();
  for (auto& node : nodes_) node.out.zero_grad();
  for (auto& p : params()) p->t.ensure_grad();
  nodes_.back().out.g = output_grad.v;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    std::vector<const NetTensor*> in;
    std::vector<NetTensor*> in_grads;
    for (int id : node.inputs) {
      NetTensor& t = id == 0 ? input_ : nodes_[static_cast<std::size_t>(id - 1)].out;
      in.push_back(&t);
      in_grads.push_back(&t);
    }
    node.layer->backward(in, in_grads, node.out);
  }
}

void Network::zero_param_grads() {
  for (auto* p : params()) p->t.zero_grad();
}

std::vector<NetParam*> Network::params() {
  std::vector<NetParam*> out;
  for (auto& node : nodes_)
    for (auto* p : node.layer->params()) out.push_back(p);
  return out;
}

std::size_t Network::n_params() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->t.v.size();
  return n;
}

const NetTensor& Network::output() const { return nodes_.back().out; }

const std::vector<int64_t>& Network::output_dims() const { return nodes_.back().out.dims; }

std::string Network::descriptor() {
  std::ostringstream ss;
  ss << arch_name_ << " in=[";
  for (std::size_t i = 0; i < input_dims_.size(); ++i) ss << (i ? "," : "") << input_dims_[i];
  ss << "] layers=" << nodes_.size() << " params=" << n_params();
  return ss.str();
}

std::vector<double> Network::serialize_params() {
  std::vector<double> flat;
  for (auto* p : params()) flat.insert(flat.end(), p->t.v.begin(), p->t.v.end());
  return flat;
}

void Network::deserialize_params(const std::vector<double>& flat) {
  std::size_t off = 0;
  for (auto* p : params()) {
    if (off + p->t.v.size() > flat.size())
      throw ConfigError("parameter blob too short for this architecture");
    std::copy(flat.begin() + static_cast<int64_t>(off),
              flat.begin() + static_cast<int64_t>(off + p->t.v.size()), p->t.v.begin());
    off += p->t.v.size();
  }
  if (off != flat.size()) throw ConfigError("parameter blob size mismatch");
}

void Network::init_params(uint64_t seed) {
  Rng rng(seed);
  for (auto* p : params()) {
    if (p->name.ends_with(".bias")) {
      std::fill(p->t.v.begin(), p->t.v.end(), 0.0);
      continue;
    }
    // weight dims: [out, in, kz, ky, kx] for conv, [in, out, kz, ky, kx] for
    // tconv; fan_in uses the channel dim the input activations contract over
    const auto& d = p->t.dims;
    int64_t taps = 1;
    for (std::size_t i = 2; i < d.size(); ++i) taps *= d[i];
    const int64_t fan_in = d[1] * taps;  // conservative, same for both layouts
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : p->t.v) w = rng.uniform(-bound, bound);
  }
}

// ---------------------------------------------------------------------------
// Builders

namespace {

void check_divisible(const std::vector<int64_t>& dims, int n_scales, const char* arch) {
  const int64_t div = int64_t{1} << (n_scales - 1);
  for (std::size_t i = 1; i < dims.size(); ++i)
    if (dims[i] % div != 0)
      throw ConfigError(std::string(arch) + ": spatial dim " + std::to_string(dims[i]) +
                        " not divisible by " + std::to_string(div));
}

int res_block(Network& net, int x, int rank, int ch, bool bias, int idx) {
  const std::string name = "res" + std::to_string(idx);
  int a = net.add(std::make_unique<ConvLayer>(rank, ch, ch, 3, 1, 1, bias, name + ".conv1"), {x});
  int r = net.add(std::make_unique<ReluLayer>(), {a});
  int b2 = net.add(std::make_unique<ConvLayer>(rank, ch, ch, 3, 1, 1, bias, name + ".conv2"), {r});
  return net.add(std::make_unique<AddLayer>(), {b2, x});
}

}  // namespace

Network build_drunet(const std::vector<int>& channels, int n_res, bool bias,
                     const std::vector<int64_t>& dims) {
  if (channels.empty()) throw ConfigError("drunet: channels must be non-empty");
  if (!std::is_sorted(channels.begin(), channels.end()) ||
      std::adjacent_find(channels.begin(), channels.end()) != channels.end())
    throw ConfigError("drunet: channels must be strictly increasing");
  if (n_res < 1) throw ConfigError("drunet: n_res must be >= 1");
  if (dims.size() != 3 && dims.size() != 4)
    throw ConfigError("drunet: dims must be {channels, spatial...} with 2 or 3 spatial dims");
  check_divisible(dims, static_cast<int>(channels.size()), "drunet");

  const int rank = static_cast<int>(dims.size()) - 1;
  const int s = static_cast<int>(channels.size());
  const int io_ch = static_cast<int>(dims[0]);

  Network net;
  net.arch_name_ = "drunet";
  net.set_input_dims(dims);
  int idx = 0;
  int x = net.add(std::make_unique<ConvLayer>(rank, io_ch, channels[0], 3, 1, 1, bias, "head"),
                  {0});
  std::vector<int> skips{x};  // value entering each downsample chain
  for (int sc = 0; sc + 1 < s; ++sc) {
    for (int r = 0; r < n_res; ++r) x = res_block(net, x, rank, channels[sc], bias, idx++);
    x = net.add(std::make_unique<ConvLayer>(rank, channels[sc], channels[sc + 1], 2, 2, 0, bias,
                                            "down" + std::to_string(sc)),
                {x});
    skips.push_back(x);
  }
  for (int r = 0; r < n_res; ++r) x = res_block(net, x, rank, channels[s - 1], bias, idx++);
  for (int sc = s - 2; sc >= 0; --sc) {
    x = net.add(std::make_unique<AddLayer>(), {x, skips[static_cast<std::size_t>(sc + 1)]});
    x = net.add(std::make_unique<TransposeConvLayer>(rank, channels[sc + 1], channels[sc], 2,
                                                     bias, "up" + std::to_string(sc)),
                {x});
    for (int r = 0; r < n_res; ++r) x = res_block(net, x, rank, channels[sc], bias, idx++);
  }
  x = net.add(std::make_unique<AddLayer>(), {x, skips[0]});
  net.add(std::make_unique<ConvLayer>(rank, channels[0], io_ch, 3, 1, 1, bias, "tail"), {x});
  return net;
}

Network build_dipunet(const std::vector<int>& channels, const std::string& upsample,
                      const std::vector<int64_t>& dims) {
  if (channels.empty()) throw ConfigError("dip-unet: channels must be non-empty");
  if (dims.size() != 3 && dims.size() != 4)
    throw ConfigError("dip-unet: dims must be {channels, spatial...} with 2 or 3 spatial dims");
  if (upsample != "trilinear" && upsample != "bilinear" && upsample != "linear")
    throw ConfigError("dip-unet: unsupported upsample kind `" + upsample + "`");
  check_divisible(dims, static_cast<int>(channels.size()), "dip-unet");

  const int rank = static_cast<int>(dims.size()) - 1;
  const int s = static_cast<int>(channels.size());
  const int io_ch = static_cast<int>(dims[0]);

  Network net;
  net.arch_name_ = "dip-unet";
  net.set_input_dims(dims);
  int x = net.add(std::make_unique<ConvLayer>(rank, io_ch, channels[0], 3, 1, 1, true, "stem"),
                  {0});
  x = net.add(std::make_unique<ReluLayer>(), {x});
  std::vector<int> skips{x};
  for (int sc = 1; sc < s; ++sc) {
    x = net.add(std::make_unique<ConvLayer>(rank, channels[sc - 1], channels[sc], 3, 2, 1, true,
                                            "enc" + std::to_string(sc) + ".down"),
                {x});
    x = net.add(std::make_unique<ReluLayer>(), {x});
    x = net.add(std::make_unique<ConvLayer>(rank, channels[sc], channels[sc], 3, 1, 1, true,
                                            "enc" + std::to_string(sc) + ".conv"),
                {x});
    x = net.add(std::make_unique<ReluLayer>(), {x});
    skips.push_back(x);
  }
  for (int sc = s - 2; sc >= 0; --sc) {
    x = net.add(std::make_unique<UpsampleLayer>(rank), {x});
    x = net.add(std::make_unique<ConcatLayer>(), {x, skips[static_cast<std::size_t>(sc)]});
    x = net.add(std::make_unique<ConvLayer>(rank, channels[sc + 1] + channels[sc], channels[sc],
                                            3, 1, 1, true, "dec" + std::to_string(sc)),
                {x});
    x = net.add(std::make_unique<ReluLayer>(), {x});
  }
  net.add(std::make_unique<ConvLayer>(rank, channels[0], io_ch, 3, 1, 1, true, "out"), {x});
  return net;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(AdamState& state, const std::vector<NetParam*>& params, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->t.v.size(), 0.0);
      state.v[i].assign(params[i]->t.v.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    NetParam& p = *params[i];
    p.t.ensure_grad();
    if (state.m[i].size() != p.t.v.size()) throw ConfigError("adam buffer dims mismatch");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.t.v.size(); ++j) {
      const double g = p.t.g[j];
      if (std::isnan(g))
        throw NumericalError("NaN gradient in parameter " + p.name);
      m[j] = state.beta1 * m[j] + (1 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1 - state.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.t.v[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    std::fill(p.t.g.begin(), p.t.g.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Smoothed anisotropic TV

double tv_penalty(const double* x, const std::vector<int64_t>& dims, double eps,
                  double* grad_accum) {
  if (!(eps > 0)) throw ConfigError("tv epsilon must be > 0");
  const Shape3 s = as3(dims);
  const int64_t strides[3] = {s.h * s.w, s.w, 1};
  const int64_t extents[3] = {s.d, s.h, s.w};
  double value = 0;
  for (int64_t c = 0; c < s.c; ++c) {
    const double* xp = x + c * s.plane();
    double* gp = grad_accum ? grad_accum + c * s.plane() : nullptr;
    for (int axis = 0; axis < 3; ++axis) {
      if (extents[axis] < 2) continue;
      const int64_t st = strides[axis];
      for (int64_t z = 0; z < s.d; ++z)
        for (int64_t y = 0; y < s.h; ++y)
          for (int64_t xx = 0; xx < s.w; ++xx) {
            const int64_t coord = axis == 0 ? z : axis == 1 ? y : xx;
            if (coord + 1 >= extents[axis]) continue;  // replicate boundary: zero diff
            const int64_t i = (z * s.h + y) * s.w + xx;
            const double d = xp[i + st] - xp[i];
            const double r = std::sqrt(d * d + eps * eps);
            value += r - eps;
            if (gp) {
              const double dd = d / r;
              gp[i + st] += dd;
              gp[i] -= dd;
            }
          }
    }
  }
  return value;
}

}  // namespace mrf
