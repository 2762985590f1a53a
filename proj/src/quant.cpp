#include "mrf/quant.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "mrf/errors.hpp"
#include "mrf/io.hpp"
#include "mrf/parallel.hpp"

namespace mrf {

QMaps::QMaps(std::vector<std::size_t> grid_dims) : grid(std::move(grid_dims)) {
  t1_ms = TensorR(grid);
  t2_ms = TensorR(grid);
  pd = TensorR(grid);
  mask = Mask(grid);
}

void save_qmaps(const std::filesystem::path& qmaps_path, const QMaps& q) {
  std::vector<std::size_t> dims{3};
  dims.insert(dims.end(), q.grid.begin(), q.grid.end());
  TensorR packed(dims);
  const std::size_t n = q.grid_numel();
  std::copy(q.t1_ms.data(), q.t1_ms.data() + n, packed.data());
  std::copy(q.t2_ms.data(), q.t2_ms.data() + n, packed.data() + n);
  std::copy(q.pd.data(), q.pd.data() + n, packed.data() + 2 * n);
  write_tensor(qmaps_path, packed);
}

QMaps load_qmaps(const std::filesystem::path& qmaps_path) {
  TensorR packed = read_tensor_real(qmaps_path);
  if (packed.ndim() < 3 || packed.dim(0) != 3)
    throw IoError("qmaps tensor must be [3, grid...]");
  QMaps q({packed.dims().begin() + 1, packed.dims().end()});
  const std::size_t n = q.grid_numel();
  std::copy(packed.data(), packed.data() + n, q.t1_ms.data());
  std::copy(packed.data() + n, packed.data() + 2 * n, q.t2_ms.data());
  std::copy(packed.data() + 2 * n, packed.data() + 3 * n, q.pd.data());
  for (std::size_t i = 0; i < n; ++i) q.mask[i] = q.pd[i] > 0 ? 1 : 0;
  return q;
}

void save_mask(const std::filesystem::path& path, const Mask& m,
               const std::vector<std::size_t>& grid) {
  TensorR t(grid);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = m[i] ? 1.0 : 0.0;
  write_tensor(path, t);
}

Mask load_mask(const std::filesystem::path& path) {
  TensorR t = read_tensor_real(path);
  Mask m(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i) m[i] = t[i] > 0.5 ? 1 : 0;
  return m;
}

QMaps dict_match(const Tsmi& x, const Dictionary& dict, const SubspaceBasis& basis,
                 const Mask* mask) {
  if (basis.n_frames() != dict.n_frames())
    throw ConfigError("dict_match: basis frames do not match dictionary");
  if (basis.n_coeffs() != x.k) throw ConfigError("dict_match: basis K does not match tsmi");
  const std::size_t d = dict.n_atoms();
  const std::size_t k = x.k;
  const std::size_t n = x.grid_numel();
  if (mask && mask->numel() != n) throw ConfigError("dict_match: mask dims mismatch");

  // compress atoms, retain raw norms, renormalize rows
  TensorC ac = compress(dict.atoms, basis);
  std::vector<double> raw_norm(d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += std::norm(ac(j, i));
    raw_norm[j] = std::sqrt(s);
    const double inv = raw_norm[j] > 0 ? 1.0 / raw_norm[j] : 0.0;
    for (std::size_t i = 0; i < k; ++i) ac(j, i) *= inv;
  }

  QMaps q(x.grid);
  parallel_for(n, [&](std::size_t v0, std::size_t v1) {
    std::vector<cplx> xv(k);
    for (std::size_t v = v0; v < v1; ++v) {
      if (mask && !(*mask)[v]) continue;
      for (std::size_t i = 0; i < k; ++i) xv[i] = x.channel(i)[v];
      double best = -1;
      std::size_t bj = 0;
      for (std::size_t j = 0; j < d; ++j) {
        if (raw_norm[j] == 0) continue;
        cplx acc(0, 0);
        const cplx* row = ac.data() + j * k;
        for (std::size_t i = 0; i < k; ++i) acc += xv[i] * std::conj(row[i]);
        const double mag = std::abs(acc);
        if (mag > best) {
          best = mag;
          bj = j;
        }
      }
      if (best < 0) continue;
      q.t1_ms[v] = dict.t1_ms[bj];
      q.t2_ms[v] = dict.t2_ms[bj];
      q.pd[v] = best / raw_norm[bj];
      q.mask[v] = 1;
    }
  });
  if (mask)
    for (std::size_t v = 0; v < n; ++v) q.mask[v] = (*mask)[v];
  return q;
}

double mape(const TensorR& est, const TensorR& ref, const Mask& mask) {
  if (!est.same_dims(ref) || est.numel() != mask.numel())
    throw ConfigError("mape: dims mismatch");
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < est.numel(); ++i) {
    if (!mask[i]) continue;
    if (!(ref[i] > 0)) throw ConfigError("mape: reference must be > 0 on the mask");
    acc += std::abs(est[i] - ref[i]) / ref[i];
    ++count;
  }
  if (count == 0) throw ConfigError("mape: empty mask");
  return 100.0 * acc / static_cast<double>(count);
}

double psnr(const TensorR& est, const TensorR& ref, const Mask& mask) {
  if (!est.same_dims(ref) || est.numel() != mask.numel())
    throw ConfigError("psnr: dims mismatch");
  double peak = 0, mse = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < est.numel(); ++i) {
    if (!mask[i]) continue;
    peak = std::max(peak, ref[i]);
    const double d = est[i] - ref[i];
    mse += d * d;
    ++count;
  }
  if (count == 0) throw ConfigError("psnr: empty mask");
  mse /= static_cast<double>(count);
  if (mse == 0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

namespace {

// SSIM of one 2D slice accumulated over masked pixels.
void ssim_slice(const double* est, const double* ref, const uint8_t* mask, std::size_t h,
                std::size_t w, double dyn_range, double& acc, std::size_t& count) {
  constexpr int kHalf = 3;  // 7-wide window
  constexpr double kSigma = 1.5;
  static const std::vector<double> win = [] {
    std::vector<double> v(2 * kHalf + 1);
    for (int i = -kHalf; i <= kHalf; ++i)
      v[static_cast<std::size_t>(i + kHalf)] = std::exp(-0.5 * (i / kSigma) * (i / kSigma));
    return v;
  }();
  const double c1 = (0.01 * dyn_range) * (0.01 * dyn_range);
  const double c2 = (0.03 * dyn_range) * (0.03 * dyn_range);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      double sw = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -kHalf; dy <= kHalf; ++dy) {
        const int64_t yy = static_cast<int64_t>(y) + dy;
        if (yy < 0 || yy >= static_cast<int64_t>(h)) continue;
        for (int dx = -kHalf; dx <= kHalf; ++dx) {
          const int64_t xx = static_cast<int64_t>(x) + dx;
          if (xx < 0 || xx >= static_cast<int64_t>(w)) continue;
          const double wgt = win[static_cast<std::size_t>(dy + kHalf)] *
                             win[static_cast<std::size_t>(dx + kHalf)];
          const double a = est[yy * static_cast<int64_t>(w) + xx];
          const double b = ref[yy * static_cast<int64_t>(w) + xx];
          sw += wgt;
          mx += wgt * a;
          my += wgt * b;
          sxx += wgt * a * a;
          syy += wgt * b * b;
          sxy += wgt * a * b;
        }
      }
      mx /= sw;
      my /= sw;
      const double vx = std::max(0.0, sxx / sw - mx * mx);
      const double vy = std::max(0.0, syy / sw - my * my);
      const double cxy = sxy / sw - mx * my;
      const double s = ((2 * mx * my + c1) * (2 * cxy + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
      acc += s;
      ++count;
    }
}

}  // namespace

double ssim(const TensorR& est, const TensorR& ref, const Mask& mask) {
  if (!est.same_dims(ref) || est.numel() != mask.numel())
    throw ConfigError("ssim: dims mismatch");
  double peak = 0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < ref.numel(); ++i)
    if (mask[i]) {
      peak = std::max(peak, ref[i]);
      ++masked;
    }
  if (masked == 0) throw ConfigError("ssim: empty mask");
  if (peak <= 0) peak = 1.0;

  const auto& dims = est.dims();
  double acc = 0;
  std::size_t count = 0;
  if (dims.size() == 2) {
    ssim_slice(est.data(), ref.data(), mask.data(), dims[0], dims[1], peak, acc, count);
  } else if (dims.size() == 3) {
    const std::size_t plane = dims[1] * dims[2];
    for (std::size_t z = 0; z < dims[0]; ++z)
      ssim_slice(est.data() + z * plane, ref.data() + z * plane, mask.data() + z * plane,
                 dims[1], dims[2], peak, acc, count);
  } else {
    throw ConfigError("ssim: expects 2D or 3D maps");
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

Mask make_mask(const TensorR& pd_ref, double threshold_frac) {
  const auto& dims = pd_ref.dims();
  if (dims.size() != 2 && dims.size() != 3) throw ConfigError("make_mask: expects 2D or 3D");
  double peak = 0;
  for (std::size_t i = 0; i < pd_ref.numel(); ++i) peak = std::max(peak, pd_ref[i]);
  Mask above(dims);
  std::size_t n_above = 0;
  for (std::size_t i = 0; i < pd_ref.numel(); ++i) {
    above[i] = pd_ref[i] > threshold_frac * peak ? 1 : 0;
    n_above += above[i];
  }
  if (n_above == 0) throw ConfigError("make_mask: empty mask");

  // largest face-connected component
  const std::size_t dz = dims.size() == 3 ? dims[0] : 1;
  const std::size_t dy = dims[dims.size() == 3 ? 1 : 0];
  const std::size_t dx = dims.back();
  std::vector<int32_t> comp(above.numel(), -1);
  int32_t n_comp = 0;
  std::vector<std::size_t> comp_size;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < above.numel(); ++seed) {
    if (!above[seed] || comp[seed] >= 0) continue;
    comp[seed] = n_comp;
    comp_size.push_back(0);
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      ++comp_size.back();
      const std::size_t z = i / (dy * dx), y = (i / dx) % dy, x = i % dx;
      const auto visit = [&](std::size_t j) {
        if (above[j] && comp[j] < 0) {
          comp[j] = n_comp;
          queue.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < dx) visit(i + 1);
      if (y > 0) visit(i - dx);
      if (y + 1 < dy) visit(i + dx);
      if (z > 0) visit(i - dy * dx);
      if (z + 1 < dz) visit(i + dy * dx);
    }
    ++n_comp;
  }
  const int32_t largest = static_cast<int32_t>(
      std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());
  Mask out(dims);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = comp[i] == largest ? 1 : 0;
  return out;
}

Mask erode_mask(const Mask& mask, const std::vector<std::size_t>& grid, int radius) {
  const std::size_t dz = grid.size() == 3 ? grid[0] : 1;
  const std::size_t dy = grid[grid.size() == 3 ? 1 : 0];
  const std::size_t dx = grid.back();
  Mask cur = mask;
  for (int r = 0; r < radius; ++r) {
    Mask next = cur;
    for (std::size_t z = 0; z < dz; ++z)
      for (std::size_t y = 0; y < dy; ++y)
        for (std::size_t x = 0; x < dx; ++x) {
          const std::size_t i = (z * dy + y) * dx + x;
          if (!cur[i]) continue;
          bool keep = x > 0 && x + 1 < dx && cur[i - 1] && cur[i + 1] && y > 0 && y + 1 < dy &&
                      cur[i - dx] && cur[i + dx];
          if (keep && dz > 1)
            keep = z > 0 && z + 1 < dz && cur[i - dy * dx] && cur[i + dy * dx];
          next[i] = keep ? 1 : 0;
        }
    cur = std::move(next);
  }
  return cur;
}

double mean_squared_laplacian(const Tsmi& x) {
  const std::size_t dz = x.grid.size() == 3 ? x.grid[0] : 1;
  const std::size_t dy = x.grid[x.grid.size() == 3 ? 1 : 0];
  const std::size_t dx = x.grid.back();
  const std::size_t n = x.grid_numel();
  double acc = 0;
  for (std::size_t j = 0; j < x.k; ++j) {
    const cplx* xp = x.channel(j);
    const auto at = [&](std::size_t z, std::size_t y, std::size_t xx) {
      return xp[(z * dy + y) * dx + xx];
    };
    for (std::size_t z = 0; z < dz; ++z)
      for (std::size_t y = 0; y < dy; ++y)
        for (std::size_t xx = 0; xx < dx; ++xx) {
          const cplx c = at(z, y, xx);
          cplx lap(0, 0);
          lap += (xx > 0 ? at(z, y, xx - 1) : c) + (xx + 1 < dx ? at(z, y, xx + 1) : c) - 2.0 * c;
          lap += (y > 0 ? at(z, y - 1, xx) : c) + (y + 1 < dy ? at(z, y + 1, xx) : c) - 2.0 * c;
          if (dz > 1)
            lap += (z > 0 ? at(z - 1, y, xx) : c) + (z + 1 < dz ? at(z + 1, y, xx) : c) - 2.0 * c;
          acc += std::norm(lap);
        }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(2 * x.k));
}

}  // namespace mrf
