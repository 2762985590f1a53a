#include "mrf/nufft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>

#include "mrf/errors.hpp"
#include "mrf/parallel.hpp"

namespace mrf {

namespace {

constexpr int kTableDensity = 2048;  // kernel samples per grid unit

std::mutex& fftw_mutex() {
  static std::mutex mu;
  return mu;
}

double bessel_i0(double x) {
  // power series; x <= ~30 here so this converges quickly
  const double x2 = x * x * 0.25;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= x2 / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

// Continuous Fourier transform of the width-w Kaiser-Bessel kernel
// phi(u) = I0(beta sqrt(1 - (2u/w)^2)) / I0(beta), |u| <= w/2,
// evaluated at normalized frequency nu (cycles per oversampled cell).
double kb_transform(double nu, int w, double beta, double i0_beta) {
  const double arg = std::numbers::pi * w * nu;
  const double z2 = beta * beta - arg * arg;
  double core;
  if (z2 > 1e-12) {
    const double z = std::sqrt(z2);
    core = std::sinh(z) / z;
  } else if (z2 < -1e-12) {
    const double z = std::sqrt(-z2);
    core = std::sin(z) / z;
  } else {
    core = 1.0;
  }
  return w * core / i0_beta;
}

}  // namespace

struct NufftPlan::Impl {
  std::vector<std::size_t> grid, os;
  double sigma = 0, beta = 0;
  int width = 0;
  std::size_t ndim = 0, n_points = 0, grid_n = 0, os_n = 0;

  std::vector<double> table;  // phi on [0, w/2] at kTableDensity samples/unit
  TensorR apod;               // correction image over grid

  // per-axis map from image index to oversampled (fftshifted) index
  std::vector<std::vector<uint32_t>> embed_idx;

  // per point: base cell and kernel tap weights per axis
  std::vector<int32_t> base;      // n_points * ndim
  std::vector<double> taps;       // n_points * ndim * width
  std::vector<uint32_t> order;    // spreading order, sorted by base cell

  fftw_plan fwd = nullptr, bwd = nullptr;

  ~Impl() {
    std::lock_guard lk(fftw_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }

  double kernel(double u) const {
    const double a = std::abs(u) * kTableDensity;
    const std::size_t i = static_cast<std::size_t>(a);
    if (i + 1 >= table.size()) return 0.0;
    const double f = a - static_cast<double>(i);
    return table[i] * (1.0 - f) + table[i + 1] * f;
  }

  // scatter/gather core shared by forward-interp, adjoint-spread and DCF
  template <bool Gather, typename Src, typename Dst>
  void convolve_point(std::size_t p, Src* grid_buf, Dst* sample) const {
    const int w = width;
    const int32_t* b = base.data() + p * ndim;
    const double* tw = taps.data() + p * ndim * w;
    if (ndim == 2) {
      const std::size_t n1 = os[1];
      for (int iy = 0; iy < w; ++iy) {
        const std::size_t row = wrap(b[0] + iy, os[0]) * n1;
        const double wy = tw[iy];
        for (int ix = 0; ix < w; ++ix) {
          const std::size_t cell = row + wrap(b[1] + ix, n1);
          const double wgt = wy * tw[w + ix];
          if constexpr (Gather)
            *sample += grid_buf[cell] * wgt;
          else
            grid_buf[cell] += *sample * wgt;
        }
      }
    } else {
      const std::size_t n1 = os[1], n2 = os[2];
      for (int iz = 0; iz < w; ++iz) {
        const std::size_t plane = wrap(b[0] + iz, os[0]) * n1;
        const double wz = tw[iz];
        for (int iy = 0; iy < w; ++iy) {
          const std::size_t row = (plane + wrap(b[1] + iy, n1)) * n2;
          const double wzy = wz * tw[w + iy];
          for (int ix = 0; ix < w; ++ix) {
            const std::size_t cell = row + wrap(b[2] + ix, n2);
            const double wgt = wzy * tw[2 * w + ix];
            if constexpr (Gather)
              *sample += grid_buf[cell] * wgt;
            else
              grid_buf[cell] += *sample * wgt;
          }
        }
      }
    }
  }

  static std::size_t wrap(int32_t j, std::size_t n) {
    int32_t m = j % static_cast<int32_t>(n);
    if (m < 0) m += static_cast<int32_t>(n);
    return static_cast<std::size_t>(m);
  }
};

NufftPlan::NufftPlan(const Trajectory& traj, std::vector<std::size_t> grid_dims, double sigma,
                     int width)
    : impl_(std::make_unique<Impl>()) {
  Impl& im = *impl_;
  im.ndim = grid_dims.size();
  if (im.ndim != 2 && im.ndim != 3)
    throw ConfigError("nufft supports 2D and 3D grids, got rank " + std::to_string(im.ndim));
  if (traj.ndim() != im.ndim)
    throw ConfigError("trajectory rank " + std::to_string(traj.ndim()) +
                      " != grid rank " + std::to_string(im.ndim));
  if (traj.n_points() == 0) throw ConfigError("trajectory has no points");
  if (!(sigma >= 1.25)) throw ConfigError("oversampling sigma must be >= 1.25");
  if (width < 2) throw ConfigError("kernel width must be >= 2");
  for (std::size_t d : grid_dims)
    if (d < 2) throw ConfigError("grid dims must be >= 2");

  im.grid = std::move(grid_dims);
  im.sigma = sigma;
  im.width = width;
  im.os.resize(im.ndim);
  for (std::size_t a = 0; a < im.ndim; ++a) {
    std::size_t n = static_cast<std::size_t>(std::ceil(sigma * static_cast<double>(im.grid[a])));
    if (n % 2) ++n;
    im.os[a] = n;
  }
  im.n_points = traj.n_points();
  im.grid_n = Tensor<double>::numel_from_dims(im.grid);
  im.os_n = Tensor<double>::numel_from_dims(im.os);

  const double wr = static_cast<double>(width) / sigma;
  im.beta = std::numbers::pi * std::sqrt(wr * wr * (sigma - 0.5) * (sigma - 0.5) - 0.8);
  const double i0b = bessel_i0(im.beta);

  // kernel table on [0, w/2]
  const std::size_t table_len =
      static_cast<std::size_t>(kTableDensity * width) / 2 + 2;
  im.table.resize(table_len);
  for (std::size_t i = 0; i < table_len; ++i) {
    const double u = static_cast<double>(i) / kTableDensity;
    const double t = 1.0 - (2.0 * u / width) * (2.0 * u / width);
    im.table[i] = t >= 0 ? bessel_i0(im.beta * std::sqrt(t)) / i0b : 0.0;
  }

  // separable deapodization and embed maps
  std::vector<std::vector<double>> apod_axis(im.ndim);
  im.embed_idx.resize(im.ndim);
  for (std::size_t a = 0; a < im.ndim; ++a) {
    const std::size_t n = im.grid[a], nos = im.os[a];
    apod_axis[a].resize(n);
    im.embed_idx[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int32_t c = static_cast<int32_t>(i) - static_cast<int32_t>(n / 2);
      const double nu = static_cast<double>(c) / static_cast<double>(nos);
      apod_axis[a][i] = 1.0 / kb_transform(nu, width, im.beta, i0b);
      im.embed_idx[a][i] = static_cast<uint32_t>(Impl::wrap(c, nos));
    }
  }
  im.apod = TensorR(im.grid);
  if (im.ndim == 2) {
    for (std::size_t i = 0; i < im.grid[0]; ++i)
      for (std::size_t j = 0; j < im.grid[1]; ++j)
        im.apod[i * im.grid[1] + j] = apod_axis[0][i] * apod_axis[1][j];
  } else {
    for (std::size_t i = 0; i < im.grid[0]; ++i)
      for (std::size_t j = 0; j < im.grid[1]; ++j)
        for (std::size_t k = 0; k < im.grid[2]; ++k)
          im.apod[(i * im.grid[1] + j) * im.grid[2] + k] =
              apod_axis[0][i] * apod_axis[1][j] * apod_axis[2][k];
  }

  // per-point bases and tap weights
  im.base.resize(im.n_points * im.ndim);
  im.taps.resize(im.n_points * im.ndim * static_cast<std::size_t>(width));
  const double half = 0.5 * width;
  for (std::size_t p = 0; p < im.n_points; ++p) {
    for (std::size_t a = 0; a < im.ndim; ++a) {
      const double k = traj.points(p, a);
      if (!(k >= -0.5 && k < 0.5))
        throw ConfigError("trajectory coordinate out of half-open range [-0.5, 0.5) at sample " +
                          std::to_string(p));
      const double t = k * static_cast<double>(im.os[a]);
      const int32_t j0 = static_cast<int32_t>(std::ceil(t - half));
      im.base[p * im.ndim + a] = j0;
      double* tw = im.taps.data() + (p * im.ndim + a) * width;
      for (int i = 0; i < width; ++i) tw[i] = im.kernel(t - (j0 + i));
    }
  }

  // spreading order sorted by linearized base cell
  im.order.resize(im.n_points);
  for (std::size_t p = 0; p < im.n_points; ++p) im.order[p] = static_cast<uint32_t>(p);
  std::vector<uint64_t> key(im.n_points);
  for (std::size_t p = 0; p < im.n_points; ++p) {
    uint64_t lin = 0;
    for (std::size_t a = 0; a < im.ndim; ++a)
      lin = lin * im.os[a] + Impl::wrap(im.base[p * im.ndim + a], im.os[a]);
    key[p] = lin;
  }
  std::stable_sort(im.order.begin(), im.order.end(),
                   [&](uint32_t x, uint32_t y) { return key[x] < key[y]; });

  // FFTW plans (in-place c2c), created under a lock
  {
    std::lock_guard lk(fftw_mutex());
    std::vector<cplx> dummy(im.os_n);
    fftw_complex* ptr = reinterpret_cast<fftw_complex*>(dummy.data());
    std::vector<int> n(im.os.begin(), im.os.end());
    im.fwd = fftw_plan_dft(static_cast<int>(im.ndim), n.data(), ptr, ptr, FFTW_FORWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
    im.bwd = fftw_plan_dft(static_cast<int>(im.ndim), n.data(), ptr, ptr, FFTW_BACKWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!im.fwd || !im.bwd) throw NumericalError("fftw plan creation failed");
  }
}

NufftPlan::~NufftPlan() = default;
NufftPlan::NufftPlan(NufftPlan&&) noexcept = default;
NufftPlan& NufftPlan::operator=(NufftPlan&&) noexcept = default;

const std::vector<std::size_t>& NufftPlan::grid_dims() const { return impl_->grid; }
const std::vector<std::size_t>& NufftPlan::os_dims() const { return impl_->os; }
std::size_t NufftPlan::n_points() const { return impl_->n_points; }
double NufftPlan::sigma() const { return impl_->sigma; }
int NufftPlan::width() const { return impl_->width; }
double NufftPlan::beta() const { return impl_->beta; }
std::size_t NufftPlan::grid_numel() const { return impl_->grid_n; }
const TensorR& NufftPlan::apodization() const { return impl_->apod; }

void NufftPlan::forward(const cplx* image, cplx* samples) const {
  const Impl& im = *impl_;
  std::vector<cplx> buf(im.os_n, cplx(0, 0));
  // deapodize + embed (fftshifted)
  if (im.ndim == 2) {
    for (std::size_t i = 0; i < im.grid[0]; ++i) {
      const std::size_t row = im.embed_idx[0][i] * im.os[1];
      for (std::size_t j = 0; j < im.grid[1]; ++j)
        buf[row + im.embed_idx[1][j]] = image[i * im.grid[1] + j] * im.apod[i * im.grid[1] + j];
    }
  } else {
    for (std::size_t i = 0; i < im.grid[0]; ++i)
      for (std::size_t j = 0; j < im.grid[1]; ++j) {
        const std::size_t row =
            (im.embed_idx[0][i] * im.os[1] + im.embed_idx[1][j]) * im.os[2];
        const std::size_t src = (i * im.grid[1] + j) * im.grid[2];
        for (std::size_t k = 0; k < im.grid[2]; ++k)
          buf[row + im.embed_idx[2][k]] = image[src + k] * im.apod[src + k];
      }
  }
  fftw_execute_dft(im.fwd, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  const cplx* grid_buf = buf.data();
  parallel_for(im.n_points, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      cplx acc(0, 0);
      im.convolve_point<true>(p, grid_buf, &acc);
      samples[p] = acc;
    }
  });
}

void NufftPlan::adjoint(const cplx* samples, cplx* image) const {
  const Impl& im = *impl_;
  std::vector<cplx> buf(im.os_n, cplx(0, 0));
  // spread in sorted order (serial, deterministic)
  for (std::size_t idx = 0; idx < im.n_points; ++idx) {
    const std::size_t p = im.order[idx];
    cplx v = samples[p];
    im.convolve_point<false>(p, buf.data(), &v);
  }
  fftw_execute_dft(im.bwd, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  if (im.ndim == 2) {
    parallel_for(im.grid[0], [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        const std::size_t row = im.embed_idx[0][i] * im.os[1];
        for (std::size_t j = 0; j < im.grid[1]; ++j)
          image[i * im.grid[1] + j] = buf[row + im.embed_idx[1][j]] * im.apod[i * im.grid[1] + j];
      }
    });
  } else {
    parallel_for(im.grid[0], [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = 0; j < im.grid[1]; ++j) {
          const std::size_t row =
              (im.embed_idx[0][i] * im.os[1] + im.embed_idx[1][j]) * im.os[2];
          const std::size_t dst = (i * im.grid[1] + j) * im.grid[2];
          for (std::size_t k = 0; k < im.grid[2]; ++k)
            image[dst + k] = buf[row + im.embed_idx[2][k]] * im.apod[dst + k];
        }
    });
  }
}

void NufftPlan::kernel_gram(const double* weights, double* out) const {
  const Impl& im = *impl_;
  std::vector<double> buf(im.os_n, 0.0);
  for (std::size_t idx = 0; idx < im.n_points; ++idx) {
    const std::size_t p = im.order[idx];
    double v = weights[p];
    im.convolve_point<false>(p, buf.data(), &v);
  }
  parallel_for(im.n_points, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      double acc = 0;
      im.convolve_point<true>(p, buf.data(), &acc);
      out[p] = acc;
    }
  });
}

DensityCompensation compute_dcf(const NufftPlan& plan, int n_iters) {
  if (n_iters < 1) throw ConfigError("dcf needs n_iters >= 1");
  const std::size_t p_count = plan.n_points();
  DensityCompensation dcf;
  dcf.weights.assign(p_count, 1.0);
  std::vector<double> denom(p_count);
  for (int it = 0; it < n_iters; ++it) {
    plan.kernel_gram(dcf.weights.data(), denom.data());
    for (std::size_t p = 0; p < p_count; ++p) {
      if (!(denom[p] > 1e-300))
        throw NumericalError("dcf fixed point degenerate at sample index " + std::to_string(p));
      dcf.weights[p] /= denom[p];
    }
  }
  const double wmax = *std::max_element(dcf.weights.begin(), dcf.weights.end());
  if (!(wmax > 0)) throw NumericalError("dcf produced nonpositive weights");
  for (double& w : dcf.weights) w /= wmax;
  return dcf;
}

}  // namespace mrf
