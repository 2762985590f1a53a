#include "mrf/forward_model.hpp"

#include <algorithm>
#include <cmath>

#include "mrf/errors.hpp"
#include "mrf/parallel.hpp"

namespace mrf {

Tsmi::Tsmi(std::vector<std::size_t> grid_dims, std::size_t n_coeffs)
    : grid(std::move(grid_dims)), k(n_coeffs) {
  std::vector<std::size_t> dims{k};
  dims.insert(dims.end(), grid.begin(), grid.end());
  data = TensorC(dims);
}

TensorC tsmi_to_file_layout(const Tsmi& x) {
  std::vector<std::size_t> dims = x.grid;
  dims.push_back(x.k);
  TensorC out(dims);
  const std::size_t n = x.grid_numel();
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < x.k; ++j) out[v * x.k + j] = x.data[j * n + v];
  return out;
}

Tsmi tsmi_from_file_layout(const TensorC& t) {
  if (t.ndim() < 2) throw IoError("tsmi tensor must be [grid..., K]");
  Tsmi x({t.dims().begin(), t.dims().end() - 1}, t.dims().back());
  const std::size_t n = x.grid_numel();
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < x.k; ++j) x.data[j * n + v] = t[v * x.k + j];
  return x;
}

KSpaceData::KSpaceData(std::size_t n_coils, std::size_t n_samples, std::size_t n_arms,
                       std::size_t n_frames)
    : c(n_coils), m(n_samples), l(n_arms), t(n_frames) {
  data = TensorC({c, t, l, m});
}

TensorC kspace_to_file_layout(const KSpaceData& y) {
  TensorC out({y.c, y.m, y.l, y.t});
  for (std::size_t ci = 0; ci < y.c; ++ci)
    for (std::size_t ti = 0; ti < y.t; ++ti)
      for (std::size_t li = 0; li < y.l; ++li)
        for (std::size_t mi = 0; mi < y.m; ++mi)
          out[((ci * y.m + mi) * y.l + li) * y.t + ti] =
              y.data[((ci * y.t + ti) * y.l + li) * y.m + mi];
  return out;
}

KSpaceData kspace_from_file_layout(const TensorC& t) {
  if (t.ndim() != 4) throw IoError("kspace tensor must be [C, M, L, T]");
  KSpaceData y(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t ci = 0; ci < y.c; ++ci)
    for (std::size_t ti = 0; ti < y.t; ++ti)
      for (std::size_t li = 0; li < y.l; ++li)
        for (std::size_t mi = 0; mi < y.m; ++mi)
          y.data[((ci * y.t + ti) * y.l + li) * y.m + mi] =
              t[((ci * y.m + mi) * y.l + li) * y.t + ti];
  return y;
}

Trajectory select_arms(const Trajectory& arm_set, std::size_t m, std::size_t l_total,
                       const std::vector<uint32_t>& arms) {
  if (arm_set.n_points() != m * l_total)
    throw ConfigError("arm set has " + std::to_string(arm_set.n_points()) +
                      " points, expected M*L = " + std::to_string(m * l_total));
  const std::size_t d = arm_set.ndim();
  Trajectory out;
  out.points = TensorR({arms.size() * m, d});
  out.arm_index.resize(arms.size() * m);
  out.frame_index.assign(arms.size() * m, 0);
  for (std::size_t li = 0; li < arms.size(); ++li) {
    const std::size_t src_arm = arms[li];
    if (src_arm >= l_total) throw ConfigError("active arm index out of range");
    for (std::size_t mi = 0; mi < m; ++mi) {
      for (std::size_t a = 0; a < d; ++a)
        out.points(li * m + mi, a) = arm_set.points(src_arm * m + mi, a);
      out.arm_index[li * m + mi] = src_arm;
    }
  }
  return out;
}

ForwardModel::ForwardModel(SubspaceBasis basis, CoilSet coils, const Trajectory& arm_set,
                           std::size_t m, std::size_t l_total, std::vector<uint32_t> active_arms,
                           double sigma, int width, int dcf_iters, bool dcf_in_gram)
    : basis_(std::move(basis)),
      coils_(std::move(coils)),
      grid_(coils_.grid()),
      m_(m),
      l_total_(l_total),
      active_arms_(std::move(active_arms)),
      dcf_in_gram_(dcf_in_gram) {
  if (active_arms_.empty()) throw ConfigError("no active arms");
  const Trajectory subset = select_arms(arm_set, m_, l_total_, active_arms_);
  plan_ = std::make_unique<NufftPlan>(subset, grid_, sigma, width);
  dcf_ = compute_dcf(*plan_, dcf_iters);
}

void ForwardModel::check_tsmi(const Tsmi& x) const {
  if (x.grid != grid_ || x.k != n_coeffs())
    throw ConfigError("tsmi dims do not match the forward model");
}

void ForwardModel::apply_coil_forward(std::size_t c, const Tsmi& x, cplx* y_c) const {
  check_tsmi(x);
  if (c >= n_coils()) throw ConfigError("coil index out of range");
  const std::size_t n = grid_numel();
  const std::size_t pf = samples_per_frame();
  const std::size_t t_frames = n_frames();
  const std::size_t k_coeffs = n_coeffs();
  const cplx* sens = coils_.sens.data() + c * n;

  parallel_for(t_frames, [&](std::size_t t0, std::size_t t1) {
    std::vector<cplx> tmp(n);
    for (std::size_t t = t0; t < t1; ++t) {
      for (std::size_t v = 0; v < n; ++v) tmp[v] = cplx(0, 0);
      for (std::size_t j = 0; j < k_coeffs; ++j) {
        const cplx vt = basis_.v(t, j);
        const cplx* xk = x.channel(j);
        for (std::size_t v = 0; v < n; ++v) tmp[v] += vt * xk[v];
      }
      for (std::size_t v = 0; v < n; ++v) tmp[v] *= sens[v];
      plan_->forward(tmp.data(), y_c + t * pf);
    }
  });
}

void ForwardModel::apply_coil_adjoint(std::size_t c, const cplx* y_c, bool weighted,
                                      Tsmi& out) const {
  check_tsmi(out);
  if (c >= n_coils()) throw ConfigError("coil index out of range");
  const std::size_t n = grid_numel();
  const std::size_t pf = samples_per_frame();
  const std::size_t t_frames = n_frames();
  const std::size_t k_coeffs = n_coeffs();
  const cplx* sens = coils_.sens.data() + c * n;

  std::fill(out.data.data(), out.data.data() + out.data.numel(), cplx(0, 0));

  // frames processed in fixed-size blocks: per-frame images computed in
  // parallel, then accumulated in frame order for run-to-run determinism
  constexpr std::size_t kBlock = 8;
  std::vector<std::vector<cplx>> img(kBlock);
  for (auto& g : img) g.resize(n);

  for (std::size_t b0 = 0; b0 < t_frames; b0 += kBlock) {
    const std::size_t b1 = std::min(b0 + kBlock, t_frames);
    parallel_for(b1 - b0, [&](std::size_t i0, std::size_t i1) {
      std::vector<cplx> wy(pf);
      for (std::size_t i = i0; i < i1; ++i) {
        const std::size_t t = b0 + i;
        const cplx* yt = y_c + t * pf;
        if (weighted) {
          for (std::size_t p = 0; p < pf; ++p) wy[p] = yt[p] * dcf_.weights[p];
          plan_->adjoint(wy.data(), img[i].data());
        } else {
          plan_->adjoint(yt, img[i].data());
        }
        for (std::size_t v = 0; v < n; ++v) img[i][v] *= std::conj(sens[v]);
      }
    });
    parallel_for(n, [&](std::size_t v0, std::size_t v1) {
      for (std::size_t i = 0; i < b1 - b0; ++i) {
        const std::size_t t = b0 + i;
        for (std::size_t j = 0; j < k_coeffs; ++j) {
          const cplx vt = std::conj(basis_.v(t, j));
          cplx* ok = out.channel(j);
          const cplx* src = img[i].data();
          for (std::size_t v = v0; v < v1; ++v) ok[v] += vt * src[v];
        }
      }
    });
  }
}

KSpaceData ForwardModel::apply_forward(const Tsmi& x) const {
  KSpaceData y = zero_kspace();
  for (std::size_t c = 0; c < n_coils(); ++c) apply_coil_forward(c, x, y.coil(c));
  return y;
}

Tsmi ForwardModel::apply_adjoint(const KSpaceData& y, bool weighted) const {
  if (y.c != n_coils() || y.t != n_frames() || y.l != active_arms_.size() || y.m != m_)
    throw ConfigError("kspace dims do not match the forward model");
  Tsmi out = zero_tsmi();
  Tsmi tmp = zero_tsmi();
  for (std::size_t c = 0; c < n_coils(); ++c) {
    apply_coil_adjoint(c, y.coil(c), weighted, tmp);
    for (std::size_t i = 0; i < out.data.numel(); ++i) out.data[i] += tmp.data[i];
  }
  return out;
}

void ForwardModel::gram_apply(const Tsmi& x, double mu, Tsmi& out) const {
  check_tsmi(x);
  if (mu < 0) throw ConfigError("tikhonov mu must be >= 0");
  Tsmi tmp = zero_tsmi();
  std::vector<cplx> y_c(coil_samples());
  std::fill(out.data.data(), out.data.data() + out.data.numel(), cplx(0, 0));
  for (std::size_t c = 0; c < n_coils(); ++c) {
    apply_coil_forward(c, x, y_c.data());
    apply_coil_adjoint(c, y_c.data(), dcf_in_gram_, tmp);
    for (std::size_t i = 0; i < out.data.numel(); ++i) out.data[i] += tmp.data[i];
  }
  if (mu > 0)
    for (std::size_t i = 0; i < out.data.numel(); ++i) out.data[i] += mu * x.data[i];
}

}  // namespace mrf
