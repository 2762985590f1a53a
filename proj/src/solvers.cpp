#include "mrf/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mrf/errors.hpp"
#include "mrf/rng.hpp"

namespace mrf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

cplx dot(const TensorC& a, const TensorC& b) {
  cplx acc(0, 0);
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double norm2(const TensorC& a) {
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::norm(a[i]);
  return acc;
}

// DCF-weighted k-space inner product over all coils
cplx dot_dcf(const ForwardModel& model, const KSpaceData& a, const KSpaceData& b) {
  const auto& w = model.dcf();
  const std::size_t pf = model.samples_per_frame();
  cplx acc(0, 0);
  for (std::size_t c = 0; c < a.c; ++c) {
    const cplx* pa = a.coil(c);
    const cplx* pb = b.coil(c);
    for (std::size_t i = 0; i < a.coil_stride(); ++i)
      acc += std::conj(pa[i]) * pb[i] * w[i % pf];
  }
  return acc;
}

bool has_nan(const TensorC& a) {
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::isnan(a[i].real()) || std::isnan(a[i].imag())) return true;
  return false;
}

Tsmi cg_solve(const ForwardModel& model, const KSpaceData& y, double mu, std::size_t n_iters,
              double tol, SolverReport* report) {
  const auto t0 = Clock::now();
  if (n_iters < 1) throw ConfigError("cg needs n_iters >= 1");
  Tsmi b = model.apply_adjoint(y, /*weighted=*/model.dcf_in_gram());
  const double bnorm = std::sqrt(norm2(b.data));
  Tsmi x = model.zero_tsmi();
  SolverReport local;
  SolverReport& rep = report ? *report : local;
  rep.history.clear();
  rep.history.push_back(1.0);
  if (bnorm == 0) {
    rep.iterations = 0;
    rep.wall_seconds = seconds_since(t0);
    return x;
  }
  Tsmi r = b;
  Tsmi p = r;
  Tsmi ap = model.zero_tsmi();
  double rs = norm2(r.data);
  std::size_t it = 0;
  while (it < n_iters && std::sqrt(rs) / bnorm > tol) {
    model.gram_apply(p, mu, ap);
    if (has_nan(ap.data))
      throw NumericalError("cg: NaN in operator output at iteration " + std::to_string(it));
    const double pap = dot(p.data, ap.data).real();
    if (!(pap > 0))
      throw NumericalError("cg: operator not positive definite (p^H A p = " +
                           std::to_string(pap) + ")");
    const double alpha = rs / pap;
    for (std::size_t i = 0; i < x.data.numel(); ++i) {
      x.data[i] += alpha * p.data[i];
      r.data[i] -= alpha * ap.data[i];
    }
    const double rs_new = norm2(r.data);
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < p.data.numel(); ++i) p.data[i] = r.data[i] + beta * p.data[i];
    rs = rs_new;
    ++it;
    rep.history.push_back(std::sqrt(rs) / bnorm);
  }
  rep.iterations = it;
  rep.wall_seconds = seconds_since(t0);
  return x;
}

// isotropic TV of one real channel
double tv_iso(const std::vector<double>& u, const std::vector<std::size_t>& grid) {
  const std::size_t dz = grid.size() == 3 ? grid[0] : 1;
  const std::size_t dy = grid[grid.size() == 3 ? 1 : 0];
  const std::size_t dx = grid.back();
  double acc = 0;
  for (std::size_t z = 0; z < dz; ++z)
    for (std::size_t y = 0; y < dy; ++y)
      for (std::size_t x = 0; x < dx; ++x) {
        const std::size_t i = (z * dy + y) * dx + x;
        const double gx = x + 1 < dx ? u[i + 1] - u[i] : 0;
        const double gy = y + 1 < dy ? u[i + dx] - u[i] : 0;
        const double gz = z + 1 < dz ? u[i + dy * dx] - u[i] : 0;
        acc += std::sqrt(gx * gx + gy * gy + gz * gz);
      }
  return acc;
}

// Chambolle dual projection for min_u 1/2||u - z||^2 + tau TV(u), in place.
void chambolle_prox(std::vector<double>& z, const std::vector<std::size_t>& grid, double tau,
                    int inner_iters) {
  if (tau <= 0) return;
  const std::size_t dz = grid.size() == 3 ? grid[0] : 1;
  const std::size_t dy = grid[grid.size() == 3 ? 1 : 0];
  const std::size_t dx = grid.back();
  const std::size_t n = dz * dy * dx;
  const int d = grid.size() == 3 ? 3 : 2;
  const double theta = 0.25 / d;
  std::vector<double> px(n, 0), py(n, 0), pz(n, 0), div(n, 0);
  for (int it = 0; it < inner_iters; ++it) {
    // div p
    for (std::size_t z_ = 0; z_ < dz; ++z_)
      for (std::size_t y_ = 0; y_ < dy; ++y_)
        for (std::size_t x_ = 0; x_ < dx; ++x_) {
          const std::size_t i = (z_ * dy + y_) * dx + x_;
          double v = 0;
          v += (x_ + 1 < dx ? px[i] : 0) - (x_ > 0 ? px[i - 1] : 0);
          v += (y_ + 1 < dy ? py[i] : 0) - (y_ > 0 ? py[i - dx] : 0);
          if (d == 3) v += (z_ + 1 < dz ? pz[i] : 0) - (z_ > 0 ? pz[i - dy * dx] : 0);
          div[i] = v;
        }
    // p <- (p + theta grad(div p - z/tau)) / (1 + theta |grad(...)|)
    for (std::size_t z_ = 0; z_ < dz; ++z_)
      for (std::size_t y_ = 0; y_ < dy; ++y_)
        for (std::size_t x_ = 0; x_ < dx; ++x_) {
          const std::size_t i = (z_ * dy + y_) * dx + x_;
          const double base = div[i] - z[i] / tau;
          const double gx =
              x_ + 1 < dx ? (div[i + 1] - z[i + 1] / tau) - base : 0;
          const double gy =
              y_ + 1 < dy ? (div[i + dx] - z[i + dx] / tau) - base : 0;
          const double gz =
              d == 3 && z_ + 1 < dz ? (div[i + dy * dx] - z[i + dy * dx] / tau) - base : 0;
          const double mag = std::sqrt(gx * gx + gy * gy + gz * gz);
          const double denom = 1.0 + theta * mag;
          px[i] = (px[i] + theta * gx) / denom;
          py[i] = (py[i] + theta * gy) / denom;
          if (d == 3) pz[i] = (pz[i] + theta * gz) / denom;
        }
  }
  // u = z - tau div p
  for (std::size_t z_ = 0; z_ < dz; ++z_)
    for (std::size_t y_ = 0; y_ < dy; ++y_)
      for (std::size_t x_ = 0; x_ < dx; ++x_) {
        const std::size_t i = (z_ * dy + y_) * dx + x_;
        double v = 0;
        v += (x_ + 1 < dx ? px[i] : 0) - (x_ > 0 ? px[i - 1] : 0);
        v += (y_ + 1 < dy ? py[i] : 0) - (y_ > 0 ? py[i - dx] : 0);
        if (d == 3) v += (z_ + 1 < dz ? pz[i] : 0) - (z_ > 0 ? pz[i - dy * dx] : 0);
        z[i] -= tau * v;
      }
}

void tv_prox_tsmi(Tsmi& x, double tau, int inner_iters) {
  if (tau <= 0) return;
  const std::size_t n = x.grid_numel();
  std::vector<double> chan(n);
  for (std::size_t j = 0; j < x.k; ++j) {
    cplx* xk = x.channel(j);
    for (int part = 0; part < 2; ++part) {
      for (std::size_t v = 0; v < n; ++v) chan[v] = part == 0 ? xk[v].real() : xk[v].imag();
      chambolle_prox(chan, x.grid, tau, inner_iters);
      for (std::size_t v = 0; v < n; ++v) {
        if (part == 0) xk[v] = cplx(chan[v], xk[v].imag());
        else xk[v] = cplx(xk[v].real(), chan[v]);
      }
    }
  }
}

double tv_value_tsmi(const Tsmi& x) {
  const std::size_t n = x.grid_numel();
  std::vector<double> chan(n);
  double acc = 0;
  for (std::size_t j = 0; j < x.k; ++j) {
    const cplx* xk = x.channel(j);
    for (int part = 0; part < 2; ++part) {
      for (std::size_t v = 0; v < n; ++v) chan[v] = part == 0 ? xk[v].real() : xk[v].imag();
      acc += tv_iso(chan, x.grid);
    }
  }
  return acc;
}

}  // namespace

Tsmi recon_svdmrf(const ForwardModel& model, const KSpaceData& y) {
  Tsmi xt = model.apply_adjoint(y, /*weighted=*/true);
  KSpaceData ax = model.apply_forward(xt);
  const double den = dot_dcf(model, ax, ax).real();
  const double ynorm = norm2(y.data);
  if (ynorm == 0) return model.zero_tsmi();
  if (!(den > 0)) throw NumericalError("svdmrf: degenerate adjoint (||A x~||_DCF = 0)");
  const cplx s = dot_dcf(model, ax, y) / den;
  for (std::size_t i = 0; i < xt.data.numel(); ++i) xt.data[i] *= s;
  return xt;
}

Tsmi recon_lr_cg(const ForwardModel& model, const KSpaceData& y, std::size_t n_iters, double tol,
                 SolverReport* report) {
  return cg_solve(model, y, 0.0, n_iters, tol, report);
}

Tsmi recon_lr_tikh(const ForwardModel& model, const KSpaceData& y, double mu,
                   std::size_t n_iters, double tol, SolverReport* report) {
  if (!(mu >= 0)) throw ConfigError("tikhonov mu must be >= 0");
  return cg_solve(model, y, mu, n_iters, tol, report);
}

double estimate_gram_norm(const ForwardModel& model, int n_iters, uint64_t seed) {
  Rng rng(seed);
  Tsmi v = model.zero_tsmi();
  for (std::size_t i = 0; i < v.data.numel(); ++i) v.data[i] = cplx(rng.normal(), rng.normal());
  Tsmi gv = model.zero_tsmi();
  double lambda = 0;
  for (int it = 0; it < n_iters; ++it) {
    const double nv = std::sqrt(norm2(v.data));
    if (!(nv > 0)) throw NumericalError("power iteration collapsed to zero");
    for (std::size_t i = 0; i < v.data.numel(); ++i) v.data[i] /= nv;
    model.gram_apply(v, 0.0, gv);
    lambda = dot(v.data, gv.data).real();
    std::swap(v.data, gv.data);
  }
  return lambda;
}

Tsmi recon_lrtv(const ForwardModel& model, const KSpaceData& y, double lambda_tv,
                std::size_t n_iters, SolverReport* report, uint64_t seed) {
  const auto t0 = Clock::now();
  if (lambda_tv < 0) throw ConfigError("lambda_tv must be >= 0");
  if (n_iters < 1) throw ConfigError("lrtv needs n_iters >= 1");
  const double lip = std::max(estimate_gram_norm(model, 30, seed) * 1.05, 1e-30);
  const double step = 1.0 / lip;
  constexpr int kChambolleIters = 10;

  SolverReport local;
  SolverReport& rep = report ? *report : local;
  rep.history.clear();

  Tsmi x = model.zero_tsmi();
  Tsmi xprev = x;
  Tsmi z = x;           // momentum point
  Tsmi grad = model.zero_tsmi();
  double t_mom = 1.0;

  const auto objective = [&](const Tsmi& u) {
    KSpaceData r = model.apply_forward(u);
    const auto& w = model.dcf();
    const std::size_t pf = model.samples_per_frame();
    double acc = 0;
    for (std::size_t c = 0; c < r.c; ++c) {
      const cplx* pr = r.coil(c);
      const cplx* py = y.coil(c);
      for (std::size_t i = 0; i < r.coil_stride(); ++i)
        acc += w[i % pf] * std::norm(pr[i] - py[i]);
    }
    return 0.5 * acc + lambda_tv * tv_value_tsmi(u);
  };

  rep.history.push_back(objective(x));
  int increases = 0;
  for (std::size_t it = 0; it < n_iters; ++it) {
    // grad f(z) = A^H DCF (A z - y)
    KSpaceData az = model.apply_forward(z);
    for (std::size_t i = 0; i < az.data.numel(); ++i) az.data[i] -= y.data[i];
    grad = model.apply_adjoint(az, /*weighted=*/true);
    Tsmi xn = z;
    for (std::size_t i = 0; i < xn.data.numel(); ++i) xn.data[i] -= step * grad.data[i];
    tv_prox_tsmi(xn, lambda_tv * step, kChambolleIters);
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
    for (std::size_t i = 0; i < z.data.numel(); ++i)
      z.data[i] = xn.data[i] + ((t_mom - 1.0) / t_new) * (xn.data[i] - x.data[i]);
    xprev = x;
    x = xn;
    t_mom = t_new;
    const double obj = objective(x);
    rep.history.push_back(obj);
    if (has_nan(x.data)) throw NumericalError("lrtv: NaN at iteration " + std::to_string(it));
    increases = obj > rep.history[rep.history.size() - 2] ? increases + 1 : 0;
    if (increases >= 5) {
      rep.iterations = it + 1;
      rep.wall_seconds = seconds_since(t0);
      throw NumericalError("lrtv: objective increased 5 consecutive iterations (diverging)");
    }
  }
  rep.iterations = n_iters;
  rep.wall_seconds = seconds_since(t0);
  return x;
}

}  // namespace mrf
