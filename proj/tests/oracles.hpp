// Independent reference implementations used as test oracles. These must stay
// decoupled from the library code paths they validate.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "mrf/epg.hpp"
#include "mrf/net.hpp"
#include "mrf/tensor.hpp"

namespace oracle {

using mrf::cplx;

// ---------------------------------------------------------------------------
// Bloch isochromat ensemble for the inversion-prepared unbalanced SSFP
// sequence: n_spins spread uniformly over one dephasing cycle per TR.
inline std::vector<cplx> isochromat_fingerprint(double t1_ms, double t2_ms,
                                                const mrf::SequenceParams& seq, int n_spins) {
  const std::size_t t_frames = seq.n_frames();
  struct Spin {
    double mx = 0, my = 0, mz = 1;
  };
  std::vector<Spin> spins(static_cast<std::size_t>(n_spins));
  std::vector<double> theta(static_cast<std::size_t>(n_spins));
  for (int j = 0; j < n_spins; ++j)
    theta[static_cast<std::size_t>(j)] =
        2.0 * std::numbers::pi * (static_cast<double>(j) + 0.5) / n_spins;

  // inversion + TI recovery
  const double e1_ti = std::exp(-seq.ti_ms / t1_ms);
  for (auto& s : spins) {
    s.mz = -seq.inversion_efficiency * s.mz;
    s.mz = 1.0 + (s.mz - 1.0) * e1_ti;
  }

  const double e1 = std::exp(-seq.tr_ms / t1_ms);
  const double e2 = std::exp(-seq.tr_ms / t2_ms);
  const double e2_te = std::exp(-seq.te_ms / t2_ms);
  std::vector<cplx> signal(t_frames);
  for (std::size_t t = 0; t < t_frames; ++t) {
    const double a = seq.flip_angles_deg[t] * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    cplx acc(0, 0);
    for (std::size_t j = 0; j < spins.size(); ++j) {
      Spin& s = spins[j];
      // rotation about y: mx' = mx cos a - mz sin a, mz' = mx sin a + mz cos a
      const double mx = s.mx * ca - s.mz * sa;
      const double mz = s.mx * sa + s.mz * ca;
      s.mx = mx;
      s.mz = mz;
      acc += cplx(s.mx, s.my);
      // relaxation over TR then per-spin dephasing
      double px = s.mx * e2, py = s.my * e2;
      s.mz = 1.0 + (s.mz - 1.0) * e1;
      const double ct = std::cos(theta[j]), st = std::sin(theta[j]);
      s.mx = px * ct - py * st;
      s.my = px * st + py * ct;
    }
    signal[t] = acc * (e2_te / static_cast<double>(spins.size()));
  }
  return signal;
}

// Analytic unbalanced-SSFP (FISP / SSFP-FID) steady state immediately after
// the pulse, unit M0, no TE decay:
//   F0 = tan(a/2) [1 - (E1 - cos a) (1 - E2^2) / sqrt(p^2 - q^2)],
//   p = 1 - E1 cos a - E2^2 (E1 - cos a),  q = E2 (1 - E1)(1 + cos a).
inline double fisp_steady_state(double flip_deg, double tr_ms, double t1_ms, double t2_ms) {
  const double a = flip_deg * std::numbers::pi / 180.0;
  const double e1 = std::exp(-tr_ms / t1_ms);
  const double e2 = std::exp(-tr_ms / t2_ms);
  const double p = 1.0 - e1 * std::cos(a) - e2 * e2 * (e1 - std::cos(a));
  const double q = e2 * (1.0 - e1) * (1.0 + std::cos(a));
  return std::tan(a / 2.0) *
         (1.0 - (e1 - std::cos(a)) * (1.0 - e2 * e2) / std::sqrt(p * p - q * q));
}

// ---------------------------------------------------------------------------
// Direct type-2 nonuniform DFT: samples[p] = sum_x img[x] e^{-2 pi i k_p . x}
// over centered integer coordinates.
inline std::vector<cplx> direct_dft_forward(const mrf::TensorC& img, const mrf::TensorR& pts) {
  const auto& gd = img.dims();
  const std::size_t p_count = pts.dim(0);
  const std::size_t d = pts.dim(1);
  std::vector<cplx> out(p_count);
  std::vector<int64_t> half(d);
  for (std::size_t a = 0; a < d; ++a) half[a] = static_cast<int64_t>(gd[a]) / 2;
  for (std::size_t p = 0; p < p_count; ++p) {
    cplx acc(0, 0);
    if (d == 2) {
      for (std::size_t i = 0; i < gd[0]; ++i)
        for (std::size_t j = 0; j < gd[1]; ++j) {
          const double phase =
              -2.0 * std::numbers::pi *
              (pts(p, 0) * (static_cast<double>(i) - half[0]) +
               pts(p, 1) * (static_cast<double>(j) - half[1]));
          acc += img(i, j) * cplx(std::cos(phase), std::sin(phase));
        }
    } else {
      for (std::size_t i = 0; i < gd[0]; ++i)
        for (std::size_t j = 0; j < gd[1]; ++j)
          for (std::size_t k = 0; k < gd[2]; ++k) {
            const double phase =
                -2.0 * std::numbers::pi *
                (pts(p, 0) * (static_cast<double>(i) - half[0]) +
                 pts(p, 1) * (static_cast<double>(j) - half[1]) +
                 pts(p, 2) * (static_cast<double>(k) - half[2]));
            acc += img(i, j, k) * cplx(std::cos(phase), std::sin(phase));
          }
    }
    out[p] = acc;
  }
  return out;
}

inline mrf::TensorC direct_dft_adjoint(const std::vector<cplx>& samples, const mrf::TensorR& pts,
                                       const std::vector<std::size_t>& grid) {
  mrf::TensorC out(grid);
  const std::size_t d = pts.dim(1);
  std::vector<int64_t> half(d);
  for (std::size_t a = 0; a < d; ++a) half[a] = static_cast<int64_t>(grid[a]) / 2;
  for (std::size_t p = 0; p < pts.dim(0); ++p) {
    if (d == 2) {
      for (std::size_t i = 0; i < grid[0]; ++i)
        for (std::size_t j = 0; j < grid[1]; ++j) {
          const double phase =
              2.0 * std::numbers::pi *
              (pts(p, 0) * (static_cast<double>(i) - half[0]) +
               pts(p, 1) * (static_cast<double>(j) - half[1]));
          out(i, j) += samples[p] * cplx(std::cos(phase), std::sin(phase));
        }
    } else {
      for (std::size_t i = 0; i < grid[0]; ++i)
        for (std::size_t j = 0; j < grid[1]; ++j)
          for (std::size_t k = 0; k < grid[2]; ++k) {
            const double phase =
                2.0 * std::numbers::pi *
                (pts(p, 0) * (static_cast<double>(i) - half[0]) +
                 pts(p, 1) * (static_cast<double>(j) - half[1]) +
                 pts(p, 2) * (static_cast<double>(k) - half[2]));
            out(i, j, k) += samples[p] * cplx(std::cos(phase), std::sin(phase));
          }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cyclic-Jacobi eigensolver for a complex Hermitian matrix (row-major n x n).
// Returns eigenvalues in descending order. Used as the independent route to
// singular values via the Gram matrix.
inline std::vector<double> hermitian_eigenvalues(std::vector<cplx> a, std::size_t n) {
  const auto at = [&](std::size_t i, std::size_t j) -> cplx& { return a[i * n + j]; };
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += std::norm(at(i, j));
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = at(p, p).real(), aqq = at(q, q).real();
        // phase to make the pivot real, then a real Jacobi rotation
        const cplx phase = apq / std::abs(apq);
        const double g = std::abs(apq);
        const double tau = (aqq - app) / (2.0 * g);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // U = diag(1, phase) . [[c, s], [-s, c]]; apply A <- A U, then U^H A
        for (std::size_t k = 0; k < n; ++k) {
          const cplx akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * (phase * akq);
          at(k, q) = s * akp + c * (phase * akq);
        }
        for (std::size_t k = 0; k < n; ++k) {
          const cplx apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * (std::conj(phase) * aqk);
          at(q, k) = s * apk + c * (std::conj(phase) * aqk);
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i).real();
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

// ---------------------------------------------------------------------------
// Central-difference gradient check helper. f() re-evaluates the scalar loss
// after perturbing *x; grad is the analytic gradient to verify. Errors are
// relative to the gradient's overall scale so that finite-difference roundoff
// noise on near-zero components does not dominate.
inline double gradcheck_max_rel_err(std::vector<double*> xs, const std::vector<double>& grads,
                                    const std::function<double()>& f, double h = 1e-6) {
  double gmax = 0;
  for (double g : grads) gmax = std::max(gmax, std::abs(g));
  const double floor = std::max(1e-3 * gmax, 1e-8);
  double max_err = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x0 = *xs[i];
    *xs[i] = x0 + h;
    const double fp = f();
    *xs[i] = x0 - h;
    const double fm = f();
    *xs[i] = x0;
    const double num = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(num), std::abs(grads[i]), floor});
    max_err = std::max(max_err, std::abs(num - grads[i]) / denom);
  }
  return max_err;
}

}  // namespace oracle
