#include "mrf/subspace.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "mrf/errors.hpp"

namespace mrf {

SubspaceBasis compute_basis(const Dictionary& dict, std::size_t k, bool normalize_atoms) {
  const std::size_t d = dict.n_atoms();
  const std::size_t t = dict.n_frames();
  if (d < 1) throw ConfigError("dictionary has no atoms");
  if (k < 1 || k > t) throw ConfigError("need 1 <= k <= T");

  Eigen::MatrixXcd a(d, t);
  for (std::size_t i = 0; i < d; ++i) {
    double nrm = 0;
    const cplx* row = dict.atoms.data() + i * t;
    if (normalize_atoms && !dict.normalized) {
      for (std::size_t j = 0; j < t; ++j) nrm += std::norm(row[j]);
      nrm = std::sqrt(nrm);
    }
    const double s = (normalize_atoms && !dict.normalized && nrm > 0) ? 1.0 / nrm : 1.0;
    for (std::size_t j = 0; j < t; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j] * s;
  }

  Eigen::BDCSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Eigen::Index rank_limit = sv.size();
  double total = 0;
  for (Eigen::Index i = 0; i < rank_limit; ++i) total += sv(i) * sv(i);
  // numerical rank
  const double tol = sv.size() ? sv(0) * static_cast<double>(std::max(d, t)) * 1e-15 : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < rank_limit; ++i)
    if (sv(i) > tol) ++rank;
  if (static_cast<Eigen::Index>(k) > rank)
    throw ConfigError("k (" + std::to_string(k) + ") exceeds numerical rank (" +
                      std::to_string(rank) + ")");

  SubspaceBasis basis;
  basis.v = TensorC({t, k});
  double captured = 0;
  for (std::size_t j = 0; j < k; ++j) {
    captured += sv(static_cast<Eigen::Index>(j)) * sv(static_cast<Eigen::Index>(j));
    // sign convention: rotate so the largest-magnitude entry is real positive
    Eigen::Index imax = 0;
    double amax = -1;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(t); ++i) {
      const double m = std::abs(svd.matrixV()(i, static_cast<Eigen::Index>(j)));
      if (m > amax) {
        amax = m;
        imax = i;
      }
    }
    const cplx pivot = svd.matrixV()(imax, static_cast<Eigen::Index>(j));
    const cplx phase = amax > 0 ? std::conj(pivot) / std::abs(pivot) : cplx(1, 0);
    for (std::size_t i = 0; i < t; ++i)
      basis.v(i, j) = svd.matrixV()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * phase;
  }
  basis.singular_values.assign(sv.data(), sv.data() + sv.size());
  basis.energy_captured = total > 0 ? captured / total : 0.0;
  return basis;
}

namespace {

void check_trailing(const TensorC& x, std::size_t want, const char* what) {
  if (x.ndim() < 1 || x.dims().back() != want)
    throw ConfigError(std::string(what) + ": trailing dim " +
                      (x.ndim() ? std::to_string(x.dims().back()) : std::string("none")) +
                      " != " + std::to_string(want));
}

}  // namespace

TensorC compress(const TensorC& signals, const SubspaceBasis& basis) {
  const std::size_t t = basis.n_frames(), k = basis.n_coeffs();
  check_trailing(signals, t, "compress");
  std::vector<std::size_t> out_dims = signals.dims();
  out_dims.back() = k;
  TensorC out(out_dims);
  const std::size_t rows = signals.numel() / t;
  for (std::size_t r = 0; r < rows; ++r) {
    const cplx* src = signals.data() + r * t;
    cplx* dst = out.data() + r * k;
    for (std::size_t j = 0; j < k; ++j) {
      cplx acc(0, 0);
      for (std::size_t i = 0; i < t; ++i) acc += src[i] * basis.v(i, j);
      dst[j] = acc;
    }
  }
  return out;
}

TensorC decompress(const TensorC& coeffs, const SubspaceBasis& basis) {
  const std::size_t t = basis.n_frames(), k = basis.n_coeffs();
  check_trailing(coeffs, k, "decompress");
  std::vector<std::size_t> out_dims = coeffs.dims();
  out_dims.back() = t;
  TensorC out(out_dims);
  const std::size_t rows = coeffs.numel() / k;
  for (std::size_t r = 0; r < rows; ++r) {
    const cplx* src = coeffs.data() + r * k;
    cplx* dst = out.data() + r * t;
    for (std::size_t i = 0; i < t; ++i) {
      cplx acc(0, 0);
      for (std::size_t j = 0; j < k; ++j) acc += src[j] * std::conj(basis.v(i, j));
      dst[i] = acc;
    }
  }
  return out;
}

}  // namespace mrf
