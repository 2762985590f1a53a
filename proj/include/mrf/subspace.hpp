#pragma once

#include <cstddef>

#include "mrf/epg.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

struct SubspaceBasis {
  TensorC v;                           // T x K, orthonormal columns
  std::vector<double> singular_values; // all min(D, T) values
  double energy_captured = 0;

  std::size_t n_frames() const { return v.dim(0); }
  std::size_t n_coeffs() const { return v.dim(1); }
};

// Top-k right singular vectors of the (optionally row-normalized) D x T atom
// matrix. Column sign convention: the largest-magnitude entry of each column
// is made real and positive.
SubspaceBasis compute_basis(const Dictionary& dict, std::size_t k,
                            bool normalize_atoms = true);

// signals: [..., T] -> coefficients [..., K] via out = signals . v
TensorC compress(const TensorC& signals, const SubspaceBasis& basis);
// coeffs: [..., K] -> signals [..., T] via out = coeffs . v^H
TensorC decompress(const TensorC& coeffs, const SubspaceBasis& basis);

}  // namespace mrf
