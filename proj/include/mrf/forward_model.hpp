#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mrf/nufft.hpp"
#include "mrf/subspace.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

struct CoilSet {
  TensorC sens;  // [C, grid...]
  std::vector<std::string> labels;

  std::size_t n_coils() const { return sens.ndim() ? sens.dim(0) : 0; }
  std::vector<std::size_t> grid() const {
    return {sens.dims().begin() + 1, sens.dims().end()};
  }
};

// Subspace coefficient image, stored channel-major: [K, grid...].
// File layout is [grid..., K].
struct Tsmi {
  std::vector<std::size_t> grid;
  std::size_t k = 0;
  TensorC data;

  Tsmi() = default;
  Tsmi(std::vector<std::size_t> grid_dims, std::size_t n_coeffs);
  std::size_t grid_numel() const { return Tensor<double>::numel_from_dims(grid); }
  cplx* channel(std::size_t j) { return data.data() + j * grid_numel(); }
  const cplx* channel(std::size_t j) const { return data.data() + j * grid_numel(); }
};

TensorC tsmi_to_file_layout(const Tsmi& x);
Tsmi tsmi_from_file_layout(const TensorC& t);

// Measurements. Internal layout [C, T, L, M]: within one coil the flat sample
// index is ((t * L + l) * M + m), the normative operator ordering. The file
// layout follows the [C, M, L, T] convention of the manifest.
struct KSpaceData {
  std::size_t c = 0, m = 0, l = 0, t = 0;
  TensorC data;

  KSpaceData() = default;
  KSpaceData(std::size_t n_coils, std::size_t n_samples, std::size_t n_arms,
             std::size_t n_frames);
  std::size_t coil_stride() const { return t * l * m; }
  cplx* coil(std::size_t ci) { return data.data() + ci * coil_stride(); }
  const cplx* coil(std::size_t ci) const { return data.data() + ci * coil_stride(); }
};

TensorC kspace_to_file_layout(const KSpaceData& y);
KSpaceData kspace_from_file_layout(const TensorC& t);

// The acquisition operator A and its per-coil split {A_c}:
// subspace expansion -> coil weighting -> per-frame NUFFT. One arm set serves
// every frame, so a single plan is shared across frames and coils. Immutable
// after construction.
class ForwardModel {
 public:
  // arm_set: the full trajectory of one frame, arm-major ((l * M + m) point
  // order, L_total arms). active_arms selects the retained arm subset.
  ForwardModel(SubspaceBasis basis, CoilSet coils, const Trajectory& arm_set, std::size_t m,
               std::size_t l_total, std::vector<uint32_t> active_arms, double sigma = 2.0,
               int width = 6, int dcf_iters = 20, bool dcf_in_gram = true);

  std::size_t n_coils() const { return coils_.n_coils(); }
  std::size_t n_frames() const { return basis_.n_frames(); }
  std::size_t n_coeffs() const { return basis_.n_coeffs(); }
  std::size_t samples_per_frame() const { return plan_->n_points(); }
  std::size_t coil_samples() const { return samples_per_frame() * n_frames(); }
  const std::vector<std::size_t>& grid() const { return grid_; }
  std::size_t grid_numel() const { return Tensor<double>::numel_from_dims(grid_); }
  const SubspaceBasis& basis() const { return basis_; }
  const CoilSet& coils() const { return coils_; }
  const NufftPlan& plan() const { return *plan_; }
  const std::vector<double>& dcf() const { return dcf_.weights; }
  const std::vector<uint32_t>& active_arms() const { return active_arms_; }
  bool dcf_in_gram() const { return dcf_in_gram_; }

  Tsmi zero_tsmi() const { return Tsmi(grid_, n_coeffs()); }
  KSpaceData zero_kspace() const {
    return KSpaceData(n_coils(), m_, active_arms_.size(), n_frames());
  }

  // y_c has length coil_samples(), ordered ((t * L_active + l) * M + m).
  void apply_coil_forward(std::size_t c, const Tsmi& x, cplx* y_c) const;
  void apply_coil_adjoint(std::size_t c, const cplx* y_c, bool weighted, Tsmi& out) const;

  KSpaceData apply_forward(const Tsmi& x) const;
  Tsmi apply_adjoint(const KSpaceData& y, bool weighted) const;

  // out = A^H diag(DCF) A x + mu x (DCF omitted when dcf_in_gram is false)
  void gram_apply(const Tsmi& x, double mu, Tsmi& out) const;

 private:
  void check_tsmi(const Tsmi& x) const;

  SubspaceBasis basis_;
  CoilSet coils_;
  std::vector<std::size_t> grid_;
  std::size_t m_ = 0, l_total_ = 0;
  std::vector<uint32_t> active_arms_;
  std::unique_ptr<NufftPlan> plan_;
  DensityCompensation dcf_;
  bool dcf_in_gram_ = true;
};

// Keep arms {0, R, 2R, ...} of an arm-major single-frame trajectory.
Trajectory select_arms(const Trajectory& arm_set, std::size_t m, std::size_t l_total,
                       const std::vector<uint32_t>& arms);

}  // namespace mrf
