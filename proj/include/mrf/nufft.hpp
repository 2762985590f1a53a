#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mrf/tensor.hpp"

namespace mrf {

// Nonuniform sample locations in cycles/FOV, each coordinate in [-0.5, 0.5).
struct Trajectory {
  TensorR points;                     // P x d, d in {2, 3}
  std::vector<uint32_t> arm_index;    // length P
  std::vector<uint32_t> frame_index;  // length P; all zero when one arm set serves every frame

  std::size_t n_points() const { return points.numel() ? points.dim(0) : 0; }
  std::size_t ndim() const { return points.numel() ? points.dim(1) : 0; }
};

// Kaiser-Bessel gridding plan for a fixed point set and grid. Immutable and
// thread-safe after construction; forward/adjoint allocate their own scratch.
//
// forward  (type 2): samples[p] = sum_x image[x] exp(-2 pi i k_p . x),
//                    x in centered integer coordinates.
// adjoint  (type 1): exact linear adjoint of forward.
class NufftPlan {
 public:
  NufftPlan(const Trajectory& traj, std::vector<std::size_t> grid_dims, double sigma = 2.0,
            int width = 6);
  ~NufftPlan();
  NufftPlan(NufftPlan&&) noexcept;
  NufftPlan& operator=(NufftPlan&&) noexcept;
  NufftPlan(const NufftPlan&) = delete;
  NufftPlan& operator=(const NufftPlan&) = delete;

  const std::vector<std::size_t>& grid_dims() const;
  const std::vector<std::size_t>& os_dims() const;
  std::size_t n_points() const;
  double sigma() const;
  int width() const;
  double beta() const;
  std::size_t grid_numel() const;
  const TensorR& apodization() const;  // deapodization correction image

  void forward(const cplx* image, cplx* samples) const;
  void adjoint(const cplx* samples, cplx* image) const;

  // Gridding followed by de-gridding with the same kernel and no FFT
  // (G G^H applied to per-sample weights); used by Pipe-Menon.
  void kernel_gram(const double* weights, double* out) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct DensityCompensation {
  std::vector<double> weights;  // length P, positive, max-normalized to 1
};

// Pipe-Menon fixed point: w <- w / (G G^H w), then scaled so max = 1.
DensityCompensation compute_dcf(const NufftPlan& plan, int n_iters = 20);

}  // namespace mrf
