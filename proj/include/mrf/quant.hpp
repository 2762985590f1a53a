#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mrf/epg.hpp"
#include "mrf/forward_model.hpp"
#include "mrf/subspace.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

using Mask = Tensor<uint8_t>;

struct QMaps {
  std::vector<std::size_t> grid;
  TensorR t1_ms, t2_ms, pd;
  Mask mask;

  QMaps() = default;
  explicit QMaps(std::vector<std::size_t> grid_dims);
  std::size_t grid_numel() const { return Tensor<double>::numel_from_dims(grid); }
};

void save_qmaps(const std::filesystem::path& qmaps_path, const QMaps& q);
QMaps load_qmaps(const std::filesystem::path& qmaps_path);
void save_mask(const std::filesystem::path& path, const Mask& m,
               const std::vector<std::size_t>& grid);
Mask load_mask(const std::filesystem::path& path);

// Exhaustive per-voxel match against the basis-compressed dictionary:
// j* = argmax_j |<x_v, d_j>| over unit-norm compressed atoms; PD from the
// retained raw compressed norm. Voxels outside the mask are zeroed. Pass a
// null mask to match everywhere.
QMaps dict_match(const Tsmi& x, const Dictionary& dict, const SubspaceBasis& basis,
                 const Mask* mask = nullptr);

// 100 * mean over mask of |est - ref| / ref. Requires ref > 0 on the mask.
double mape(const TensorR& est, const TensorR& ref, const Mask& mask);

// 10 log10(peak^2 / MSE_mask), peak = max(ref on mask). MSE = 0 reports the
// documented +inf sentinel of 200 dB.
inline constexpr double kPsnrCapDb = 200.0;
double psnr(const TensorR& est, const TensorR& ref, const Mask& mask);

// Mean local SSIM over the mask (Gaussian window sigma=1.5, width 7,
// K1=0.01, K2=0.03, dynamic range = masked max of ref), computed per axial
// slice and averaged for 3D volumes.
double ssim(const TensorR& est, const TensorR& ref, const Mask& mask);

// pd > threshold_frac * max(pd), then largest connected component.
Mask make_mask(const TensorR& pd_ref, double threshold_frac = 0.05);

Mask erode_mask(const Mask& mask, const std::vector<std::size_t>& grid, int radius);

// Mean squared discrete Laplacian over the 2K real channels of a TSMI;
// the checkerboard-artifact surrogate.
double mean_squared_laplacian(const Tsmi& x);

}  // namespace mrf
