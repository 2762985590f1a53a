#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mrf/epg.hpp"
#include "mrf/forward_model.hpp"
#include "mrf/quant.hpp"

namespace mrf {

// Axis-aligned ellipsoid in fractional grid coordinates (centers and
// semi-axes as fractions of each grid extent).
struct TissueRegion {
  std::array<double, 3> center{0.5, 0.5, 0.5};
  std::array<double, 3> semiaxes{0.4, 0.4, 0.4};
  double t1_ms = 1000, t2_ms = 100, pd = 1.0;
};

struct PhantomSpec {
  std::vector<std::size_t> grid;
  std::vector<TissueRegion> regions;  // later (inner) regions win
  uint64_t seed = 0;
  double pd_texture_amp = 0.05;  // smooth multiplicative PD texture
};

// Three-tissue brain-like preset: WM 800/80, GM 1200/100, CSF 4000/1800 ms.
PhantomSpec default_brain_phantom(const std::vector<std::size_t>& grid, uint64_t seed = 0);

QMaps make_phantom(const PhantomSpec& spec);

// Archimedean spiral arm set for one frame: arm l is the base spiral
// k(tau) = (0.5 - 1e-9) tau exp(i 2 pi (turns tau + l / L)), M samples
// uniform in tau, points ordered (l * M + m). A 3D grid gives a
// stack-of-spirals: the flattened arm count is L * grid[0], arm index
// plane * L + l.
Trajectory make_spiral(std::size_t m, std::size_t l, const std::vector<std::size_t>& grid,
                       double turns);

// Smooth complex Gaussian sensitivities centered on equally spaced boundary
// points with linear phase, normalized to unit sum-of-squares magnitude.
CoilSet make_coils(std::size_t c, const std::vector<std::size_t>& grid, uint64_t seed = 0);

struct SimulateResult {
  KSpaceData y;
  Tsmi x_gt;
};

// Ground-truth TSMI from per-voxel compressed fingerprints scaled by PD,
// then y = A(x_gt) (+ optional complex white noise at the requested SNR).
// Every tissue (t1, t2) must be on the dictionary grid.
SimulateResult simulate_kspace(const QMaps& qmaps, const SequenceParams& seq,
                               const ForwardModel& model, const Dictionary& dict,
                               const SubspaceBasis& basis,
                               std::optional<double> noise_snr_db = std::nullopt,
                               uint64_t seed = 0);

// Arms {0, R, 2R, ...}.
std::vector<uint32_t> undersample_arms(std::size_t l, std::size_t r);
KSpaceData undersample_kspace(const KSpaceData& y, std::size_t r);

}  // namespace mrf
