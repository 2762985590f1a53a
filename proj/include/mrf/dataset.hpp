#pragma once

#include <filesystem>
#include <optional>

#include "mrf/acquisim.hpp"
#include "mrf/epg.hpp"
#include "mrf/forward_model.hpp"
#include "mrf/manifest.hpp"
#include "mrf/quant.hpp"
#include "mrf/subspace.hpp"

namespace mrf {

struct Dataset {
  DatasetManifest mf;
  KSpaceData y;  // full sampling
  Trajectory traj;
  CoilSet coils;
  std::vector<double> dcf;  // full-sampling reference weights
  SubspaceBasis basis;
  Dictionary dict;
  QMaps ref;
  Mask mask;
  SequenceParams seq;
  Tsmi x_gt;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

// Desk-scale synthetic acquisition (spec defaults: 64x64 grid, C=4, M=256,
// L=8, T=200, K=5).
struct DeskGeometry {
  std::vector<std::size_t> grid{64, 64};
  std::size_t c = 4, m = 256, l = 8, t = 200, k = 5;
  double tr_ms = 10.5, te_ms = 2.0, ti_ms = 18.0;
  double peak_flip_deg = 70.0;
  double turns = 4.0;
  double sigma = 2.0;
  int width = 6;
  uint64_t seed = 1234;
  std::optional<double> noise_snr_db;
  bool honest_crime = false;  // synthesize on a 2x finer grid
};

// Pinned desk dictionary grids (20 x 15 values, 260 feasible atoms).
std::vector<double> desk_t1_grid();
std::vector<double> desk_t2_grid();

// Generates phantom, dictionary, basis, coils, trajectory, dcf and k-space
// into `dir` and writes the manifest. Returns the loaded dataset.
Dataset build_desk_dataset(const std::filesystem::path& dir, const DeskGeometry& geo);

// Forward model over the retained arms of a dataset.
ForwardModel make_model(const Dataset& ds, std::size_t r, double sigma = 2.0, int width = 6,
                        bool dcf_in_gram = true);

SubspaceBasis load_basis(const std::filesystem::path& path);
void save_basis(const std::filesystem::path& path, const SubspaceBasis& basis);

}  // namespace mrf
