#include "mrf/acquisim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "mrf/errors.hpp"
#include "mrf/parallel.hpp"
#include "mrf/rng.hpp"
#include "mrf/subspace.hpp"

namespace mrf {

PhantomSpec default_brain_phantom(const std::vector<std::size_t>& grid, uint64_t seed) {
  PhantomSpec spec;
  spec.grid = grid;
  spec.seed = seed;
  // preset constants, config-overridable: GM shell, WM interior, CSF ventricle
  TissueRegion gm{{0.5, 0.5, 0.5}, {0.42, 0.40, 0.38}, 1200, 100, 0.85};
  TissueRegion wm{{0.5, 0.5, 0.5}, {0.30, 0.28, 0.27}, 800, 80, 0.75};
  TissueRegion csf{{0.5, 0.43, 0.5}, {0.10, 0.075, 0.08}, 4000, 1800, 1.0};
  spec.regions = {gm, wm, csf};
  return spec;
}

QMaps make_phantom(const PhantomSpec& spec) {
  const auto& grid = spec.grid;
  if (grid.size() != 2 && grid.size() != 3)
    throw ConfigError("phantom grid must be 2D or 3D");
  if (spec.regions.empty()) throw ConfigError("phantom needs at least one region");
  for (const auto& reg : spec.regions) {
    if (!(reg.t2_ms > 0 && reg.t1_ms >= reg.t2_ms))
      throw ConfigError("phantom region needs t1 >= t2 > 0");
    if (!(reg.pd >= 0 && reg.pd <= 1)) throw ConfigError("phantom region needs pd in [0, 1]");
    for (int a = 0; a < 3; ++a)
      if (!(reg.semiaxes[a] > 0)) throw ConfigError("degenerate phantom region");
  }

  QMaps q(grid);
  const std::size_t dz = grid.size() == 3 ? grid[0] : 1;
  const std::size_t dy = grid[grid.size() == 3 ? 1 : 0];
  const std::size_t dx = grid.back();

  // low-frequency cosine mixture for smooth PD texture
  Rng rng(spec.seed);
  struct Wave {
    double fz, fy, fx, phase;
  };
  std::vector<Wave> waves(6);
  for (auto& wv : waves) {
    wv.fz = rng.uniform(0.5, 2.5);
    wv.fy = rng.uniform(0.5, 2.5);
    wv.fx = rng.uniform(0.5, 2.5);
    wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  for (std::size_t z = 0; z < dz; ++z)
    for (std::size_t y = 0; y < dy; ++y)
      for (std::size_t x = 0; x < dx; ++x) {
        const std::size_t i = (z * dy + y) * dx + x;
        const double fz = dz > 1 ? (z + 0.5) / static_cast<double>(dz) : 0.5;
        const double fy = (y + 0.5) / static_cast<double>(dy);
        const double fx = (x + 0.5) / static_cast<double>(dx);
        const TissueRegion* hit = nullptr;
        for (const auto& reg : spec.regions) {
          const double uz = dz > 1 ? (fz - reg.center[0]) / reg.semiaxes[0] : 0.0;
          const double uy = (fy - reg.center[1]) / reg.semiaxes[1];
          const double ux = (fx - reg.center[2]) / reg.semiaxes[2];
          if (uz * uz + uy * uy + ux * ux <= 1.0) hit = &reg;  // innermost (last) wins
        }
        if (!hit) continue;
        double texture = 0;
        for (const auto& wv : waves)
          texture += std::cos(2 * std::numbers::pi * (wv.fz * fz + wv.fy * fy + wv.fx * fx) +
                              wv.phase);
        texture /= static_cast<double>(waves.size());
        q.t1_ms[i] = hit->t1_ms;
        q.t2_ms[i] = hit->t2_ms;
        q.pd[i] = std::clamp(hit->pd * (1.0 + spec.pd_texture_amp * texture), 0.0, 1.0);
        q.mask[i] = 1;
      }
  return q;
}

Trajectory make_spiral(std::size_t m, std::size_t l, const std::vector<std::size_t>& grid,
                       double turns) {
  if (m < 1 || l < 1) throw ConfigError("spiral needs M, L >= 1");
  if (grid.size() != 2 && grid.size() != 3)
    throw ConfigError("spiral grid must be 2D or 3D");
  const bool is3d = grid.size() == 3;
  const std::size_t planes = is3d ? grid[0] : 1;
  const std::size_t d = grid.size();
  const double rmax = 0.5 - 1e-9;

  Trajectory traj;
  traj.points = TensorR({planes * l * m, d});
  traj.arm_index.resize(planes * l * m);
  traj.frame_index.assign(planes * l * m, 0);
  for (std::size_t pz = 0; pz < planes; ++pz) {
    const double kz =
        is3d ? (static_cast<double>(pz) - static_cast<double>(planes) / 2.0) /
                   static_cast<double>(planes)
             : 0.0;
    for (std::size_t li = 0; li < l; ++li) {
      const double rot = 2.0 * std::numbers::pi * static_cast<double>(li) / static_cast<double>(l);
      for (std::size_t mi = 0; mi < m; ++mi) {
        const double tau = m > 1 ? static_cast<double>(mi) / static_cast<double>(m - 1) : 1.0;
        const double ang = 2.0 * std::numbers::pi * turns * tau + rot;
        const double r = rmax * tau;
        const std::size_t p = (pz * l + li) * m + mi;
        if (is3d) {
          traj.points(p, 0) = kz;
          traj.points(p, 1) = r * std::cos(ang);
          traj.points(p, 2) = r * std::sin(ang);
        } else {
          traj.points(p, 0) = r * std::cos(ang);
          traj.points(p, 1) = r * std::sin(ang);
        }
        traj.arm_index[p] = static_cast<uint32_t>(pz * l + li);
      }
    }
  }
  return traj;
}

CoilSet make_coils(std::size_t c, const std::vector<std::size_t>& grid, uint64_t seed) {
  if (c < 1) throw ConfigError("need C >= 1");
  if (grid.size() != 2 && grid.size() != 3)
    throw ConfigError("coil grid must be 2D or 3D");
  (void)seed;  // placement is deterministic; kept for interface stability
  const std::size_t dz = grid.size() == 3 ? grid[0] : 1;
  const std::size_t dy = grid[grid.size() == 3 ? 1 : 0];
  const std::size_t dx = grid.back();
  const std::size_t n = dz * dy * dx;

  std::vector<std::size_t> dims{c};
  dims.insert(dims.end(), grid.begin(), grid.end());
  CoilSet coils;
  coils.sens = TensorC(dims);
  for (std::size_t ci = 0; ci < c; ++ci) coils.labels.push_back("coil" + std::to_string(ci));

  // gaussian width and phase gradient in fractional units; a single coil is
  // a uniform body-coil analog with no phase ramp
  const double sigma = 0.45;
  const double ring = 0.52;
  const double phase_cycles = c > 1 ? 0.6 : 0.0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(ci) / static_cast<double>(c);
    const double cyc = 0.5 + ring * std::cos(ang);  // center (y, x) in fractions
    const double cxc = 0.5 + ring * std::sin(ang);
    const double dyc = std::cos(ang), dxc = std::sin(ang);
    cplx* s = coils.sens.data() + ci * n;
    for (std::size_t z = 0; z < dz; ++z)
      for (std::size_t y = 0; y < dy; ++y)
        for (std::size_t x = 0; x < dx; ++x) {
          const double fz = dz > 1 ? (z + 0.5) / static_cast<double>(dz) - 0.5 : 0.0;
          const double fy = (y + 0.5) / static_cast<double>(dy);
          const double fx = (x + 0.5) / static_cast<double>(dx);
          const double d2 =
              (fy - cyc) * (fy - cyc) + (fx - cxc) * (fx - cxc) + fz * fz;
          const double mag = std::exp(-d2 / (2 * sigma * sigma));
          const double ph =
              2.0 * std::numbers::pi * phase_cycles * (dyc * (fy - 0.5) + dxc * (fx - 0.5));
          s[(z * dy + y) * dx + x] = mag * cplx(std::cos(ph), std::sin(ph));
        }
  }
  // normalize to unit sum-of-squares everywhere
  for (std::size_t v = 0; v < n; ++v) {
    double sos = 0;
    for (std::size_t ci = 0; ci < c; ++ci) sos += std::norm(coils.sens[ci * n + v]);
    const double inv = 1.0 / std::sqrt(sos);
    for (std::size_t ci = 0; ci < c; ++ci) coils.sens[ci * n + v] *= inv;
  }
  return coils;
}

SimulateResult simulate_kspace(const QMaps& qmaps, const SequenceParams& seq,
                               const ForwardModel& model, const Dictionary& dict,
                               const SubspaceBasis& basis, std::optional<double> noise_snr_db,
                               uint64_t seed) {
  const std::size_t n = qmaps.grid_numel();
  if (qmaps.grid != model.grid()) throw ConfigError("phantom grid does not match model");
  if (basis.n_frames() != seq.n_frames())
    throw ConfigError("basis frames do not match sequence");

  // unique tissues, each must be on the dictionary grid
  std::map<std::pair<double, double>, std::vector<cplx>> fingerprints;
  for (std::size_t v = 0; v < n; ++v) {
    if (!qmaps.mask[v]) continue;
    fingerprints.emplace(std::make_pair(qmaps.t1_ms[v], qmaps.t2_ms[v]), std::vector<cplx>{});
  }
  for (auto& [tissue, coeffs] : fingerprints) {
    bool on_grid = false;
    for (std::size_t j = 0; j < dict.n_atoms(); ++j)
      if (dict.t1_ms[j] == tissue.first && dict.t2_ms[j] == tissue.second) on_grid = true;
    if (!on_grid)
      throw ConfigError("tissue (t1=" + std::to_string(tissue.first) +
                        ", t2=" + std::to_string(tissue.second) +
                        ") ms is not on the dictionary grid");
    Fingerprint f = simulate_fingerprint(tissue.first, tissue.second, seq);
    TensorC sig({1, f.signal.size()}, f.signal);
    TensorC c = compress(sig, basis);
    coeffs.assign(c.data(), c.data() + c.numel());
  }

  Tsmi x_gt = model.zero_tsmi();
  for (std::size_t v = 0; v < n; ++v) {
    if (!qmaps.mask[v]) continue;
    const auto& coeffs = fingerprints.at({qmaps.t1_ms[v], qmaps.t2_ms[v]});
    for (std::size_t j = 0; j < x_gt.k; ++j) x_gt.channel(j)[v] = qmaps.pd[v] * coeffs[j];
  }

  SimulateResult out;
  out.y = model.apply_forward(x_gt);
  out.x_gt = std::move(x_gt);

  if (noise_snr_db) {
    double power = 0;
    for (std::size_t i = 0; i < out.y.data.numel(); ++i) power += std::norm(out.y.data[i]);
    power /= static_cast<double>(out.y.data.numel());
    const double noise_power = power / std::pow(10.0, *noise_snr_db / 10.0);
    const double s = std::sqrt(noise_power / 2.0);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < out.y.data.numel(); ++i)
      out.y.data[i] += cplx(s * rng.normal(), s * rng.normal());
  }
  return out;
}

std::vector<uint32_t> undersample_arms(std::size_t l, std::size_t r) {
  if (r < 1) throw ConfigError("acceleration factor R must be >= 1");
  if (r > l) throw ConfigError("acceleration factor R (" + std::to_string(r) +
                               ") exceeds arm count L (" + std::to_string(l) + ")");
  std::vector<uint32_t> arms;
  for (std::size_t i = 0; i < l; i += r) arms.push_back(static_cast<uint32_t>(i));
  return arms;
}

KSpaceData undersample_kspace(const KSpaceData& y, std::size_t r) {
  const auto arms = undersample_arms(y.l, r);
  KSpaceData out(y.c, y.m, arms.size(), y.t);
  for (std::size_t c = 0; c < y.c; ++c)
    for (std::size_t t = 0; t < y.t; ++t)
      for (std::size_t li = 0; li < arms.size(); ++li)
        for (std::size_t mi = 0; mi < y.m; ++mi)
          out.data[((c * y.t + t) * arms.size() + li) * y.m + mi] =
              y.data[((c * y.t + t) * y.l + arms[li]) * y.m + mi];
  return out;
}

}  // namespace mrf
