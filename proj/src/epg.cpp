#include "mrf/epg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mrf/errors.hpp"
#include "mrf/io.hpp"
#include "mrf/parallel.hpp"

namespace mrf {

void SequenceParams::validate() const {
  if (flip_angles_deg.empty()) throw ConfigError("sequence needs at least one flip angle");
  if (!(tr_ms > te_ms && te_ms >= 0))
    throw ConfigError("sequence needs tr_ms > te_ms >= 0");
  if (ti_ms < 0) throw ConfigError("ti_ms must be >= 0");
  if (!(inversion_efficiency > 0 && inversion_efficiency <= 1))
    throw ConfigError("inversion_efficiency must be in (0, 1]");
  for (double a : flip_angles_deg)
    if (!(a >= 0 && a <= 180)) throw ConfigError("flip angles must be in [0, 180] degrees");
}

std::vector<double> default_flip_train(std::size_t t, double peak_deg) {
  std::vector<double> deg(t);
  const std::size_t lobes = std::max<std::size_t>(1, t / 100);
  const double period = static_cast<double>(t) / static_cast<double>(lobes);
  for (std::size_t i = 0; i < t; ++i) {
    const double phase = std::fmod(static_cast<double>(i) + 0.5, period) / period;
    deg[i] = peak_deg * std::sin(std::numbers::pi * phase);
  }
  return deg;
}

std::vector<double> load_flip_table(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open flip table: " + path.string());
  std::vector<double> deg;
  double x;
  while (f >> x) deg.push_back(x);
  if (deg.empty()) throw ConfigError("flip table is empty: " + path.string());
  return deg;
}

void save_flip_table(const std::filesystem::path& path, const std::vector<double>& deg) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write flip table: " + path.string());
  f.precision(17);
  for (double a : deg) f << a << "\n";
}

Fingerprint simulate_fingerprint(double t1_ms, double t2_ms, const SequenceParams& seq,
                                 int n_states) {
  seq.validate();
  if (!(t2_ms > 0 && t1_ms >= t2_ms))
    throw ConfigError("need t1_ms >= t2_ms > 0, got t1=" + std::to_string(t1_ms) +
                      " t2=" + std::to_string(t2_ms));
  if (n_states < 2) throw ConfigError("n_states must be >= 2");

  const std::size_t t_frames = seq.n_frames();
  const std::size_t n = static_cast<std::size_t>(n_states);
  // All states stay real for y-axis pulses on on-resonance spins.
  std::vector<double> fp(n, 0.0), fm(n, 0.0), z(n, 0.0);
  z[0] = 1.0;

  // Inversion, then recover for TI.
  z[0] *= -seq.inversion_efficiency;
  const double e1_ti = std::exp(-seq.ti_ms / t1_ms);
  z[0] = z[0] * e1_ti + (1.0 - e1_ti);

  const double e1 = std::exp(-seq.tr_ms / t1_ms);
  const double e2 = std::exp(-seq.tr_ms / t2_ms);
  const double e2_te = std::exp(-seq.te_ms / t2_ms);

  Fingerprint out;
  out.signal.resize(t_frames);
  double max_f0 = 0.0, max_leak = 0.0;

  for (std::size_t t = 0; t < t_frames; ++t) {
    const double a = seq.flip_angles_deg[t] * std::numbers::pi / 180.0;
    const double c2 = std::cos(a / 2) * std::cos(a / 2);
    const double s2 = std::sin(a / 2) * std::sin(a / 2);
    const double sa = std::sin(a);
    const double ca = std::cos(a);
    // RF rotation about y: F'(k) = c2 F(k) - s2 F(-k) - sa Z(k)
    //                      Z'(k) = sa/2 (F(k) + F(-k)) + ca Z(k)
    for (std::size_t kk = 0; kk < n; ++kk) {
      const double fpk = fp[kk], fmk = fm[kk], zk = z[kk];
      fp[kk] = c2 * fpk - s2 * fmk - sa * zk;
      fm[kk] = c2 * fmk - s2 * fpk - sa * zk;
      z[kk] = 0.5 * sa * (fpk + fmk) + ca * zk;
    }
    fm[0] = fp[0];

    out.signal[t] = cplx(fp[0] * e2_te, 0.0);
    max_f0 = std::max(max_f0, std::abs(fp[0] * e2_te));
    max_leak = std::max({max_leak, std::abs(fp[n - 1]), std::abs(fm[n - 1]), std::abs(z[n - 1])});

    // Relaxation over the full TR, then one dephasing shift.
    for (std::size_t kk = 0; kk < n; ++kk) {
      fp[kk] *= e2;
      fm[kk] *= e2;
      z[kk] *= e1;
    }
    z[0] += 1.0 - e1;

    const double carry = fm[1];
    for (std::size_t kk = n - 1; kk >= 1; --kk) fp[kk] = fp[kk - 1];
    for (std::size_t kk = 0; kk + 1 < n; ++kk) fm[kk] = fm[kk + 1];
    fm[n - 1] = 0.0;
    fp[0] = carry;
  }

  out.truncation_leak = max_f0 > 0 ? max_leak / max_f0 : 0.0;
  return out;
}

Dictionary build_dictionary(const std::vector<double>& t1_grid_ms,
                            const std::vector<double>& t2_grid_ms, const SequenceParams& seq,
                            bool normalize, int n_states) {
  seq.validate();
  if (t1_grid_ms.empty() || t2_grid_ms.empty())
    throw ConfigError("dictionary grids must be non-empty");
  if (!std::is_sorted(t1_grid_ms.begin(), t1_grid_ms.end()) ||
      !std::is_sorted(t2_grid_ms.begin(), t2_grid_ms.end()))
    throw ConfigError("dictionary grids must be sorted ascending");

  std::vector<std::pair<double, double>> pairs;
  for (double t1 : t1_grid_ms)
    for (double t2 : t2_grid_ms)
      if (t2 <= t1) pairs.emplace_back(t1, t2);
  if (pairs.empty()) throw ConfigError("empty feasible (t1, t2) set");

  const std::size_t d = pairs.size();
  const std::size_t t_frames = seq.n_frames();
  Dictionary dict;
  dict.atoms = TensorC({d, t_frames});
  dict.t1_ms.resize(d);
  dict.t2_ms.resize(d);
  dict.normalized = normalize;

  std::vector<double> leaks(d, 0.0);
  parallel_for(d, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [t1, t2] = pairs[i];
      Fingerprint f = simulate_fingerprint(t1, t2, seq, n_states);
      leaks[i] = f.truncation_leak;
      cplx* row = dict.atoms.data() + i * t_frames;
      if (normalize) {
        double nrm = 0;
        for (const cplx& v : f.signal) nrm += std::norm(v);
        nrm = std::sqrt(nrm);
        const double s = nrm > 0 ? 1.0 / nrm : 0.0;
        for (std::size_t j = 0; j < t_frames; ++j) row[j] = f.signal[j] * s;
      } else {
        std::copy(f.signal.begin(), f.signal.end(), row);
      }
      dict.t1_ms[i] = t1;
      dict.t2_ms[i] = t2;
    }
  });
  dict.max_truncation_leak = *std::max_element(leaks.begin(), leaks.end());
  return dict;
}

void save_dictionary(const std::filesystem::path& atoms_path,
                     const std::filesystem::path& grids_path, const Dictionary& dict) {
  write_tensor(atoms_path, dict.atoms);
  std::ofstream f(grids_path);
  if (!f) throw IoError("cannot write dictionary grids: " + grids_path.string());
  f.precision(17);
  f << "normalized = " << (dict.normalized ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < dict.n_atoms(); ++i)
    f << dict.t1_ms[i] << " " << dict.t2_ms[i] << "\n";
}

Dictionary load_dictionary(const std::filesystem::path& atoms_path,
                           const std::filesystem::path& grids_path) {
  Dictionary dict;
  dict.atoms = read_tensor_cplx(atoms_path);
  if (dict.atoms.ndim() != 2) throw IoError("dictionary atoms must be a D x T tensor");
  std::ifstream f(grids_path);
  if (!f) throw IoError("cannot open dictionary grids: " + grids_path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty dictionary grids file");
  {
    std::istringstream ss(line);
    std::string key, eq;
    int flag;
    if (!(ss >> key >> eq >> flag) || key != "normalized")
      throw IoError("dictionary grids file must start with `normalized = 0|1`");
    dict.normalized = flag != 0;
  }
  double t1, t2;
  while (f >> t1 >> t2) {
    dict.t1_ms.push_back(t1);
    dict.t2_ms.push_back(t2);
  }
  if (dict.t1_ms.size() != dict.n_atoms())
    throw IoError("dictionary grids row count disagrees with atom count");
  return dict;
}

}  // namespace mrf
