#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mrf/tensor.hpp"

namespace mrf {

// Inversion-prepared unbalanced SSFP (FISP-type) sequence: one inversion
// pulse, recovery of ti_ms, then T excitations with fixed TR. Every TR ends
// with one unit gradient dephasing cycle per voxel.
struct SequenceParams {
  std::vector<double> flip_angles_deg;
  double tr_ms = 10.5;
  double te_ms = 2.0;
  double ti_ms = 18.0;
  double inversion_efficiency = 1.0;

  std::size_t n_frames() const { return flip_angles_deg.size(); }
  void validate() const;
};

// Smooth sinusoidal-lobe flip train peaking at `peak_deg`, one lobe per
// ~100 pulses. Desk default for T frames.
std::vector<double> default_flip_train(std::size_t t, double peak_deg = 70.0);

std::vector<double> load_flip_table(const std::filesystem::path& path);
void save_flip_table(const std::filesystem::path& path, const std::vector<double>& deg);

struct Fingerprint {
  std::vector<cplx> signal;     // F0 at echo time, one entry per TR
  double truncation_leak = 0;   // max boundary-state magnitude / max |F0|
};

// EPG simulation with RF rotations about the y axis, so signals are real
// valued for on-resonance spins. signal[t] is the F0 state after pulse t,
// decayed to TE.
Fingerprint simulate_fingerprint(double t1_ms, double t2_ms, const SequenceParams& seq,
                                 int n_states = 40);

struct Dictionary {
  TensorC atoms;                 // D x T
  std::vector<double> t1_ms, t2_ms;  // length D
  bool normalized = false;
  double max_truncation_leak = 0;

  std::size_t n_atoms() const { return atoms.ndim() ? atoms.dim(0) : 0; }
  std::size_t n_frames() const { return atoms.ndim() ? atoms.dim(1) : 0; }
};

// One atom per feasible (t1, t2) grid pair (t2 <= t1), t1-major order.
Dictionary build_dictionary(const std::vector<double>& t1_grid_ms,
                            const std::vector<double>& t2_grid_ms, const SequenceParams& seq,
                            bool normalize, int n_states = 40);

void save_dictionary(const std::filesystem::path& atoms_path,
                     const std::filesystem::path& grids_path, const Dictionary& dict);
Dictionary load_dictionary(const std::filesystem::path& atoms_path,
                           const std::filesystem::path& grids_path);

}  // namespace mrf
