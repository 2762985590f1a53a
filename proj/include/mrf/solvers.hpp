#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrf/forward_model.hpp"

namespace mrf {

struct SolverReport {
  std::size_t iterations = 0;
  std::vector<double> history;  // relative residual (CG) or objective (LRTV); length iterations+1
  double wall_seconds = 0;
  std::string final_tsmi_path;
};

// Scaled DCF-weighted adjoint: x = s A^H(DCF y) with the least-squares scale
// s = <A x~, y>_DCF / ||A x~||^2_DCF.
Tsmi recon_svdmrf(const ForwardModel& model, const KSpaceData& y);

// Conjugate gradient on Gram(x) = A^H(DCF y), cold start at zero.
Tsmi recon_lr_cg(const ForwardModel& model, const KSpaceData& y, std::size_t n_iters,
                 double tol, SolverReport* report = nullptr);

// CG on (Gram + mu I) x = A^H(DCF y).
Tsmi recon_lr_tikh(const ForwardModel& model, const KSpaceData& y, double mu,
                   std::size_t n_iters, double tol, SolverReport* report = nullptr);

// FISTA on 1/2 ||sqrt(DCF)(Ax - y)||^2 + lambda_tv TV(x) with a Chambolle
// inner prox (10 iterations); step 1/L from 30 power iterations.
Tsmi recon_lrtv(const ForwardModel& model, const KSpaceData& y, double lambda_tv,
                std::size_t n_iters, SolverReport* report = nullptr, uint64_t seed = 1234);

// Largest eigenvalue of the (DCF-weighted) Gram operator by power iteration.
double estimate_gram_norm(const ForwardModel& model, int n_iters = 30, uint64_t seed = 1234);

}  // namespace mrf
