#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "mrf/dataset.hpp"
#include "mrf/solvers.hpp"
#include "mrf/stodip.hpp"

namespace mrf {

struct MetricsRow {
  double mape_t1 = 0, mape_t2 = 0;
  double psnr_t1 = 0, psnr_t2 = 0, psnr_pd = 0;
  double ssim_t1 = 0, ssim_t2 = 0, ssim_pd = 0;
};

// Table-1-style metrics of estimated vs reference maps over the mask.
// PD is normalized to its own masked max on both sides.
MetricsRow evaluate_qmaps(const QMaps& est, const QMaps& ref, const Mask& mask);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricsRow>>& rows);

struct PipelineOptions {
  std::filesystem::path out_dir;
  uint64_t seed = 1234;
  int epochs = 500;
  int fullgrad_epochs = 100;
  std::size_t r = 2;
  DeskGeometry geometry;
  double lambda_tv = 1e-3;       // desk-scale TV weight for stodip-tv
  std::string initializer = "lr-cg";
  SchedulerKind scheduler = SchedulerKind::Triangular;
  std::size_t cg_iters = 40;
  double cg_tol = 1e-6;
};

struct PipelineResult {
  std::vector<std::pair<std::string, MetricsRow>> report;  // 5 method rows
  std::map<std::string, double> laplacian;                 // per DIP method
  std::map<std::string, TrainHistory> histories;           // stodip runs
  std::filesystem::path report_csv;
};

// phantom -> dict -> simulate -> undersample(R) ->
// {svdmrf, lr-cg, lr-tikh, stodip, stodip-tv} -> eval, plus the full-gradient
// comparator run. Everything seeded; reruns are bit-identical.
PipelineResult pipeline_reproduce(const PipelineOptions& opts);

// Single-method reconstruction used by the recon subcommand.
struct ReconOptions {
  std::string method;  // svdmrf | lr-cg | lr-tikh | lrtv | stodip | stodip-tv
  std::size_t r = 1;
  std::size_t cg_iters = 40;
  double cg_tol = 1e-6;
  double tikh_mu = 0;  // 0 = 1e-2 x operator norm
  double lambda_tv = 1e-7;
  std::size_t lrtv_iters = 30;
  StodipConfig stodip;
  double sigma = 2.0;
  int width = 6;
  bool dcf_in_gram = true;
};

extern const std::vector<std::string> kReconMethods;

struct ReconResult {
  Tsmi x;
  std::optional<TrainHistory> history;
  SolverReport report;
};

ReconResult run_recon(const Dataset& ds, const ReconOptions& opts);

}  // namespace mrf
