#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrf/epg.hpp"
#include "mrf/forward_model.hpp"
#include "mrf/net.hpp"
#include "mrf/quant.hpp"
#include "mrf/subspace.hpp"

namespace mrf {

enum class SchedulerKind { Fixed, Triangular, Adaptive };

SchedulerKind scheduler_kind_from_string(const std::string& s);
std::string to_string(SchedulerKind k);

// Learning-rate schedule state. Triangular: piecewise-linear cycle
// lr_min -> lr_max -> lr_min over 2 * cycle_epochs. Adaptive: lr moves up by
// (lr_max - lr_min) / cycle_epochs on volume-loss improvement, down
// otherwise, clamped to [lr_min, lr_max].
class LrScheduler {
 public:
  LrScheduler(SchedulerKind kind, double lr_min, double lr_max, int cycle_epochs);
  double lr() const { return lr_; }
  int epochs_stepped() const { return epoch_; }
  // advance one epoch given that epoch's mean coil loss; returns the lr for
  // the next epoch
  double step(double epoch_loss);

  static double triangular_lr(int epoch, double lr_min, double lr_max, int cycle_epochs);

 private:
  SchedulerKind kind_;
  double lr_min_, lr_max_, delta_;
  int cycle_;
  int epoch_ = 0;
  double lr_;
  double best_ = 0;
  bool has_best_ = false;
};

struct StodipConfig {
  int max_epochs = 500;
  double lambda_tv = 0.0;  // 1e-7 for the stodip-tv method default
  double tv_eps = 1e-8;
  SchedulerKind scheduler = SchedulerKind::Triangular;
  double lr_min = 0.001, lr_max = 0.01;
  int cycle_epochs = 250;
  std::string initializer = "lr-cg";  // svdmrf | lr-cg | lr-tikh
  std::size_t init_cg_iters = 30;
  double init_cg_tol = 1e-6;
  double init_tikh_mu = 0;  // 0 = 1e-2 x estimated operator norm
  uint64_t seed = 0;
  int monitor_every = 5;
  std::string arch = "drunet";  // drunet | dip-unet
  std::vector<int> channels = {16, 32, 64, 128};
  int n_res = 2;
  bool bias = true;
  int checkpoint_every = 50;
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints

  void validate() const;
};

struct TrainHistory {
  struct CoilStep {
    int epoch;  // 1-based
    int coil;
    double loss;
  };
  struct MonitorEntry {
    int epoch;
    double t1_mape, t2_mape;
  };
  std::vector<CoilStep> steps;       // one row per coil loss evaluation
  std::vector<double> epoch_loss;    // volume loss: mean of the epoch's coil losses
  std::vector<double> lr_trace;      // lr in effect per epoch, length max_epochs + 1
  std::vector<MonitorEntry> monitor;
  int scheduler_steps = 0;
  int adam_steps = 0;
};

void write_history_csvs(const std::filesystem::path& dir, const std::string& prefix,
                        const TrainHistory& h);

struct StodipResult {
  Tsmi x;  // generator output rescaled back to data units
  TrainHistory history;
  double scale = 1.0;  // recorded joint (x0, y) scale
  std::string descriptor;
};

struct InitResult {
  Tsmi x0;       // max channel magnitude scaled to exactly 1
  double scale;  // the recorded scale: x0_raw = scale * x0
};

// Educated x(0) via the configured solver, jointly scaled with y.
InitResult make_initializer(const ForwardModel& model, const KSpaceData& y,
                            const std::string& kind, std::size_t cg_iters = 30,
                            double cg_tol = 1e-6, double tikh_mu = 0);

// reference/dict/basis/mask enable T1/T2 MAPE monitoring every
// cfg.monitor_every epochs; any of them may be null to disable it.
StodipResult run_stodip(const ForwardModel& model, const KSpaceData& y, const StodipConfig& cfg,
                        const QMaps* reference = nullptr, const Dictionary* dict = nullptr,
                        const SubspaceBasis* basis = nullptr, const Mask* mask = nullptr);

// Full-gradient variant: per-coil gradients accumulated, one Adam step per
// epoch.
StodipResult run_fullgrad_dip(const ForwardModel& model, const KSpaceData& y,
                              const StodipConfig& cfg, const QMaps* reference = nullptr,
                              const Dictionary* dict = nullptr,
                              const SubspaceBasis* basis = nullptr, const Mask* mask = nullptr);

// real-channel formatting: net channel 2j holds Re(x_j), 2j+1 holds Im(x_j)
NetTensor tsmi_to_net(const Tsmi& x);
Tsmi net_to_tsmi(const NetTensor& t, const std::vector<std::size_t>& grid);

}  // namespace mrf
