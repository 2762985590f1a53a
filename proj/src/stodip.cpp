#include "mrf/stodip.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "mrf/errors.hpp"
#include "mrf/io.hpp"
#include "mrf/rng.hpp"
#include "mrf/solvers.hpp"

namespace mrf {

SchedulerKind scheduler_kind_from_string(const std::string& s) {
  if (s == "fixed") return SchedulerKind::Fixed;
  if (s == "triangular") return SchedulerKind::Triangular;
  if (s == "adaptive") return SchedulerKind::Adaptive;
  throw ConfigError("unknown scheduler `" + s + "` (choices: fixed, triangular, adaptive)");
}

std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Fixed: return "fixed";
    case SchedulerKind::Triangular: return "triangular";
    case SchedulerKind::Adaptive: return "adaptive";
  }
  return "?";
}

LrScheduler::LrScheduler(SchedulerKind kind, double lr_min, double lr_max, int cycle_epochs)
    : kind_(kind), lr_min_(lr_min), lr_max_(lr_max), cycle_(cycle_epochs) {
  if (!(lr_min > 0 && lr_min <= lr_max)) throw ConfigError("need 0 < lr_min <= lr_max");
  if (cycle_ < 1) throw ConfigError("cycle_epochs must be >= 1");
  delta_ = (lr_max_ - lr_min_) / static_cast<double>(cycle_);
  lr_ = kind_ == SchedulerKind::Fixed ? lr_max_ : lr_min_;
  if (kind_ == SchedulerKind::Triangular) lr_ = triangular_lr(0, lr_min_, lr_max_, cycle_);
}

double LrScheduler::triangular_lr(int epoch, double lr_min, double lr_max, int cycle_epochs) {
  const int period = 2 * cycle_epochs;
  const int phase = epoch % period;
  const double f = static_cast<double>(phase <= cycle_epochs ? phase : period - phase) /
                   static_cast<double>(cycle_epochs);
  return lr_min + (lr_max - lr_min) * f;
}

double LrScheduler::step(double epoch_loss) {
  ++epoch_;
  switch (kind_) {
    case SchedulerKind::Fixed:
      break;
    case SchedulerKind::Triangular:
      lr_ = triangular_lr(epoch_, lr_min_, lr_max_, cycle_);
      break;
    case SchedulerKind::Adaptive: {
      const bool improved = !has_best_ || epoch_loss < best_;
      if (improved) {
        best_ = epoch_loss;
        has_best_ = true;
        lr_ += delta_;
      } else {
        lr_ -= delta_;
      }
      lr_ = std::clamp(lr_, lr_min_, lr_max_);
      break;
    }
  }
  return lr_;
}

void StodipConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (lambda_tv < 0) throw ConfigError("lambda_tv must be >= 0");
  if (!(lr_min > 0 && lr_min <= lr_max)) throw ConfigError("need 0 < lr_min <= lr_max");
  if (monitor_every < 1) throw ConfigError("monitor_every must be >= 1");
  if (arch != "drunet" && arch != "dip-unet")
    throw ConfigError("unknown architecture `" + arch + "` (choices: drunet, dip-unet)");
}

NetTensor tsmi_to_net(const Tsmi& x) {
  std::vector<int64_t> dims{static_cast<int64_t>(2 * x.k)};
  for (auto g : x.grid) dims.push_back(static_cast<int64_t>(g));
  NetTensor t(dims);
  const std::size_t n = x.grid_numel();
  for (std::size_t j = 0; j < x.k; ++j) {
    const cplx* src = x.channel(j);
    double* re = t.v.data() + (2 * j) * n;
    double* im = t.v.data() + (2 * j + 1) * n;
    for (std::size_t v = 0; v < n; ++v) {
      re[v] = src[v].real();
      im[v] = src[v].imag();
    }
  }
  return t;
}

Tsmi net_to_tsmi(const NetTensor& t, const std::vector<std::size_t>& grid) {
  if (t.dims[0] % 2 != 0) throw ConfigError("net tensor needs an even channel count");
  Tsmi x(grid, static_cast<std::size_t>(t.dims[0] / 2));
  const std::size_t n = x.grid_numel();
  for (std::size_t j = 0; j < x.k; ++j) {
    const double* re = t.v.data() + (2 * j) * n;
    const double* im = t.v.data() + (2 * j + 1) * n;
    cplx* dst = x.channel(j);
    for (std::size_t v = 0; v < n; ++v) dst[v] = cplx(re[v], im[v]);
  }
  return x;
}

InitResult make_initializer(const ForwardModel& model, const KSpaceData& y,
                            const std::string& kind, std::size_t cg_iters, double cg_tol,
                            double tikh_mu) {
  Tsmi x;
  if (kind == "svdmrf") {
    x = recon_svdmrf(model, y);
  } else if (kind == "lr-cg") {
    x = recon_lr_cg(model, y, cg_iters, cg_tol);
  } else if (kind == "lr-tikh") {
    double mu = tikh_mu;
    if (mu <= 0) mu = 1e-2 * estimate_gram_norm(model);
    x = recon_lr_tikh(model, y, mu, cg_iters, cg_tol);
  } else {
    throw ConfigError("unsupported initializer `" + kind +
                      "` (choices: svdmrf, lr-cg, lr-tikh)");
  }
  double peak = 0;
  for (std::size_t i = 0; i < x.data.numel(); ++i) peak = std::max(peak, std::abs(x.data[i]));
  if (!(peak > 0)) throw NumericalError("initializer produced an all-zero estimate");
  for (std::size_t i = 0; i < x.data.numel(); ++i) x.data[i] /= peak;
  return InitResult{std::move(x), peak};
}

namespace {

Network build_generator(const StodipConfig& cfg, const std::vector<int64_t>& dims) {
  if (cfg.arch == "drunet") return build_drunet(cfg.channels, cfg.n_res, cfg.bias, dims);
  const std::string up = dims.size() == 4 ? "trilinear" : "bilinear";
  return build_dipunet(cfg.channels, up, dims);
}

// residual into rbuf and the sqrt(DCF)-weighted squared loss
double coil_residual(const ForwardModel& model, std::size_t c, const Tsmi& xhat,
                     const KSpaceData& y, std::vector<cplx>& ybuf) {
  model.apply_coil_forward(c, xhat, ybuf.data());
  const cplx* yc = y.coil(c);
  const auto& w = model.dcf();
  const std::size_t pf = model.samples_per_frame();
  double loss = 0;
  for (std::size_t i = 0; i < ybuf.size(); ++i) {
    ybuf[i] -= yc[i];
    loss += w[i % pf] * std::norm(ybuf[i]);
  }
  return loss;
}

void add_complex_as_channels(const Tsmi& g, double factor, NetTensor& out_grad) {
  const std::size_t n = g.grid_numel();
  for (std::size_t j = 0; j < g.k; ++j) {
    const cplx* src = g.channel(j);
    double* re = out_grad.v.data() + (2 * j) * n;
    double* im = out_grad.v.data() + (2 * j + 1) * n;
    for (std::size_t v = 0; v < n; ++v) {
      re[v] += factor * src[v].real();
      im[v] += factor * src[v].imag();
    }
  }
}

struct TrainContext {
  const ForwardModel& model;
  const StodipConfig& cfg;
  const QMaps* reference;
  const Dictionary* dict;
  const SubspaceBasis* basis;
  const Mask* mask;

  Network net;
  AdamState adam;
  NetTensor x0_net;
  KSpaceData ys;  // scaled measurements
  double scale = 1;
  TrainHistory history;

  TrainContext(const ForwardModel& model_, const KSpaceData& y, const StodipConfig& cfg_,
               const QMaps* ref, const Dictionary* dict_, const SubspaceBasis* basis_,
               const Mask* mask_)
      : model(model_), cfg(cfg_), reference(ref), dict(dict_), basis(basis_), mask(mask_) {
    cfg.validate();
    InitResult init =
        make_initializer(model, y, cfg.initializer, cfg.init_cg_iters, cfg.init_cg_tol,
                         cfg.init_tikh_mu);
    scale = init.scale;
    ys = y;
    for (std::size_t i = 0; i < ys.data.numel(); ++i) ys.data[i] /= scale;
    x0_net = tsmi_to_net(init.x0);
    net = build_generator(cfg, x0_net.dims);
    net.init_params(cfg.seed);
  }

  void monitor_if_due(int epoch, const Tsmi& xhat_scaled) {
    if (!reference || !dict || !basis) return;
    if (epoch % cfg.monitor_every != 0) return;
    // matching is amplitude-invariant, so the joint scale does not matter
    try {
      QMaps est = dict_match(xhat_scaled, *dict, *basis, mask);
      const Mask& m = mask ? *mask : reference->mask;
      history.monitor.push_back(
          {epoch, mape(est.t1_ms, reference->t1_ms, m), mape(est.t2_ms, reference->t2_ms, m)});
    } catch (const std::exception&) {
      // monitoring is best effort, never fatal
    }
  }

  void checkpoint_if_due(int epoch) {
    if (cfg.checkpoint_dir.empty() || cfg.checkpoint_every < 1) return;
    if (epoch % cfg.checkpoint_every != 0) return;
    std::filesystem::create_directories(cfg.checkpoint_dir);
    auto flat = net.serialize_params();
    TensorR t({flat.size()}, std::move(flat));
    write_tensor(cfg.checkpoint_dir / ("params_epoch" + std::to_string(epoch) + ".mrft"), t);
  }

  StodipResult finish() {
    const NetTensor& out = net.forward(x0_net);
    Tsmi x = net_to_tsmi(out, model.grid());
    for (std::size_t i = 0; i < x.data.numel(); ++i) x.data[i] *= scale;
    StodipResult res;
    res.x = std::move(x);
    res.history = std::move(history);
    res.scale = scale;
    res.descriptor = net.descriptor();
    return res;
  }
};

}  // namespace

StodipResult run_stodip(const ForwardModel& model, const KSpaceData& y, const StodipConfig& cfg,
                        const QMaps* reference, const Dictionary* dict,
                        const SubspaceBasis* basis, const Mask* mask) {
  TrainContext ctx(model, y, cfg, reference, dict, basis, mask);
  Rng perm_rng(cfg.seed ^ 0xc001d00dULL);
  LrScheduler sched(cfg.scheduler, cfg.lr_min, cfg.lr_max, cfg.cycle_epochs);
  const std::size_t c_total = model.n_coils();
  const std::size_t n = model.grid_numel();

  std::vector<cplx> ybuf(model.coil_samples());
  Tsmi gbuf = model.zero_tsmi();
  NetTensor out_grad(ctx.x0_net.dims);
  std::vector<double> tv_grad;

  ctx.history.lr_trace.push_back(sched.lr());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto perm = perm_rng.permutation(static_cast<uint32_t>(c_total));
    double epoch_sum = 0;
    for (uint32_t c : perm) {
      const NetTensor& out = ctx.net.forward(ctx.x0_net);
      Tsmi xhat = net_to_tsmi(out, model.grid());
      double loss = coil_residual(model, c, xhat, ctx.ys, ybuf);
      model.apply_coil_adjoint(c, ybuf.data(), /*weighted=*/true, gbuf);
      std::fill(out_grad.v.begin(), out_grad.v.end(), 0.0);
      add_complex_as_channels(gbuf, 2.0, out_grad);
      if (cfg.lambda_tv > 0) {
        tv_grad.assign(out.v.size(), 0.0);
        const double tv = tv_penalty(out.v.data(), out.dims, cfg.tv_eps, tv_grad.data());
        loss += cfg.lambda_tv * tv;
        for (std::size_t i = 0; i < out_grad.v.size(); ++i)
          out_grad.v[i] += cfg.lambda_tv * tv_grad[i];
      }
      if (!std::isfinite(loss))
        throw NumericalError("stodip: non-finite loss at epoch " + std::to_string(epoch) +
                             " coil " + std::to_string(c));
      ctx.net.backward(out_grad);
      adam_step(ctx.adam, ctx.net.params(), sched.lr());
      ++ctx.history.adam_steps;
      ctx.history.steps.push_back({epoch, static_cast<int>(c), loss});
      epoch_sum += loss;
    }
    const double epoch_loss = epoch_sum / static_cast<double>(c_total);
    ctx.history.epoch_loss.push_back(epoch_loss);
    sched.step(epoch_loss);
    ++ctx.history.scheduler_steps;
    ctx.history.lr_trace.push_back(sched.lr());
    if (epoch % cfg.monitor_every == 0 && reference && dict && basis) {
      const NetTensor& out = ctx.net.forward(ctx.x0_net);
      Tsmi xhat = net_to_tsmi(out, model.grid());
      ctx.monitor_if_due(epoch, xhat);
    }
    ctx.checkpoint_if_due(epoch);
  }
  (void)n;
  return ctx.finish();
}

StodipResult run_fullgrad_dip(const ForwardModel& model, const KSpaceData& y,
                              const StodipConfig& cfg, const QMaps* reference,
                              const Dictionary* dict, const SubspaceBasis* basis,
                              const Mask* mask) {
  TrainContext ctx(model, y, cfg, reference, dict, basis, mask);
  Rng perm_rng(cfg.seed ^ 0xc001d00dULL);
  LrScheduler sched(cfg.scheduler, cfg.lr_min, cfg.lr_max, cfg.cycle_epochs);
  const std::size_t c_total = model.n_coils();

  std::vector<cplx> ybuf(model.coil_samples());
  Tsmi gbuf = model.zero_tsmi();
  Tsmi gsum = model.zero_tsmi();
  NetTensor out_grad(ctx.x0_net.dims);
  std::vector<double> tv_grad;

  ctx.history.lr_trace.push_back(sched.lr());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto perm = perm_rng.permutation(static_cast<uint32_t>(c_total));
    const NetTensor& out = ctx.net.forward(ctx.x0_net);
    Tsmi xhat = net_to_tsmi(out, model.grid());
    double tv = 0;
    if (cfg.lambda_tv > 0) {
      tv_grad.assign(out.v.size(), 0.0);
      tv = tv_penalty(out.v.data(), out.dims, cfg.tv_eps, tv_grad.data());
    }
    std::fill(gsum.data.data(), gsum.data.data() + gsum.data.numel(), cplx(0, 0));
    double epoch_sum = 0;
    for (uint32_t c : perm) {
      double loss = coil_residual(model, c, xhat, ctx.ys, ybuf);
      model.apply_coil_adjoint(c, ybuf.data(), /*weighted=*/true, gbuf);
      for (std::size_t i = 0; i < gsum.data.numel(); ++i) gsum.data[i] += gbuf.data[i];
      loss += cfg.lambda_tv * tv;
      if (!std::isfinite(loss))
        throw NumericalError("fullgrad-dip: non-finite loss at epoch " + std::to_string(epoch) +
                             " coil " + std::to_string(c));
      ctx.history.steps.push_back({epoch, static_cast<int>(c), loss});
      epoch_sum += loss;
    }
    std::fill(out_grad.v.begin(), out_grad.v.end(), 0.0);
    add_complex_as_channels(gsum, 2.0, out_grad);
    if (cfg.lambda_tv > 0)
      for (std::size_t i = 0; i < out_grad.v.size(); ++i)
        out_grad.v[i] += static_cast<double>(c_total) * cfg.lambda_tv * tv_grad[i];
    ctx.net.backward(out_grad);
    adam_step(ctx.adam, ctx.net.params(), sched.lr());
    ++ctx.history.adam_steps;
    const double epoch_loss = epoch_sum / static_cast<double>(c_total);
    ctx.history.epoch_loss.push_back(epoch_loss);
    sched.step(epoch_loss);
    ++ctx.history.scheduler_steps;
    ctx.history.lr_trace.push_back(sched.lr());
    if (epoch % cfg.monitor_every == 0 && reference && dict && basis) {
      const NetTensor& out2 = ctx.net.forward(ctx.x0_net);
      Tsmi xh2 = net_to_tsmi(out2, model.grid());
      ctx.monitor_if_due(epoch, xh2);
    }
    ctx.checkpoint_if_due(epoch);
  }
  return ctx.finish();
}

void write_history_csvs(const std::filesystem::path& dir, const std::string& prefix,
                        const TrainHistory& h) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / (prefix + "_steps.csv"));
    f.precision(17);
    f << "step,epoch,coil,loss\n";
    for (std::size_t i = 0; i < h.steps.size(); ++i)
      f << i << "," << h.steps[i].epoch << "," << h.steps[i].coil << "," << h.steps[i].loss
        << "\n";
  }
  {
    std::ofstream f(dir / (prefix + "_epochs.csv"));
    f.precision(17);
    f << "epoch,volume_loss,lr\n";
    for (std::size_t e = 0; e < h.epoch_loss.size(); ++e)
      f << (e + 1) << "," << h.epoch_loss[e] << "," << h.lr_trace[e] << "\n";
  }
  {
    std::ofstream f(dir / (prefix + "_monitor.csv"));
    f.precision(17);
    f << "epoch,t1_mape,t2_mape\n";
    for (const auto& m : h.monitor)
      f << m.epoch << "," << m.t1_mape << "," << m.t2_mape << "\n";
  }
}

}  // namespace mrf
