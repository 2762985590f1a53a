#include "mrf/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "mrf/errors.hpp"
#include "mrf/io.hpp"
#include "mrf/solvers.hpp"

namespace mrf {

const std::vector<std::string> kReconMethods = {"svdmrf", "lr-cg", "lr-tikh",
                                                "lrtv",   "stodip", "stodip-tv"};

MetricsRow evaluate_qmaps(const QMaps& est, const QMaps& ref, const Mask& mask) {
  MetricsRow row;
  row.mape_t1 = mape(est.t1_ms, ref.t1_ms, mask);
  row.mape_t2 = mape(est.t2_ms, ref.t2_ms, mask);
  row.psnr_t1 = psnr(est.t1_ms, ref.t1_ms, mask);
  row.psnr_t2 = psnr(est.t2_ms, ref.t2_ms, mask);
  row.ssim_t1 = ssim(est.t1_ms, ref.t1_ms, mask);
  row.ssim_t2 = ssim(est.t2_ms, ref.t2_ms, mask);
  // normalized PD: each map scaled by its own masked max
  const auto normalize = [&](const TensorR& pd) {
    TensorR out = pd;
    double peak = 0;
    for (std::size_t i = 0; i < pd.numel(); ++i)
      if (mask[i]) peak = std::max(peak, pd[i]);
    if (peak > 0)
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= peak;
    return out;
  };
  const TensorR pe = normalize(est.pd), pr = normalize(ref.pd);
  row.psnr_pd = psnr(pe, pr, mask);
  row.ssim_pd = ssim(pe, pr, mask);
  return row;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricsRow>>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(17);
  f << "# psnr peak = masked max of reference; pd normalized to masked max per map\n";
  f << "method,mape_t1,mape_t2,psnr_t1,psnr_t2,psnr_pd,ssim_t1,ssim_t2,ssim_pd\n";
  for (const auto& [name, r] : rows)
    f << name << "," << r.mape_t1 << "," << r.mape_t2 << "," << r.psnr_t1 << "," << r.psnr_t2
      << "," << r.psnr_pd << "," << r.ssim_t1 << "," << r.ssim_t2 << "," << r.ssim_pd << "\n";
}

ReconResult run_recon(const Dataset& ds, const ReconOptions& opts) {
  if (std::find(kReconMethods.begin(), kReconMethods.end(), opts.method) == kReconMethods.end()) {
    std::string msg = "unknown method `" + opts.method + "` (choices:";
    for (const auto& m : kReconMethods) msg += " " + m;
    throw ConfigError(msg + ")");
  }
  ForwardModel model = make_model(ds, opts.r, opts.sigma, opts.width, opts.dcf_in_gram);
  KSpaceData y = opts.r == 1 ? ds.y : undersample_kspace(ds.y, opts.r);

  ReconResult res;
  if (opts.method == "svdmrf") {
    res.x = recon_svdmrf(model, y);
  } else if (opts.method == "lr-cg") {
    res.x = recon_lr_cg(model, y, opts.cg_iters, opts.cg_tol, &res.report);
  } else if (opts.method == "lr-tikh") {
    double mu = opts.tikh_mu;
    if (mu <= 0) mu = 1e-2 * estimate_gram_norm(model);
    res.x = recon_lr_tikh(model, y, mu, opts.cg_iters, opts.cg_tol, &res.report);
  } else if (opts.method == "lrtv") {
    res.x = recon_lrtv(model, y, opts.lambda_tv, opts.lrtv_iters, &res.report);
  } else {
    StodipConfig cfg = opts.stodip;
    if (opts.method == "stodip-tv") {
      if (cfg.lambda_tv <= 0) cfg.lambda_tv = 1e-7;
    } else {
      cfg.lambda_tv = 0;
    }
    StodipResult r = run_stodip(model, y, cfg, &ds.ref, &ds.dict, &ds.basis, &ds.mask);
    res.x = std::move(r.x);
    res.history = std::move(r.history);
  }
  return res;
}

PipelineResult pipeline_reproduce(const PipelineOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  DeskGeometry geo = opts.geometry;
  geo.seed = opts.seed;
  const auto data_dir = opts.out_dir / "dataset";
  Dataset ds = build_desk_dataset(data_dir, geo);

  ForwardModel model = make_model(ds, opts.r, geo.sigma, geo.width);
  KSpaceData y = opts.r == 1 ? ds.y : undersample_kspace(ds.y, opts.r);

  PipelineResult out;
  out.report_csv = opts.out_dir / "report.csv";

  StodipConfig scfg;
  scfg.max_epochs = opts.epochs;
  scfg.scheduler = opts.scheduler;
  scfg.initializer = opts.initializer;
  scfg.init_cg_iters = opts.cg_iters;
  scfg.init_cg_tol = opts.cg_tol;
  scfg.seed = opts.seed;
  scfg.monitor_every = 5;

  const auto eval_and_store = [&](const std::string& method, const Tsmi& x) {
    const auto mdir = opts.out_dir / ("recon_" + method);
    std::filesystem::create_directories(mdir);
    write_tensor(mdir / "tsmi.mrft", tsmi_to_file_layout(x));
    QMaps est = dict_match(x, ds.dict, ds.basis, &ds.mask);
    save_qmaps(mdir / "qmaps.mrft", est);
    out.report.emplace_back(method, evaluate_qmaps(est, ds.ref, ds.mask));
    out.laplacian[method] = mean_squared_laplacian(x);
  };

  {
    Tsmi x = recon_svdmrf(model, y);
    eval_and_store("svdmrf", x);
  }
  {
    Tsmi x = recon_lr_cg(model, y, opts.cg_iters, opts.cg_tol);
    eval_and_store("lr-cg", x);
  }
  {
    const double mu = 1e-2 * estimate_gram_norm(model);
    Tsmi x = recon_lr_tikh(model, y, mu, opts.cg_iters, opts.cg_tol);
    eval_and_store("lr-tikh", x);
  }
  {
    StodipConfig cfg = scfg;
    cfg.lambda_tv = 0;
    StodipResult r = run_stodip(model, y, cfg, &ds.ref, &ds.dict, &ds.basis, &ds.mask);
    eval_and_store("stodip", r.x);
    write_history_csvs(opts.out_dir, "stodip", r.history);
    out.histories["stodip"] = std::move(r.history);
  }
  {
    StodipConfig cfg = scfg;
    cfg.lambda_tv = opts.lambda_tv;
    StodipResult r = run_stodip(model, y, cfg, &ds.ref, &ds.dict, &ds.basis, &ds.mask);
    eval_and_store("stodip-tv", r.x);
    write_history_csvs(opts.out_dir, "stodip_tv", r.history);
    out.histories["stodip-tv"] = std::move(r.history);
  }
  {
    // full-gradient comparator at the same seed, architecture and scheduler
    StodipConfig cfg = scfg;
    cfg.lambda_tv = 0;
    cfg.max_epochs = std::min(opts.fullgrad_epochs, opts.epochs);
    StodipResult r = run_fullgrad_dip(model, y, cfg, &ds.ref, &ds.dict, &ds.basis, &ds.mask);
    write_history_csvs(opts.out_dir, "fullgrad", r.history);
    out.histories["fullgrad"] = std::move(r.history);
  }

  write_metrics_csv(out.report_csv, out.report);
  {
    std::ofstream f(opts.out_dir / "laplacian.csv");
    f.precision(17);
    f << "method,mean_squared_laplacian\n";
    for (const auto& [m, v] : out.laplacian) f << m << "," << v << "\n";
  }
  return out;
}

}  // namespace mrf
