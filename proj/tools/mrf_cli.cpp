// mrf: MRF reconstruction toolkit command line.
// Subcommands: phantom, dict, simulate, recon, match, eval, bench-nufft,
// reproduce. Exit codes: 0 success, 2 configuration error, 3 numerical or
// I/O failure.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include "mrf/acquisim.hpp"
#include "mrf/dataset.hpp"
#include "mrf/errors.hpp"
#include "mrf/io.hpp"
#include "mrf/pipeline.hpp"
#include "mrf/rng.hpp"
#include "mrf/solvers.hpp"
#include "mrf/stodip.hpp"

namespace {

using namespace mrf;

void write_resolved_config(const std::filesystem::path& out_dir,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "resolved-config.txt");
  for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// brute-force type-2 DFT used only for the benchmark error column
std::vector<cplx> bench_direct_dft(const TensorC& img, const TensorR& pts) {
  const auto& gd = img.dims();
  std::vector<cplx> out(pts.dim(0));
  for (std::size_t p = 0; p < pts.dim(0); ++p) {
    cplx acc(0, 0);
    for (std::size_t i = 0; i < gd[0]; ++i)
      for (std::size_t j = 0; j < gd[1]; ++j) {
        const double phase = -2.0 * std::numbers::pi *
                             (pts(p, 0) * (static_cast<double>(i) - gd[0] / 2.0) +
                              pts(p, 1) * (static_cast<double>(j) - gd[1] / 2.0));
        acc += img(i, j) * cplx(std::cos(phase), std::sin(phase));
      }
    out[p] = acc;
  }
  return out;
}

int cmd_phantom(const std::filesystem::path& out, std::vector<std::size_t> grid, uint64_t seed) {
  PhantomSpec spec = default_brain_phantom(grid, seed);
  QMaps q = make_phantom(spec);
  Mask mask = make_mask(q.pd);
  std::filesystem::create_directories(out);
  save_qmaps(out / "qmaps.mrft", q);
  save_mask(out / "mask.mrft", mask, grid);
  std::ostringstream g;
  for (auto d : grid) g << d << " ";
  write_resolved_config(out, {{"subcommand", "phantom"}, {"grid", g.str()},
                              {"seed", std::to_string(seed)}});
  std::cout << "phantom written to " << out.string() << "\n";
  return 0;
}

int cmd_dict(const std::filesystem::path& out, std::size_t t_frames, std::size_t k, double tr,
             double te, double ti, double peak_flip, const std::string& flip_table) {
  SequenceParams seq;
  seq.flip_angles_deg =
      flip_table.empty() ? default_flip_train(t_frames, peak_flip) : load_flip_table(flip_table);
  seq.tr_ms = tr;
  seq.te_ms = te;
  seq.ti_ms = ti;
  std::filesystem::create_directories(out);
  save_flip_table(out / "flips.txt", seq.flip_angles_deg);
  Dictionary dict = build_dictionary(desk_t1_grid(), desk_t2_grid(), seq, false);
  save_dictionary(out / "dictionary.mrft", out / "dict_grids.txt", dict);
  SubspaceBasis basis = compute_basis(dict, k);
  save_basis(out / "basis.mrft", basis);
  write_resolved_config(out, {{"subcommand", "dict"},
                              {"T", std::to_string(seq.n_frames())},
                              {"K", std::to_string(k)},
                              {"tr_ms", fmt(tr)},
                              {"te_ms", fmt(te)},
                              {"ti_ms", fmt(ti)},
                              {"peak_flip_deg", fmt(peak_flip)},
                              {"atoms", std::to_string(dict.n_atoms())},
                              {"energy_captured", fmt(basis.energy_captured)}});
  std::cout << "dictionary (" << dict.n_atoms() << " atoms) and basis written to "
            << out.string() << "\n";
  return 0;
}

int cmd_simulate(const std::filesystem::path& out, const DeskGeometry& geo) {
  Dataset ds = build_desk_dataset(out, geo);
  std::vector<std::pair<std::string, std::string>> kv{
      {"subcommand", "simulate"},
      {"C", std::to_string(geo.c)},
      {"M", std::to_string(geo.m)},
      {"L", std::to_string(ds.mf.l)},
      {"T", std::to_string(geo.t)},
      {"K", std::to_string(geo.k)},
      {"seed", std::to_string(geo.seed)},
      {"turns", fmt(geo.turns)},
      {"sigma", fmt(geo.sigma)},
      {"width", std::to_string(geo.width)},
      {"honest_crime", geo.honest_crime ? "1" : "0"}};
  if (geo.noise_snr_db) kv.emplace_back("noise_snr_db", fmt(*geo.noise_snr_db));
  write_resolved_config(out, kv);
  std::cout << "dataset written to " << out.string() << "\n";
  return 0;
}

int cmd_recon(const std::filesystem::path& manifest, const std::filesystem::path& out,
              const ReconOptions& opts) {
  Dataset ds = load_dataset(manifest);
  std::filesystem::create_directories(out);
  ReconOptions ropts = opts;
  ropts.stodip.checkpoint_dir = out / "checkpoints";
  ReconResult res = run_recon(ds, ropts);
  write_tensor(out / "tsmi.mrft", tsmi_to_file_layout(res.x));
  if (res.history) {
    write_history_csvs(out, "history", *res.history);
  } else if (!res.report.history.empty()) {
    std::ofstream f(out / "history.csv");
    f.precision(17);
    f << "iteration,value\n";
    for (std::size_t i = 0; i < res.report.history.size(); ++i)
      f << i << "," << res.report.history[i] << "\n";
  }
  write_resolved_config(
      out, {{"subcommand", "recon"},
            {"manifest", manifest.string()},
            {"method", opts.method},
            {"R", std::to_string(opts.r)},
            {"cg_iters", std::to_string(opts.cg_iters)},
            {"cg_tol", fmt(opts.cg_tol)},
            {"tikh_mu", fmt(opts.tikh_mu)},
            {"lambda_tv", fmt(opts.lambda_tv)},
            {"stodip_lambda_tv", fmt(opts.stodip.lambda_tv)},
            {"epochs", std::to_string(opts.stodip.max_epochs)},
            {"scheduler", to_string(opts.stodip.scheduler)},
            {"lr_min", fmt(opts.stodip.lr_min)},
            {"lr_max", fmt(opts.stodip.lr_max)},
            {"initializer", opts.stodip.initializer},
            {"arch", opts.stodip.arch},
            {"seed", std::to_string(opts.stodip.seed)},
            {"sigma", fmt(opts.sigma)},
            {"width", std::to_string(opts.width)},
            {"dcf_in_gram", opts.dcf_in_gram ? "1" : "0"}});
  std::cout << "tsmi written to " << (out / "tsmi.mrft").string() << "\n";
  return 0;
}

int cmd_match(const std::filesystem::path& manifest, const std::filesystem::path& tsmi,
              const std::filesystem::path& out) {
  Dataset ds = load_dataset(manifest);
  Tsmi x = tsmi_from_file_layout(read_tensor_cplx(tsmi));
  QMaps q = dict_match(x, ds.dict, ds.basis, &ds.mask);
  std::filesystem::create_directories(out);
  save_qmaps(out / "qmaps.mrft", q);
  write_resolved_config(out, {{"subcommand", "match"},
                              {"manifest", manifest.string()},
                              {"tsmi", tsmi.string()}});
  std::cout << "qmaps written to " << (out / "qmaps.mrft").string() << "\n";
  return 0;
}

int cmd_eval(const std::filesystem::path& est, const std::filesystem::path& ref,
             const std::filesystem::path& mask_path, const std::filesystem::path& out) {
  QMaps qe = load_qmaps(est);
  QMaps qr = load_qmaps(ref);
  Mask mask = mask_path.empty() ? make_mask(qr.pd) : load_mask(mask_path);
  MetricsRow row = evaluate_qmaps(qe, qr, mask);
  std::filesystem::create_directories(out);
  write_metrics_csv(out / "metrics.csv", {{"est", row}});
  write_resolved_config(out, {{"subcommand", "eval"},
                              {"est", est.string()},
                              {"ref", ref.string()},
                              {"mask", mask_path.string()}});
  std::cout << "MAPE T1 " << row.mape_t1 << "% | MAPE T2 " << row.mape_t2 << "% | PSNR T1 "
            << row.psnr_t1 << " dB | SSIM T1 " << row.ssim_t1 << "\n";
  std::cout << "metrics written to " << (out / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_bench_nufft(const std::filesystem::path& out, std::vector<std::size_t> grid,
                    std::size_t n_points, double sigma, int width, int reps, uint64_t seed) {
  Trajectory traj;
  traj.points = TensorR({n_points, grid.size()});
  Rng rng(seed);
  for (std::size_t i = 0; i < traj.points.numel(); ++i)
    traj.points[i] = rng.uniform(-0.5, 0.5);
  traj.arm_index.assign(n_points, 0);
  traj.frame_index.assign(n_points, 0);
  NufftPlan plan(traj, grid, sigma, width);
  TensorC img(grid);
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = cplx(rng.normal(), rng.normal());
  std::vector<cplx> samples(n_points);
  TensorC back(grid);

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) plan.forward(img.data(), samples.data());
  const auto t1 = Clock::now();
  for (int r = 0; r < reps; ++r) plan.adjoint(samples.data(), back.data());
  const auto t2 = Clock::now();
  const double fwd_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
  const double adj_ms = std::chrono::duration<double, std::milli>(t2 - t1).count() / reps;

  double rel = -1;
  if (grid.size() == 2 && img.numel() * n_points <= 40'000'000) {
    auto ref = bench_direct_dft(img, traj.points);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n_points; ++i) {
      num += std::norm(samples[i] - ref[i]);
      den += std::norm(ref[i]);
    }
    rel = std::sqrt(num / den);
  }

  std::filesystem::create_directories(out);
  std::ofstream f(out / "bench-nufft.csv");
  f.precision(10);
  f << "P,grid,sigma,w,forward_ms,adjoint_ms,rel_err_vs_dft\n";
  f << n_points << ",";
  for (std::size_t i = 0; i < grid.size(); ++i) f << (i ? "x" : "") << grid[i];
  f << "," << sigma << "," << width << "," << fwd_ms << "," << adj_ms << ",";
  if (rel >= 0) f << rel;
  else f << "n/a";
  f << "\n";
  std::cout << "forward " << fwd_ms << " ms, adjoint " << adj_ms << " ms";
  if (rel >= 0) std::cout << ", rel_err_vs_dft " << rel;
  std::cout << "\n";
  return 0;
}

int cmd_reproduce(const PipelineOptions& opts) {
  PipelineResult res = pipeline_reproduce(opts);
  write_resolved_config(opts.out_dir,
                        {{"subcommand", "reproduce"},
                         {"seed", std::to_string(opts.seed)},
                         {"epochs", std::to_string(opts.epochs)},
                         {"fullgrad_epochs", std::to_string(opts.fullgrad_epochs)},
                         {"R", std::to_string(opts.r)},
                         {"lambda_tv", fmt(opts.lambda_tv)},
                         {"initializer", opts.initializer},
                         {"scheduler", to_string(opts.scheduler)}});
  std::cout << "report written to " << res.report_csv.string() << "\n";
  for (const auto& [name, row] : res.report)
    std::cout << "  " << name << ": T1 MAPE " << row.mape_t1 << "%, T2 MAPE " << row.mape_t2
              << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrf: ground-truth-free MRF reconstruction toolkit"};
  app.require_subcommand(1);

  // ---- phantom
  auto* sp_phantom = app.add_subcommand("phantom", "write a synthetic tissue phantom");
  std::vector<std::size_t> grid{64, 64};
  uint64_t seed = 1234;
  std::filesystem::path out = "out";
  sp_phantom->add_option("--grid", grid, "grid dims (2 or 3 values)");
  sp_phantom->add_option("--seed", seed, "rng seed");
  sp_phantom->add_option("--out", out, "output directory")->required();

  // ---- dict
  auto* sp_dict = app.add_subcommand("dict", "simulate the fingerprint dictionary and basis");
  std::size_t t_frames = 200, k_coeffs = 5;
  double tr = 10.5, te = 2.0, ti = 18.0, peak_flip = 70.0;
  std::string flip_table;
  sp_dict->add_option("--t", t_frames, "number of timeframes");
  sp_dict->add_option("--k", k_coeffs, "subspace rank K");
  sp_dict->add_option("--tr", tr, "repetition time, ms");
  sp_dict->add_option("--te", te, "echo time, ms");
  sp_dict->add_option("--ti", ti, "inversion delay, ms");
  sp_dict->add_option("--peak-flip", peak_flip, "flip train peak, degrees");
  sp_dict->add_option("--flip-table", flip_table, "text file overriding the flip train");
  sp_dict->add_option("--out", out, "output directory")->required();

  // ---- simulate
  auto* sp_sim = app.add_subcommand("simulate", "synthesize a complete dataset directory");
  DeskGeometry geo;
  double noise_snr = -1;
  sp_sim->add_option("--grid", geo.grid, "grid dims");
  sp_sim->add_option("--c", geo.c, "coil count");
  sp_sim->add_option("--m", geo.m, "samples per arm");
  sp_sim->add_option("--l", geo.l, "arms per frame (per plane in 3D)");
  sp_sim->add_option("--t", geo.t, "timeframes");
  sp_sim->add_option("--k", geo.k, "subspace rank");
  sp_sim->add_option("--turns", geo.turns, "spiral turns");
  sp_sim->add_option("--sigma", geo.sigma, "nufft oversampling");
  sp_sim->add_option("--width", geo.width, "nufft kernel width");
  sp_sim->add_option("--seed", geo.seed, "rng seed");
  sp_sim->add_option("--noise-snr-db", noise_snr, "add complex noise at this SNR (dB)");
  sp_sim->add_flag("--honest-crime", geo.honest_crime, "synthesize on a 2x finer grid");
  sp_sim->add_option("--out", out, "output directory")->required();

  // ---- recon
  auto* sp_recon = app.add_subcommand("recon", "reconstruct a TSMI from a dataset");
  std::filesystem::path manifest;
  ReconOptions ropts;
  ropts.method = "";
  std::string scheduler = "triangular";
  bool no_dcf_in_gram = false;
  sp_recon->add_option("--manifest", manifest, "dataset manifest path or directory")->required();
  sp_recon->add_option("--method", ropts.method, "svdmrf|lr-cg|lr-tikh|lrtv|stodip|stodip-tv")
      ->required();
  sp_recon->add_option("--out", out, "output directory")->required();
  sp_recon->add_option("-R,--accel", ropts.r, "retrospective acceleration factor");
  sp_recon->add_option("--cg-iters", ropts.cg_iters, "CG iteration budget");
  sp_recon->add_option("--cg-tol", ropts.cg_tol, "CG relative tolerance");
  sp_recon->add_option("--tikh-mu", ropts.tikh_mu, "Tikhonov mu (0 = 1e-2 x operator norm)");
  sp_recon->add_option("--lambda", ropts.lambda_tv, "TV weight (lrtv)");
  sp_recon->add_option("--lrtv-iters", ropts.lrtv_iters, "FISTA iterations for lrtv");
  sp_recon->add_option("--epochs", ropts.stodip.max_epochs, "stodip training epochs");
  sp_recon->add_option("--stodip-lambda", ropts.stodip.lambda_tv,
                       "TV weight for stodip-tv (default 1e-7)");
  sp_recon->add_option("--scheduler", scheduler, "fixed|triangular|adaptive");
  sp_recon->add_option("--lr-min", ropts.stodip.lr_min, "scheduler lower lr bound");
  sp_recon->add_option("--lr-max", ropts.stodip.lr_max, "scheduler upper lr bound");
  sp_recon->add_option("--initializer", ropts.stodip.initializer, "svdmrf|lr-cg|lr-tikh");
  sp_recon->add_option("--arch", ropts.stodip.arch, "drunet|dip-unet");
  sp_recon->add_option("--channels", ropts.stodip.channels, "feature channels per scale");
  sp_recon->add_option("--n-res", ropts.stodip.n_res, "residual units per scale");
  sp_recon->add_option("--monitor-every", ropts.stodip.monitor_every,
                       "epochs between Q-map checks");
  sp_recon->add_option("--seed", ropts.stodip.seed, "rng seed");
  sp_recon->add_option("--sigma", ropts.sigma, "nufft oversampling");
  sp_recon->add_option("--width", ropts.width, "nufft kernel width");
  sp_recon->add_flag("--no-dcf-in-gram", no_dcf_in_gram,
                     "drop the DCF weighting from the normal equations");

  // ---- match
  auto* sp_match = app.add_subcommand("match", "dictionary-match a TSMI to Q-maps");
  std::filesystem::path tsmi_path;
  sp_match->add_option("--manifest", manifest, "dataset manifest path or directory")->required();
  sp_match->add_option("--tsmi", tsmi_path, "tsmi tensor file")->required();
  sp_match->add_option("--out", out, "output directory")->required();

  // ---- eval
  auto* sp_eval = app.add_subcommand("eval", "compute MAPE/PSNR/SSIM against reference maps");
  std::filesystem::path est_path, ref_path, mask_path;
  sp_eval->add_option("--est", est_path, "estimated qmaps tensor")->required();
  sp_eval->add_option("--ref", ref_path, "reference qmaps tensor")->required();
  sp_eval->add_option("--mask", mask_path, "mask tensor (default: threshold of reference pd)");
  sp_eval->add_option("--out", out, "output directory")->required();

  // ---- bench-nufft
  auto* sp_bench = app.add_subcommand("bench-nufft", "time the gridding kernel");
  std::size_t bench_points = 2000;
  int reps = 20, bench_width = 6;
  double bench_sigma = 2.0;
  std::vector<std::size_t> bench_grid{64, 64};
  sp_bench->add_option("--grid", bench_grid, "grid dims");
  sp_bench->add_option("--points", bench_points, "number of samples");
  sp_bench->add_option("--sigma", bench_sigma, "oversampling factor");
  sp_bench->add_option("--width", bench_width, "kernel width");
  sp_bench->add_option("--reps", reps, "repetitions");
  sp_bench->add_option("--seed", seed, "rng seed");
  sp_bench->add_option("--out", out, "output directory")->required();

  // ---- reproduce
  auto* sp_rep = app.add_subcommand("reproduce", "run the full desk-scale method sweep");
  PipelineOptions popts;
  sp_rep->add_option("--out", popts.out_dir, "output directory")->required();
  sp_rep->add_option("--seed", popts.seed, "rng seed");
  sp_rep->add_option("--epochs", popts.epochs, "stodip training epochs");
  sp_rep->add_option("--fullgrad-epochs", popts.fullgrad_epochs, "full-gradient run epochs");
  sp_rep->add_option("-R,--accel", popts.r, "acceleration factor");
  sp_rep->add_option("--lambda", popts.lambda_tv, "stodip-tv TV weight");
  sp_rep->add_option("--initializer", popts.initializer, "svdmrf|lr-cg|lr-tikh");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sp_phantom) return cmd_phantom(out, grid, seed);
    if (*sp_dict) return cmd_dict(out, t_frames, k_coeffs, tr, te, ti, peak_flip, flip_table);
    if (*sp_sim) {
      if (noise_snr > 0) geo.noise_snr_db = noise_snr;
      return cmd_simulate(out, geo);
    }
    if (*sp_recon) {
      ropts.stodip.scheduler = scheduler_kind_from_string(scheduler);
      ropts.dcf_in_gram = !no_dcf_in_gram;
      if (std::filesystem::is_directory(manifest)) manifest /= "manifest.txt";
      return cmd_recon(manifest, out, ropts);
    }
    if (*sp_match) {
      if (std::filesystem::is_directory(manifest)) manifest /= "manifest.txt";
      return cmd_match(manifest, tsmi_path, out);
    }
    if (*sp_eval) return cmd_eval(est_path, ref_path, mask_path, out);
    if (*sp_bench)
      return cmd_bench_nufft(out, bench_grid, bench_points, bench_sigma, bench_width, reps, seed);
    if (*sp_rep) return cmd_reproduce(popts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
