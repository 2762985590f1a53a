#include "mrf/dataset.hpp"

#include <cmath>

#include "mrf/errors.hpp"
#include "mrf/io.hpp"

namespace mrf {

std::vector<double> desk_t1_grid() {
  return {250,  300,  400,  500,  600,  700,  800,  900,  1000, 1100,
          1200, 1300, 1400, 1600, 1800, 2000, 2500, 3000, 4000, 5000};
}

std::vector<double> desk_t2_grid() {
  return {20, 30, 40, 50, 60, 80, 100, 120, 150, 260, 280, 350, 650, 1800, 3000};
}

SubspaceBasis load_basis(const std::filesystem::path& path) {
  SubspaceBasis b;
  b.v = read_tensor_cplx(path);
  if (b.v.ndim() != 2) throw IoError("basis tensor must be [T, K]");
  b.energy_captured = 0;  // not persisted; informational only
  return b;
}

void save_basis(const std::filesystem::path& path, const SubspaceBasis& basis) {
  write_tensor(path, basis.v);
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.mf = DatasetManifest::load(manifest_path);
  ds.y = kspace_from_file_layout(read_tensor_cplx(ds.mf.path_of(ds.mf.kspace)));
  TensorR pts = read_tensor_real(ds.mf.path_of(ds.mf.trajectory));
  ds.traj.points = std::move(pts);
  const std::size_t p = ds.traj.n_points();
  ds.traj.arm_index.resize(p);
  ds.traj.frame_index.assign(p, 0);
  for (std::size_t i = 0; i < p; ++i)
    ds.traj.arm_index[i] = static_cast<uint32_t>(i / ds.mf.m);
  ds.coils.sens = read_tensor_cplx(ds.mf.path_of(ds.mf.coils));
  for (std::size_t c = 0; c < ds.coils.n_coils(); ++c)
    ds.coils.labels.push_back("coil" + std::to_string(c));
  ds.dcf = read_tensor_real(ds.mf.path_of(ds.mf.dcf)).vec();
  ds.basis = load_basis(ds.mf.path_of(ds.mf.basis));
  ds.dict = load_dictionary(ds.mf.path_of(ds.mf.dictionary), ds.mf.path_of(ds.mf.dict_grids));
  ds.ref = load_qmaps(ds.mf.path_of(ds.mf.qmaps));
  ds.mask = load_mask(ds.mf.path_of(ds.mf.mask));
  ds.seq.flip_angles_deg = load_flip_table(ds.mf.path_of(ds.mf.flip_table));
  ds.seq.tr_ms = ds.mf.tr_ms;
  ds.seq.te_ms = ds.mf.te_ms;
  ds.seq.ti_ms = ds.mf.ti_ms;
  const auto x_gt_path = ds.mf.dir / "x_gt.mrft";
  if (std::filesystem::exists(x_gt_path))
    ds.x_gt = tsmi_from_file_layout(read_tensor_cplx(x_gt_path));
  return ds;
}

ForwardModel make_model(const Dataset& ds, std::size_t r, double sigma, int width,
                        bool dcf_in_gram) {
  const auto arms = undersample_arms(ds.mf.l, r);
  return ForwardModel(ds.basis, ds.coils, ds.traj, ds.mf.m, ds.mf.l, arms, sigma, width, 20,
                      dcf_in_gram);
}

Dataset build_desk_dataset(const std::filesystem::path& dir, const DeskGeometry& geo) {
  std::filesystem::create_directories(dir);

  // phantom
  PhantomSpec spec = default_brain_phantom(geo.grid, geo.seed);
  QMaps phantom = make_phantom(spec);
  Mask mask = make_mask(phantom.pd, 0.05);
  save_qmaps(dir / "qmaps.mrft", phantom);
  save_mask(dir / "mask.mrft", mask, geo.grid);

  // sequence + dictionary + basis
  SequenceParams seq;
  seq.flip_angles_deg = default_flip_train(geo.t, geo.peak_flip_deg);
  seq.tr_ms = geo.tr_ms;
  seq.te_ms = geo.te_ms;
  seq.ti_ms = geo.ti_ms;
  save_flip_table(dir / "flips.txt", seq.flip_angles_deg);
  Dictionary dict = build_dictionary(desk_t1_grid(), desk_t2_grid(), seq, /*normalize=*/false);
  save_dictionary(dir / "dictionary.mrft", dir / "dict_grids.txt", dict);
  SubspaceBasis basis = compute_basis(dict, geo.k, /*normalize_atoms=*/true);
  save_basis(dir / "basis.mrft", basis);

  // acquisition geometry
  Trajectory traj = make_spiral(geo.m, geo.l, geo.grid, geo.turns);
  const std::size_t l_total = geo.grid.size() == 3 ? geo.l * geo.grid[0] : geo.l;
  CoilSet coils = make_coils(geo.c, geo.grid, geo.seed);
  write_tensor(dir / "trajectory.mrft", traj.points);
  write_tensor(dir / "coils.mrft", coils.sens);

  std::vector<uint32_t> all_arms(l_total);
  for (std::size_t i = 0; i < l_total; ++i) all_arms[i] = static_cast<uint32_t>(i);
  ForwardModel model(basis, coils, traj, geo.m, l_total, all_arms, geo.sigma, geo.width);
  write_tensor(dir / "dcf.mrft", TensorR({model.dcf().size()}, model.dcf()));

  SimulateResult sim;
  if (geo.honest_crime) {
    // synthesize through a 2x finer grid with the same analytic phantom and
    // coils, rescaled to keep the coarse-grid energy convention
    std::vector<std::size_t> fine_grid = geo.grid;
    for (auto& g : fine_grid) g *= 2;
    PhantomSpec fine_spec = spec;
    fine_spec.grid = fine_grid;
    QMaps fine_phantom = make_phantom(fine_spec);
    CoilSet fine_coils = make_coils(geo.c, fine_grid, geo.seed);
    ForwardModel fine_model(basis, fine_coils, traj, geo.m, l_total, all_arms, geo.sigma,
                            geo.width);
    SimulateResult fine =
        simulate_kspace(fine_phantom, seq, fine_model, dict, basis, geo.noise_snr_db, geo.seed);
    const double scale =
        1.0 / std::pow(2.0, static_cast<double>(geo.grid.size()));
    for (std::size_t i = 0; i < fine.y.data.numel(); ++i) fine.y.data[i] *= scale;
    sim.y = std::move(fine.y);
    // the coarse ground truth remains the evaluation reference
    SimulateResult coarse =
        simulate_kspace(phantom, seq, model, dict, basis, std::nullopt, geo.seed);
    sim.x_gt = std::move(coarse.x_gt);
  } else {
    sim = simulate_kspace(phantom, seq, model, dict, basis, geo.noise_snr_db, geo.seed);
  }
  write_tensor(dir / "kspace.mrft", kspace_to_file_layout(sim.y));
  write_tensor(dir / "x_gt.mrft", tsmi_to_file_layout(sim.x_gt));

  DatasetManifest mf;
  mf.dir = dir;
  mf.kspace = "kspace.mrft";
  mf.trajectory = "trajectory.mrft";
  mf.coils = "coils.mrft";
  mf.dcf = "dcf.mrft";
  mf.basis = "basis.mrft";
  mf.dictionary = "dictionary.mrft";
  mf.dict_grids = "dict_grids.txt";
  mf.qmaps = "qmaps.mrft";
  mf.mask = "mask.mrft";
  mf.flip_table = "flips.txt";
  mf.c = geo.c;
  mf.m = geo.m;
  mf.l = l_total;
  mf.t = geo.t;
  mf.k = geo.k;
  mf.grid.assign(geo.grid.begin(), geo.grid.end());
  mf.tr_ms = geo.tr_ms;
  mf.te_ms = geo.te_ms;
  mf.ti_ms = geo.ti_ms;
  mf.save(dir / "manifest.txt");

  return load_dataset(dir / "manifest.txt");
}

}  // namespace mrf
