#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mrf/acquisim.hpp"
#include "mrf/dataset.hpp"
#include "mrf/epg.hpp"
#include "mrf/io.hpp"
#include "mrf/nufft.hpp"
#include "mrf/pipeline.hpp"
#include "mrf/quant.hpp"
#include "mrf/subspace.hpp"

namespace py = pybind11;
using namespace mrf;

namespace {

std::vector<std::size_t> shape_of(const py::array& a) {
  std::vector<std::size_t> dims(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    dims[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  return dims;
}

TensorC tensor_from_numpy_c(const py::array_t<cplx, py::array::c_style | py::array::forcecast>& a) {
  TensorC t(shape_of(a));
  std::copy(a.data(), a.data() + t.numel(), t.data());
  return t;
}

TensorR tensor_from_numpy_r(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  TensorR t(shape_of(a));
  std::copy(a.data(), a.data() + t.numel(), t.data());
  return t;
}

py::array numpy_from_tensor(const TensorC& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  py::array_t<cplx> out(shape);
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

py::array numpy_from_tensor(const TensorR& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

Trajectory traj_from_numpy(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
  if (pts.ndim() != 2) throw ConfigError("points must be a P x d array");
  Trajectory t;
  t.points = tensor_from_numpy_r(pts);
  t.arm_index.assign(t.n_points(), 0);
  t.frame_index.assign(t.n_points(), 0);
  return t;
}

SequenceParams seq_from_args(const std::vector<double>& flips_deg, double tr, double te,
                             double ti, double inv_eff) {
  SequenceParams seq;
  seq.flip_angles_deg = flips_deg;
  seq.tr_ms = tr;
  seq.te_ms = te;
  seq.ti_ms = ti;
  seq.inversion_efficiency = inv_eff;
  return seq;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mrfkit: MRF reconstruction toolkit core";

  py::register_exception<ConfigError>(m, "MrfConfigError");
  py::register_exception<NumericalError>(m, "MrfNumericalError");
  py::register_exception<IoError>(m, "MrfIoError");

  // tensor file i/o
  m.def(
      "read_tensor",
      [](const std::filesystem::path& path) -> py::object {
        TensorData t = read_tensor(path);
        std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
        switch (t.dtype) {
          case Dtype::Real32: {
            py::array_t<float> a(shape);
            std::copy(t.r32.begin(), t.r32.end(), a.mutable_data());
            return a;
          }
          case Dtype::Real64: {
            py::array_t<double> a(shape);
            std::copy(t.r64.begin(), t.r64.end(), a.mutable_data());
            return a;
          }
          case Dtype::Complex64: {
            py::array_t<std::complex<float>> a(shape);
            std::copy(t.c64.begin(), t.c64.end(), a.mutable_data());
            return a;
          }
          default: {
            py::array_t<cplx> a(shape);
            std::copy(t.c128.begin(), t.c128.end(), a.mutable_data());
            return a;
          }
        }
      },
      py::arg("path"), "Read an MRFT tensor file as a numpy array.");

  m.def(
      "write_tensor",
      [](const std::filesystem::path& path, py::array arr) {
        TensorData t;
        if (py::isinstance<py::array_t<float>>(arr)) {
          auto a = py::array_t<float, py::array::c_style | py::array::forcecast>(arr);
          t.dtype = Dtype::Real32;
          t.dims.assign(a.shape(), a.shape() + a.ndim());
          t.r32.assign(a.data(), a.data() + a.size());
        } else if (py::isinstance<py::array_t<std::complex<float>>>(arr)) {
          auto a = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>(arr);
          t.dtype = Dtype::Complex64;
          t.dims.assign(a.shape(), a.shape() + a.ndim());
          t.c64.assign(a.data(), a.data() + a.size());
        } else if (py::isinstance<py::array_t<cplx>>(arr) ||
                   arr.dtype().kind() == 'c') {
          auto a = py::array_t<cplx, py::array::c_style | py::array::forcecast>(arr);
          t.dtype = Dtype::Complex128;
          t.dims.assign(a.shape(), a.shape() + a.ndim());
          t.c128.assign(a.data(), a.data() + a.size());
        } else {
          auto a = py::array_t<double, py::array::c_style | py::array::forcecast>(arr);
          t.dtype = Dtype::Real64;
          t.dims.assign(a.shape(), a.shape() + a.ndim());
          t.r64.assign(a.data(), a.data() + a.size());
        }
        write_tensor(path, t);
      },
      py::arg("path"), py::arg("array"), "Write a numpy array as an MRFT tensor file.");

  // epg
  m.def(
      "simulate_fingerprint",
      [](double t1, double t2, const std::vector<double>& flips_deg, double tr, double te,
         double ti, double inv_eff, int n_states) {
        Fingerprint f =
            simulate_fingerprint(t1, t2, seq_from_args(flips_deg, tr, te, ti, inv_eff), n_states);
        py::array_t<cplx> out(static_cast<py::ssize_t>(f.signal.size()));
        std::copy(f.signal.begin(), f.signal.end(), out.mutable_data());
        return py::make_tuple(out, f.truncation_leak);
      },
      py::arg("t1_ms"), py::arg("t2_ms"), py::arg("flip_angles_deg"), py::arg("tr_ms") = 10.5,
      py::arg("te_ms") = 2.0, py::arg("ti_ms") = 18.0, py::arg("inversion_efficiency") = 1.0,
      py::arg("n_states") = 40,
      "EPG fingerprint for the inversion-prepared unbalanced SSFP sequence; returns (signal, "
      "truncation_leak).");

  m.def("default_flip_train", &default_flip_train, py::arg("t"), py::arg("peak_deg") = 70.0);

  m.def(
      "build_dictionary",
      [](const std::vector<double>& t1_grid, const std::vector<double>& t2_grid,
         const std::vector<double>& flips_deg, double tr, double te, double ti, bool normalize,
         int n_states) {
        Dictionary d = build_dictionary(t1_grid, t2_grid,
                                        seq_from_args(flips_deg, tr, te, ti, 1.0), normalize,
                                        n_states);
        return py::make_tuple(numpy_from_tensor(d.atoms), d.t1_ms, d.t2_ms);
      },
      py::arg("t1_grid_ms"), py::arg("t2_grid_ms"), py::arg("flip_angles_deg"),
      py::arg("tr_ms") = 10.5, py::arg("te_ms") = 2.0, py::arg("ti_ms") = 18.0,
      py::arg("normalize") = false, py::arg("n_states") = 40,
      "Returns (atoms[D,T], t1_ms[D], t2_ms[D]) over the feasible (t2 <= t1) grid pairs.");

  // subspace
  m.def(
      "compute_basis",
      [](const py::array_t<cplx, py::array::c_style | py::array::forcecast>& atoms,
         const std::vector<double>& t1, const std::vector<double>& t2, std::size_t k,
         bool normalize_atoms) {
        Dictionary d;
        d.atoms = tensor_from_numpy_c(atoms);
        d.t1_ms = t1;
        d.t2_ms = t2;
        SubspaceBasis b = compute_basis(d, k, normalize_atoms);
        return py::make_tuple(numpy_from_tensor(b.v), b.singular_values, b.energy_captured);
      },
      py::arg("atoms"), py::arg("t1_ms"), py::arg("t2_ms"), py::arg("k"),
      py::arg("normalize_atoms") = true,
      "Returns (v[T,K], singular_values, energy_captured).");

  m.def(
      "compress",
      [](const py::array_t<cplx, py::array::c_style | py::array::forcecast>& signals,
         const py::array_t<cplx, py::array::c_style | py::array::forcecast>& v) {
        SubspaceBasis b;
        b.v = tensor_from_numpy_c(v);
        return numpy_from_tensor(compress(tensor_from_numpy_c(signals), b));
      },
      py::arg("signals"), py::arg("v"));

  m.def(
      "decompress",
      [](const py::array_t<cplx, py::array::c_style | py::array::forcecast>& coeffs,
         const py::array_t<cplx, py::array::c_style | py::array::forcecast>& v) {
        SubspaceBasis b;
        b.v = tensor_from_numpy_c(v);
        return numpy_from_tensor(decompress(tensor_from_numpy_c(coeffs), b));
      },
      py::arg("coeffs"), py::arg("v"));

  // nufft
  py::class_<NufftPlan>(m, "NufftPlan",
                        "Kaiser-Bessel gridding plan (type 2 forward, type 1 adjoint).")
      .def(py::init([](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts,
                       const std::vector<std::size_t>& grid, double sigma, int width) {
             return new NufftPlan(traj_from_numpy(pts), grid, sigma, width);
           }),
           py::arg("points"), py::arg("grid"), py::arg("sigma") = 2.0, py::arg("width") = 6)
      .def_property_readonly("os_dims", &NufftPlan::os_dims)
      .def_property_readonly("beta", &NufftPlan::beta)
      .def(
          "forward",
          [](const NufftPlan& plan,
             const py::array_t<cplx, py::array::c_style | py::array::forcecast>& img) {
            TensorC t = tensor_from_numpy_c(img);
            if (t.dims() != plan.grid_dims()) throw ConfigError("image dims mismatch");
            py::array_t<cplx> out(static_cast<py::ssize_t>(plan.n_points()));
            plan.forward(t.data(), out.mutable_data());
            return out;
          },
          py::arg("image"))
      .def(
          "adjoint",
          [](const NufftPlan& plan,
             const py::array_t<cplx, py::array::c_style | py::array::forcecast>& samples) {
            if (static_cast<std::size_t>(samples.size()) != plan.n_points())
              throw ConfigError("sample count mismatch");
            TensorC out(plan.grid_dims());
            plan.adjoint(samples.data(), out.data());
            return numpy_from_tensor(out);
          },
          py::arg("samples"))
      .def(
          "dcf",
          [](const NufftPlan& plan, int n_iters) {
            DensityCompensation d = compute_dcf(plan, n_iters);
            py::array_t<double> out(static_cast<py::ssize_t>(d.weights.size()));
            std::copy(d.weights.begin(), d.weights.end(), out.mutable_data());
            return out;
          },
          py::arg("n_iters") = 20, "Pipe-Menon density compensation, max-normalized.");

  // acquisition simulation
  m.def(
      "make_phantom",
      [](const std::vector<std::size_t>& grid, uint64_t seed) {
        QMaps q = make_phantom(default_brain_phantom(grid, seed));
        return py::make_tuple(numpy_from_tensor(q.t1_ms), numpy_from_tensor(q.t2_ms),
                              numpy_from_tensor(q.pd));
      },
      py::arg("grid"), py::arg("seed") = 0,
      "Three-tissue brain-like phantom; returns (t1_ms, t2_ms, pd).");

  m.def(
      "make_spiral",
      [](std::size_t m_samples, std::size_t l_arms, const std::vector<std::size_t>& grid,
         double turns) {
        Trajectory t = make_spiral(m_samples, l_arms, grid, turns);
        return numpy_from_tensor(t.points);
      },
      py::arg("m"), py::arg("l"), py::arg("grid"), py::arg("turns") = 4.0);

  m.def(
      "make_coils",
      [](std::size_t c, const std::vector<std::size_t>& grid, uint64_t seed) {
        return numpy_from_tensor(make_coils(c, grid, seed).sens);
      },
      py::arg("c"), py::arg("grid"), py::arg("seed") = 0);

  // quantification
  m.def(
      "dict_match",
      [](const py::array_t<cplx, py::array::c_style | py::array::forcecast>& tsmi_grid_k,
         const py::array_t<cplx, py::array::c_style | py::array::forcecast>& atoms,
         const std::vector<double>& t1, const std::vector<double>& t2,
         const py::array_t<cplx, py::array::c_style | py::array::forcecast>& v) {
        Tsmi x = tsmi_from_file_layout(tensor_from_numpy_c(tsmi_grid_k));
        Dictionary d;
        d.atoms = tensor_from_numpy_c(atoms);
        d.t1_ms = t1;
        d.t2_ms = t2;
        SubspaceBasis b;
        b.v = tensor_from_numpy_c(v);
        QMaps q = dict_match(x, d, b);
        return py::make_tuple(numpy_from_tensor(q.t1_ms), numpy_from_tensor(q.t2_ms),
                              numpy_from_tensor(q.pd));
      },
      py::arg("tsmi"), py::arg("atoms"), py::arg("t1_ms"), py::arg("t2_ms"), py::arg("v"),
      "Exhaustive per-voxel match of a [grid..., K] TSMI; returns (t1, t2, pd).");

  const auto mask_from = [](const py::array_t<double, py::array::c_style |
                                                          py::array::forcecast>& m) {
    Mask mask(shape_of(m));
    for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = m.data()[i] > 0.5 ? 1 : 0;
    return mask;
  };
  m.def(
      "mape",
      [mask_from](const py::array_t<double, py::array::c_style | py::array::forcecast>& est,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& ref,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
        return mape(tensor_from_numpy_r(est), tensor_from_numpy_r(ref), mask_from(mask));
      },
      py::arg("est"), py::arg("ref"), py::arg("mask"));
  m.def(
      "psnr",
      [mask_from](const py::array_t<double, py::array::c_style | py::array::forcecast>& est,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& ref,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
        return psnr(tensor_from_numpy_r(est), tensor_from_numpy_r(ref), mask_from(mask));
      },
      py::arg("est"), py::arg("ref"), py::arg("mask"));
  m.def(
      "ssim",
      [mask_from](const py::array_t<double, py::array::c_style | py::array::forcecast>& est,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& ref,
                  const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
        return ssim(tensor_from_numpy_r(est), tensor_from_numpy_r(ref), mask_from(mask));
      },
      py::arg("est"), py::arg("ref"), py::arg("mask"));

  // dataset-level entry points
  m.def(
      "build_desk_dataset",
      [](const std::filesystem::path& dir, const std::vector<std::size_t>& grid, std::size_t c,
         std::size_t m_samples, std::size_t l, std::size_t t, std::size_t k, uint64_t seed) {
        DeskGeometry geo;
        geo.grid = grid;
        geo.c = c;
        geo.m = m_samples;
        geo.l = l;
        geo.t = t;
        geo.k = k;
        geo.seed = seed;
        (void)build_desk_dataset(dir, geo);
      },
      py::arg("dir"), py::arg("grid") = std::vector<std::size_t>{64, 64}, py::arg("c") = 4,
      py::arg("m") = 256, py::arg("l") = 8, py::arg("t") = 200, py::arg("k") = 5,
      py::arg("seed") = 1234, "Write a complete synthetic dataset directory.");

  m.def(
      "recon",
      [](const std::filesystem::path& manifest, const std::string& method, std::size_t r,
         int epochs, uint64_t seed, double lambda_tv) {
        Dataset ds = load_dataset(manifest);
        ReconOptions opts;
        opts.method = method;
        opts.r = r;
        opts.stodip.max_epochs = epochs;
        opts.stodip.seed = seed;
        if (lambda_tv > 0) {
          opts.lambda_tv = lambda_tv;
          opts.stodip.lambda_tv = lambda_tv;
        }
        ReconResult res = run_recon(ds, opts);
        return numpy_from_tensor(tsmi_to_file_layout(res.x));
      },
      py::arg("manifest"), py::arg("method"), py::arg("r") = 1, py::arg("epochs") = 50,
      py::arg("seed") = 0, py::arg("lambda_tv") = 0.0,
      "Reconstruct a [grid..., K] TSMI from a dataset directory.");
}
