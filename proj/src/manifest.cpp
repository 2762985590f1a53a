#include "mrf/manifest.hpp"

#include <fstream>
#include <sstream>

#include "mrf/config.hpp"
#include "mrf/errors.hpp"
#include "mrf/io.hpp"

namespace mrf {

namespace {

std::string dims_str(const std::vector<uint64_t>& d) {
  std::ostringstream ss;
  ss << "[";
  for (std::size_t i = 0; i < d.size(); ++i) ss << (i ? ", " : "") << d[i];
  ss << "]";
  return ss.str();
}

void expect(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("manifest inconsistency: " + what);
}

}  // namespace

void DatasetManifest::validate_dims(
    const std::map<std::string, std::vector<uint64_t>>& file_dims) const {
  const auto dims = [&](const std::string& field) -> const std::vector<uint64_t>& {
    auto it = file_dims.find(field);
    if (it == file_dims.end()) throw ConfigError("manifest: no dims provided for `" + field + "`");
    return it->second;
  };
  const std::size_t d = grid.size();
  expect(d == 2 || d == 3, "grid must have 2 or 3 dims, got " + dims_str(grid));
  expect(c >= 1 && m >= 1 && l >= 1 && t >= 1 && k >= 1, "C, M, L, T, K must all be >= 1");
  expect(k <= t, "K (" + std::to_string(k) + ") must be <= T (" + std::to_string(t) + ")");
  expect(tr_ms > te_ms && te_ms >= 0, "need tr_ms > te_ms >= 0");

  const auto& ks = dims("kspace");
  expect(ks == std::vector<uint64_t>{c, m, l, t},
         "kspace dims " + dims_str(ks) + " disagree with [C, M, L, T] = " +
             dims_str({c, m, l, t}));

  const auto& tr = dims("trajectory");
  expect(tr.size() == 2 && tr[0] == m * l && tr[1] == d,
         "trajectory dims " + dims_str(tr) + " disagree with [M*L, grid rank] = " +
             dims_str({m * l, d}));

  const auto& co = dims("coils");
  std::vector<uint64_t> want_coils{c};
  want_coils.insert(want_coils.end(), grid.begin(), grid.end());
  expect(co == want_coils, "coils dims " + dims_str(co) + " disagree with C and grid " +
                               dims_str(want_coils) + " (field `C`)");

  const auto& dc = dims("dcf");
  expect(dc == std::vector<uint64_t>{m * l},
         "dcf dims " + dims_str(dc) + " disagree with M*L = " + std::to_string(m * l));

  const auto& ba = dims("basis");
  expect(ba == std::vector<uint64_t>{t, k},
         "basis dims " + dims_str(ba) + " disagree with [T, K] = " + dims_str({t, k}));

  const auto& di = dims("dictionary");
  expect(di.size() == 2 && di[1] == t,
         "dictionary dims " + dims_str(di) + " disagree with T = " + std::to_string(t));

  const auto& qm = dims("qmaps");
  std::vector<uint64_t> want_qmaps{3};
  want_qmaps.insert(want_qmaps.end(), grid.begin(), grid.end());
  expect(qm == want_qmaps, "qmaps dims " + dims_str(qm) + " disagree with " + dims_str(want_qmaps));

  const auto& mk = dims("mask");
  expect(mk == std::vector<uint64_t>(grid.begin(), grid.end()),
         "mask dims " + dims_str(mk) + " disagree with grid " + dims_str(grid));
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& manifest_path) {
  KvConfig cfg = KvConfig::parse_file(manifest_path);
  DatasetManifest mf;
  mf.dir = manifest_path.parent_path();
  mf.kspace = cfg.get_str("kspace");
  mf.trajectory = cfg.get_str("trajectory");
  mf.coils = cfg.get_str("coils");
  mf.dcf = cfg.get_str("dcf");
  mf.basis = cfg.get_str("basis");
  mf.dictionary = cfg.get_str("dictionary");
  mf.dict_grids = cfg.get_str("dict_grids");
  mf.qmaps = cfg.get_str("qmaps");
  mf.mask = cfg.get_str("mask");
  mf.flip_table = cfg.get_str("flip_table");
  mf.c = cfg.get_u64("C");
  mf.m = cfg.get_u64("M");
  mf.l = cfg.get_u64("L");
  mf.t = cfg.get_u64("T");
  mf.k = cfg.get_u64("K");
  mf.grid = cfg.get_dims("grid");
  mf.tr_ms = cfg.get_f64("tr_ms");
  mf.te_ms = cfg.get_f64("te_ms");
  mf.ti_ms = cfg.get_f64("ti_ms");
  const auto unread = cfg.unread_keys();
  if (!unread.empty())
    throw ConfigError(manifest_path.string() + ": unknown key `" + unread.front() + "`");

  std::map<std::string, std::vector<uint64_t>> file_dims;
  const auto header_dims = [&](const std::string& field, const std::string& rel) {
    const auto p = mf.dir / rel;
    if (!std::filesystem::exists(p))
      throw ConfigError("manifest references missing file: " + p.string());
    file_dims[field] = read_tensor_header(p).dims;
  };
  header_dims("kspace", mf.kspace);
  header_dims("trajectory", mf.trajectory);
  header_dims("coils", mf.coils);
  header_dims("dcf", mf.dcf);
  header_dims("basis", mf.basis);
  header_dims("dictionary", mf.dictionary);
  header_dims("qmaps", mf.qmaps);
  header_dims("mask", mf.mask);
  if (!std::filesystem::exists(mf.dir / mf.flip_table))
    throw ConfigError("manifest references missing file: " + (mf.dir / mf.flip_table).string());
  if (!std::filesystem::exists(mf.dir / mf.dict_grids))
    throw ConfigError("manifest references missing file: " + (mf.dir / mf.dict_grids).string());

  mf.validate_dims(file_dims);
  return mf;
}

void DatasetManifest::save(const std::filesystem::path& manifest_path) const {
  std::ofstream f(manifest_path);
  if (!f) throw IoError("cannot write manifest: " + manifest_path.string());
  f << "# mrfkit dataset manifest\n";
  f << "kspace = " << kspace << "\n";
  f << "trajectory = " << trajectory << "\n";
  f << "coils = " << coils << "\n";
  f << "dcf = " << dcf << "\n";
  f << "basis = " << basis << "\n";
  f << "dictionary = " << dictionary << "\n";
  f << "dict_grids = " << dict_grids << "\n";
  f << "qmaps = " << qmaps << "\n";
  f << "mask = " << mask << "\n";
  f << "flip_table = " << flip_table << "\n";
  f << "C = " << c << "\n";
  f << "M = " << m << "\n";
  f << "L = " << l << "\n";
  f << "T = " << t << "\n";
  f << "K = " << k << "\n";
  f << "grid =";
  for (auto g : grid) f << " " << g;
  f << "\n";
  f << "tr_ms = " << tr_ms << "\n";
  f << "te_ms = " << te_ms << "\n";
  f << "ti_ms = " << ti_ms << "\n";
}

}  // namespace mrf
