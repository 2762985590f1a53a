#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mrf {

// Dataset directory descriptor. All tensor paths are relative to `dir`.
// Acquisition shape convention for kspace is [C, M, L, T]:
// coils x samples-per-arm x arms x timeframes.
struct DatasetManifest {
  std::filesystem::path dir;

  std::string kspace;      // [C, M, L, T] complex
  std::string trajectory;  // [M*L, d] real, d = grid rank
  std::string coils;       // [C, grid...] complex
  std::string dcf;         // [M*L] real (full sampling)
  std::string basis;       // [T, K] complex
  std::string dictionary;  // [D, T] complex
  std::string dict_grids;  // sidecar text: per-atom t1/t2 + normalized flag
  std::string qmaps;       // [3, grid...] real: t1_ms, t2_ms, pd
  std::string mask;        // [grid...] real 0/1
  std::string flip_table;  // text, T flip angles in degrees

  uint64_t c = 0, m = 0, l = 0, t = 0, k = 0;
  std::vector<uint64_t> grid;
  double tr_ms = 0, te_ms = 0, ti_ms = 0;

  std::filesystem::path path_of(const std::string& rel) const { return dir / rel; }

  // Pure consistency check of acquisition descriptors against tensor dims
  // (keyed by the manifest field name). Throws ConfigError naming the
  // disagreeing pair.
  void validate_dims(const std::map<std::string, std::vector<uint64_t>>& file_dims) const;

  // Parse + validate against the headers of the referenced files.
  static DatasetManifest load(const std::filesystem::path& manifest_path);

  void save(const std::filesystem::path& manifest_path) const;
};

}  // namespace mrf
