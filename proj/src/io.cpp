#include "mrf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mrf/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "TensorFile I/O assumes a little-endian host");

namespace mrf {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'F', 'T'};
constexpr uint8_t kVersion = 1;

void check_dims(const std::vector<uint64_t>& dims) {
  if (dims.empty()) throw ConfigError("ndim must be >= 1");
  for (auto d : dims)
    if (d == 0) throw ConfigError("all dims must be >= 1");
}

}  // namespace

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::Real32: return 4;
    case Dtype::Real64: return 8;
    case Dtype::Complex64: return 8;
    case Dtype::Complex128: return 16;
  }
  throw ConfigError("unencodable dtype code " + std::to_string(static_cast<int>(d)));
}

uint64_t TensorData::numel() const {
  uint64_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void write_tensor(const std::filesystem::path& path, const TensorData& t) {
  check_dims(t.dims);
  const uint64_t n = t.numel();
  const void* payload = nullptr;
  std::size_t payload_bytes = n * dtype_size(t.dtype);
  switch (t.dtype) {
    case Dtype::Real32:
      if (t.r32.size() != n) throw ConfigError("payload size mismatch");
      payload = t.r32.data();
      break;
    case Dtype::Real64:
      if (t.r64.size() != n) throw ConfigError("payload size mismatch");
      payload = t.r64.data();
      break;
    case Dtype::Complex64:
      if (t.c64.size() != n) throw ConfigError("payload size mismatch");
      payload = t.c64.data();
      break;
    case Dtype::Complex128:
      if (t.c128.size() != n) throw ConfigError("payload size mismatch");
      payload = t.c128.data();
      break;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(kMagic, 4);
  f.put(static_cast<char>(kVersion));
  f.put(static_cast<char>(t.dtype));
  f.put(static_cast<char>(t.dims.size()));
  f.write(reinterpret_cast<const char*>(t.dims.data()),
          static_cast<std::streamsize>(t.dims.size() * 8));
  f.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
  if (!f) throw IoError("write failed: " + path.string());
}

namespace {

TensorHeader read_header_stream(std::ifstream& f, const std::filesystem::path& path) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in " + path.string());
  const int version = f.get();
  const int dtype_code = f.get();
  const int ndim = f.get();
  if (!f) throw IoError("truncated header in " + path.string());
  if (version != kVersion)
    throw IoError("unsupported version " + std::to_string(version) + " in " + path.string());
  if (dtype_code < 0 || dtype_code > 3)
    throw IoError("unknown dtype code " + std::to_string(dtype_code) + " in " + path.string());
  if (ndim < 1) throw IoError("ndim must be >= 1 in " + path.string());
  TensorHeader h;
  h.dtype = static_cast<Dtype>(dtype_code);
  h.dims.resize(static_cast<std::size_t>(ndim));
  f.read(reinterpret_cast<char*>(h.dims.data()), static_cast<std::streamsize>(ndim * 8));
  if (!f) throw IoError("truncated header in " + path.string());
  for (auto d : h.dims)
    if (d == 0) throw IoError("zero dim in " + path.string());
  return h;
}

}  // namespace

TensorHeader read_tensor_header(const std::filesystem::path& path, bool check_size) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  TensorHeader h = read_header_stream(f, path);
  if (check_size) {
    uint64_t n = 1;
    for (auto d : h.dims) n *= d;
    const uint64_t expected = 7 + 8 * h.dims.size() + n * dtype_size(h.dtype);
    const auto actual = std::filesystem::file_size(path);
    if (actual < expected) throw IoError("truncated payload in " + path.string());
  }
  return h;
}

TensorData read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  TensorHeader h = read_header_stream(f, path);
  TensorData t;
  t.dtype = h.dtype;
  t.dims = h.dims;
  const uint64_t n = t.numel();
  const auto read_payload = [&](void* dst, std::size_t bytes) {
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (f.gcount() != static_cast<std::streamsize>(bytes))
      throw IoError("truncated payload in " + path.string());
  };
  switch (t.dtype) {
    case Dtype::Real32: t.r32.resize(n); read_payload(t.r32.data(), n * 4); break;
    case Dtype::Real64: t.r64.resize(n); read_payload(t.r64.data(), n * 8); break;
    case Dtype::Complex64: t.c64.resize(n); read_payload(t.c64.data(), n * 8); break;
    case Dtype::Complex128: t.c128.resize(n); read_payload(t.c128.data(), n * 16); break;
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const TensorR& t) {
  TensorData d;
  d.dtype = Dtype::Real64;
  d.dims.assign(t.dims().begin(), t.dims().end());
  d.r64 = t.vec();
  write_tensor(path, d);
}

void write_tensor(const std::filesystem::path& path, const TensorC& t) {
  TensorData d;
  d.dtype = Dtype::Complex128;
  d.dims.assign(t.dims().begin(), t.dims().end());
  d.c128 = t.vec();
  write_tensor(path, d);
}

TensorR read_tensor_real(const std::filesystem::path& path) {
  TensorData d = read_tensor(path);
  std::vector<std::size_t> dims(d.dims.begin(), d.dims.end());
  if (d.dtype == Dtype::Real64) return TensorR(dims, std::move(d.r64));
  if (d.dtype == Dtype::Real32) {
    std::vector<double> v(d.r32.begin(), d.r32.end());
    return TensorR(dims, std::move(v));
  }
  throw IoError("expected a real tensor in " + path.string());
}

TensorC read_tensor_cplx(const std::filesystem::path& path) {
  TensorData d = read_tensor(path);
  std::vector<std::size_t> dims(d.dims.begin(), d.dims.end());
  if (d.dtype == Dtype::Complex128) return TensorC(dims, std::move(d.c128));
  if (d.dtype == Dtype::Complex64) {
    std::vector<cplx> v(d.c64.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = cplx(d.c64[i].real(), d.c64[i].imag());
    return TensorC(dims, std::move(v));
  }
  throw IoError("expected a complex tensor in " + path.string());
}

}  // namespace mrf
