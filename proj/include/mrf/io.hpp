#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrf/tensor.hpp"

namespace mrf {

// Binary tensor container. Layout (all little-endian):
//   magic   4 bytes "MRFT"
//   version u8 = 1
//   dtype   u8: 0=real32, 1=real64, 2=complex64, 3=complex128
//   ndim    u8 >= 1
//   dims    ndim x u64
//   payload row-major values, complex interleaved (re, im)
enum class Dtype : uint8_t { Real32 = 0, Real64 = 1, Complex64 = 2, Complex128 = 3 };

std::size_t dtype_size(Dtype d);

struct TensorData {
  Dtype dtype = Dtype::Real64;
  std::vector<uint64_t> dims;
  std::vector<float> r32;
  std::vector<double> r64;
  std::vector<std::complex<float>> c64;
  std::vector<std::complex<double>> c128;

  uint64_t numel() const;
};

void write_tensor(const std::filesystem::path& path, const TensorData& t);
TensorData read_tensor(const std::filesystem::path& path);

// Header-only read: dims and dtype, plus a file-size consistency check.
struct TensorHeader {
  Dtype dtype;
  std::vector<uint64_t> dims;
};
TensorHeader read_tensor_header(const std::filesystem::path& path, bool check_size = true);

// Convenience for the two dtypes the pipeline uses.
void write_tensor(const std::filesystem::path& path, const TensorR& t);
void write_tensor(const std::filesystem::path& path, const TensorC& t);
TensorR read_tensor_real(const std::filesystem::path& path);    // accepts real32/real64
TensorC read_tensor_cplx(const std::filesystem::path& path);    // accepts complex64/complex128

}  // namespace mrf
