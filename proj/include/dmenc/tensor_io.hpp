// dmenc/tensor_io.hpp

// Copyright 2026  dmenc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Binary tensor files: 8-byte magic "DMTENS1\0", int32 dtype, int64 rows,
// int64 cols, then the payload in column-major order, little endian.

#ifndef DMENC_TENSOR_IO_HPP_
#define DMENC_TENSOR_IO_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dmenc/common.hpp"

namespace dmenc {

namespace internal {

constexpr char kTensorMagic[8] = {'D', 'M', 'T', 'E', 'N', 'S', '1', '\0'};

template <typename S>
constexpr std::int32_t dtype_code();
template <>
constexpr std::int32_t dtype_code<float>() { return 0; }
template <>
constexpr std::int32_t dtype_code<double>() { return 1; }
template <>
constexpr std::int32_t dtype_code<std::int64_t>() { return 2; }

}  // namespace internal

template <typename S>
void write_tensor(std::ostream& os, const Mat<S>& m) {
  os.write(internal::kTensorMagic, 8);
  std::int32_t dtype = internal::dtype_code<S>();
  std::int64_t rows = m.rows(), cols = m.cols();
  os.write(reinterpret_cast<const char*>(&dtype), sizeof(dtype));
  os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  os.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(S) * m.size()));
}

template <typename S>
void write_tensor(const std::filesystem::path& path, const Mat<S>& m) {
  std::ofstream os(path, std::ios::binary);
  DMENC_CHECK(os.good(), "cannot open " << path.string() << " for writing");
  write_tensor(os, m);
  DMENC_CHECK(os.good(), "write failed for " << path.string());
}

template <typename S>
Mat<S> read_tensor(std::istream& is, const std::string& what = "tensor") {
  char magic[8];
  is.read(magic, 8);
  DMENC_CHECK(is.good() && std::memcmp(magic, internal::kTensorMagic, 8) == 0,
              "bad tensor magic in " << what);
  std::int32_t dtype = -1;
  std::int64_t rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&dtype), sizeof(dtype));
  is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  is.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  DMENC_CHECK(is.good() && dtype == internal::dtype_code<S>(),
              "dtype mismatch in " << what);
  DMENC_CHECK(rows >= 0 && cols >= 0, "bad shape in " << what);
  Mat<S> m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(S) * m.size()));
  DMENC_CHECK(is.good(), "truncated tensor in " << what);
  return m;
}

template <typename S>
Mat<S> read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  DMENC_CHECK(is.good(), "cannot open " << path.string());
  return read_tensor<S>(is, path.string());
}

inline void write_codes(const std::filesystem::path& path, const VecI& codes) {
  Mat<std::int64_t> m(codes.size(), 1);
  m.col(0) = codes;
  write_tensor(path, m);
}

inline VecI read_codes(const std::filesystem::path& path) {
  Mat<std::int64_t> m = read_tensor<std::int64_t>(path);
  DMENC_CHECK(m.cols() == 1, "codes file " << path.string() << " is not a column");
  return m.col(0);
}

}  // namespace dmenc

#endif  // DMENC_TENSOR_IO_HPP_
