// dmenc/common.hpp

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

#ifndef DMENC_COMMON_HPP_
#define DMENC_COMMON_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dmenc {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;
using MatB = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using VecI = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

using index_t = Eigen::Index;

// Frame counts use kInfFrames as the unbounded-context sentinel; the seconds
// domain uses an ordinary floating-point infinity.
constexpr std::int64_t kInfFrames = std::numeric_limits<std::int64_t>::max();
constexpr double kInfSeconds = std::numeric_limits<double>::infinity();

inline bool is_inf_frames(std::int64_t frames) { return frames == kInfFrames; }

// Error categories map to the CLI exit codes: ConfigError -> 2, everything
// else -> 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

namespace internal {
[[noreturn]] inline void check_failed(const char* cond, const char* file,
                                      int line, const std::string& msg) {
  std::ostringstream os;
  os << "check failed: " << cond << " at " << file << ":" << line;
  if (!msg.empty()) os << " (" << msg << ")";
  throw Error(os.str());
}
}  // namespace internal

#define DMENC_CHECK(cond, msg)                                       \
  do {                                                               \
    if (!(cond))                                                     \
      ::dmenc::internal::check_failed(#cond, __FILE__, __LINE__,     \
                                      (std::ostringstream() << msg)  \
                                          .str());                   \
  } while (0)

// FNV-1a, used for parameter hashes and config hashes.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t seed = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace dmenc

#endif  // DMENC_COMMON_HPP_
