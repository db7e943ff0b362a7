// dmenc/wav.hpp

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

#ifndef DMENC_WAV_HPP_
#define DMENC_WAV_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dmenc/common.hpp"

namespace dmenc {

constexpr int kSampleRate = 16000;

struct Waveform {
  VecF samples;  // mono, values in [-1, 1]
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace wavio {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wavio

// PCM16 / float32 WAV reader. Multi-channel stays interleaved in `channels`
// columns of the result; read_audio() below collapses to mono.
inline Mat<float> read_wav(const std::filesystem::path& path, int* sample_rate_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("cannot open wav file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_len = wavio::read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size())
      chunk_len = static_cast<std::uint32_t>(bytes.size() - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = wavio::read_u16(body);
      channels = wavio::read_u16(body + 2);
      rate = wavio::read_u32(body + 4);
      bits = wavio::read_u16(body + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (data == nullptr || channels == 0 || rate == 0)
    throw DataError("missing fmt/data chunk: " + path.string());
  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw DataError("unsupported wav encoding (need PCM16 or float32): " + path.string());

  const std::size_t bytes_per = pcm16 ? 2 : 4;
  const index_t frames = static_cast<index_t>(data_len / (bytes_per * channels));
  Mat<float> out(frames, channels);
  for (index_t i = 0; i < frames; ++i) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (static_cast<std::size_t>(i) * channels + c) * bytes_per;
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        out(i, c) = static_cast<float>(v) / 32768.0f;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        out(i, c) = v;
      }
    }
  }
  *sample_rate_out = static_cast<int>(rate);
  return out;
}

inline void write_wav_pcm16(const std::filesystem::path& path, const VecF& samples,
                            int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os.good()) throw DataError("cannot write wav file: " + path.string());
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate * 2));
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(data_len);
  for (index_t i = 0; i < samples.size(); ++i) {
    float x = std::clamp(samples(i), -1.0f, 1.0f);
    auto v = static_cast<std::int16_t>(std::lround(x * 32767.0f));
    os.write(reinterpret_cast<const char*>(&v), 2);
  }
  DMENC_CHECK(os.good(), "short write: " << path.string());
}

// Hann-windowed sinc interpolation, 16 zero crossings per side. Quality is
// secondary to determinism here.
inline VecF resample_sinc(const VecF& in, int from_rate, int to_rate) {
  if (from_rate == to_rate) return in;
  const double ratio = static_cast<double>(from_rate) / to_rate;
  const double cutoff = std::min(1.0, 1.0 / ratio);  // of input Nyquist
  const int half_taps = 16;
  const double width = half_taps / cutoff;
  const index_t out_len =
      static_cast<index_t>(std::llround(static_cast<double>(in.size()) * to_rate / from_rate));
  VecF out(out_len);
  for (index_t n = 0; n < out_len; ++n) {
    const double center = n * ratio;
    const auto lo = static_cast<index_t>(std::ceil(center - width));
    const auto hi = static_cast<index_t>(std::floor(center + width));
    double acc = 0.0;
    for (index_t k = std::max<index_t>(0, lo); k <= std::min<index_t>(in.size() - 1, hi); ++k) {
      const double x = (k - center) * cutoff;
      double sinc = (x == 0.0) ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double w = 0.5 + 0.5 * std::cos(M_PI * (k - center) / width);
      acc += in(k) * cutoff * sinc * w;
    }
    out(n) = static_cast<float>(acc);
  }
  return out;
}

// Canonical ingestion: mono by channel mean, 16 kHz, clamped to [-1, 1].
inline Waveform read_audio(const std::filesystem::path& path) {
  int rate = 0;
  Mat<float> raw = read_wav(path, &rate);
  VecF mono = raw.rowwise().mean();
  if (rate != kSampleRate) mono = resample_sinc(mono, rate, kSampleRate);
  for (index_t i = 0; i < mono.size(); ++i) mono(i) = std::clamp(mono(i), -1.0f, 1.0f);
  return Waveform{std::move(mono), kSampleRate};
}

}  // namespace dmenc

#endif  // DMENC_WAV_HPP_
