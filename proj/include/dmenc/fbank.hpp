// dmenc/fbank.hpp

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

// Log mel filter bank features (25 ms window / 10 ms shift) and the 4x frame
// stacking that produces the 512-dim, 40 ms-rate encoder input. The spectrum
// is computed as two dense DFT products so Eigen stays the only math
// dependency; at these window sizes that is a plain matrix multiply.

#ifndef DMENC_FBANK_HPP_
#define DMENC_FBANK_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dmenc/common.hpp"
#include "dmenc/tensor_io.hpp"
#include "dmenc/wav.hpp"

namespace dmenc {

constexpr int kWinSamples = 400;   // 25 ms at 16 kHz
constexpr int kHopSamples = 160;   // 10 ms
constexpr int kFftSize = 1024;
constexpr int kNumBins = kFftSize / 2 + 1;
constexpr int kDefaultMels = 128;
constexpr double kLogFloor = 1e-10;
constexpr double kPreemph = 0.97;
constexpr int kStack = 4;          // 4 x 10 ms -> 40 ms frame rate
constexpr double kFrameRate40 = 0.040;

struct FbankFeatures {
  MatF frames;  // [T10 x n_mels]
  static constexpr double hop_s = 0.010;
  static constexpr double win_s = 0.025;
};

struct EncoderInput {
  MatF frames;  // [T40 x 512]
  static constexpr double frame_rate_s = kFrameRate40;
};

inline index_t num_frames_10ms(index_t n_samples) {
  if (n_samples < kWinSamples) return 0;
  return 1 + (n_samples - kWinSamples) / kHopSamples;
}

namespace internal {

inline double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

// Triangular mel filters over [20 Hz, 7.6 kHz], weights computed in mel space.
inline MatF mel_filterbank(int n_mels) {
  const double mel_lo = hz_to_mel(20.0);
  const double mel_hi = hz_to_mel(7600.0);
  VecD edges(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    edges(m) = mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1);
  MatF fb = MatF::Zero(kNumBins, n_mels);
  for (int k = 0; k < kNumBins; ++k) {
    const double mel_k = hz_to_mel(static_cast<double>(k) * kSampleRate / kFftSize);
    for (int m = 0; m < n_mels; ++m) {
      const double up = (mel_k - edges(m)) / (edges(m + 1) - edges(m));
      const double down = (edges(m + 2) - mel_k) / (edges(m + 2) - edges(m + 1));
      fb(k, m) = static_cast<float>(std::max(0.0, std::min(up, down)));
    }
  }
  return fb;
}

struct DftTables {
  MatF cosines;  // [kWinSamples x kNumBins]
  MatF sines;
  MatF mel;      // [kNumBins x n_mels]
  VecF window;   // Hann, length kWinSamples
};

inline const DftTables& dft_tables(int n_mels) {
  DMENC_CHECK(n_mels == kDefaultMels || n_mels == 80, "unsupported n_mels " << n_mels);
  static const DftTables* cache[2] = {nullptr, nullptr};
  const int slot = (n_mels == kDefaultMels) ? 0 : 1;
  if (cache[slot] == nullptr) {
    auto* t = new DftTables;
    t->cosines.resize(kWinSamples, kNumBins);
    t->sines.resize(kWinSamples, kNumBins);
    for (int n = 0; n < kWinSamples; ++n) {
      for (int k = 0; k < kNumBins; ++k) {
        const double ang = 2.0 * M_PI * k * n / kFftSize;
        t->cosines(n, k) = static_cast<float>(std::cos(ang));
        t->sines(n, k) = static_cast<float>(-std::sin(ang));
      }
    }
    t->mel = mel_filterbank(n_mels);
    t->window.resize(kWinSamples);
    for (int n = 0; n < kWinSamples; ++n)
      t->window(n) = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * M_PI * n / (kWinSamples - 1)));
    cache[slot] = t;
  }
  return *cache[slot];
}

}  // namespace internal

inline FbankFeatures fbank(const Waveform& wave, int n_mels = kDefaultMels) {
  DMENC_CHECK(wave.sample_rate == kSampleRate, "fbank expects 16 kHz audio");
  const index_t T = num_frames_10ms(wave.samples.size());
  if (T == 0)
    throw DataError("audio shorter than one 25 ms window (" +
                    std::to_string(wave.samples.size()) + " samples)");
  const auto& tab = internal::dft_tables(n_mels);

  MatF framed(T, kWinSamples);
  for (index_t t = 0; t < T; ++t) {
    Eigen::Map<const VecF> seg(wave.samples.data() + t * kHopSamples, kWinSamples);
    const float mean = seg.mean();
    // DC removal, pre-emphasis, Hann window, all frame-local.
    framed(t, 0) = (seg(0) - mean) * static_cast<float>(1.0 - kPreemph) * tab.window(0);
    for (int n = 1; n < kWinSamples; ++n)
      framed(t, n) = ((seg(n) - mean) - static_cast<float>(kPreemph) * (seg(n - 1) - mean)) *
                     tab.window(n);
  }

  MatF re = framed * tab.cosines;
  MatF im = framed * tab.sines;
  MatF power = re.array().square() + im.array().square();
  FbankFeatures out;
  out.frames = (power * tab.mel).array().max(static_cast<float>(kLogFloor)).log();
  return out;
}

// Per-utterance mean/variance normalization, applied between fbank() and
// stack_downsample(). Kept out of stack_downsample so the stacking step stays
// strictly causal in its input frames.
inline FbankFeatures cmvn(FbankFeatures feats) {
  const auto T = static_cast<float>(feats.frames.rows());
  RowVec<float> mean = feats.frames.colwise().mean();
  feats.frames.rowwise() -= mean;
  RowVec<float> var = feats.frames.array().square().colwise().sum() / T;
  RowVec<float> inv_std = (var.array() + 1e-8f).rsqrt();
  feats.frames = feats.frames.array().rowwise() * inv_std.array();
  return feats;
}

// Output row j = [f[4j] | f[4j+1] | f[4j+2] | f[4j+3]], oldest first; the base
// frame of row j is 4j+3 and trailing remainder frames are dropped.
inline EncoderInput stack_downsample(const FbankFeatures& feats) {
  const index_t t10 = feats.frames.rows();
  const index_t dim = feats.frames.cols();
  if (t10 < kStack)
    throw DataError("need at least " + std::to_string(kStack) +
                    " fbank frames to stack, got " + std::to_string(t10));
  const index_t t40 = t10 / kStack;
  EncoderInput out;
  out.frames.resize(t40, dim * kStack);
  for (index_t j = 0; j < t40; ++j)
    for (int k = 0; k < kStack; ++k)
      out.frames.block(j, k * dim, 1, dim) = feats.frames.row(kStack * j + k);
  return out;
}

inline EncoderInput waveform_to_input(const Waveform& wave) {
  return stack_downsample(cmvn(fbank(wave)));
}

// ---- Optional on-disk feature cache: <utt>.bin + <utt>.json sidecar ----

inline void write_feature_cache(const std::filesystem::path& dir, const std::string& utt_id,
                                const EncoderInput& input) {
  write_tensor(dir / (utt_id + ".bin"), input.frames);
  nlohmann::json j;
  j["shape"] = {input.frames.rows(), input.frames.cols()};
  j["dtype"] = "f32";
  j["frame_rate"] = EncoderInput::frame_rate_s;
  std::ofstream os(dir / (utt_id + ".json"));
  os << j.dump(2) << "\n";
  DMENC_CHECK(os.good(), "cannot write feature sidecar for " << utt_id);
}

inline EncoderInput read_feature_cache(const std::filesystem::path& dir,
                                       const std::string& utt_id) {
  EncoderInput input;
  input.frames = read_tensor<float>(dir / (utt_id + ".bin"));
  return input;
}

inline bool feature_cache_has(const std::filesystem::path& dir, const std::string& utt_id) {
  return std::filesystem::exists(dir / (utt_id + ".bin"));
}

}  // namespace dmenc

#endif  // DMENC_FBANK_HPP_
