// dmenc/synth.hpp

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

// Deterministic synthetic fixtures. Every vocabulary token maps to a fixed
// harmonic tone (distinct fundamental), so the toy ASR task is learnable in
// minutes; timbre classes provide classification-probe labels, and the tone
// fundamentals sit inside the 50-400 Hz pitch tracker range.

#ifndef DMENC_SYNTH_HPP_
#define DMENC_SYNTH_HPP_

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dmenc/common.hpp"
#include "dmenc/manifest.hpp"
#include "dmenc/rng.hpp"
#include "dmenc/wav.hpp"

namespace dmenc {

inline const std::vector<std::string>& synth_vocabulary() {
  static const std::vector<std::string> kWords = {
      "ava", "bel", "cor", "dun", "eko", "fen",
      "gil", "hos", "ira", "jun", "kel", "mir"};
  return kWords;
}

// Fundamental of token i, log-spaced over [130, 360] Hz.
inline double synth_token_f0(int token_index) {
  const int n = static_cast<int>(synth_vocabulary().size());
  DMENC_CHECK(token_index >= 0 && token_index < n, "token index out of range");
  return 130.0 * std::pow(360.0 / 130.0,
                          static_cast<double>(token_index) / (n - 1));
}

struct SynthConfig {
  int n_utts = 200;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  double untranscribed_fraction = 0.1;
  int n_classes = 4;        // timbre classes (class_label = "spk<i>")
  double noise_level = 0.02;
  int min_words = 2;
  int max_words = 8;
  // Fractions for the train/dev/test split manifests (by utterance index).
  double dev_fraction = 0.1;
  double test_fraction = 0.2;
};

struct SynthResult {
  std::filesystem::path manifest_path;  // all utterances
  std::filesystem::path train_manifest;
  std::filesystem::path dev_manifest;
  std::filesystem::path test_manifest;
  std::vector<ManifestEntry> entries;
};

namespace internal {

inline VecF synth_tone(double f0, index_t n_samples, double tilt, Rng& rng) {
  VecF x = VecF::Zero(n_samples);
  const int n_harmonics = 4;
  double norm = 0.0;
  double phase[n_harmonics];
  double amp[n_harmonics];
  for (int h = 0; h < n_harmonics; ++h) {
    amp[h] = std::pow(tilt, h);
    norm += amp[h];
    phase[h] = rng.uniform(0.0, 2.0 * M_PI);
  }
  for (index_t i = 0; i < n_samples; ++i) {
    double t = static_cast<double>(i) / kSampleRate;
    double v = 0.0;
    for (int h = 0; h < n_harmonics; ++h)
      v += amp[h] * std::sin(2.0 * M_PI * f0 * (h + 1) * t + phase[h]);
    x(i) = static_cast<float>(v / norm);
  }
  // 10 ms cosine ramps against clicks
  const index_t ramp = std::min<index_t>(160, n_samples / 2);
  for (index_t i = 0; i < ramp; ++i) {
    float w = 0.5f - 0.5f * std::cos(M_PI * static_cast<double>(i) / ramp);
    x(i) *= w;
    x(n_samples - 1 - i) *= w;
  }
  return x;
}

}  // namespace internal

inline SynthResult synth_dataset(const SynthConfig& cfg) {
  DMENC_CHECK(cfg.n_utts >= 1, "n_utts must be >= 1");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir / "wav", ec);
  if (!fs::exists(cfg.out_dir / "wav"))
    throw DataError("cannot create output directory: " + (cfg.out_dir / "wav").string());

  const auto& vocab = synth_vocabulary();
  Rng rng(splitmix64(cfg.seed ^ 0x5eedf00dull));
  std::vector<ManifestEntry> entries;
  entries.reserve(cfg.n_utts);

  for (int u = 0; u < cfg.n_utts; ++u) {
    const int n_words = cfg.min_words + static_cast<int>(rng.uniform_int(cfg.max_words - cfg.min_words + 1));
    const int cls = static_cast<int>(rng.uniform_int(cfg.n_classes));
    const double tilt = 0.25 + 0.25 * cls;  // spectral tilt separates classes
    const double gain = rng.uniform(0.25, 0.8);
    const double noise = cfg.noise_level * rng.uniform(0.5, 1.5);

    std::vector<VecF> pieces;
    std::vector<std::string> words;
    auto silence = [&](double dur) {
      pieces.push_back(VecF::Zero(static_cast<index_t>(std::lround(dur * kSampleRate))));
    };
    silence(rng.uniform(0.1, 0.3));
    int prev_tok = -1;
    for (int w = 0; w < n_words; ++w) {
      if (w > 0) silence(rng.uniform(0.08, 0.18));
      // Adjacent repeats are excluded: a repeated token is indistinguishable
      // from one long token at these durations, so transcripts stay unambiguous.
      const auto n_tok = static_cast<std::int64_t>(vocab.size());
      int tok;
      if (prev_tok < 0) {
        tok = static_cast<int>(rng.uniform_int(n_tok));
      } else {
        tok = static_cast<int>(rng.uniform_int(n_tok - 1));
        if (tok >= prev_tok) ++tok;
      }
      prev_tok = tok;
      words.push_back(vocab[static_cast<std::size_t>(tok)]);
      const auto len = static_cast<index_t>(std::lround(rng.uniform(0.25, 0.45) * kSampleRate));
      pieces.push_back(internal::synth_tone(synth_token_f0(tok), len, tilt, rng));
    }
    silence(rng.uniform(0.1, 0.3));

    index_t total = 0;
    for (const auto& p : pieces) total += p.size();
    if (total < kSampleRate) {  // pad to the 1 s duration floor
      pieces.push_back(VecF::Zero(kSampleRate - total));
      total = kSampleRate;
    }
    VecF x(total);
    index_t at = 0;
    for (const auto& p : pieces) {
      x.segment(at, p.size()) = p;
      at += p.size();
    }
    for (index_t i = 0; i < total; ++i)
      x(i) = static_cast<float>(gain * x(i) + noise * rng.normal());

    char utt_id[32];
    std::snprintf(utt_id, sizeof(utt_id), "utt_%06d", u);
    const std::string wav_rel = std::string("wav/") + utt_id + ".wav";
    write_wav_pcm16(cfg.out_dir / wav_rel, x, kSampleRate);

    ManifestEntry e;
    e.utt_id = utt_id;
    e.audio_path = wav_rel;
    e.duration_s = static_cast<double>(total) / kSampleRate;
    const bool transcribed = rng.uniform() >= cfg.untranscribed_fraction;
    if (transcribed) {
      std::string tr;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) tr += ' ';
        tr += words[i];
      }
      e.transcript = tr;
    }
    e.class_label = "spk" + std::to_string(cls);
    entries.push_back(std::move(e));
  }

  SynthResult res;
  res.entries = entries;
  res.manifest_path = cfg.out_dir / "manifest.jsonl";
  save_manifest(res.manifest_path, entries);

  // Deterministic split by index: test takes the tail, dev just before it.
  const int n_test = static_cast<int>(std::lround(cfg.test_fraction * cfg.n_utts));
  const int n_dev = static_cast<int>(std::lround(cfg.dev_fraction * cfg.n_utts));
  const int n_train = cfg.n_utts - n_test - n_dev;
  DMENC_CHECK(n_train >= 1, "split leaves no training utterances");
  auto subset = [&](int lo, int hi) {
    return std::vector<ManifestEntry>(entries.begin() + lo, entries.begin() + hi);
  };
  res.train_manifest = cfg.out_dir / "train.jsonl";
  res.dev_manifest = cfg.out_dir / "dev.jsonl";
  res.test_manifest = cfg.out_dir / "test.jsonl";
  save_manifest(res.train_manifest, subset(0, n_train));
  save_manifest(res.dev_manifest, subset(n_train, n_train + n_dev));
  save_manifest(res.test_manifest, subset(n_train + n_dev, cfg.n_utts));
  return res;
}

}  // namespace dmenc

#endif  // DMENC_SYNTH_HPP_
