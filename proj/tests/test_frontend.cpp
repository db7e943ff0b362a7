// tests/test_frontend.cpp

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

#include <doctest.h>

#include <cmath>

#include "dmenc/fbank.hpp"
#include "dmenc/wav.hpp"
#include "test_support.hpp"

namespace {

using dmenc::index_t;
using dmenc::kSampleRate;
using dmenc::Rng;
using dmenc::VecF;
using dmenc::Waveform;
using dmenc_test::TempDir;

VecF sine(double hz, double seconds, float amp = 0.5f) {
  const auto n = static_cast<index_t>(seconds * kSampleRate);
  VecF x(n);
  for (index_t i = 0; i < n; ++i)
    x(i) = amp * static_cast<float>(
                     std::sin(2.0 * M_PI * hz * i / kSampleRate));
  return x;
}

}  // namespace

TEST_CASE("pcm16 wav files round-trip within quantization error") {
  TempDir tmp("wav");
  Rng rng(41);
  VecF x(1600);
  for (index_t i = 0; i < x.size(); ++i)
    x(i) = static_cast<float>(std::clamp(rng.normal() * 0.3, -1.0, 1.0));
  const auto path = tmp.path / "t.wav";
  dmenc::write_wav_pcm16(path, x, kSampleRate);
  const Waveform w = dmenc::read_audio(path);
  REQUIRE(w.samples.size() == x.size());
  CHECK(w.sample_rate == kSampleRate);
  CHECK((w.samples - x).array().abs().maxCoeff() <= 1.5f / 32768.0f);
  CHECK(w.duration_s() == doctest::Approx(0.1));
}

TEST_CASE("reading a missing wav raises a data error") {
  CHECK_THROWS_AS(dmenc::read_audio("/nonexistent/q.wav"), dmenc::DataError);
}

TEST_CASE("non-16k audio is resampled on read") {
  TempDir tmp("wav8k");
  // 200 Hz tone written at 8 kHz must come back at 16 kHz, same duration.
  const index_t n8 = 8000;
  VecF x(n8);
  for (index_t i = 0; i < n8; ++i)
    x(i) = 0.4f * static_cast<float>(std::sin(2.0 * M_PI * 200.0 * i / 8000.0));
  const auto path = tmp.path / "t8.wav";
  dmenc::write_wav_pcm16(path, x, 8000);
  const Waveform w = dmenc::read_audio(path);
  CHECK(w.sample_rate == kSampleRate);
  CHECK(std::abs(static_cast<double>(w.samples.size()) - 16000.0) < 3.0);
  // Zero crossings per second stay those of a 200 Hz tone.
  int crossings = 0;
  for (index_t i = 1; i < w.samples.size(); ++i)
    if ((w.samples(i - 1) < 0) != (w.samples(i) < 0)) ++crossings;
  CHECK(std::abs(crossings - 400) <= 6);
}

TEST_CASE("frame counting at the 10 ms hop") {
  CHECK(dmenc::num_frames_10ms(0) == 0);
  CHECK(dmenc::num_frames_10ms(399) == 0);
  CHECK(dmenc::num_frames_10ms(400) == 1);
  CHECK(dmenc::num_frames_10ms(559) == 1);
  CHECK(dmenc::num_frames_10ms(560) == 2);
  CHECK(dmenc::num_frames_10ms(16000) == 98);
}

TEST_CASE("silence maps to the log power floor") {
  Waveform w{VecF(VecF::Zero(kSampleRate / 2)), kSampleRate};
  const auto f = dmenc::fbank(w);
  const float floor_log = std::log(static_cast<float>(dmenc::kLogFloor));
  CHECK(f.frames.minCoeff() == doctest::Approx(floor_log).epsilon(1e-4));
  CHECK(f.frames.maxCoeff() == doctest::Approx(floor_log).epsilon(1e-4));
}

TEST_CASE("tone energy lands in frequency-ordered mel bins") {
  const Waveform low{sine(200.0, 0.5), kSampleRate};
  const Waveform high{sine(3000.0, 0.5), kSampleRate};
  const auto fl = dmenc::fbank(low);
  const auto fh = dmenc::fbank(high);
  index_t bin_low, bin_high;
  fl.frames.colwise().sum().maxCoeff(&bin_low);
  fh.frames.colwise().sum().maxCoeff(&bin_high);
  CHECK(bin_low < bin_high);
}

TEST_CASE("too-short audio raises instead of producing zero frames") {
  Waveform w{VecF(VecF::Zero(100)), kSampleRate};
  CHECK_THROWS_AS(dmenc::fbank(w), dmenc::DataError);
}

TEST_CASE("cmvn standardizes every feature column") {
  const Waveform w{sine(440.0, 1.0) + 0.1f * sine(97.0, 1.0), kSampleRate};
  const auto f = dmenc::cmvn(dmenc::fbank(w));
  const auto T = static_cast<double>(f.frames.rows());
  int standardized = 0;
  for (index_t j = 0; j < f.frames.cols(); ++j) {
    const double mean = f.frames.col(j).cast<double>().mean();
    const double var = f.frames.col(j).cast<double>().array().square().sum() / T;
    // Near-constant columns (floored bins, stationary tone bins) are float
    // rounding noise scaled by a huge inverse std; they stay bounded but
    // carry no statistics worth pinning. Columns with real spread must be
    // standardized.
    CHECK(var < 1.05);
    CHECK(std::abs(mean) < 0.5);
    if (var > 0.5) {
      CHECK(std::abs(mean) < 5e-3);
      ++standardized;
    }
  }
  CHECK(standardized > f.frames.cols() / 2);
}

TEST_CASE("stacking concatenates four 10 ms frames oldest first") {
  dmenc::FbankFeatures f;
  f.frames.resize(9, 2);
  for (index_t t = 0; t < 9; ++t) {
    f.frames(t, 0) = static_cast<float>(t);
    f.frames(t, 1) = static_cast<float>(10 + t);
  }
  const auto out = dmenc::stack_downsample(f);
  // 9 frames stack to 2 rows of 8 columns; the 9th frame is dropped.
  REQUIRE(out.frames.rows() == 2);
  REQUIRE(out.frames.cols() == 8);
  CHECK(out.frames(0, 0) == 0.0f);
  CHECK(out.frames(0, 2) == 1.0f);
  CHECK(out.frames(0, 7) == 13.0f);
  CHECK(out.frames(1, 0) == 4.0f);
  CHECK(out.frames(1, 7) == 17.0f);

  dmenc::FbankFeatures tiny;
  tiny.frames.resize(3, 2);
  tiny.frames.setZero();
  CHECK_THROWS_AS(dmenc::stack_downsample(tiny), dmenc::DataError);
}

TEST_CASE("one second of audio becomes 24 encoder rows of width 512") {
  const Waveform w{sine(300.0, 1.0), kSampleRate};
  const auto in = dmenc::waveform_to_input(w);
  CHECK(in.frames.rows() == 24);  // 98 x 10 ms frames / 4
  CHECK(in.frames.cols() == 512);  // 128 mels x 4
  CHECK(dmenc::EncoderInput::frame_rate_s == 0.040);
}

TEST_CASE("feature cache round-trips encoder input exactly") {
  TempDir tmp("fcache");
  const Waveform w{sine(500.0, 0.5), kSampleRate};
  const auto in = dmenc::waveform_to_input(w);
  dmenc::write_feature_cache(tmp.path, "utt_x", in);
  const auto back = dmenc::read_feature_cache(tmp.path, "utt_x");
  REQUIRE(back.frames.rows() == in.frames.rows());
  REQUIRE(back.frames.cols() == in.frames.cols());
  CHECK((back.frames - in.frames).array().abs().maxCoeff() == 0.0f);
}
