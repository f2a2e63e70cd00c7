#include <doctest.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "strfsed/frontend.hpp"
#include "support.hpp"

using namespace strfsed;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "strfsed_frontend_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::vector<std::uint8_t> wav_header(std::uint16_t format, std::uint16_t bits, std::uint32_t data_bytes) {
  std::vector<std::uint8_t> b{'R', 'I', 'F', 'F'};
  put_u32(b, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, 1);
  put_u32(b, 8000);
  put_u32(b, 8000 * bits / 8);
  put_u16(b, bits / 8);
  put_u16(b, bits);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, data_bytes);
  return b;
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

TEST_CASE("pcm16 square wave loads with full-scale alternation") {
  std::vector<double> square(44100);
  for (std::size_t i = 0; i < square.size(); ++i) square[i] = i % 2 ? -1.0 : 32767.0 / 32768.0;
  const auto path = scratch("square.wav");
  write_wav(path, {square}, 44100, WavEncoding::pcm16);
  const Waveform w = load_wav(path);
  REQUIRE(w.samples.size() == 44100);
  CHECK(w.sample_rate_hz == 44100);
  CHECK(w.samples[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(w.samples[1] == -1.0);
}

TEST_CASE("stereo channels are averaged") {
  const auto path = scratch("stereo.wav");
  write_wav(path, {std::vector<double>(100, 0.5), std::vector<double>(100, -0.5)}, 8000,
            WavEncoding::float32);
  const Waveform w = load_wav(path);
  REQUIRE(w.samples.size() == 100);
  for (double v : w.samples) CHECK(v == 0.0);
}

TEST_CASE("wav error kinds are distinct") {
  auto kind_of = [](const fs::path& p) {
    try {
      load_wav(p);
    } catch (const WavError& e) {
      return e.kind();
    }
    FAIL("no error");
    return WavErrorKind::io;
  };
  const auto truncated = scratch("truncated.wav");
  write_bytes(truncated, {'R', 'I', 'F', 'F', 0, 0});
  CHECK(kind_of(truncated) == WavErrorKind::malformed_header);

  const auto adpcm = scratch("adpcm.wav");
  auto b = wav_header(2, 4, 4);
  b.insert(b.end(), 4, 0);
  write_bytes(adpcm, b);
  CHECK(kind_of(adpcm) == WavErrorKind::unsupported_codec);

  const auto empty = scratch("empty.wav");
  write_bytes(empty, wav_header(1, 16, 0));
  CHECK(kind_of(empty) == WavErrorKind::empty_audio);

  CHECK(kind_of(scratch("missing.wav")) == WavErrorKind::io);
}

TEST_CASE("stft of silence is zero and frame count is ceil(len/hop)") {
  Waveform w{std::vector<double>(1000, 0.0), 8000};
  const Tensor m = stft_magnitude(w, 256, 100);
  CHECK(m.shape() == Shape{10, 129});
  for (double v : m.values()) CHECK(v == 0.0);
  CHECK_THROWS(stft_magnitude(w, 255, 100));
  CHECK_THROWS(stft_magnitude(w, 256, 0));
}

TEST_CASE("bin-centred sine peaks at its bin") {
  const std::size_t n_fft = 512, k = 37;
  Waveform w{std::vector<double>(8192), 16000};
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = std::sin(2.0 * std::numbers::pi * double(k) * double(i) / double(n_fft));
  }
  const Tensor m = stft_magnitude(w, n_fft, 128);
  for (std::size_t t = 4; t + 4 < m.dim(0); ++t) {
    std::size_t best = 0;
    for (std::size_t b = 0; b < m.dim(1); ++b) {
      if (m.at(t, b) > m.at(t, best)) best = b;
    }
    CHECK(best == k);
  }
}

TEST_CASE("stft matches a naive per-frame DFT") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Waveform w{std::vector<double>(4096), 16000};
  for (double& v : w.samples) v = d(rng);
  const std::size_t n_fft = 512, hop = 128;
  const Tensor m = stft_magnitude(w, n_fft, hop);
  double worst = 0.0;
  for (std::size_t t = 0; t < m.dim(0); t += 5) {
    for (std::size_t k = 0; k <= n_fft / 2; k += 3) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n_fft; ++i) {
        const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n_fft));
        const auto idx = reflect(static_cast<std::ptrdiff_t>(t * hop + i) - 256, w.samples.size());
        acc += win * w.samples[idx] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / double(n_fft));
      }
      worst = std::max(worst, std::abs(std::abs(acc) - m.at(t, k)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("default mel config: 180 s clip gives 900 frames at 0.2 s") {
  Waveform w{std::vector<double>(180 * 44100, 0.0), 44100};
  const MelSpectrogram mel = melspectrogram(w);
  CHECK(mel.n_frames() == 900);
  CHECK(mel.n_mels() == 64);
  CHECK(mel.frame_period_s == doctest::Approx(0.2));
  for (double v : mel.values.values()) CHECK(v == 0.0);
}

TEST_CASE("filterbank matches an independent HTK construction") {
  MelConfig cfg;
  cfg.n_fft = 2048;
  cfg.hop = 512;
  cfg.n_mels = 40;
  cfg.fmax_hz = 11025.0;
  const int sr = 22050;
  const Tensor fb = mel_filterbank(cfg, sr);
  auto mel = [](double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); };
  const std::size_t bins = cfg.n_fft / 2 + 1;
  double worst = 0.0;
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = hz(mel(0.0) + (mel(cfg.fmax_hz) - mel(0.0)) * double(m) / double(cfg.n_mels + 1));
    const double c = hz(mel(0.0) + (mel(cfg.fmax_hz) - mel(0.0)) * double(m + 1) / double(cfg.n_mels + 1));
    const double hi = hz(mel(0.0) + (mel(cfg.fmax_hz) - mel(0.0)) * double(m + 2) / double(cfg.n_mels + 1));
    std::vector<double> row(bins);
    double total = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * sr / double(cfg.n_fft);
      double v = 0.0;
      if (f > lo && f < c) v = (f - lo) / (c - lo);
      else if (f >= c && f < hi) v = (hi - f) / (hi - c);
      row[k] = v;
      total += v;
    }
    REQUIRE(total > 0.0);
    for (std::size_t k = 0; k < bins; ++k) worst = std::max(worst, std::abs(row[k] / total - fb.at(m, k)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("white noise reaches every mel bin; scaling is monotone") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.1);
  Waveform w{std::vector<double>(22050 * 2), 22050};
  for (double& v : w.samples) v = g(rng);
  MelConfig cfg;
  cfg.n_fft = 2048;
  cfg.hop = 1024;
  cfg.fmax_hz = 11025.0;
  const MelSpectrogram a = melspectrogram(w, cfg);
  for (std::size_t m = 0; m < a.n_mels(); ++m) {
    double col = 0.0;
    for (std::size_t t = 0; t < a.n_frames(); ++t) col += a.values.at(t, m);
    CHECK(col > 0.0);
  }
  Waveform louder = w;
  for (double& v : louder.samples) v *= 2.5;
  const MelSpectrogram b = melspectrogram(louder, cfg);
  CHECK(b.values.shape() == a.values.shape());
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(b.values[i] >= a.values[i]);

  cfg.compression = Compression::db;
  const MelSpectrogram db = melspectrogram(w, cfg);
  CHECK(db.values.all_finite());
}

TEST_CASE("mel config validation") {
  MelConfig cfg;
  cfg.fmax_hz = 30000.0;
  CHECK_THROWS_AS(cfg.validate(44100), std::invalid_argument);
  cfg = {};
  cfg.hop = 0;
  CHECK_THROWS(cfg.validate(44100));
  cfg = {};
  cfg.n_fft = 100;
  CHECK_THROWS(cfg.validate(44100));
}

TEST_CASE("feature blob round trip and size check") {
  std::mt19937_64 rng(2);
  Tensor grid = testing::random_tensor({7, 5}, rng);
  for (double& v : grid.values()) v = static_cast<float>(v);
  const auto stem = scratch("blob");
  write_feature_blob(stem, grid, 0.2);
  const FeatureBlob back = read_feature_blob(stem);
  CHECK(back.frame_period_s == 0.2);
  CHECK(max_abs_diff(back.grid, grid) == 0.0);
  fs::path f32 = stem;
  f32 += ".f32";
  fs::resize_file(f32, 12);
  CHECK_THROWS(read_feature_blob(stem));
}
