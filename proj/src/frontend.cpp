#include "strfsed/frontend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "strfsed/fft.hpp"

namespace strfsed {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Index into [0, n) mirroring about the end samples (numpy "reflect"),
// repeating as often as needed for signals shorter than the pad.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(WavErrorKind::malformed_header, "malformed header: missing RIFF/WAVE tag");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > bytes.size()) {
        throw WavError(WavErrorKind::malformed_header, "malformed header: short fmt chunk");
      }
      format = u16(bytes.data() + body);
      channels = u16(bytes.data() + body + 2);
      rate = u32(bytes.data() + body + 4);
      bits = u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (len < 26 || body + 26 > bytes.size()) {
          throw WavError(WavErrorKind::malformed_header,
                         "malformed header: short extensible fmt chunk");
        }
        format = u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) {
        throw WavError(WavErrorKind::malformed_header, "malformed header: data before fmt");
      }
      data = bytes.data() + body;
      // Tolerate writers that leave the length field at its maximum.
      data_len = std::min<std::size_t>(len, bytes.size() - std::min(body, bytes.size()));
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) {
    throw WavError(WavErrorKind::malformed_header, "malformed header: missing fmt or data chunk");
  }
  if (channels == 0 || rate == 0) {
    throw WavError(WavErrorKind::malformed_header, "malformed header: zero channels or rate");
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw WavError(WavErrorKind::unsupported_codec,
                   "unsupported codec: format " + std::to_string(format) + ", " +
                       std::to_string(bits) + " bits");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data_len / frame_bytes;
  if (n == 0) throw WavError(WavErrorKind::empty_audio, "zero-length audio");

  Waveform wave;
  wave.sample_rate_hz = static_cast<int>(rate);
  wave.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(u16(p)) / 32768.0;
      } else {
        acc += static_cast<double>(std::bit_cast<float>(u32(p)));
      }
    }
    wave.samples[i] = acc / channels;
    if (!std::isfinite(wave.samples[i])) {
      throw WavError(WavErrorKind::malformed_header, "non-finite sample at index " + std::to_string(i));
    }
  }
  return wave;
}

void write_wav(const std::filesystem::path& path,
               const std::vector<std::vector<double>>& channels, int sample_rate_hz,
               WavEncoding encoding) {
  if (channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t n = channels.front().size();
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const auto n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_len = static_cast<std::uint32_t>(n * n_ch * (bits / 8));

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, n_ch);
  put_u32(out, static_cast<std::uint32_t>(sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(sample_rate_hz) * n_ch * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(n_ch * (bits / 8)));
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : channels) {
      if (encoding == WavEncoding::pcm16) {
        const double s = std::clamp(ch.at(i), -1.0, 32767.0 / 32768.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s * 32768.0))));
      } else {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(ch.at(i))));
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Tensor stft_magnitude(const Waveform& wave, std::size_t n_fft, std::size_t hop) {
  if (n_fft == 0 || n_fft % 2 != 0) throw std::invalid_argument("stft: n_fft must be even and positive");
  if (hop == 0) throw std::invalid_argument("stft: hop must be positive");
  const std::size_t len = wave.samples.size();
  if (len == 0) throw std::invalid_argument("stft: empty waveform");

  const std::size_t n_frames = (len + hop - 1) / hop;
  const std::size_t n_bins = n_fft / 2 + 1;
  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n_fft));
  }

  RealFft fft(1, n_fft);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> spectrum(fft.complex_size());
  Tensor out({n_frames, n_bins});
  const auto half = static_cast<std::ptrdiff_t>(n_fft / 2);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - half;
    for (std::size_t i = 0; i < n_fft; ++i) {
      frame[i] = window[i] * wave.samples[reflect_index(start + static_cast<std::ptrdiff_t>(i), len)];
    }
    fft.forward(frame, spectrum);
    for (std::size_t k = 0; k < n_bins; ++k) out.at(t, k) = std::abs(spectrum[k]);
  }
  return out;
}

void MelConfig::validate(int sample_rate_hz) const {
  if (sample_rate_hz <= 0) throw std::invalid_argument("mel: sample rate must be positive");
  if (hop == 0) throw std::invalid_argument("mel: hop must be positive");
  if (n_fft < hop) throw std::invalid_argument("mel: n_fft must be >= hop");
  if (n_mels == 0) throw std::invalid_argument("mel: n_mels must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz)) throw std::invalid_argument("mel: need 0 <= fmin < fmax");
  if (fmax_hz > sample_rate_hz / 2.0) {
    throw std::invalid_argument("mel: fmax " + std::to_string(fmax_hz) + " exceeds Nyquist " +
                                std::to_string(sample_rate_hz / 2.0));
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(const MelConfig& cfg, int sample_rate_hz) {
  cfg.validate(sample_rate_hz);
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  Tensor fb({cfg.n_mels, n_bins});
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(cfg.n_fft);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - left) / (center - left), (right - f) / (right - center)));
      fb.at(m, k) = w;
      row_sum += w;
    }
    if (row_sum > 0.0) {
      for (std::size_t k = 0; k < n_bins; ++k) fb.at(m, k) /= row_sum;
    }
  }
  return fb;
}

MelSpectrogram melspectrogram(const Waveform& wave, const MelConfig& cfg) {
  cfg.validate(wave.sample_rate_hz);
  const Tensor mag = stft_magnitude(wave, cfg.n_fft, cfg.hop);
  const Tensor fb = mel_filterbank(cfg, wave.sample_rate_hz);
  const std::size_t n_frames = mag.dim(0);
  const std::size_t n_bins = mag.dim(1);

  MelSpectrogram mel;
  mel.config = cfg;
  mel.frame_period_s = static_cast<double>(cfg.hop) / static_cast<double>(wave.sample_rate_hz);
  mel.values = Tensor({n_frames, cfg.n_mels});
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* row = mag.data() + t * n_bins;
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double* w = fb.data() + m * n_bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) acc += w[k] * row[k];
      mel.values.at(t, m) = cfg.compression == Compression::log1p
                                ? std::log1p(acc)
                                : 20.0 * std::log10(std::max(acc, 1e-5));
    }
  }
  return mel;
}

void append_f32le(std::vector<std::uint8_t>& out, double value) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

double read_f32le(const std::uint8_t* bytes) {
  return static_cast<double>(std::bit_cast<float>(u32(bytes)));
}

void write_feature_blob(const std::filesystem::path& stem, const Tensor& grid,
                        double frame_period_s) {
  if (grid.rank() != 2) throw std::invalid_argument("feature blob: grid must be 2-D");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(grid.size() * 4);
  for (double v : grid.values()) append_f32le(bytes, v);
  std::filesystem::path blob = stem;
  blob += ".f32";
  std::ofstream f(blob, std::ios::binary);
  if (!f) throw std::runtime_error("feature blob: cannot write " + blob.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));

  nlohmann::json meta = {{"n_frames", grid.dim(0)},
                         {"n_mels", grid.dim(1)},
                         {"frame_period_s", frame_period_s}};
  std::filesystem::path side = stem;
  side += ".json";
  std::ofstream j(side);
  if (!j) throw std::runtime_error("feature blob: cannot write " + side.string());
  j << meta.dump(2) << "\n";
}

FeatureBlob read_feature_blob(const std::filesystem::path& stem) {
  std::filesystem::path side = stem;
  side += ".json";
  std::ifstream j(side);
  if (!j) throw std::runtime_error("feature blob: cannot read " + side.string());
  const nlohmann::json meta = nlohmann::json::parse(j);
  const auto n_frames = meta.at("n_frames").get<std::size_t>();
  const auto n_mels = meta.at("n_mels").get<std::size_t>();

  std::filesystem::path blob = stem;
  blob += ".f32";
  std::ifstream f(blob, std::ios::binary);
  if (!f) throw std::runtime_error("feature blob: cannot read " + blob.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f),
                                        std::istreambuf_iterator<char>()};
  if (bytes.size() != n_frames * n_mels * 4) {
    throw std::runtime_error("feature blob: " + blob.string() + " holds " +
                             std::to_string(bytes.size()) + " bytes, sidecar declares " +
                             std::to_string(n_frames * n_mels * 4));
  }
  FeatureBlob out;
  out.frame_period_s = meta.at("frame_period_s").get<double>();
  out.grid = Tensor({n_frames, n_mels});
  for (std::size_t i = 0; i < out.grid.size(); ++i) out.grid[i] = read_f32le(bytes.data() + 4 * i);
  return out;
}

}  // namespace strfsed
