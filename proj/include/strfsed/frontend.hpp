#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "strfsed/tensor.hpp"

namespace strfsed {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;
};

enum class WavErrorKind { io, malformed_header, unsupported_codec, empty_audio };

class WavError : public std::runtime_error {
 public:
  WavError(WavErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  WavErrorKind kind() const { return kind_; }

 private:
  WavErrorKind kind_;
};

// Reads PCM16 or float32 RIFF WAV. Stereo (or wider) is averaged to mono and
// integer samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);

enum class WavEncoding { pcm16, float32 };
// Interleaved multi-channel writer; `channels` holds one vector per channel.
void write_wav(const std::filesystem::path& path,
               const std::vector<std::vector<double>>& channels, int sample_rate_hz,
               WavEncoding encoding);

// Hann-windowed, reflect center-padded magnitude STFT.
// Result is [ceil(len / hop) x (n_fft / 2 + 1)].
Tensor stft_magnitude(const Waveform& wave, std::size_t n_fft, std::size_t hop);

enum class Compression { log1p, db };

struct MelConfig {
  std::size_t n_fft = 17640;
  std::size_t hop = 8820;
  std::size_t n_mels = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 22050.0;
  Compression compression = Compression::log1p;

  // Throws std::invalid_argument naming the violated bound.
  void validate(int sample_rate_hz) const;
};

struct MelSpectrogram {
  Tensor values;  // [n_frames x n_mels]
  double frame_period_s = 0.0;
  MelConfig config;

  std::size_t n_frames() const { return values.dim(0); }
  std::size_t n_mels() const { return values.dim(1); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// HTK-scale triangular filters, peak 1 at each center, then each row scaled
// to unit sum. Shape [n_mels x (n_fft / 2 + 1)].
Tensor mel_filterbank(const MelConfig& cfg, int sample_rate_hz);

MelSpectrogram melspectrogram(const Waveform& wave, const MelConfig& cfg = {});

// Feature blob: little-endian float32 row-major grid in `<stem>.f32` plus a
// `<stem>.json` sidecar {"n_frames","n_mels","frame_period_s"}.
void write_feature_blob(const std::filesystem::path& stem, const Tensor& grid,
                        double frame_period_s);
struct FeatureBlob {
  Tensor grid;
  double frame_period_s = 0.0;
};
FeatureBlob read_feature_blob(const std::filesystem::path& stem);

// Little-endian float32 helpers shared by the blob and checkpoint formats.
void append_f32le(std::vector<std::uint8_t>& out, double value);
double read_f32le(const std::uint8_t* bytes);

}  // namespace strfsed
