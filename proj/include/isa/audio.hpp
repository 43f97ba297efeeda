#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace isa {

inline constexpr int kDefaultSampleRate = 16000;

// Mono waveform. Samples are nominally in [-1, 1]; D = L / r.
class AudioBuffer {
 public:
  AudioBuffer() = default;
  AudioBuffer(std::vector<float> samples, int sample_rate);

  std::span<const float> samples() const { return samples_; }
  std::vector<float>& mutable_samples() { return samples_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t length() const { return samples_.size(); }
  double duration() const { return static_cast<double>(samples_.size()) / sample_rate_; }
  bool empty() const { return samples_.empty(); }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;

 private:
  std::vector<float> samples_;
  int sample_rate_ = kDefaultSampleRate;
};

// Seconds -> sample index, rounding half up.
std::size_t seconds_to_index(double seconds, int sample_rate);

/// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit integer or 32-bit float,
/// including WAVE_FORMAT_EXTENSIBLE), averages channels to mono and
/// resamples to `target_rate` by linear interpolation.
AudioBuffer load_audio(const std::string& path, int target_rate = kDefaultSampleRate);

// Writes 32-bit IEEE float mono WAV so that samples round-trip exactly.
void write_wav(const std::string& path, const AudioBuffer& buf);
// 16-bit PCM variant, for interop with tools that reject float WAV.
void write_wav_pcm16(const std::string& path, const AudioBuffer& buf);

AudioBuffer resample_linear(const AudioBuffer& buf, int target_rate);

/// Window of floor(dur * r) samples starting at round(start * r).
/// Throws RangeError when the window runs past the buffer by more than
/// half a sample; out-of-range reads are never zero-padded.
AudioBuffer extract_window(const AudioBuffer& buf, double start, double dur);

// Root-mean-square amplitude. Throws EmptyBufferError on an empty buffer.
double rms(const AudioBuffer& buf);
double rms(std::span<const float> samples);

}  // namespace isa
