#include "isa/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "isa/errors.hpp"

namespace isa {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// Slack when converting a duration to a sample count, so that e.g.
// 0.15 s * 16000 does not floor to 2399 because of float64 noise.
constexpr double kCountSlack = 1e-6;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}

struct WavFormat {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const WavFormat& fmt) {
  if (fmt.tag == kFormatFloat) {
    if (fmt.bits == 32) {
      std::uint32_t raw = le32(p);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      return f;
    }
    std::uint64_t raw = std::uint64_t(le32(p)) | std::uint64_t(le32(p + 4)) << 32;
    double d;
    std::memcpy(&d, &raw, sizeof d);
    return d;
  }
  switch (fmt.bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | std::int32_t(p[1]) << 8 | std::int32_t(p[2]) << 16;
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

std::string wav_header(std::uint16_t tag, std::uint16_t bits, int rate, std::size_t frames) {
  const std::uint32_t block = bits / 8;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * block);
  std::string h;
  h += "RIFF";
  put32(h, 36 + data_bytes);
  h += "WAVEfmt ";
  put32(h, 16);
  put16(h, tag);
  put16(h, 1);
  put32(h, static_cast<std::uint32_t>(rate));
  put32(h, static_cast<std::uint32_t>(rate) * block);
  put16(h, static_cast<std::uint16_t>(block));
  put16(h, bits);
  h += "data";
  put32(h, data_bytes);
  return h;
}

}  // namespace

AudioBuffer::AudioBuffer(std::vector<float> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (sample_rate <= 0) throw UnsupportedFormatError("sample rate must be positive");
}

std::size_t seconds_to_index(double seconds, int sample_rate) {
  return static_cast<std::size_t>(std::floor(seconds * sample_rate + 0.5));
}

AudioBuffer load_audio(const std::string& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw UnsupportedFormatError(path + ": not a RIFF/WAVE file");

  WavFormat fmt;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::size_t size = le32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw UnsupportedFormatError(path + ": truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      fmt.tag = le16(f);
      fmt.channels = le16(f + 2);
      fmt.rate = le32(f + 4);
      fmt.bits = le16(f + 14);
      if (fmt.tag == kFormatExtensible) {
        if (avail < 26) throw UnsupportedFormatError(path + ": truncated extensible fmt chunk");
        fmt.tag = le16(f + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (fmt.channels == 0 || fmt.rate == 0) throw UnsupportedFormatError(path + ": no fmt chunk");
  if (data == nullptr) throw UnsupportedFormatError(path + ": no data chunk");
  bool supported = (fmt.tag == kFormatPcm &&
                    (fmt.bits == 8 || fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32)) ||
                   (fmt.tag == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64));
  if (!supported)
    throw UnsupportedFormatError(path + ": unsupported encoding (tag " + std::to_string(fmt.tag) +
                                 ", " + std::to_string(fmt.bits) + " bits)");

  const std::size_t width = fmt.bits / 8;
  const std::size_t frame = width * fmt.channels;
  const std::size_t frames = data_size / frame;
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) acc += decode_sample(data + i * frame + c * width, fmt);
    mono[i] = static_cast<float>(acc / fmt.channels);
  }
  AudioBuffer buf(std::move(mono), static_cast<int>(fmt.rate));
  if (target_rate > 0 && target_rate != buf.sample_rate()) return resample_linear(buf, target_rate);
  return buf;
}

void write_wav(const std::string& path, const AudioBuffer& buf) {
  std::string bytes = wav_header(kFormatFloat, 32, buf.sample_rate(), buf.length());
  for (float s : buf.samples()) {
    std::uint32_t raw;
    std::memcpy(&raw, &s, sizeof raw);
    put32(bytes, raw);
  }
  write_file(path, bytes);
}

void write_wav_pcm16(const std::string& path, const AudioBuffer& buf) {
  std::string bytes = wav_header(kFormatPcm, 16, buf.sample_rate(), buf.length());
  for (float s : buf.samples()) {
    double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    put16(bytes, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  write_file(path, bytes);
}

AudioBuffer resample_linear(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) throw UnsupportedFormatError("target rate must be positive");
  if (target_rate == buf.sample_rate() || buf.empty()) {
    return AudioBuffer(std::vector<float>(buf.samples().begin(), buf.samples().end()), target_rate);
  }
  const auto in = buf.samples();
  const double ratio = static_cast<double>(buf.sample_rate()) / target_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * target_rate / buf.sample_rate()));
  std::vector<float> out(out_len);
  const std::size_t last = in.size() - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    double x = static_cast<double>(i) * ratio;
    auto left = static_cast<std::size_t>(x);
    if (left >= last) {
      out[i] = in[last];
      continue;
    }
    double frac = x - static_cast<double>(left);
    out[i] = static_cast<float>(in[left] + frac * (static_cast<double>(in[left + 1]) - in[left]));
  }
  return AudioBuffer(std::move(out), target_rate);
}

AudioBuffer extract_window(const AudioBuffer& buf, double start, double dur) {
  const double rate = buf.sample_rate();
  if (!(start >= 0.0) || !(dur >= 0.0) || start + dur > buf.duration() + 0.5 / rate)
    throw RangeError("window [" + std::to_string(start) + ", " + std::to_string(start + dur) +
                     "] exceeds buffer of " + std::to_string(buf.duration()) + " s");
  std::size_t first = seconds_to_index(start, buf.sample_rate());
  auto count = static_cast<std::size_t>(std::floor(dur * rate + kCountSlack));
  first = std::min(first, buf.length());
  // Rounding the start up can push the last index one sample past the end.
  count = std::min(count, buf.length() - first);
  auto s = buf.samples().subspan(first, count);
  return AudioBuffer(std::vector<float>(s.begin(), s.end()), buf.sample_rate());
}

double rms(std::span<const float> samples) {
  if (samples.empty()) throw EmptyBufferError("rms of an empty buffer");
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

double rms(const AudioBuffer& buf) { return rms(buf.samples()); }

}  // namespace isa
