#include "isa/splice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "isa/errors.hpp"
#include "json.hpp"

namespace isa {

namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::size_t samples_for(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

bool spaced(const WordToken& a, const WordToken& b, const SpliceConfig& cfg) {
  std::size_t dist = a.index > b.index ? a.index - b.index : b.index - a.index;
  return dist >= cfg.min_index_gap + (cfg.strict_spacing ? 1 : 0);
}

}  // namespace

// --- transcripts ------------------------------------------------------------

std::vector<Transcript> parse_transcripts(std::istream& in) {
  std::vector<Transcript> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      Transcript t;
      t.utt_id = obj.at("utt_id").get<std::string>();
      t.audio_path = obj.at("audio_path").get<std::string>();
      if (obj.contains("language")) t.language = parse_language(obj["language"].get<std::string>());
      for (const auto& w : obj.at("words")) {
        WordToken tok{w.at("text").get<std::string>(), w.at("start").get<double>(),
                      w.at("end").get<double>(), t.words.size()};
        if (!(tok.start < tok.end) || tok.start < 0.0)
          throw ParseError(lineno, "degenerate word \"" + tok.text + "\"");
        if (!t.words.empty() && tok.start < t.words.back().end)
          throw ParseError(lineno, "words overlap or are out of order at \"" + tok.text + "\"");
        t.words.push_back(std::move(tok));
      }
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<Transcript> read_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_transcripts(in);
}

void SpliceConfig::validate() const {
  if (!(pad > 0.0) || !(fade > 0.0) || !(min_word_dur > 0.0) || !(vad_top_db > 0.0) ||
      !(vad_frame > 0.0) || !(long_utt_threshold > 0.0) || min_chars == 0)
    throw std::invalid_argument("splice parameters must be positive");
  if (fade > pad) throw std::invalid_argument("fade must not exceed pad");
  if (!(gain_min > 0.0) || gain_min > gain_max) throw std::invalid_argument("bad gain clamp");
}

std::string_view to_string(Relaxation r) {
  constexpr std::string_view names[] = {"none", "spacing", "spacing+chars",
                                        "spacing+chars+duration"};
  return names[static_cast<int>(r)];
}

// --- word selection -----------------------------------------------------------

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

WordSelection select_words(std::span<const WordToken> transcript, std::size_t n,
                           const SpliceConfig& cfg, std::uint64_t seed) {
  if (transcript.empty() || n == 0) throw InfeasibleError("nothing to select");
  std::vector<std::size_t> order(transcript.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  for (int level = 0; level <= 3; ++level) {
    const bool need_spacing = level < 1;
    const bool need_chars = level < 2;
    const bool need_duration = level < 3;
    std::vector<WordToken> chosen;
    for (std::size_t i : order) {
      const WordToken& w = transcript[i];
      if (need_chars && utf8_length(w.text) < cfg.min_chars) continue;
      if (need_duration && w.duration() < cfg.min_word_dur) continue;
      if (need_spacing &&
          !std::all_of(chosen.begin(), chosen.end(),
                       [&](const WordToken& c) { return spaced(c, w, cfg); }))
        continue;
      chosen.push_back(w);
      if (chosen.size() == n) break;
    }
    if (chosen.size() == n) {
      std::sort(chosen.begin(), chosen.end(),
                [](const WordToken& a, const WordToken& b) { return a.index < b.index; });
      return {std::move(chosen), static_cast<Relaxation>(level)};
    }
  }
  throw InfeasibleError("cannot select " + std::to_string(n) + " words from a transcript of " +
                        std::to_string(transcript.size()));
}

// --- acoustics ----------------------------------------------------------------

AudioBuffer trim_silence(const AudioBuffer& segment, double top_db, double frame_seconds) {
  if (segment.empty()) throw EmptyBufferError("trim_silence on an empty buffer");
  const auto samples = segment.samples();
  const std::size_t frame = std::max<std::size_t>(1, samples_for(frame_seconds, segment.sample_rate()));
  const std::size_t frames = (samples.size() + frame - 1) / frame;
  std::vector<double> level(frames);
  double peak = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    level[f] = rms(samples.subspan(f * frame, std::min(frame, samples.size() - f * frame)));
    peak = std::max(peak, level[f]);
  }
  if (peak <= 0.0) throw AllSilentError("segment is silent");
  const double floor = peak * std::pow(10.0, -top_db / 20.0);
  std::size_t first = 0, last = frames - 1;
  while (level[first] < floor) ++first;
  while (level[last] < floor) --last;
  const std::size_t begin = first * frame;
  const std::size_t end = std::min(samples.size(), (last + 1) * frame);
  auto kept = samples.subspan(begin, end - begin);
  return AudioBuffer(std::vector<float>(kept.begin(), kept.end()), segment.sample_rate());
}

double match_gain(const AudioBuffer& replacement, const AudioBuffer& original, double gain_min,
                  double gain_max) {
  const double rep = rms(replacement);
  const double orig = rms(original);
  if (rep <= 0.0) throw SilentSegmentError("replacement segment is silent");
  if (orig <= 0.0) throw SilentSegmentError("original word is silent");
  return std::clamp(orig / rep, gain_min, gain_max);
}

double raised_cosine(std::size_t i, std::size_t fade_len) {
  return 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) /
                               static_cast<double>(fade_len)));
}

SpliceResult crossfade_splice(const AudioBuffer& carrier, const TimeSegment& slot,
                              const AudioBuffer& replacement, const SpliceConfig& cfg) {
  const int rate = carrier.sample_rate();
  if (replacement.sample_rate() != rate) throw RangeError("replacement sample rate differs from carrier");
  const std::size_t pad = samples_for(cfg.pad, rate);
  const std::size_t fade = std::max<std::size_t>(1, samples_for(cfg.fade, rate));
  const std::size_t word_begin = seconds_to_index(slot.start, rate);
  const std::size_t word_end = seconds_to_index(slot.end, rate);
  if (!(slot.start < slot.end) || word_begin < pad || word_end + pad > carrier.length())
    throw RangeError("padded slot leaves the carrier");
  if (replacement.length() < 2 * fade) throw RangeError("replacement shorter than two fades");

  const std::size_t a = word_begin - pad;
  const std::size_t b = word_end + pad;
  const std::size_t n = replacement.length();
  const auto src = carrier.samples();
  const auto rep = replacement.samples();

  std::vector<float> out;
  out.reserve(src.size() - (b - a) + n);
  out.insert(out.end(), src.begin(), src.begin() + static_cast<std::ptrdiff_t>(a));
  for (std::size_t i = 0; i < n; ++i) {
    double value = rep[i];
    if (i < fade) {
      // Carrier continues into the removed span under the fade-in.
      value = std::lerp(static_cast<double>(src[a + i]), value, raised_cosine(i, fade));
    } else if (i >= n - fade) {
      std::size_t j = i - (n - fade);
      value = std::lerp(static_cast<double>(src[b - fade + j]), value, 1.0 - raised_cosine(j, fade));
    }
    out.push_back(static_cast<float>(value));
  }
  out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(b), src.end());

  SpliceResult r;
  r.removed_begin = a;
  r.removed_end = b;
  r.inserted = n;
  r.tampered = {static_cast<double>(a) / rate, static_cast<double>(a + n) / rate};
  r.core = {static_cast<double>(a + fade) / rate, static_cast<double>(a + n - fade) / rate};
  r.shift = (static_cast<double>(n) - static_cast<double>(b - a)) / rate;
  r.audio = AudioBuffer(std::move(out), rate);
  return r;
}

// --- replacement sources ----------------------------------------------------------

SyntheticSource::SyntheticSource(double min_scale, double max_scale, double level)
    : min_scale_(min_scale), max_scale_(max_scale), level_(level) {
  if (!(min_scale > 0.0) || min_scale > max_scale || !(level > 0.0))
    throw std::invalid_argument("bad synthetic source parameters");
}

AudioBuffer SyntheticSource::make(const WordToken& target, std::string_view, int sample_rate,
                                  const SpliceConfig& cfg, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(min_scale_, max_scale_);
  const double seconds = (target.duration() + 2.0 * cfg.pad) * scale(rng);
  const std::size_t n = std::max<std::size_t>(samples_for(seconds, sample_rate),
                                              4 * samples_for(cfg.fade, sample_rate));
  // White noise through one-pole high-pass (~100 Hz) and low-pass (~4 kHz).
  std::normal_distribution<double> white(0.0, 1.0);
  const double dt = 1.0 / sample_rate;
  const double hp_rc = 1.0 / (2.0 * std::numbers::pi * 100.0);
  const double lp_rc = 1.0 / (2.0 * std::numbers::pi * 4000.0);
  const double hp_a = hp_rc / (hp_rc + dt);
  const double lp_a = dt / (lp_rc + dt);
  std::vector<double> y(n);
  double prev_x = 0.0, hp = 0.0, lp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = white(rng);
    hp = hp_a * (hp + x - prev_x);
    prev_x = x;
    lp += lp_a * (hp - lp);
    y[i] = lp;
  }
  double energy = 0.0;
  for (double v : y) energy += v * v;
  const double norm = level_ / std::sqrt(energy / static_cast<double>(n));
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<float>(y[i] * norm);
  return AudioBuffer(std::move(samples), sample_rate);
}

void DonorSource::add(const Transcript& transcript, AudioBuffer audio, const SpliceConfig& cfg) {
  for (const auto& w : transcript.words) {
    if (utf8_length(w.text) < cfg.min_chars || w.duration() < cfg.min_word_dur) continue;
    if (w.end > audio.duration() + 0.5 / audio.sample_rate()) continue;
    words_.push_back({transcript.utt_id, extract_window(audio, w.start, w.duration())});
  }
}

AudioBuffer DonorSource::make(const WordToken&, std::string_view carrier_utt, int sample_rate,
                              const SpliceConfig&, std::uint64_t seed) const {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i].utt_id != carrier_utt) eligible.push_back(i);
  if (eligible.empty()) throw InfeasibleError("no donor words outside " + std::string(carrier_utt));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  const AudioBuffer& word = words_[eligible[pick(rng)]].audio;
  if (word.sample_rate() != sample_rate) return resample_linear(word, sample_rate);
  return word;
}

// --- variants -------------------------------------------------------------------

std::uint64_t variant_seed(std::uint64_t seed, std::size_t n_words) { return mix(seed, n_words); }

SynthesisResult synthesize_variant(const AudioBuffer& carrier, const Transcript& transcript,
                                   const ReplacementSource& source, std::size_t n_words,
                                   const SpliceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int rate = carrier.sample_rate();
  const std::size_t pad = samples_for(cfg.pad, rate);
  const std::size_t fade = std::max<std::size_t>(1, samples_for(cfg.fade, rate));

  // Only words whose padded slot fits inside the carrier are candidates.
  std::vector<WordToken> eligible;
  for (const auto& w : transcript.words) {
    std::size_t b = seconds_to_index(w.start, rate), e = seconds_to_index(w.end, rate);
    if (b >= pad && e + pad <= carrier.length()) eligible.push_back(w);
  }
  if (eligible.empty()) throw InfeasibleError(transcript.utt_id + ": no word fits inside the carrier");
  WordSelection selection = select_words(eligible, n_words, cfg, seed);
  for (std::size_t i = 1; i < selection.words.size(); ++i) {
    if (seconds_to_index(selection.words[i - 1].end, rate) + pad >
        seconds_to_index(selection.words[i].start, rate) - pad)
      throw InfeasibleError(transcript.utt_id + ": padded slots of \"" + selection.words[i - 1].text +
                            "\" and \"" + selection.words[i].text + "\" overlap");
  }

  SynthesisResult result;
  result.seed = seed;
  result.relaxation = selection.relaxation;
  AudioBuffer audio = carrier;
  struct Span {
    std::size_t begin, end;
  };
  std::vector<Span> spans;  // output-timeline sample spans, right to left

  for (auto it = selection.words.rbegin(); it != selection.words.rend(); ++it) {
    const WordToken& word = *it;
    const AudioBuffer original = extract_window(audio, word.start, word.duration());
    AudioBuffer raw = source.make(word, transcript.utt_id, rate, cfg, mix(seed, word.index + 1));
    AudioBuffer trimmed = trim_silence(raw, cfg.vad_top_db, cfg.vad_frame);
    const double gain = match_gain(trimmed, original, cfg.gain_min, cfg.gain_max);
    for (float& s : trimmed.mutable_samples()) s = static_cast<float>(s * gain);

    SpliceResult spliced = crossfade_splice(audio, {word.start, word.end}, trimmed, cfg);
    const auto delta = static_cast<std::ptrdiff_t>(spliced.inserted) -
                       static_cast<std::ptrdiff_t>(spliced.removed_end - spliced.removed_begin);
    for (auto& s : spans) {
      s.begin = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s.begin) + delta);
      s.end = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s.end) + delta);
    }
    spans.push_back({spliced.removed_begin, spliced.removed_begin + spliced.inserted});
    result.words.push_back({word, source.describe(), gain, spliced.shift, spliced.inserted, {}});
    audio = std::move(spliced.audio);
  }

  std::reverse(spans.begin(), spans.end());
  std::reverse(result.words.begin(), result.words.end());
  SegmentSet gt;
  gt.duration = audio.duration();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    std::size_t b = spans[i].begin, e = spans[i].end;
    if (cfg.annotate_core_only) {
      b += fade;
      e -= fade;
    }
    result.words[i].annotated = {static_cast<double>(b) / rate, static_cast<double>(e) / rate};
    gt.segments.push_back(result.words[i].annotated);
  }

  result.record.utt_id = transcript.utt_id + "_fake" + std::to_string(n_words) + "w";
  result.record.duration = audio.duration();
  result.record.language = transcript.language;
  result.record.variant = variant_for_count(n_words);
  result.record.ground_truth = validate_segment_set(std::move(gt), true);
  result.audio = std::move(audio);
  return result;
}

std::vector<std::size_t> family_word_counts(double duration, const SpliceConfig& cfg) {
  if (duration >= cfg.long_utt_threshold) return {1, 2, 3};
  return {1, 2};
}

std::vector<SynthesisResult> synthesize_family(const AudioBuffer& carrier,
                                               const Transcript& transcript,
                                               const ReplacementSource& source,
                                               const SpliceConfig& cfg, std::uint64_t seed) {
  std::vector<SynthesisResult> out;
  for (std::size_t n : family_word_counts(carrier.duration(), cfg))
    out.push_back(synthesize_variant(carrier, transcript, source, n, cfg, variant_seed(seed, n)));
  return out;
}

std::string provenance_line(const SynthesisResult& result) {
  ojson obj;
  obj["utt_id"] = result.record.utt_id;
  obj["seed"] = result.seed;
  obj["relaxation"] = std::string(to_string(result.relaxation));
  obj["output_samples"] = result.audio.length();
  obj["sample_rate"] = result.audio.sample_rate();
  ojson words = ojson::array();
  for (const auto& w : result.words) {
    ojson o;
    o["text"] = w.word.text;
    o["index"] = w.word.index;
    o["original"] = ojson::array({w.word.start, w.word.end});
    o["source"] = w.donor;
    o["gain"] = w.gain;
    o["shift"] = w.shift;
    o["inserted_samples"] = w.inserted_samples;
    o["annotated"] = ojson::array({w.annotated.start, w.annotated.end});
    words.push_back(o);
  }
  obj["words"] = words;
  return obj.dump();
}

}  // namespace isa
