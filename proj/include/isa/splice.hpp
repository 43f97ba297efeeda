#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isa/annotations.hpp"
#include "isa/audio.hpp"

namespace isa {

struct WordToken {
  std::string text;
  double start = 0.0;
  double end = 0.0;
  std::size_t index = 0;  // position in the transcript

  double duration() const { return end - start; }
};

struct Transcript {
  std::string utt_id;
  std::string audio_path;
  Language language = Language::Other;
  std::vector<WordToken> words;
};

// Transcript file: lines {"utt_id","audio_path","words":[{"text","start","end"},...]}
// with an optional "language". Word indices are assigned in file order.
std::vector<Transcript> parse_transcripts(std::istream& in);
std::vector<Transcript> read_transcripts(const std::string& path);

struct SpliceConfig {
  std::size_t min_chars = 3;         // UTF-8 code points
  double min_word_dur = 0.150;       // seconds
  std::size_t min_index_gap = 4;     // words between selections
  // Strict: at least min_index_gap words strictly between two selections
  // (index distance >= min_index_gap + 1). Loose: distance >= min_index_gap.
  bool strict_spacing = true;
  double pad = 0.030;
  double fade = 0.015;
  double vad_top_db = 20.0;
  double vad_frame = 0.010;
  double gain_min = 0.5;
  double gain_max = 2.0;
  double long_utt_threshold = 10.0;  // utterances >= this get a 3-word variant
  bool annotate_core_only = false;   // default annotates the spliced span including fades

  void validate() const;
};

// Cumulative constraint relaxation used by select_words.
enum class Relaxation { None, Spacing, Chars, Duration };
std::string_view to_string(Relaxation r);

struct WordSelection {
  std::vector<WordToken> words;  // ascending by index
  Relaxation relaxation = Relaxation::None;
};

/// Seeded shuffle followed by greedy acceptance under the length, duration
/// and spacing constraints. When fewer than n words qualify, the spacing,
/// then character-length, then duration constraints are dropped in turn.
/// Throws InfeasibleError if n words cannot be chosen even with none left.
WordSelection select_words(std::span<const WordToken> transcript, std::size_t n,
                           const SpliceConfig& cfg, std::uint64_t seed);

std::size_t utf8_length(std::string_view text);

/// Drops leading and trailing frames whose RMS is more than top_db below the
/// loudest frame. Throws AllSilentError when the buffer is silent.
AudioBuffer trim_silence(const AudioBuffer& segment, double top_db, double frame_seconds = 0.010);

/// clip(rms(original) / rms(replacement), gain_min, gain_max).
/// Throws SilentSegmentError if either side has zero energy.
double match_gain(const AudioBuffer& replacement, const AudioBuffer& original,
                  double gain_min = 0.5, double gain_max = 2.0);

// Fade-in weight 0.5 * (1 - cos(pi * i / fade_len)) for sample i of the fade.
double raised_cosine(std::size_t i, std::size_t fade_len);

struct SpliceResult {
  AudioBuffer audio;
  TimeSegment tampered;   // inserted span in the output timeline, fades included
  TimeSegment core;       // inserted span without the fades
  double shift = 0.0;     // seconds added to every later timestamp
  std::size_t removed_begin = 0, removed_end = 0;  // carrier sample range replaced
  std::size_t inserted = 0;                        // replacement samples written
};

/// Replaces carrier samples [round(slot.start r) - pad, round(slot.end r) + pad)
/// with `replacement`. The first and last `fade` samples of the replacement
/// are blended against the removed carrier audio with raised-cosine weights,
/// so carrier samples outside the removed span are untouched.
/// Throws RangeError when the padded slot leaves the carrier, the sample
/// rates differ, or the replacement is shorter than two fades.
SpliceResult crossfade_splice(const AudioBuffer& carrier, const TimeSegment& slot,
                              const AudioBuffer& replacement, const SpliceConfig& cfg);

// Supplies the audio that replaces a selected word.
class ReplacementSource {
 public:
  virtual ~ReplacementSource() = default;
  virtual std::string describe() const = 0;
  virtual AudioBuffer make(const WordToken& target, std::string_view carrier_utt,
                           int sample_rate, const SpliceConfig& cfg,
                           std::uint64_t seed) const = 0;
};

// Band-limited Gaussian noise burst. Its length is the padded slot length
// times a seeded factor drawn from [min_scale, max_scale].
class SyntheticSource final : public ReplacementSource {
 public:
  SyntheticSource(double min_scale = 0.8, double max_scale = 1.25, double level = 0.1);
  std::string describe() const override { return "synthetic"; }
  AudioBuffer make(const WordToken& target, std::string_view carrier_utt, int sample_rate,
                   const SpliceConfig& cfg, std::uint64_t seed) const override;

 private:
  double min_scale_, max_scale_, level_;
};

// Cuts a word from another utterance. Donor words must meet the length and
// duration constraints and never come from the carrier itself.
class DonorSource final : public ReplacementSource {
 public:
  void add(const Transcript& transcript, AudioBuffer audio, const SpliceConfig& cfg);
  std::size_t donor_count() const { return words_.size(); }
  std::string describe() const override { return "donor"; }
  AudioBuffer make(const WordToken& target, std::string_view carrier_utt, int sample_rate,
                   const SpliceConfig& cfg, std::uint64_t seed) const override;

 private:
  struct DonorWord {
    std::string utt_id;
    AudioBuffer audio;
  };
  std::vector<DonorWord> words_;
};

struct SplicedWord {
  WordToken word;
  std::string donor;      // source description
  double gain = 1.0;
  double shift = 0.0;
  std::size_t inserted_samples = 0;
  TimeSegment annotated;  // output timeline
};

struct SynthesisResult {
  AudioBuffer audio;
  UtteranceRecord record;
  Relaxation relaxation = Relaxation::None;
  std::uint64_t seed = 0;
  std::vector<SplicedWord> words;  // ascending by output time
};

/// Selects n words, then splices them right to left (trim -> gain -> splice)
/// so earlier timestamps stay valid. Ground truth is emitted in the output
/// timeline. The record's audio_path is left empty for the caller to fill.
SynthesisResult synthesize_variant(const AudioBuffer& carrier, const Transcript& transcript,
                                   const ReplacementSource& source, std::size_t n_words,
                                   const SpliceConfig& cfg, std::uint64_t seed);

// {1, 2} below the long-utterance threshold, {1, 2, 3} at or above it.
std::vector<std::size_t> family_word_counts(double duration, const SpliceConfig& cfg);

// One independently seeded variant per entry of family_word_counts().
std::vector<SynthesisResult> synthesize_family(const AudioBuffer& carrier,
                                               const Transcript& transcript,
                                               const ReplacementSource& source,
                                               const SpliceConfig& cfg, std::uint64_t seed);

std::uint64_t variant_seed(std::uint64_t seed, std::size_t n_words);

// Provenance sidecar line: seed, relaxation level, words, gains, shifts.
std::string provenance_line(const SynthesisResult& result);

}  // namespace isa
