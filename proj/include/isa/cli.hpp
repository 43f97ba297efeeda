#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isa/metrics.hpp"
#include "isa/pipeline.hpp"
#include "isa/splice.hpp"

namespace isa::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kScorerError = 3 };

enum class Command { Localize, Evaluate, Synthesize, Scores, Report };

struct RunConfig {
  Command command = Command::Localize;
  IsaParams isa_params;
  std::string scorer_spec = "oracle";
  InferenceMode mode = InferenceMode::Isa;
  std::vector<double> tau_list{0.3, 0.5};
  GenuinePolicy genuine_policy = GenuinePolicy::Exclude;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool strict = false;
  int sample_rate = kDefaultSampleRate;

  // I/O
  std::string manifest;
  std::string predictions;
  std::string output;
  std::string log;
  std::string csv;
  std::string transcripts;
  std::string out_dir;
  std::string provenance;

  // synthesize
  SpliceConfig splice;
  std::string source = "synthetic";
  std::size_t n_words = 1;
  bool family = false;
  bool include_real = false;

  // report
  std::vector<double> sweep_windows{0.15, 0.25, 0.5, 1.0, 2.0};
};

// Per-utterance outcome of a localize run.
struct UtteranceRun {
  std::string utt_id;
  std::optional<PredictionRecord> record;
  std::vector<WindowScore> trace;
  std::size_t coarse_calls = 0;
  std::size_t fine_calls = 0;
  std::string error;
  int error_code = kSuccess;
};

/// Runs the configured mode over every manifest entry. Results come back in
/// manifest order whatever the worker count. With strict, the first failure
/// is rethrown; otherwise it is recorded on that utterance.
std::vector<UtteranceRun> localize_all(const std::vector<UtteranceRecord>& manifest,
                                       const Scorer& scorer, const RunConfig& config);

int run_localize(const RunConfig& config);
int run_evaluate(const RunConfig& config);
int run_synthesize(const RunConfig& config);
int run_scores(const RunConfig& config);
int run_report(const RunConfig& config);

// Parses argv (flags > --config file > defaults) and dispatches.
int main(int argc, char** argv);

}  // namespace isa::cli
