#include "isa/cli.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "isa/errors.hpp"
#include "json.hpp"

namespace isa::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

int code_for(const std::exception& e) {
  if (dynamic_cast<const ScorerError*>(&e)) return kScorerError;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return kUsageError;
  return kDataError;
}

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

// Relative audio paths are tried as given, then next to the manifest.
std::string resolve_audio(const std::string& path, const std::string& manifest) {
  fs::path p(path);
  if (p.is_absolute() || fs::exists(p)) return path;
  fs::path alt = fs::path(manifest).parent_path() / p;
  return fs::exists(alt) ? alt.string() : path;
}

ojson params_json(const IsaParams& p) {
  ojson o;
  o["coarse_window"] = p.coarse_window;
  o["coarse_stride"] = p.coarse_stride;
  o["coarse_threshold"] = p.coarse_threshold;
  o["merge_gap"] = p.merge_gap;
  o["extension"] = p.extension;
  o["fine_window"] = p.fine_window;
  o["fine_stride"] = p.fine_stride;
  o["fine_threshold"] = p.fine_threshold;
  o["cover_tail"] = p.cover_tail;
  o["refine"] = p.refine;
  return o;
}

std::unique_ptr<Scorer> build_scorer(const RunConfig& config) {
  return make_scorer(config.scorer_spec, config.seed);
}

std::vector<PredictionRecord> collect_predictions(const std::vector<UtteranceRun>& runs) {
  std::vector<PredictionRecord> out;
  for (const auto& r : runs)
    if (r.record) out.push_back(*r.record);
  return out;
}

int summarize_failures(const std::vector<UtteranceRun>& runs) {
  int code = kSuccess;
  for (const auto& r : runs) {
    if (r.error.empty()) continue;
    std::cerr << "error: " << r.utt_id << ": " << r.error << "\n";
    code = std::max(code, r.error_code);
  }
  return code;
}

}  // namespace

// --- localize ---------------------------------------------------------------

std::vector<UtteranceRun> localize_all(const std::vector<UtteranceRecord>& manifest,
                                       const Scorer& scorer, const RunConfig& config) {
  config.isa_params.validate();
  std::vector<UtteranceRun> runs(manifest.size());
  std::vector<std::exception_ptr> failures(manifest.size());
  const int workers = std::max(1, config.workers);
  const Execution inner = workers > 1 ? Execution::Serial : Execution::Parallel;

  auto process = [&](std::size_t i) {
    const UtteranceRecord& rec = manifest[i];
    UtteranceRun& run = runs[i];
    run.utt_id = rec.utt_id;
    try {
      ScoringContext ctx;
      ctx.utt_id = rec.utt_id;
      ctx.audio_path = resolve_audio(rec.audio_path, config.manifest);
      ctx.duration = rec.duration;
      ctx.ground_truth = &rec.ground_truth;
      AudioBuffer audio;
      if (scorer.needs_audio()) {
        audio = load_audio(ctx.audio_path, config.sample_rate);
        ctx.audio = &audio;
        ctx.duration = audio.duration();
      }
      PipelineResult result = run_mode(scorer, ctx, config.isa_params, config.mode, inner);
      run.record = std::move(result.record);
      run.coarse_calls = result.coarse_calls;
      run.fine_calls = result.fine_calls;
      run.trace = result.trace(ctx);
    } catch (const std::exception& e) {
      run.error = e.what();
      run.error_code = code_for(e);
      failures[i] = std::current_exception();
    }
  };

  const auto n = static_cast<std::ptrdiff_t>(manifest.size());
  if (workers == 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) process(static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for num_threads(workers) schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) process(static_cast<std::size_t>(i));
  }
  if (config.strict)
    for (const auto& f : failures)
      if (f) std::rethrow_exception(f);
  return runs;
}

int run_localize(const RunConfig& config) {
  auto manifest = read_manifest(config.manifest);
  auto scorer = build_scorer(config);
  auto runs = localize_all(manifest, *scorer, config);
  write_predictions(config.output, collect_predictions(runs));

  ojson log;
  log["command"] = "localize";
  log["manifest"] = config.manifest;
  log["mode"] = std::string(to_string(config.mode));
  log["scorer"] = scorer->describe();
  log["params"] = params_json(config.isa_params);
  log["workers"] = config.workers;
  ojson utts = ojson::array();
  std::size_t total = 0;
  for (const auto& r : runs) {
    ojson u;
    u["utt_id"] = r.utt_id;
    u["coarse_calls"] = r.coarse_calls;
    u["fine_calls"] = r.fine_calls;
    u["total_calls"] = r.coarse_calls + r.fine_calls;
    if (r.record) u["n_pred"] = r.record->predictions.count();
    if (!r.error.empty()) u["error"] = r.error;
    total += r.coarse_calls + r.fine_calls;
    utts.push_back(u);
  }
  log["utterances"] = utts;
  log["total_calls"] = total;
  write_text(config.log.empty() ? config.output + ".log.json" : config.log, log.dump(2) + "\n");
  return summarize_failures(runs);
}

// --- evaluate -----------------------------------------------------------------

int run_evaluate(const RunConfig& config) {
  auto manifest = read_manifest(config.manifest);
  if (manifest.empty()) throw SchemaError("manifest " + config.manifest + " is empty");
  auto predictions = read_predictions(config.predictions);
  EvalOptions options;
  options.taus = config.tau_list;
  options.genuine_policy = config.genuine_policy;
  auto report = evaluate_dataset(manifest, predictions, options);
  for (const auto& id : report.missing_predictions)
    std::cerr << "warning: no prediction for " << id << ", scored as empty\n";
  write_text(config.output, report_to_json(report));
  std::string csv = config.csv;
  if (csv.empty()) csv = fs::path(config.output).replace_extension(".csv").string();
  write_text(csv, report_to_csv(report));
  return kSuccess;
}

// --- scores -------------------------------------------------------------------

int run_scores(const RunConfig& config) {
  auto manifest = read_manifest(config.manifest);
  auto scorer = build_scorer(config);
  auto runs = localize_all(manifest, *scorer, config);
  auto out = open_out(config.output);
  for (const auto& r : runs) write_score_file(out, r.trace);
  return summarize_failures(runs);
}

// --- synthesize -----------------------------------------------------------------

int run_synthesize(const RunConfig& config) {
  config.splice.validate();
  auto transcripts = read_transcripts(config.transcripts);
  const std::uint64_t seed = config.seed.value_or(0);
  fs::create_directories(config.out_dir);

  std::unique_ptr<ReplacementSource> source;
  std::map<std::string, AudioBuffer> carriers;
  for (const auto& t : transcripts)
    carriers.emplace(t.utt_id, load_audio(resolve_audio(t.audio_path, config.transcripts),
                                          config.sample_rate));
  if (config.source == "synthetic") {
    source = std::make_unique<SyntheticSource>();
  } else if (config.source == "donor") {
    auto donor = std::make_unique<DonorSource>();
    for (const auto& t : transcripts) donor->add(t, carriers.at(t.utt_id), config.splice);
    source = std::move(donor);
  } else {
    throw std::invalid_argument("unknown replacement source \"" + config.source + "\"");
  }

  std::vector<UtteranceRecord> records;
  std::ostringstream provenance;
  int code = kSuccess;
  for (const auto& t : transcripts) {
    const AudioBuffer& carrier = carriers.at(t.utt_id);
    try {
      std::vector<SynthesisResult> variants;
      if (config.family) {
        variants = synthesize_family(carrier, t, *source, config.splice, seed);
      } else {
        variants.push_back(synthesize_variant(carrier, t, *source, config.n_words, config.splice,
                                              variant_seed(seed, config.n_words)));
      }
      if (config.include_real) {
        UtteranceRecord real;
        real.utt_id = t.utt_id;
        real.audio_path = resolve_audio(t.audio_path, config.transcripts);
        real.duration = carrier.duration();
        real.language = t.language;
        real.variant = Variant::Real;
        real.ground_truth = {{}, carrier.duration()};
        records.push_back(real);
      }
      for (auto& v : variants) {
        v.record.audio_path = (fs::path(config.out_dir) / (v.record.utt_id + ".wav")).string();
        write_wav(v.record.audio_path, v.audio);
        records.push_back(v.record);
        provenance << provenance_line(v) << '\n';
      }
    } catch (const DataError& e) {
      if (config.strict) throw;
      std::cerr << "error: " << t.utt_id << ": " << e.what() << "\n";
      code = kDataError;
    }
  }
  write_manifest(config.output, records);
  write_text(config.provenance.empty() ? config.output + ".provenance.jsonl" : config.provenance,
             provenance.str());
  return code;
}

// --- report (window sweep + stage ablations) -----------------------------------

int run_report(const RunConfig& config) {
  auto manifest = read_manifest(config.manifest);
  if (manifest.empty()) throw SchemaError("manifest " + config.manifest + " is empty");
  auto scorer = build_scorer(config);
  fs::create_directories(config.out_dir);

  struct Variant {
    std::string name;
    IsaParams params;
  };
  std::vector<Variant> variants;
  for (double w : config.sweep_windows) {
    IsaParams p = config.isa_params;
    p.coarse_window = w;
    p.coarse_stride = w / 2.0;
    variants.push_back({"window_" + tau_key(w), p});
  }
  IsaParams no_gap = config.isa_params;
  no_gap.merge_gap = 0;
  IsaParams no_refine = config.isa_params;
  no_refine.refine = false;
  variants.push_back({"full", config.isa_params});
  variants.push_back({"no_gap_merge", no_gap});
  variants.push_back({"no_refine", no_refine});

  std::ostringstream csv;
  csv << "config,coarse_window,coarse_stride,merge_gap,refine,mean_calls,ca,miou";
  for (double tau : config.tau_list) csv << ",sf1@" << tau_key(tau);
  csv << '\n';
  ojson rows = ojson::array();
  int code = kSuccess;

  for (const auto& v : variants) {
    RunConfig run = config;
    run.isa_params = v.params;
    run.mode = InferenceMode::Isa;
    auto runs = localize_all(manifest, *scorer, run);
    code = std::max(code, summarize_failures(runs));
    EvalOptions options;
    options.taus = config.tau_list;
    options.genuine_policy = config.genuine_policy;
    auto report = evaluate_dataset(manifest, collect_predictions(runs), options);
    write_text((fs::path(config.out_dir) / (v.name + ".report.json")).string(), report_to_json(report));

    double calls = 0.0;
    for (const auto& r : runs) calls += static_cast<double>(r.coarse_calls + r.fine_calls);
    calls /= static_cast<double>(runs.size());
    ojson row;
    row["config"] = v.name;
    row["params"] = params_json(v.params);
    row["mean_calls"] = calls;
    row["ca"] = report.overall.ca;
    row["miou"] = report.overall.miou ? ojson(*report.overall.miou) : ojson(nullptr);
    csv << v.name << ',' << v.params.coarse_window << ',' << v.params.coarse_stride << ','
        << v.params.merge_gap << ',' << (v.params.refine ? 1 : 0) << ',' << calls << ','
        << report.overall.ca << ',' << (report.overall.miou ? std::to_string(*report.overall.miou) : "");
    for (const auto& t : report.overall.per_tau) {
      row["sf1@" + tau_key(t.tau)] = t.sf1 ? ojson(*t.sf1) : ojson(nullptr);
      csv << ',' << (t.sf1 ? std::to_string(*t.sf1) : "");
    }
    csv << '\n';
    rows.push_back(row);
  }
  ojson summary;
  summary["scorer"] = scorer->describe();
  summary["manifest"] = config.manifest;
  summary["rows"] = rows;
  write_text((fs::path(config.out_dir) / "sweep.json").string(), summary.dump(2) + "\n");
  write_text((fs::path(config.out_dir) / "sweep.csv").string(), csv.str());
  return code;
}

// --- argument parsing -------------------------------------------------------------

namespace {

struct IsaFlags {
  IsaParams p;
  std::string scorer;
  std::string mode;
  std::vector<double> tau;
  std::uint64_t seed = 0;
  int workers = 1;
  int sample_rate = kDefaultSampleRate;
  bool strict = false;
  bool no_cover_tail = false;
  bool no_refine = false;
  bool no_gap_merge = false;
  bool count_genuine = false;
  std::string config_file;
  std::map<std::string, CLI::Option*> opts;
};

void add_common(CLI::App* app, IsaFlags& f) {
  f.opts["config"] = app->add_option("--config", f.config_file, "JSON config file (flags override it)")
                         ->check(CLI::ExistingFile);
  f.opts["seed"] = app->add_option("--seed", f.seed, "Random seed");
  f.opts["workers"] = app->add_option("--workers", f.workers, "Utterances processed in parallel")
                          ->check(CLI::PositiveNumber);
  f.opts["strict"] = app->add_flag("--strict", f.strict, "Abort on the first failing utterance");
  f.opts["sample_rate"] = app->add_option("--sample-rate", f.sample_rate, "Internal sample rate (Hz)")
                              ->check(CLI::PositiveNumber);
}

void add_isa(CLI::App* app, IsaFlags& f) {
  add_common(app, f);
  f.opts["coarse_window"] = app->add_option("--coarse-window", f.p.coarse_window, "W (s)");
  f.opts["coarse_stride"] = app->add_option("--coarse-stride", f.p.coarse_stride, "S (s); defaults to W/2 when only W is given");
  f.opts["coarse_threshold"] = app->add_option("--coarse-threshold", f.p.coarse_threshold, "delta");
  f.opts["merge_gap"] = app->add_option("--merge-gap", f.p.merge_gap, "g (windows)");
  f.opts["extension"] = app->add_option("--extension", f.p.extension, "Delta (s)");
  f.opts["fine_window"] = app->add_option("--fine-window", f.p.fine_window, "W' (s)");
  f.opts["fine_stride"] = app->add_option("--fine-stride", f.p.fine_stride, "S' (s)");
  f.opts["fine_threshold"] = app->add_option("--fine-threshold", f.p.fine_threshold, "delta'");
  f.opts["no_cover_tail"] = app->add_flag("--no-cover-tail", f.no_cover_tail, "Do not append a right-aligned final window");
  f.opts["no_refine"] = app->add_flag("--no-refine", f.no_refine, "Skip boundary refinement");
  f.opts["no_gap_merge"] = app->add_flag("--no-gap-merge", f.no_gap_merge, "Use g = 0");
  f.opts["scorer"] = app->add_option("--scorer", f.scorer,
                                     "oracle[:sigma[:min_overlap]] | energy | constant:V | "
                                     "precomputed:FILE | external:CMD");
  f.opts["mode"] = app->add_option("--mode", f.mode, "isa | coarse_only | frame_level | utterance_level")
                       ->check(CLI::IsMember({"isa", "coarse_only", "frame_level", "utterance_level"}));
}

void add_tau(CLI::App* app, IsaFlags& f) {
  f.opts["tau"] = app->add_option("--tau", f.tau, "IoU thresholds (repeatable)")->delimiter(',');
  f.opts["count_genuine"] = app->add_flag(
      "--count-genuine-false-alarms", f.count_genuine,
      "Genuine utterances with predictions enter the SF1 average as 0");
}

bool given(const IsaFlags& f, const char* key) {
  auto it = f.opts.find(key);
  return it != f.opts.end() && it->second->count() > 0;
}

// defaults < config file < flags
void resolve(const IsaFlags& f, RunConfig& config) {
  ojson file = ojson::object();
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    try {
      file = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config " + f.config_file + ": " + e.what());
    }
    if (!file.is_object()) throw std::invalid_argument("config file must hold a JSON object");
  }
  auto pick = [&](const char* key, auto& target, const auto& flag_value) {
    using T = std::decay_t<decltype(target)>;
    if (given(f, key)) {
      target = flag_value;
      return true;
    }
    if (file.contains(key)) {
      try {
        target = file[key].template get<T>();
      } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config field \"") + key + "\" has the wrong type");
      }
      return true;
    }
    return false;
  };

  IsaParams& p = config.isa_params;
  bool window_set = pick("coarse_window", p.coarse_window, f.p.coarse_window);
  bool stride_set = pick("coarse_stride", p.coarse_stride, f.p.coarse_stride);
  if (window_set && !stride_set) p.coarse_stride = p.coarse_window / 2.0;
  pick("coarse_threshold", p.coarse_threshold, f.p.coarse_threshold);
  pick("merge_gap", p.merge_gap, f.p.merge_gap);
  pick("extension", p.extension, f.p.extension);
  pick("fine_window", p.fine_window, f.p.fine_window);
  pick("fine_stride", p.fine_stride, f.p.fine_stride);
  pick("fine_threshold", p.fine_threshold, f.p.fine_threshold);
  if (given(f, "no_cover_tail")) p.cover_tail = false;
  else if (file.contains("cover_tail")) p.cover_tail = file["cover_tail"].get<bool>();
  if (given(f, "no_refine")) p.refine = false;
  else if (file.contains("refine")) p.refine = file["refine"].get<bool>();
  if (given(f, "no_gap_merge")) p.merge_gap = 0;

  pick("scorer", config.scorer_spec, f.scorer);
  std::string mode(to_string(config.mode));
  if (pick("mode", mode, f.mode)) config.mode = parse_mode(mode);
  pick("tau", config.tau_list, f.tau);
  std::uint64_t seed = 0;
  if (pick("seed", seed, f.seed)) config.seed = seed;
  pick("workers", config.workers, f.workers);
  pick("strict", config.strict, f.strict);
  pick("sample_rate", config.sample_rate, f.sample_rate);
  bool count_genuine = false;
  if (pick("count_genuine_false_alarms", count_genuine, f.count_genuine) && count_genuine)
    config.genuine_policy = GenuinePolicy::CountFalseAlarms;

  for (double tau : config.tau_list)
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau values must lie in (0, 1]");
  p.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-region tamper localization, SF1 evaluation and splice fixture synthesis"};
  app.require_subcommand(1);

  RunConfig config;
  IsaFlags loc, sco, rep, eva, syn;

  auto* localize = app.add_subcommand("localize", "Predict tampered segments for every manifest entry");
  add_isa(localize, loc);
  localize->add_option("--manifest", config.manifest, "Manifest (JSONL)")->required()->check(CLI::ExistingFile);
  localize->add_option("--out", config.output, "Prediction file to write")->required();
  localize->add_option("--log", config.log, "Run log (default: <out>.log.json)");

  auto* scores = app.add_subcommand("scores", "Write every window score the pipeline requests");
  add_isa(scores, sco);
  scores->add_option("--manifest", config.manifest, "Manifest (JSONL)")->required()->check(CLI::ExistingFile);
  scores->add_option("--out", config.output, "Score file to write")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  add_common(evaluate, eva);
  add_tau(evaluate, eva);
  evaluate->add_option("--manifest", config.manifest, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--predictions", config.predictions, "Prediction file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", config.output, "Report JSON")->required();
  evaluate->add_option("--csv", config.csv, "Report CSV (default: <out> with .csv)");

  auto* report = app.add_subcommand("report", "Coarse window sweep and stage ablations");
  add_isa(report, rep);
  add_tau(report, rep);
  report->add_option("--manifest", config.manifest, "Manifest (JSONL)")->required()->check(CLI::ExistingFile);
  report->add_option("--out-dir", config.out_dir, "Directory for per-config reports")->required();
  report->add_option("--windows", config.sweep_windows, "Coarse windows to sweep (S = W/2)")->delimiter(',');

  auto* synthesize = app.add_subcommand("synthesize", "Splice replacement audio into carrier utterances");
  add_common(synthesize, syn);
  synthesize->add_option("--transcripts", config.transcripts, "Transcript file (JSONL)")->required()->check(CLI::ExistingFile);
  synthesize->add_option("--out-dir", config.out_dir, "Directory for tampered WAVs")->required();
  synthesize->add_option("--out", config.output, "Manifest to write")->required();
  synthesize->add_option("--provenance", config.provenance, "Provenance sidecar (default: <out>.provenance.jsonl)");
  synthesize->add_option("--source", config.source, "synthetic | donor")->check(CLI::IsMember({"synthetic", "donor"}));
  synthesize->add_option("--n-words", config.n_words, "Words to replace")->check(CLI::Range(1, 3));
  synthesize->add_flag("--family", config.family, "Emit the 1/2(/3)-word variant family per carrier");
  synthesize->add_flag("--include-real", config.include_real, "Also list the untouched carrier as a real variant");
  synthesize->add_option("--pad", config.splice.pad, "Padding around the original word (s)");
  synthesize->add_option("--fade", config.splice.fade, "Raised-cosine fade length (s)");
  synthesize->add_option("--top-db", config.splice.vad_top_db, "Silence trimming threshold (dB below peak)");
  synthesize->add_option("--min-index-gap", config.splice.min_index_gap, "Words required between selections");
  bool loose_spacing = false;
  synthesize->add_flag("--loose-spacing", loose_spacing, "Index distance >= gap instead of > gap");
  synthesize->add_flag("--annotate-core", config.splice.annotate_core_only, "Annotate the replacement without fades");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*localize) {
      config.command = Command::Localize;
      resolve(loc, config);
      return run_localize(config);
    }
    if (*scores) {
      config.command = Command::Scores;
      resolve(sco, config);
      return run_scores(config);
    }
    if (*evaluate) {
      config.command = Command::Evaluate;
      resolve(eva, config);
      return run_evaluate(config);
    }
    if (*report) {
      config.command = Command::Report;
      resolve(rep, config);
      return run_report(config);
    }
    config.command = Command::Synthesize;
    resolve(syn, config);
    config.splice.strict_spacing = !loose_spacing;
    return run_synthesize(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code_for(e);
  }
}

}  // namespace isa::cli
