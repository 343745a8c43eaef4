// moscope.cc
//
// Command-line front end:
//   moscope gen-synth | extract | train | grid | predict | evaluate | rank
// Logs go to stderr; results go to the named output files. Exit status is
// 0 on success, 1 on runtime or data errors and 2 on usage errors.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "moscope/analysis.h"
#include "moscope/binary_io.h"
#include "moscope/error.h"
#include "moscope/metrics.h"
#include "moscope/models.h"
#include "moscope/pipeline.h"
#include "moscope/run_config.h"
#include "moscope/synth.h"

namespace fs = std::filesystem;
using namespace moscope;

namespace {

std::optional<Split> optional_split(const std::string &s) {
  if (s.empty()) return std::nullopt;
  return parse_split(s);
}

// ---- gen-synth ------------------------------------------------------------

struct GenSynthArgs {
  fs::path out;
  SynthSpec spec;
};

int run_gen_synth(const GenSynthArgs &a) {
  CorpusManifest m = generate_corpus(a.spec, a.out);
  const OracleTables oracle = oracle_tables(a.spec);
  const std::string oracle_csv = format_oracle_csv(oracle);
  write_file_atomic(a.out / "oracle.csv", oracle_csv);
  spdlog::info("wrote {} utterances", m.size());
  std::cout << (a.out / "manifest.csv").string() << "\n" << oracle_csv;
  return 0;
}

// ---- extract --------------------------------------------------------------

struct ExtractArgs {
  fs::path manifest, audio_dir, out, config;
  std::string kind = "spectrogram";
  std::optional<std::size_t> fft, hop;
  std::string window;
  bool log_magnitude = false;
};

int run_extract(const ExtractArgs &a) {
  StftConfig stft;
  if (!a.config.empty()) stft = load_run_config(a.config).stft;
  if (a.fft) stft.fft_size = *a.fft;
  if (a.hop) stft.hop = *a.hop;
  else if (a.fft) stft.hop = *a.fft / 2;
  if (!a.window.empty()) stft.window = parse_window(a.window);
  if (a.log_magnitude) stft.log_magnitude = true;
  const CorpusManifest m = load_manifest(a.manifest);
  const fs::path audio_dir = a.audio_dir.empty() ? a.manifest.parent_path() : a.audio_dir;
  extract_features(m, audio_dir, a.out, parse_feature_kind(a.kind), stft);
  return 0;
}

// ---- train / grid ---------------------------------------------------------

struct TrainArgs {
  fs::path config, features, manifest, out_model, history;
};

struct Data {
  CorpusManifest manifest;
  std::vector<Example> train, val;
  std::optional<FeatureSetInfo> info;
};

Data load_data(const fs::path &manifest_path, const fs::path &features, const RunConfig &cfg) {
  Data d;
  d.manifest = load_manifest(manifest_path, cfg.scale_min, cfg.scale_max);
  for (const std::string &s : validate_speaker_disjointness(d.manifest))
    spdlog::warn("speaker '{}' appears in more than one split", s);
  d.info = read_feature_set_info(features);
  d.train = load_examples(d.manifest, features, Split::kTrain);
  d.val = load_examples(d.manifest, features, Split::kVal);
  if (d.train.empty()) throw DataError("no labeled training utterances");
  if (d.val.empty()) throw DataError("no labeled validation utterances");
  spdlog::info("{} training and {} validation utterances", d.train.size(), d.val.size());
  return d;
}

void check_kind(const Data &d, FeatureKind want, Architecture arch) {
  const FeatureKind got = d.train.front().features.kind();
  if (got != want)
    throw DataError(fmt::format("the {} model needs {} features, the feature directory holds {}",
                                to_string(arch), to_string(want), to_string(got)));
}

TrainedModel build_model(const RunConfig &cfg, const Data &d) {
  const ModelConfig mc = cfg.model_config();
  TrainedModel model;
  if (cfg.architecture == Architecture::kLowCapacity) {
    check_kind(d, FeatureKind::kEmbedding, cfg.architecture);
    model = build_low_capacity_cnn(std::get<LowCapacityCNNConfig>(mc),
                                   d.train.front().features.rows());
  } else {
    check_kind(d, FeatureKind::kSpectrogram, cfg.architecture);
    model = build_frame_model(std::get<FrameModelConfig>(mc), d.train.front().features.cols());
  }
  model.scale_min = cfg.scale_min;
  model.scale_max = cfg.scale_max;
  if (d.info) model.stft = d.info->stft;
  return model;
}

int run_train(const TrainArgs &a) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  const Data d = load_data(a.manifest, a.features, cfg);
  TrainedModel model = build_model(cfg, d);
  spdlog::info("model: {} ({} parameters)", model.net.describe(), model.net.parameter_count());
  TrainResult r = train(std::move(model), d.train, d.val, cfg.optimizer, cfg.early_stop);
  spdlog::info("best epoch {} of {}, val MSE {:.4f}", r.best_epoch, r.history.size(),
               r.history[static_cast<std::size_t>(r.best_epoch) - 1].val_mse);
  save_model(a.out_model, r.model);
  if (!a.history.empty()) {
    std::string csv = "epoch,train_loss,val_mse\n";
    for (const EpochRecord &e : r.history)
      csv += fmt::format("{},{},{}\n", e.epoch, e.train_loss, e.val_mse);
    write_file_atomic(a.history, csv);
  }
  return 0;
}

struct GridArgs {
  fs::path grid, features, manifest, out_model, leaderboard;
};

int run_grid(const GridArgs &a) {
  const RunConfig cfg = a.grid.empty() ? RunConfig{} : load_run_config(a.grid);
  if (cfg.architecture != Architecture::kLowCapacity)
    throw DataError("grid search covers the low-capacity CNN only");
  const Data d = load_data(a.manifest, a.features, cfg);
  check_kind(d, FeatureKind::kEmbedding, cfg.architecture);
  const std::vector<LowCapacityCNNConfig> grid = cfg.expand_grid();
  spdlog::info("grid search over {} configurations", grid.size());
  GridSearchResult r =
      grid_search(grid, d.train, d.val, d.manifest, cfg.optimizer, cfg.early_stop);
  if (d.info) r.best.stft = d.info->stft;
  save_model(a.out_model, r.best);
  write_file_atomic(a.leaderboard, format_leaderboard_csv(r.leaderboard));
  return 0;
}

// ---- predict / evaluate / rank --------------------------------------------

struct PredictArgs {
  fs::path model, features, manifest, out_preds;
  std::string split;
};

int run_predict(const PredictArgs &a) {
  const TrainedModel model = load_model(a.model);
  const CorpusManifest m = load_manifest(a.manifest, model.scale_min, model.scale_max);
  const PredictionSet preds = predict_manifest(model, m, a.features, optional_split(a.split));
  write_predictions(a.out_preds, preds);
  spdlog::info("wrote {} predictions", preds.size());
  return 0;
}

struct EvaluateArgs {
  fs::path preds, manifest, out, out_groups;
  std::string level = "speaker", split;
  double scale_min = kDefaultScaleMin, scale_max = kDefaultScaleMax;
};

int run_evaluate(const EvaluateArgs &a) {
  const CorpusManifest m = load_manifest(a.manifest, a.scale_min, a.scale_max);
  const PredictionSet preds = read_predictions(a.preds);
  const std::optional<Split> split = optional_split(a.split);
  std::vector<Level> levels;
  if (a.level == "all") levels = {Level::kUtterance, Level::kSpeaker, Level::kSystem};
  else levels = {parse_level(a.level)};
  std::vector<MetricBundle> bundles;
  std::vector<GroupAggregate> groups;
  for (Level l : levels) {
    bundles.push_back(evaluate(preds, m, l, split));
    if (l != Level::kUtterance)
      for (GroupAggregate &g : aggregate_by(preds, m, l, split)) groups.push_back(std::move(g));
  }
  const std::string csv = format_bundles_csv(bundles);
  write_file_atomic(a.out, csv);
  if (!a.out_groups.empty()) write_file_atomic(a.out_groups, format_aggregates_csv(groups));
  for (const MetricBundle &b : bundles)
    spdlog::info("{}: lcc={} srcc={} mse={:.4f} ktau={} ({} points)", to_string(b.level),
                 b.lcc ? fmt::format("{:.4f}", *b.lcc) : "undefined",
                 b.srcc ? fmt::format("{:.4f}", *b.srcc) : "undefined", b.mse,
                 b.ktau ? fmt::format("{:.4f}", *b.ktau) : "undefined", b.points);
  return 0;
}

struct RankArgs {
  fs::path preds, manifest, out_csv, out_svg, out_scatter, out_table;
  std::string level = "speaker", split;
  double scale_min = kDefaultScaleMin, scale_max = kDefaultScaleMax;
};

int run_rank(const RankArgs &a) {
  const CorpusManifest m = load_manifest(a.manifest, a.scale_min, a.scale_max);
  const PredictionSet preds = read_predictions(a.preds);
  const Level level = parse_level(a.level);
  if (level == Level::kUtterance) throw DataError("rank needs level speaker or system");
  const std::optional<Split> split = optional_split(a.split);
  const ScatterReport report = scatter_report(preds, m, level, split);
  const std::vector<RankedGroup> ranked = rank_groups(report.groups);
  const auto [best_true, worst_true] = best_worst(report.groups, RankBy::kTrue);
  const auto [best_pred, worst_pred] = best_worst(report.groups, RankBy::kPred);
  spdlog::info("true best {} worst {}; predicted best {} worst {}", best_true, worst_true,
               best_pred, worst_pred);
  write_file_atomic(a.out_csv, format_ranking_csv(ranked));
  write_file_atomic(a.out_svg, report.svg);
  if (!a.out_scatter.empty()) write_file_atomic(a.out_scatter, report.csv);
  if (!a.out_table.empty())
    write_file_atomic(a.out_table, format_cell_table_csv(per_system_speaker_table(preds, m, split)));
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  auto logger = spdlog::stderr_color_mt("moscope");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"Train and evaluate MOS predictors; rank speakers and systems."};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging (per-epoch losses)");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  GenSynthArgs gen;
  auto *c_gen = app.add_subcommand("gen-synth", "Generate a synthetic corpus");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--speakers", gen.spec.n_speakers, "Number of speakers");
  c_gen->add_option("--systems", gen.spec.n_systems, "Number of systems");
  c_gen->add_option("--utts", gen.spec.utts_per_pair, "Utterances per speaker and system");
  c_gen->add_option("--seed", gen.spec.seed, "Random seed");
  c_gen->add_option("--duration", gen.spec.duration_s, "Utterance length in seconds");
  c_gen->add_option("--sample-rate", gen.spec.sample_rate, "Sample rate in Hz");
  c_gen->add_option("--label-noise", gen.spec.label_noise_sd, "Label noise sd in MOS units");

  ExtractArgs ext;
  auto *c_ext = app.add_subcommand("extract", "Compute feature files for every utterance");
  c_ext->add_option("--manifest", ext.manifest, "Corpus manifest CSV")->required();
  c_ext->add_option("--audio-dir", ext.audio_dir,
                    "Root for audio paths (default: the manifest's directory)");
  c_ext->add_option("--out", ext.out, "Output feature directory")->required();
  c_ext->add_option("--kind", ext.kind, "spectrogram or embedding")
      ->check(CLI::IsMember({"spectrogram", "embedding"}));
  c_ext->add_option("--config", ext.config, "Run config whose [features] section is used");
  c_ext->add_option("--fft", ext.fft, "FFT size (default 512)");
  c_ext->add_option("--hop", ext.hop, "Hop in samples (default fft/2)");
  c_ext->add_option("--window", ext.window, "hann, hamming or rect (default hann)")
      ->check(CLI::IsMember({"hann", "hamming", "rect"}));
  c_ext->add_flag("--log", ext.log_magnitude, "Log magnitude");

  TrainArgs tr;
  auto *c_train = app.add_subcommand("train", "Train one model");
  c_train->add_option("--config", tr.config, "Run config (INI); defaults if omitted");
  c_train->add_option("--features", tr.features, "Feature directory")->required();
  c_train->add_option("--manifest", tr.manifest, "Corpus manifest CSV")->required();
  c_train->add_option("--out-model", tr.out_model, "Model file to write")->required();
  c_train->add_option("--history", tr.history, "Optional per-epoch loss CSV");

  GridArgs gr;
  auto *c_grid = app.add_subcommand("grid", "Grid search over low-capacity CNN settings");
  c_grid->add_option("--grid", gr.grid, "Grid config (INI with a [grid] section)");
  c_grid->add_option("--features", gr.features, "Feature directory")->required();
  c_grid->add_option("--manifest", gr.manifest, "Corpus manifest CSV")->required();
  c_grid->add_option("--out-model", gr.out_model, "Best model file to write")->required();
  c_grid->add_option("--leaderboard", gr.leaderboard, "Leaderboard CSV")->required();

  PredictArgs pr;
  auto *c_pred = app.add_subcommand("predict", "Score utterances with a trained model");
  c_pred->add_option("--model", pr.model, "Model file")->required();
  c_pred->add_option("--features", pr.features, "Feature directory")->required();
  c_pred->add_option("--manifest", pr.manifest, "Corpus manifest CSV")->required();
  c_pred->add_option("--out-preds", pr.out_preds, "Predictions CSV")->required();
  c_pred->add_option("--split", pr.split, "Only this split")
      ->check(CLI::IsMember({"train", "val", "test"}));

  EvaluateArgs ev;
  auto *c_eval = app.add_subcommand("evaluate", "LCC, SRCC, MSE and KTAU of predictions");
  c_eval->add_option("--preds", ev.preds, "Predictions CSV")->required();
  c_eval->add_option("--manifest", ev.manifest, "Corpus manifest CSV")->required();
  c_eval->add_option("--level", ev.level, "utterance, speaker, system or all")
      ->check(CLI::IsMember({"utterance", "speaker", "system", "all"}));
  c_eval->add_option("--split", ev.split, "Only this split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  c_eval->add_option("--out", ev.out, "Metrics CSV")->required();
  c_eval->add_option("--out-groups", ev.out_groups, "Optional per-group aggregates CSV");
  c_eval->add_option("--scale-min", ev.scale_min, "Lowest MOS");
  c_eval->add_option("--scale-max", ev.scale_max, "Highest MOS");

  RankArgs rk;
  auto *c_rank = app.add_subcommand("rank", "Rank speakers or systems and plot them");
  c_rank->add_option("--preds", rk.preds, "Predictions CSV")->required();
  c_rank->add_option("--manifest", rk.manifest, "Corpus manifest CSV")->required();
  c_rank->add_option("--level", rk.level, "speaker or system")
      ->check(CLI::IsMember({"speaker", "system"}));
  c_rank->add_option("--split", rk.split, "Only this split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  c_rank->add_option("--out-csv", rk.out_csv, "Ranking CSV")->required();
  c_rank->add_option("--out-svg", rk.out_svg, "Scatter plot SVG")->required();
  c_rank->add_option("--out-scatter", rk.out_scatter, "Optional scatter points CSV");
  c_rank->add_option("--out-table", rk.out_table, "Optional system x speaker table CSV");
  c_rank->add_option("--scale-min", rk.scale_min, "Lowest MOS");
  c_rank->add_option("--scale-max", rk.scale_max, "Highest MOS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*c_gen) return run_gen_synth(gen);
    if (*c_ext) return run_extract(ext);
    if (*c_train) return run_train(tr);
    if (*c_grid) return run_grid(gr);
    if (*c_pred) return run_predict(pr);
    if (*c_eval) return run_evaluate(ev);
    if (*c_rank) return run_rank(rk);
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}
