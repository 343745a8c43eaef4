// acceptance.cc
//
// One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "moscope/analysis.h"
#include "moscope/error.h"
#include "moscope/features.h"
#include "moscope/metrics.h"
#include "moscope/models.h"
#include "moscope/nn/gradient_check.h"
#include "moscope/nn/layers.h"
#include "moscope/pipeline.h"
#include "moscope/run_config.h"
#include "moscope/synth.h"
#include "test_util.h"

namespace moscope {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using nn::Batch;
using nn::Mode;
using nn::Sequential;
using testing::random_tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- 1. gradient fidelity ------------------------------------------------------

double probe_check(Sequential &net, const Batch &input, std::mt19937_64 &rng, Mode mode,
                   std::size_t *checked) {
  Batch probe;
  for (const auto &x : input) {
    auto [r, c] = net.output_shape(std::size_t(x.rows()), std::size_t(x.cols()));
    probe.push_back(random_tensor(r, c, rng));
  }
  nn::GradientCheckReport rep =
      nn::gradient_check(net, input, nn::linear_probe_loss(probe), 1e-6, true, mode);
  *checked += rep.checked;
  return rep.max_rel_error;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  std::size_t checked = 0, cases = 0;
  auto note = [&](const std::string &name, double err) {
    worst[name] = std::max(worst[name], err);
    ++cases;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t t = 10 + rng() % 60, c = 1 + rng() % 4, f = 1 + rng() % 5;
    Sequential conv;
    conv.emplace<nn::Conv1D>(c, f, 1 + rng() % 10, 0.01 * (trial % 3)).initialize(rng);
    note("conv", probe_check(conv, {random_tensor(t, c, rng), random_tensor(t + 2, c, rng)}, rng,
                             Mode::kEval, &checked));
    Sequential pool;
    pool.emplace<nn::MaxPool1D>(2 + rng() % 3);
    note("maxpool", probe_check(pool, {random_tensor(t, c, rng)}, rng, Mode::kEval, &checked));
    Sequential gap;
    gap.emplace<nn::GlobalAvgPool>();
    note("gap", probe_check(gap, {random_tensor(t, c, rng)}, rng, Mode::kEval, &checked));
    Sequential dense;
    dense.emplace<nn::Dense>(c, f, 0.01).initialize(rng);
    note("dense", probe_check(dense, {random_tensor(1 + rng() % 5, c, rng)}, rng, Mode::kEval,
                              &checked));
    Sequential relu;
    relu.emplace<nn::ReLU>();
    note("relu", probe_check(relu, {random_tensor(t, c, rng)}, rng, Mode::kEval, &checked));
    Sequential bn;
    bn.emplace<nn::BatchNorm>(c);
    note("batchnorm", probe_check(bn, {random_tensor(t, c, rng), random_tensor(5, c, rng)}, rng,
                                  Mode::kTrain, &checked));
    note("batchnorm", probe_check(bn, {random_tensor(t, c, rng)}, rng, Mode::kEval, &checked));
    Sequential drop;
    drop.emplace<nn::Dropout>(0.3, trial);
    note("dropout", probe_check(drop, {random_tensor(t, c, rng)}, rng, Mode::kEval, &checked));

    // Full architectures with the dual loss.
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(1.0, 10.0);
    {
      LowCapacityCNNConfig lc;
      lc.filters = 2 + rng() % 4;
      lc.input_batchnorm = trial % 2 == 1;
      lc.l2 = 0.001 * (trial % 4);
      lc.seed = 100 + trial;
      lc.initial_output = 5.5;
      const std::size_t dim = 75 + rng() % 30;
      TrainedModel m = build_low_capacity_cnn(lc, dim);
      testing::jitter_biases(m.net, rng);
      std::vector<Example> ex;
      for (int i = 0; i < 2; ++i) {
        std::vector<double> v(dim);
        for (double &x : v) x = g(rng);
        ex.push_back({"u" + std::to_string(i), FeatureMatrix::embedding(v), u(rng)});
      }
      if (lc.input_batchnorm)
        m.net.forward({m.prepare_input(ex[0].features)}, Mode::kTrain);
      nn::GradientCheckReport r = gradient_check(m, ex);
      checked += r.checked;
      note("low-capacity model", r.max_rel_error);
    }
    {
      FrameModelConfig fc;
      fc.filters = 2 + rng() % 3;
      fc.alpha = (trial % 3) * 0.5;
      fc.l2 = 0.001 * (trial % 2);
      fc.seed = 200 + trial;
      const std::size_t bins = 2 + rng() % 6, frames = 75 + rng() % 20;
      TrainedModel m = build_frame_model(fc, bins);
      testing::jitter_biases(m.net, rng);
      std::vector<Example> ex;
      std::vector<double> v(frames * bins);
      for (double &x : v) x = std::abs(g(rng));
      ex.push_back({"u", FeatureMatrix(FeatureKind::kSpectrogram, frames, bins, v), u(rng)});
      nn::GradientCheckReport r = gradient_check(m, ex);
      checked += r.checked;
      note("frame model", r.max_rel_error);
    }
  }
  double max_err = 0.0;
  std::string parts;
  for (const auto &[name, e] : worst) {
    max_err = std::max(max_err, e);
    parts += fmt::format(" {}={:.1e}", name, e);
  }
  const double secs = seconds_since(t0);
  return {max_err < 1e-5 && secs < 60.0,
          fmt::format("max rel err {:.2e} over {} checks ({} entries), {:.1f}s;{}", max_err, cases,
                      checked, secs, parts)};
}

// ---- 2. metric oracles ---------------------------------------------------------

Outcome criterion_metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  double tau_err = 0.0;
  int spearman_mismatch = 0, defined = 0;
  std::size_t tied = 0, total = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> x = testing::tied_vector(n, 0.3, rng),
                        y = testing::tied_vector(n, 0.3, rng);
    for (const auto *v : {&x, &y})
      for (std::size_t k = 0; k < v->size(); ++k) {
        ++total;
        for (std::size_t j = 0; j < k; ++j)
          if ((*v)[j] == (*v)[k]) {
            ++tied;
            break;
          }
      }
    const double want = testing::brute_force_tau_b(x, y);
    auto got = kendall_tau_b(x, y);
    if (got.has_value() == std::isnan(want)) {
      tau_err = INFINITY;
    } else if (got) {
      tau_err = std::max(tau_err, std::abs(*got - want));
      ++defined;
    }
    auto s = spearman(x, y);
    auto p = pearson(testing::brute_force_ranks(x), testing::brute_force_ranks(y));
    if (s.has_value() != p.has_value() || (s && *s != *p)) ++spearman_mismatch;
  }
  const double secs = seconds_since(t0);
  return {tau_err < 1e-12 && spearman_mismatch == 0 && secs < 10.0,
          fmt::format("tau-b max |d| {:.1e} ({} defined of 1000), spearman mismatches {}, "
                      "tied entries {:.0f}%, {:.2f}s",
                      tau_err, defined, spearman_mismatch, 100.0 * double(tied) / double(total),
                      secs)};
}

// ---- 3. hand fixtures ----------------------------------------------------------

Outcome criterion_fixtures() {
  using V = std::vector<double>;
  const double p = *pearson(V{1, 2, 3, 4}, V{1, 3, 2, 4});
  const double t1 = *kendall_tau_b(V{1, 2, 3}, V{1, 3, 2});
  const double t2 = *kendall_tau_b(V{1, 1, 2}, V{1, 2, 3});
  const double e1 = std::abs(p - 0.8), e2 = std::abs(t1 - 1.0 / 3.0),
               e3 = std::abs(t2 - 2.0 / std::sqrt(6.0));
  return {e1 < 1e-12 && e2 < 1e-12 && e3 < 1e-12,
          fmt::format("pearson {:.15f}, tau {:.15f}, tau(ties) {:.15f}", p, t1, t2)};
}

// ---- 4. loss semantics ---------------------------------------------------------

Outcome criterion_loss() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  int bitwise_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> frames(1 + rng() % 8);
    for (double &f : frames) f = u(rng);
    const double utt = u(rng), target = u(rng), d = utt - target;
    if (dual_loss(utt, frames, target, 0.0) != d * d) ++bitwise_mismatch;
  }
  const double example = dual_loss(4.0, std::vector<double>{3.0, 5.0}, 5.0, 1.0);
  int non_monotone = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> frames(1 + rng() % 8);
    for (double &f : frames) f = u(rng);
    const double utt = u(rng), target = u(rng);
    double prev = -1.0;
    for (double a : {0.0, 0.5, 1.0}) {
      const double l = dual_loss(utt, frames, target, a);
      if (l < prev) ++non_monotone;
      prev = l;
    }
  }
  return {bitwise_mismatch == 0 && example == 3.0 && non_monotone == 0,
          fmt::format("alpha=0 mismatches {}/1000, example = {}, alpha-monotonicity violations {}",
                      bitwise_mismatch, example, non_monotone)};
}

// ---- 5. end-to-end ranking recovery ------------------------------------------

struct EndToEnd {
  fs::path corpus, features;
  CorpusManifest manifest;
  TrainedModel model;
  bool ok = false;
};

// Spearman / Kendall of predicted group means against the oracle table.
std::pair<std::optional<double>, std::optional<double>> against_oracle(
    const std::vector<GroupAggregate> &groups, const std::map<std::string, double> &oracle) {
  std::vector<double> truth, pred;
  for (const auto &g : groups) {
    truth.push_back(oracle.at(g.group_id));
    pred.push_back(g.mean_pred);
  }
  return {spearman(truth, pred), kendall_tau_b(truth, pred)};
}

std::string opt(const std::optional<double> &v) { return v ? fmt::format("{:.3f}", *v) : "undef"; }

Outcome criterion_end_to_end(const fs::path &root, EndToEnd &e2e) {
  const auto t0 = Clock::now();
  SynthSpec spec;  // 10 speakers x 5 systems x 20 utterances, seed 7
  e2e.corpus = root / "corpus";
  e2e.features = root / "spec";
  e2e.manifest = generate_corpus(spec, e2e.corpus);
  const double t_gen = seconds_since(t0);
  RunConfig rc = parse_run_config("[model]\narchitecture = frame\n");
  extract_features(e2e.manifest, e2e.corpus, e2e.features, FeatureKind::kSpectrogram, rc.stft);
  const double t_extract = seconds_since(t0) - t_gen;

  const auto tr = load_examples(e2e.manifest, e2e.features, Split::kTrain);
  const auto va = load_examples(e2e.manifest, e2e.features, Split::kVal);
  auto cfg = std::get<FrameModelConfig>(rc.model_config());
  TrainResult r = train(build_frame_model(cfg, rc.stft.n_bins()), tr, va, rc.optimizer,
                        rc.early_stop);
  e2e.model = r.model;
  e2e.ok = true;
  const double t_train = seconds_since(t0) - t_gen - t_extract;

  PredictionSet preds = predict_manifest(e2e.model, e2e.manifest, e2e.features, Split::kTest);
  OracleTables oracle = oracle_tables(spec);
  auto sys = aggregate_by(preds, e2e.manifest, Level::kSystem, Split::kTest);
  auto spk = aggregate_by(preds, e2e.manifest, Level::kSpeaker, Split::kTest);
  auto [sys_srcc, sys_ktau] = against_oracle(sys, oracle.system);
  auto [spk_srcc, spk_ktau] = against_oracle(spk, oracle.speaker);
  (void)sys_ktau;

  // Informational: the same metrics against the noisy manifest labels.
  MetricBundle lu = evaluate(preds, e2e.manifest, Level::kUtterance, Split::kTest);
  MetricBundle ls = evaluate(preds, e2e.manifest, Level::kSpeaker, Split::kTest);
  MetricBundle lsys = evaluate(preds, e2e.manifest, Level::kSystem, Split::kTest);
  const double secs = seconds_since(t0);
  std::string speakers;
  for (const auto &g : spk)
    speakers += fmt::format(" {}(oracle {:.3f}, pred {:.3f})", g.group_id,
                            oracle.speaker.at(g.group_id), g.mean_pred);

  const bool pass = sys_srcc && *sys_srcc >= 0.8 && spk_srcc && *spk_srcc >= 0.6 && spk_ktau &&
                    *spk_ktau >= 0.5 && secs < 600.0;
  return {pass,
          fmt::format("vs oracle: system SRCC {}, speaker SRCC {}, speaker KTAU {} ({} test "
                      "speakers:{}); vs labels: utt LCC {} SRCC {}, speaker SRCC {}, system SRCC "
                      "{} MSE {:.3f}; best epoch {}/{}; {:.0f}s (gen {:.0f}, extract {:.0f}, "
                      "train {:.0f})",
                      opt(sys_srcc), opt(spk_srcc), opt(spk_ktau), spk.size(), speakers,
                      opt(lu.lcc), opt(lu.srcc), opt(ls.srcc), opt(lsys.srcc), lsys.mse,
                      r.best_epoch, r.history.size(), secs, t_gen, t_extract, t_train)};
}

// ---- 6. grid-search contract ---------------------------------------------------

Outcome criterion_grid(const fs::path &root) {
  const auto t0 = Clock::now();
  // Twenty speakers leave four for validation, so speaker SRCC can take more
  // than the two values a two-speaker split allows.
  SynthSpec spec;
  spec.n_speakers = 20;
  spec.utts_per_pair = 10;
  spec.duration_s = 1.0;
  spec.seed = 11;
  CorpusManifest manifest = generate_corpus(spec, root / "grid_corpus");
  StftConfig stft;
  extract_features(manifest, root / "grid_corpus", root / "grid_emb", FeatureKind::kEmbedding,
                   stft);
  const auto tr = load_examples(manifest, root / "grid_emb", Split::kTrain);
  const auto va = load_examples(manifest, root / "grid_emb", Split::kVal);

  RunConfig rc = parse_run_config("[grid]\nfilters = 16\ndropout_rate = 0.2\nl2 = 0.0001\n"
                                  "input_batchnorm = false\nbatch_size = 1\n"
                                  "learning_rate = none, 0\n");
  std::vector<LowCapacityCNNConfig> grid = rc.expand_grid();
  GridSearchResult r = grid_search(grid, tr, va, manifest, rc.optimizer, rc.early_stop,
                                   worker_count());
  bool sorted = true;
  for (std::size_t i = 1; i < r.leaderboard.size(); ++i) {
    const auto &a = r.leaderboard[i - 1].val_speaker_srcc, &b = r.leaderboard[i].val_speaker_srcc;
    if (b && (!a || *a < *b)) sorted = false;
  }
  const auto &top = r.leaderboard.front();
  const bool learner_wins = !grid[top.config_index].learning_rate.has_value();
  std::string rows;
  for (const auto &e : r.leaderboard)
    rows += fmt::format(" [lr={} srcc={} mse={:.3f}]",
                        grid[e.config_index].learning_rate ? "0" : "default",
                        opt(e.val_speaker_srcc), e.val_mse);
  return {grid.size() == 2 && learner_wins && sorted,
          fmt::format("{} configs, learning config first: {}, sorted: {};{} {:.0f}s", grid.size(),
                      learner_wins ? "yes" : "no", sorted ? "yes" : "no", rows,
                      seconds_since(t0))};
}

// ---- 7. determinism ------------------------------------------------------------

int cli(const std::string &args, const fs::path &log) {
  return testing::run_command(std::string(MOSCOPE_CLI) + " " + args + " >>" + log.string() +
                              " 2>&1");
}

// Runs the full command-line pipeline into `dir`; returns the failing step or "".
std::string pipeline_run(const fs::path &dir) {
  fs::create_directories(dir);
  const std::string d = dir.string(), log = (dir / "log.txt").string();
  testing::write_text(dir / "run.ini", "[model]\narchitecture = frame\nfilters = 8\n"
                                       "[early_stop]\nmax_epochs = 4\n");
  testing::write_text(dir / "grid.ini", "[grid]\nfilters = 4\ndropout_rate = 0.2\nl2 = 0.001\n"
                                        "input_batchnorm = false, true\nbatch_size = 4\n"
                                        "[early_stop]\nmax_epochs = 3\n");
  const std::vector<std::string> steps{
      "gen-synth --speakers 10 --systems 2 --utts 2 --duration 1.3 --seed 5 --out " + d + "/c",
      "extract --manifest " + d + "/c/manifest.csv --out " + d + "/f",
      "extract --kind embedding --manifest " + d + "/c/manifest.csv --out " + d + "/e",
      "train --config " + d + "/run.ini --features " + d + "/f --manifest " + d +
          "/c/manifest.csv --out-model " + d + "/model.mosr --history " + d + "/history.csv",
      "grid --grid " + d + "/grid.ini --features " + d + "/e --manifest " + d +
          "/c/manifest.csv --out-model " + d + "/grid.mosr --leaderboard " + d + "/board.csv",
      "predict --model " + d + "/model.mosr --features " + d + "/f --manifest " + d +
          "/c/manifest.csv --out-preds " + d + "/preds.csv",
      "evaluate --level all --preds " + d + "/preds.csv --manifest " + d +
          "/c/manifest.csv --out " + d + "/metrics.csv --out-groups " + d + "/groups.csv",
      "rank --level speaker --preds " + d + "/preds.csv --manifest " + d +
          "/c/manifest.csv --out-csv " + d + "/rank.csv --out-svg " + d +
          "/scatter.svg --out-scatter " + d + "/scatter.csv --out-table " + d + "/table.csv",
  };
  for (const std::string &s : steps)
    if (cli(s, dir / "log.txt") != 0) return s;
  return "";
}

Outcome criterion_determinism(const fs::path &root) {
  const auto t0 = Clock::now();
  const fs::path a = root / "run_a", b = root / "run_b";
  for (const fs::path &d : {a, b})
    if (std::string failed = pipeline_run(d); !failed.empty())
      return {false, fmt::format("step failed: {}", failed)};
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto &entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "log.txt") continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ++compared;
    if (!fs::exists(b / rel) ||
        testing::read_text(entry.path()) != testing::read_text(b / rel))
      differing.push_back(rel.string());
  }
  std::string diff;
  for (const auto &f : differing) diff += " " + f;
  return {differing.empty() && compared > 20,
          fmt::format("{} files compared (model, grid model, leaderboard, predictions, reports, "
                      "features, corpus); differing:{} {:.0f}s",
                      compared, differing.empty() ? " none" : diff, seconds_since(t0))};
}

// ---- 8. serialization ----------------------------------------------------------

Outcome criterion_serialization(const fs::path &root, const EndToEnd &e2e) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  double max_dev = 0.0;
  std::size_t predictions = 0;
  auto compare = [&](const TrainedModel &m, const std::vector<FeatureMatrix> &inputs,
                     const std::string &name) {
    save_model(root / name, m);
    TrainedModel back = load_model(root / name);
    for (const auto &x : inputs) {
      max_dev = std::max(max_dev, std::abs(predict(back, x) - predict(m, x)));
      ++predictions;
    }
  };
  // Fresh full-precision models with batchnorm state and a normalizer.
  LowCapacityCNNConfig lc;
  lc.input_batchnorm = true;
  lc.initial_output = 5.5;
  TrainedModel low = build_low_capacity_cnn(lc, 257);
  std::vector<FeatureMatrix> embs;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(257);
    for (double &x : v) x = g(rng);
    embs.push_back(FeatureMatrix::embedding(v));
  }
  low.normalizer = fit_normalizer(embs);
  low.net.forward({low.prepare_input(embs[0]), low.prepare_input(embs[1])}, Mode::kTrain);
  compare(low, embs, "low.mosr");
  // The trained end-to-end model over every test utterance.
  if (e2e.ok) {
    std::vector<FeatureMatrix> feats;
    for (const auto &r : e2e.manifest.records())
      if (r.split == Split::kTest) feats.push_back(read_features(feature_path(e2e.features, r.utt_id)));
    compare(e2e.model, feats, "frame.mosr");
  }

  // Feature files: bytes and values survive exactly.
  std::size_t files = 0, byte_mismatch = 0;
  auto feature_roundtrip = [&](const FeatureMatrix &m) {
    const fs::path p = root / "x.feat";
    write_features(p, m);
    const auto bytes = encode_features(m);
    FeatureMatrix back = read_features(p);
    ++files;
    if (encode_features(back) != bytes) ++byte_mismatch;
    for (std::size_t i = 0; i < m.data().size(); ++i)
      if (back.data()[i] != double(float(m.data()[i]))) ++byte_mismatch;
    if (back.kind() != m.kind() || back.rows() != m.rows() || back.cols() != m.cols())
      ++byte_mismatch;
  };
  for (const auto &e : embs) feature_roundtrip(e);
  if (e2e.ok) {
    int n = 0;
    for (const auto &r : e2e.manifest.records()) {
      if (n++ >= 50) break;
      const fs::path p = feature_path(e2e.features, r.utt_id);
      const std::string on_disk = testing::read_text(p);
      FeatureMatrix m = read_features(p);
      ++files;
      const auto bytes = encode_features(m);
      if (std::string(bytes.begin(), bytes.end()) != on_disk) ++byte_mismatch;
    }
  }
  return {max_dev <= 1e-6 && byte_mismatch == 0 && e2e.ok,
          fmt::format("max prediction change {:.2e} over {} predictions; {} feature files, {} "
                      "mismatches{}",
                      max_dev, predictions, files, byte_mismatch,
                      e2e.ok ? "" : " (end-to-end model unavailable)")};
}

// ---- 9. report integrity -------------------------------------------------------

Outcome criterion_reports(const EndToEnd &e2e, const fs::path &root) {
  CorpusManifest manifest = e2e.manifest;
  if (manifest.empty()) {
    SynthSpec spec;
    spec.utts_per_pair = 3;
    spec.duration_s = 0.05;
    manifest = generate_corpus(spec, root / "report_corpus");
  }
  PredictionSet perfect;
  for (const auto &r : manifest.records()) perfect[r.utt_id] = *r.mos;
  int bad_metrics = 0;
  std::string summary;
  for (Level l : {Level::kUtterance, Level::kSpeaker, Level::kSystem}) {
    MetricBundle b = evaluate(perfect, manifest, l);
    if (!(b.lcc == 1.0 && b.srcc == 1.0 && b.ktau == 1.0 && b.mse == 0.0)) ++bad_metrics;
    summary += fmt::format(" {}: lcc {} srcc {} ktau {} mse {}", to_string(l), opt(b.lcc),
                           opt(b.srcc), opt(b.ktau), b.mse);
  }
  std::size_t rows = 0, off_diagonal = 0;
  for (Level l : {Level::kSpeaker, Level::kSystem}) {
    ScatterReport rep = scatter_report(perfect, manifest, l);
    // Check the serialized CSV, not just the in-memory groups.
    std::istringstream in(rep.csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      ++rows;
      if (f.size() != 4 || f[1] != f[2]) ++off_diagonal;
    }
  }
  return {bad_metrics == 0 && off_diagonal == 0 && rows > 0,
          fmt::format("{}; scatter rows {}, rows with mean_true != mean_pred {}", summary, rows,
                      off_diagonal)};
}

}  // namespace
}  // namespace moscope

int main() {
  using namespace moscope;
  spdlog::set_level(spdlog::level::warn);
  testing::TempDir root("moscope-acceptance");
  EndToEnd e2e;
  struct Criterion {
    int id;
    const char *name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", criterion_gradients},
      {2, "metric oracle equivalence", criterion_metric_oracles},
      {3, "hand-valued metric fixtures", criterion_fixtures},
      {4, "loss semantics", criterion_loss},
      {5, "end-to-end synthetic ranking recovery",
       [&] { return criterion_end_to_end(root.path(), e2e); }},
      {6, "grid-search contract", [&] { return criterion_grid(root.path()); }},
      {7, "determinism", [&] { return criterion_determinism(root.path()); }},
      {8, "serialization", [&] { return criterion_serialization(root.path(), e2e); }},
      {9, "report integrity", [&] { return criterion_reports(e2e, root.path()); }},
  };
  int failures = 0;
  for (const Criterion &c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
