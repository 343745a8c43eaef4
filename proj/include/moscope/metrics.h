// moscope/metrics.h
//
// Agreement between predicted and true MOS: linear correlation (LCC),
// Spearman rank correlation (SRCC), mean squared error and Kendall tau-b,
// at utterance level or on per-speaker / per-system means.

#ifndef MOSCOPE_METRICS_H_
#define MOSCOPE_METRICS_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moscope/corpus.h"

namespace moscope {

// utt_id -> predicted MOS. Ordered, so serialization is deterministic.
using PredictionSet = std::map<std::string, double>;

inline constexpr std::string_view kPredictionsHeader = "utt_id,pred_mos";

std::string format_predictions(const PredictionSet &preds);
PredictionSet parse_predictions(std::string_view text,
                                const std::string &source = "<predictions>");
void write_predictions(const std::filesystem::path &path, const PredictionSet &preds);
PredictionSet read_predictions(const std::filesystem::path &path);

// The correlations return nullopt when undefined (a constant argument, or
// all pairs tied). All throw DegenerateError for mismatched lengths or
// fewer than 2 points.

// Population-normalized Pearson correlation.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the mean of the positions they span.
std::vector<double> tie_averaged_ranks(std::span<const double> x);

std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

// Throws DegenerateError on empty or mismatched input.
double mse(std::span<const double> x, std::span<const double> y);

// tau_b = (C - D) / sqrt((n0 - n1)(n0 - n2)).
std::optional<double> kendall_tau_b(std::span<const double> x,
                                    std::span<const double> y);

enum class Level { kUtterance, kSpeaker, kSystem };

std::string_view to_string(Level level);
Level parse_level(std::string_view s);

struct GroupAggregate {
  std::string group_id;
  Level level = Level::kSpeaker;
  double mean_true = 0.0;
  double mean_pred = 0.0;
  std::size_t count = 0;
};

// One aggregate per speaker or system (or per utterance, with count 1) over
// the utterances that have both a label and a prediction, restricted to
// `split` when given, sorted by group_id. Predictions for unlabeled utterances are skipped with a
// warning. Throws DataError if nothing intersects.
std::vector<GroupAggregate> aggregate_by(const PredictionSet &preds,
                                         const CorpusManifest &manifest, Level level,
                                         std::optional<Split> split = std::nullopt);

struct MetricBundle {
  Level level = Level::kUtterance;
  std::optional<double> lcc;
  std::optional<double> srcc;
  double mse = 0.0;
  std::optional<double> ktau;
  std::size_t points = 0;  // utterances or groups

  // ';'-separated names of undefined metrics, empty if all are defined.
  std::string flags() const;
};

// Throws DegenerateError with fewer than 2 utterances or groups.
MetricBundle evaluate(const PredictionSet &preds, const CorpusManifest &manifest,
                      Level level, std::optional<Split> split = std::nullopt);

// "level,lcc,srcc,mse,ktau,flags"; undefined values are left empty.
std::string format_bundles_csv(std::span<const MetricBundle> bundles);
// "level,group_id,mean_true,mean_pred,count"
std::string format_aggregates_csv(std::span<const GroupAggregate> groups);

}  // namespace moscope

#endif  // MOSCOPE_METRICS_H_
