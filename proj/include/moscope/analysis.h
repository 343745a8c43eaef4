// moscope/analysis.h
//
// Speaker- and system-level reports built on aggregated predictions:
// ordinal rankings, best/worst groups, per-system speaker tables and
// true-vs-predicted scatter plots.

#ifndef MOSCOPE_ANALYSIS_H_
#define MOSCOPE_ANALYSIS_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moscope/corpus.h"
#include "moscope/metrics.h"

namespace moscope {

struct RankedGroup {
  std::string group_id;
  std::size_t true_rank = 0;  // 1 = highest mean
  std::size_t pred_rank = 0;
  double mean_true = 0.0;
  double mean_pred = 0.0;
};

// Ranks by mean, ties broken by group_id. Sorted by true_rank. Throws
// DegenerateError with fewer than 2 groups.
std::vector<RankedGroup> rank_groups(std::span<const GroupAggregate> groups);

enum class RankBy { kTrue, kPred };

// (best, worst) group ids under the same tie rule as rank_groups.
std::pair<std::string, std::string> best_worst(std::span<const GroupAggregate> groups,
                                               RankBy by);

struct CellAggregate {
  std::string system_id;
  std::string speaker_id;
  double mean_true = 0.0;
  double mean_pred = 0.0;
  std::size_t count = 0;
};

// One row per (system, speaker) pair with at least one labeled prediction,
// sorted by system then speaker. Throws DataError if nothing intersects.
std::vector<CellAggregate> per_system_speaker_table(
    const PredictionSet &preds, const CorpusManifest &manifest,
    std::optional<Split> split = std::nullopt);

// "group_id,mean_true,mean_pred,count"
std::string format_scatter_csv(std::span<const GroupAggregate> groups);
// "group_id,true_rank,pred_rank,mean_true,mean_pred"
std::string format_ranking_csv(std::span<const RankedGroup> ranked);
// "system_id,speaker_id,mean_true,mean_pred,count"
std::string format_cell_table_csv(std::span<const CellAggregate> cells);

// 800x600 SVG: one circle per group, the identity line, and labels for the
// best, worst and mean groups (by true mean). Axes start at the MOS scale
// and grow to include out-of-scale points.
std::string render_scatter_svg(std::span<const GroupAggregate> groups, double scale_min,
                               double scale_max, const std::string &title);

struct ScatterReport {
  std::vector<GroupAggregate> groups;
  std::string csv;
  std::string svg;
};

ScatterReport scatter_report(const PredictionSet &preds, const CorpusManifest &manifest,
                             Level level, std::optional<Split> split = std::nullopt);

// Writes both files atomically.
void write_scatter_report(const ScatterReport &report, const std::filesystem::path &out_csv,
                          const std::filesystem::path &out_svg);

}  // namespace moscope

#endif  // MOSCOPE_ANALYSIS_H_
