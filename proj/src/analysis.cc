// analysis.cc

#include "moscope/analysis.h"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"

namespace moscope {

namespace {

void require_two(std::span<const GroupAggregate> groups) {
  if (groups.size() < 2)
    throw DegenerateError(
        fmt::format("ranking needs at least 2 groups, found {}", groups.size()));
}

// Indices ordered best first: higher mean, then lexicographic id.
std::vector<std::size_t> order_by(std::span<const GroupAggregate> groups, RankBy by) {
  std::vector<std::size_t> idx(groups.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto key = [&](std::size_t i) {
    return by == RankBy::kTrue ? groups[i].mean_true : groups[i].mean_pred;
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return groups[a].group_id < groups[b].group_id;
  });
  return idx;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<RankedGroup> rank_groups(std::span<const GroupAggregate> groups) {
  require_two(groups);
  std::vector<RankedGroup> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    out[i].group_id = groups[i].group_id;
    out[i].mean_true = groups[i].mean_true;
    out[i].mean_pred = groups[i].mean_pred;
  }
  const auto by_true = order_by(groups, RankBy::kTrue);
  const auto by_pred = order_by(groups, RankBy::kPred);
  for (std::size_t r = 0; r < groups.size(); ++r) {
    out[by_true[r]].true_rank = r + 1;
    out[by_pred[r]].pred_rank = r + 1;
  }
  std::sort(out.begin(), out.end(), [](const RankedGroup &a, const RankedGroup &b) {
    return a.true_rank < b.true_rank;
  });
  return out;
}

std::pair<std::string, std::string> best_worst(std::span<const GroupAggregate> groups,
                                               RankBy by) {
  require_two(groups);
  const auto idx = order_by(groups, by);
  return {groups[idx.front()].group_id, groups[idx.back()].group_id};
}

std::vector<CellAggregate> per_system_speaker_table(const PredictionSet &preds,
                                                    const CorpusManifest &manifest,
                                                    std::optional<Split> split) {
  std::map<std::pair<std::string, std::string>, CellAggregate> cells;
  // Records are visited in utt_id order so sums are order-independent.
  std::vector<const UtteranceRecord *> recs;
  for (const UtteranceRecord &r : manifest.records()) recs.push_back(&r);
  std::sort(recs.begin(), recs.end(), [](const UtteranceRecord *a, const UtteranceRecord *b) {
    return a->utt_id < b->utt_id;
  });
  for (const UtteranceRecord *r : recs) {
    if (split && r->split != *split) continue;
    if (!r->mos) continue;
    auto it = preds.find(r->utt_id);
    if (it == preds.end()) continue;
    CellAggregate &c = cells[{r->system_id, r->speaker_id}];
    c.system_id = r->system_id;
    c.speaker_id = r->speaker_id;
    c.mean_true += *r->mos;
    c.mean_pred += it->second;
    ++c.count;
  }
  if (cells.empty()) throw DataError("no utterance has both a MOS label and a prediction");
  std::vector<CellAggregate> out;
  for (auto &[key, c] : cells) {
    c.mean_true /= static_cast<double>(c.count);
    c.mean_pred /= static_cast<double>(c.count);
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_scatter_csv(std::span<const GroupAggregate> groups) {
  std::string out = "group_id,mean_true,mean_pred,count\n";
  for (const GroupAggregate &g : groups)
    out += fmt::format("{},{},{},{}\n", g.group_id, g.mean_true, g.mean_pred, g.count);
  return out;
}

std::string format_ranking_csv(std::span<const RankedGroup> ranked) {
  std::string out = "group_id,true_rank,pred_rank,mean_true,mean_pred\n";
  for (const RankedGroup &g : ranked)
    out += fmt::format("{},{},{},{},{}\n", g.group_id, g.true_rank, g.pred_rank, g.mean_true,
                       g.mean_pred);
  return out;
}

std::string format_cell_table_csv(std::span<const CellAggregate> cells) {
  std::string out = "system_id,speaker_id,mean_true,mean_pred,count\n";
  for (const CellAggregate &c : cells)
    out += fmt::format("{},{},{},{},{}\n", c.system_id, c.speaker_id, c.mean_true, c.mean_pred,
                       c.count);
  return out;
}

std::string render_scatter_svg(std::span<const GroupAggregate> groups, double scale_min,
                               double scale_max, const std::string &title) {
  constexpr double kWidth = 800, kHeight = 600, kLeft = 70, kRight = 40, kTop = 50,
                   kBottom = 70;
  double lo = scale_min, hi = scale_max;
  for (const GroupAggregate &g : groups) {
    lo = std::min({lo, g.mean_true, g.mean_pred});
    hi = std::max({hi, g.mean_true, g.mean_pred});
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - lo) / (hi - lo) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - lo) / (hi - lo) * ph; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" "
      "height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      kWidth, kHeight);
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
                   kWidth, kHeight);
  s += fmt::format(
      "<text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      "font-size=\"16\">{}</text>\n",
      kWidth / 2, xml_escape(title));
  // Plot frame and identity line.
  s += fmt::format(
      "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
      "stroke=\"black\"/>\n",
      kLeft, kTop, pw, ph);
  s += fmt::format(
      "<line class=\"identity\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
      "stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
      px(lo), py(lo), px(hi), py(hi));
  // Ticks at whole MOS units, plus the bounds.
  std::vector<double> ticks{lo};
  for (double t = std::ceil(lo); t <= hi; t += std::max(1.0, std::round((hi - lo) / 10)))
    if (t > lo && t < hi) ticks.push_back(t);
  ticks.push_back(hi);
  for (double t : ticks) {
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"11\">{:g}</text>\n",
        px(t), kTop + ph + 18, t);
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\" font-family=\"sans-serif\" "
        "font-size=\"11\">{:g}</text>\n",
        kLeft - 6, py(t) + 4, t);
  }
  s += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      "font-size=\"13\">true MOS</text>\n",
      kLeft + pw / 2, kHeight - 20);
  s += fmt::format(
      "<text x=\"20\" y=\"{:.2f}\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      "font-size=\"13\" transform=\"rotate(-90 20 {:.2f})\">predicted MOS</text>\n",
      kTop + ph / 2, kTop + ph / 2);

  for (const GroupAggregate &g : groups)
    s += fmt::format(
        "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"steelblue\"><title>{} "
        "({} utt)</title></circle>\n",
        px(g.mean_true), py(g.mean_pred), xml_escape(g.group_id), g.count);

  if (groups.size() >= 2) {
    const auto [best, worst] = best_worst(groups, RankBy::kTrue);
    // The "mean" group sits closest to the average of the true means.
    double avg = 0.0;
    for (const GroupAggregate &g : groups) avg += g.mean_true;
    avg /= static_cast<double>(groups.size());
    const GroupAggregate *mean_group = &groups[0];
    for (const GroupAggregate &g : groups) {
      const double d = std::abs(g.mean_true - avg), m = std::abs(mean_group->mean_true - avg);
      if (d < m || (d == m && g.group_id < mean_group->group_id)) mean_group = &g;
    }
    auto annotate = [&](const std::string &id, const char *label) {
      for (const GroupAggregate &g : groups)
        if (g.group_id == id)
          s += fmt::format(
              "<text class=\"annotation\" x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" "
              "font-size=\"12\">{}: {}</text>\n",
              px(g.mean_true) + 7, py(g.mean_pred) - 7, label, xml_escape(g.group_id));
    };
    annotate(best, "best");
    annotate(worst, "worst");
    annotate(mean_group->group_id, "mean");
  }
  s += "</svg>\n";
  return s;
}

ScatterReport scatter_report(const PredictionSet &preds, const CorpusManifest &manifest,
                             Level level, std::optional<Split> split) {
  ScatterReport r;
  r.groups = aggregate_by(preds, manifest, level, split);
  r.csv = format_scatter_csv(r.groups);
  r.svg = render_scatter_svg(r.groups, manifest.scale_min(), manifest.scale_max(),
                             fmt::format("{}-level true vs predicted MOS", to_string(level)));
  return r;
}

void write_scatter_report(const ScatterReport &report, const std::filesystem::path &out_csv,
                          const std::filesystem::path &out_svg) {
  write_file_atomic(out_csv, report.csv);
  write_file_atomic(out_svg, report.svg);
}

}  // namespace moscope
