// metrics.cc

#include "moscope/metrics.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"

namespace moscope {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y,
                std::size_t min_len, const char *what) {
  if (x.size() != y.size())
    throw DegenerateError(fmt::format("{}: length mismatch {} vs {}", what,
                                      x.size(), y.size()));
  if (x.size() < min_len)
    throw DegenerateError(fmt::format("{}: needs at least {} points, got {}", what,
                                      min_len, x.size()));
}

// Sum of t(t-1)/2 over groups of equal values.
long long tied_pairs(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  long long total = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    long long t = static_cast<long long>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::string format_optional(const std::optional<double> &v) {
  return v ? fmt::format("{}", *v) : std::string();
}

}  // namespace

std::string format_predictions(const PredictionSet &preds) {
  std::string out(kPredictionsHeader);
  out += '\n';
  for (const auto &[id, v] : preds) out += fmt::format("{},{}\n", id, v);
  return out;
}

PredictionSet parse_predictions(std::string_view text, const std::string &source) {
  PredictionSet preds;
  std::size_t start = 0, line_no = 0;
  bool header_seen = false;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(
        start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kPredictionsHeader)
        throw FormatError(fmt::format("{}: header must be '{}'", source, kPredictionsHeader));
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      throw FormatError(fmt::format("{}:{}: expected 2 fields", source, line_no));
    std::string id(line.substr(0, comma));
    std::string_view num = line.substr(comma + 1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(v))
      throw FormatError(fmt::format("{}:{}: bad prediction '{}'", source, line_no, num));
    if (id.empty()) throw FormatError(fmt::format("{}:{}: empty utt_id", source, line_no));
    if (!preds.emplace(id, v).second)
      throw DataError(fmt::format("{}:{}: duplicate utt_id '{}'", source, line_no, id));
  }
  if (!header_seen) throw FormatError(source + ": empty predictions file");
  return preds;
}

void write_predictions(const std::filesystem::path &path, const PredictionSet &preds) {
  write_file_atomic(path, format_predictions(preds));
}

PredictionSet read_predictions(const std::filesystem::path &path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_predictions(
      std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()),
      path.string());
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "pearson");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> tie_averaged_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "spearman");
  const std::vector<double> rx = tie_averaged_ranks(x);
  const std::vector<double> ry = tie_averaged_ranks(y);
  return pearson(rx, ry);
}

double mse(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 1, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  return total / static_cast<double>(x.size());
}

std::optional<double> kendall_tau_b(std::span<const double> x,
                                    std::span<const double> y) {
  check_pair(x, y, 2, "kendall_tau_b");
  const auto n = static_cast<long long>(x.size());
  long long score = 0;  // concordant minus discordant
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      score += sign(x[i] - x[j]) * sign(y[i] - y[j]);
  const long long n0 = n * (n - 1) / 2;
  const long long dx = n0 - tied_pairs(x);
  const long long dy = n0 - tied_pairs(y);
  if (dx == 0 || dy == 0) return std::nullopt;
  const double tau = static_cast<double>(score) /
                     std::sqrt(static_cast<double>(dx) * static_cast<double>(dy));
  return std::clamp(tau, -1.0, 1.0);
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::kUtterance: return "utterance";
    case Level::kSpeaker: return "speaker";
    case Level::kSystem: return "system";
  }
  return "?";
}

Level parse_level(std::string_view s) {
  if (s == "utterance") return Level::kUtterance;
  if (s == "speaker") return Level::kSpeaker;
  if (s == "system") return Level::kSystem;
  throw DataError(fmt::format("unknown level '{}'", s));
}

namespace {

struct LabeledPair {
  const UtteranceRecord *record;
  double pred;
};

// Labeled, predicted records sorted by utt_id.
std::vector<LabeledPair> intersect(const PredictionSet &preds,
                                   const CorpusManifest &manifest,
                                   std::optional<Split> split) {
  std::vector<LabeledPair> out;
  std::size_t unlabeled = 0;
  for (const UtteranceRecord &r : manifest.records()) {
    if (split && r.split != *split) continue;
    auto it = preds.find(r.utt_id);
    if (it == preds.end()) continue;
    if (!r.mos) {
      ++unlabeled;
      continue;
    }
    out.push_back({&r, it->second});
  }
  if (unlabeled > 0)
    spdlog::warn("{} predicted utterances have no MOS label and were excluded", unlabeled);
  std::sort(out.begin(), out.end(), [](const LabeledPair &a, const LabeledPair &b) {
    return a.record->utt_id < b.record->utt_id;
  });
  return out;
}

}  // namespace

std::vector<GroupAggregate> aggregate_by(const PredictionSet &preds,
                                         const CorpusManifest &manifest, Level level,
                                         std::optional<Split> split) {
  std::vector<LabeledPair> pairs = intersect(preds, manifest, split);
  if (pairs.empty())
    throw DataError("no utterance has both a MOS label and a prediction");
  std::map<std::string, GroupAggregate> groups;
  for (const LabeledPair &p : pairs) {
    const std::string &id = level == Level::kSpeaker  ? p.record->speaker_id
                            : level == Level::kSystem ? p.record->system_id
                                                      : p.record->utt_id;
    GroupAggregate &g = groups[id];
    g.group_id = id;
    g.level = level;
    g.mean_true += *p.record->mos;
    g.mean_pred += p.pred;
    ++g.count;
  }
  std::vector<GroupAggregate> out;
  out.reserve(groups.size());
  for (auto &[id, g] : groups) {
    g.mean_true /= static_cast<double>(g.count);
    g.mean_pred /= static_cast<double>(g.count);
    out.push_back(std::move(g));
  }
  return out;
}

std::string MetricBundle::flags() const {
  std::string out;
  auto add = [&](const std::optional<double> &v, const char *name) {
    if (v) return;
    if (!out.empty()) out += ';';
    out += name;
    out += "_undefined";
  };
  add(lcc, "lcc");
  add(srcc, "srcc");
  add(ktau, "ktau");
  return out;
}

MetricBundle evaluate(const PredictionSet &preds, const CorpusManifest &manifest,
                      Level level, std::optional<Split> split) {
  std::vector<double> truth, pred;
  if (level == Level::kUtterance) {
    for (const LabeledPair &p : intersect(preds, manifest, split)) {
      truth.push_back(*p.record->mos);
      pred.push_back(p.pred);
    }
  } else {
    for (const GroupAggregate &g : aggregate_by(preds, manifest, level, split)) {
      truth.push_back(g.mean_true);
      pred.push_back(g.mean_pred);
    }
  }
  if (truth.size() < 2)
    throw DegenerateError(fmt::format("{}-level evaluation needs at least 2 {}, found {}",
                                      to_string(level),
                                      level == Level::kUtterance ? "utterances" : "groups",
                                      truth.size()));
  MetricBundle b;
  b.level = level;
  b.points = truth.size();
  b.lcc = pearson(truth, pred);
  b.srcc = spearman(truth, pred);
  b.mse = mse(truth, pred);
  b.ktau = kendall_tau_b(truth, pred);
  return b;
}

std::string format_bundles_csv(std::span<const MetricBundle> bundles) {
  std::string out = "level,lcc,srcc,mse,ktau,flags\n";
  for (const MetricBundle &b : bundles)
    out += fmt::format("{},{},{},{},{},{}\n", to_string(b.level), format_optional(b.lcc),
                       format_optional(b.srcc), b.mse, format_optional(b.ktau), b.flags());
  return out;
}

std::string format_aggregates_csv(std::span<const GroupAggregate> groups) {
  std::string out = "level,group_id,mean_true,mean_pred,count\n";
  for (const GroupAggregate &g : groups)
    out += fmt::format("{},{},{},{},{}\n", to_string(g.level), g.group_id, g.mean_true,
                       g.mean_pred, g.count);
  return out;
}

}  // namespace moscope
