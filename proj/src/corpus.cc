// corpus.cc

#include "moscope/corpus.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"

namespace moscope {

namespace {

constexpr std::array<std::string_view, 6> kColumns = {
    "utt_id", "speaker_id", "system_id", "mos", "split", "audio_path"};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

void check_field_text(const std::string &value, const char *column,
                      const std::string &utt_id) {
  if (value.find_first_of(",\n\r") != std::string::npos)
    throw DataError(fmt::format("utt_id '{}': {} contains a comma or newline",
                                utt_id, column));
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view token) {
  if (token == "train") return Split::kTrain;
  if (token == "val") return Split::kVal;
  if (token == "test") return Split::kTest;
  throw DataError(fmt::format("unknown split token '{}'", token));
}

CorpusManifest::CorpusManifest(std::vector<UtteranceRecord> records,
                               double scale_min, double scale_max)
    : records_(std::move(records)), scale_min_(scale_min), scale_max_(scale_max) {
  if (!(scale_min_ < scale_max_))
    throw DataError(fmt::format("scale_min {} must be below scale_max {}",
                                scale_min_, scale_max_));
  std::unordered_set<std::string> seen;
  for (const UtteranceRecord &r : records_) {
    if (r.utt_id.empty()) throw DataError("record with empty utt_id");
    if (!seen.insert(r.utt_id).second)
      throw DataError(fmt::format("duplicate utt_id '{}'", r.utt_id));
    check_field_text(r.utt_id, "utt_id", r.utt_id);
    check_field_text(r.speaker_id, "speaker_id", r.utt_id);
    check_field_text(r.system_id, "system_id", r.utt_id);
    check_field_text(r.audio_path, "audio_path", r.utt_id);
    if (r.mos) {
      if (!std::isfinite(*r.mos) || *r.mos < scale_min_ || *r.mos > scale_max_)
        throw DataError(fmt::format("utt_id '{}': mos {} outside [{}, {}]",
                                    r.utt_id, *r.mos, scale_min_, scale_max_));
    }
  }
}

const UtteranceRecord *CorpusManifest::find(std::string_view utt_id) const {
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const UtteranceRecord &r) { return r.utt_id == utt_id; });
  return it == records_.end() ? nullptr : &*it;
}

CorpusManifest parse_manifest(std::string_view text, double scale_min,
                              double scale_max, const std::string &source) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(
        start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (lines.empty() || lines.front().empty())
    throw FormatError(source + ": missing header row");

  std::map<std::string_view, std::size_t> column_index;
  std::vector<std::string_view> header = split_fields(lines.front());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find(kColumns.begin(), kColumns.end(), header[i]) == kColumns.end())
      throw FormatError(fmt::format("{}: unknown column '{}'", source, header[i]));
    if (!column_index.emplace(header[i], i).second)
      throw FormatError(fmt::format("{}: repeated column '{}'", source, header[i]));
  }
  for (std::string_view col : kColumns)
    if (!column_index.count(col))
      throw FormatError(fmt::format("{}: missing column '{}'", source, col));

  std::vector<UtteranceRecord> records;
  std::unordered_set<std::string> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    if (line.empty()) continue;
    std::vector<std::string_view> fields = split_fields(line);
    std::size_t line_no = ln + 1;
    if (fields.size() != header.size())
      throw FormatError(fmt::format("{}:{}: expected {} fields, found {}", source,
                                    line_no, header.size(), fields.size()));
    auto field = [&](std::string_view col) { return fields[column_index[col]]; };

    UtteranceRecord r;
    r.utt_id = std::string(field("utt_id"));
    if (r.utt_id.empty())
      throw DataError(fmt::format("{}:{}: empty utt_id", source, line_no));
    r.speaker_id = std::string(field("speaker_id"));
    r.system_id = std::string(field("system_id"));
    r.audio_path = std::string(field("audio_path"));
    try {
      r.split = parse_split(field("split"));
    } catch (const DataError &e) {
      throw DataError(fmt::format("{}:{}: utt_id '{}': {}", source, line_no,
                                  r.utt_id, e.what()));
    }
    std::string_view mos = field("mos");
    if (!mos.empty()) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(mos.data(), mos.data() + mos.size(), v);
      if (ec != std::errc() || ptr != mos.data() + mos.size())
        throw DataError(fmt::format("{}:{}: utt_id '{}': unparsable mos '{}'",
                                    source, line_no, r.utt_id, mos));
      if (!std::isfinite(v) || v < scale_min || v > scale_max)
        throw DataError(fmt::format("{}:{}: utt_id '{}': mos {} outside [{}, {}]",
                                    source, line_no, r.utt_id, mos, scale_min,
                                    scale_max));
      r.mos = v;
    }
    if (!seen.insert(r.utt_id).second)
      throw DataError(fmt::format("{}:{}: duplicate utt_id '{}'", source,
                                  line_no, r.utt_id));
    records.push_back(std::move(r));
  }
  return CorpusManifest(std::move(records), scale_min, scale_max);
}

CorpusManifest load_manifest(const std::filesystem::path &path,
                             double scale_min, double scale_max) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::string_view text(reinterpret_cast<const char *>(bytes.data()), bytes.size());
  return parse_manifest(text, scale_min, scale_max, path.string());
}

std::string format_manifest(const CorpusManifest &manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const UtteranceRecord &r : manifest.records()) {
    out += fmt::format("{},{},{},{},{},{}\n", r.utt_id, r.speaker_id,
                       r.system_id, r.mos ? fmt::format("{}", *r.mos) : "",
                       to_string(r.split), r.audio_path);
  }
  return out;
}

void write_manifest(const std::filesystem::path &path,
                    const CorpusManifest &manifest) {
  write_file_atomic(path, format_manifest(manifest));
}

std::vector<std::string> validate_speaker_disjointness(
    const CorpusManifest &manifest) {
  std::map<std::string, std::set<Split>> splits_of;
  for (const UtteranceRecord &r : manifest.records())
    splits_of[r.speaker_id].insert(r.split);
  std::vector<std::string> overlap;
  for (const auto &[speaker, splits] : splits_of)
    if (splits.size() > 1) overlap.push_back(speaker);
  return overlap;
}

}  // namespace moscope
