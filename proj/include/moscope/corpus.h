// moscope/corpus.h
//
// Corpus manifests (utterance -> speaker, system, MOS label, split, audio)
// and 16-bit PCM WAV I/O.

#ifndef MOSCOPE_CORPUS_H_
#define MOSCOPE_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moscope {

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split s);
// Throws DataError on anything other than "train", "val", "test".
Split parse_split(std::string_view token);

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string system_id;
  std::optional<double> mos;  // absent for unlabeled utterances
  Split split = Split::kTrain;
  std::string audio_path;  // relative to the audio root

  bool operator==(const UtteranceRecord &) const = default;
};

inline constexpr double kDefaultScaleMin = 1.0;
inline constexpr double kDefaultScaleMax = 10.0;

class CorpusManifest {
 public:
  CorpusManifest() = default;
  // Validates every record; throws DataError naming the offending utt_id.
  CorpusManifest(std::vector<UtteranceRecord> records,
                 double scale_min = kDefaultScaleMin,
                 double scale_max = kDefaultScaleMax);

  const std::vector<UtteranceRecord> &records() const { return records_; }
  double scale_min() const { return scale_min_; }
  double scale_max() const { return scale_max_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // nullptr when the id is unknown.
  const UtteranceRecord *find(std::string_view utt_id) const;

  bool operator==(const CorpusManifest &) const = default;

 private:
  std::vector<UtteranceRecord> records_;
  double scale_min_ = kDefaultScaleMin;
  double scale_max_ = kDefaultScaleMax;
};

inline constexpr std::string_view kManifestHeader =
    "utt_id,speaker_id,system_id,mos,split,audio_path";

// Parses the comma-separated manifest. Errors carry the line number and,
// where one was read, the utt_id.
CorpusManifest parse_manifest(std::string_view text, double scale_min,
                              double scale_max,
                              const std::string &source = "<manifest>");
CorpusManifest load_manifest(const std::filesystem::path &path,
                             double scale_min = kDefaultScaleMin,
                             double scale_max = kDefaultScaleMax);
std::string format_manifest(const CorpusManifest &manifest);
void write_manifest(const std::filesystem::path &path,
                    const CorpusManifest &manifest);

// Speakers that appear in more than one split, sorted. Empty means the
// splits are speaker-disjoint. A non-empty result is a warning only.
std::vector<std::string> validate_speaker_disjointness(
    const CorpusManifest &manifest);

struct AudioBuffer {
  std::vector<double> samples;  // each in [-1, 1]
  std::uint32_t sample_rate = 16000;
};

// RIFF/WAVE, PCM format tag 1, 16-bit, mono. Sample s maps to s / 32768.
AudioBuffer parse_wav(std::span<const std::uint8_t> bytes,
                      const std::string &source = "<wav>");
AudioBuffer read_wav(const std::filesystem::path &path);

// Inverse of read_wav: round(x * 32768) clipped to the int16 range.
std::vector<std::uint8_t> encode_wav(const AudioBuffer &audio);
void write_wav(const std::filesystem::path &path, const AudioBuffer &audio);

}  // namespace moscope

#endif  // MOSCOPE_CORPUS_H_
