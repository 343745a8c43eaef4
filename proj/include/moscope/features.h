// moscope/features.h
//
// Model inputs: magnitude-spectrogram frame matrices computed from audio and
// fixed-dimension utterance embeddings, plus the FEAT binary format that
// stores both.

#ifndef MOSCOPE_FEATURES_H_
#define MOSCOPE_FEATURES_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moscope/corpus.h"

namespace moscope {

enum class FeatureKind : std::uint8_t { kSpectrogram = 0, kEmbedding = 1 };

std::string_view to_string(FeatureKind k);
FeatureKind parse_feature_kind(std::string_view s);

// rows x cols, row-major. Spectrograms are T frames x F bins; embeddings are
// D x 1. All entries finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  // Throws ShapeError / DataError if the invariants do not hold.
  FeatureMatrix(FeatureKind kind, std::size_t rows, std::size_t cols,
                std::vector<double> data);

  static FeatureMatrix embedding(std::vector<double> values);

  FeatureKind kind() const { return kind_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double> &data() const { return data_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  bool operator==(const FeatureMatrix &) const = default;

 private:
  FeatureKind kind_ = FeatureKind::kSpectrogram;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class WindowType : std::uint8_t { kHann, kHamming, kRect };

std::string_view to_string(WindowType w);
WindowType parse_window(std::string_view s);

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 256;
  WindowType window = WindowType::kHann;
  bool log_magnitude = false;

  // 0 < hop <= fft_size, fft_size a power of two.
  void validate() const;
  std::size_t n_bins() const { return fft_size / 2 + 1; }
  bool operator==(const StftConfig &) const = default;
};

// Periodic window of length n.
std::vector<double> make_window(WindowType type, std::size_t n);

// T = 1 + (N - fft_size) / hop frames of |DFT| over the one-sided spectrum.
// Throws DataError if the audio is shorter than one frame.
FeatureMatrix stft_magnitude(const AudioBuffer &audio, const StftConfig &cfg);

// Utterance-level vector: the magnitude spectrogram averaged over frames
// (a long-term average spectrum), shaped as an fft_size/2+1 embedding.
FeatureMatrix average_spectrum_embedding(const AudioBuffer &audio,
                                         const StftConfig &cfg);

// FEAT format: "FEAT", u32 version = 1, u8 kind, u32 rows, u32 cols, then
// rows*cols float32 row-major, all little-endian.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureMatrix &m);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes,
                              const std::string &source = "<features>");
void write_features(const std::filesystem::path &path, const FeatureMatrix &m);
FeatureMatrix read_features(const std::filesystem::path &path);

// Reads a FEAT file that must hold an embedding, optionally of a fixed
// dimension.
FeatureMatrix load_embedding(const std::filesystem::path &path,
                             std::optional<std::size_t> expected_dim = std::nullopt);

// Per-column statistics for spectrograms (over every frame of every
// matrix); per-dimension statistics for embeddings (over utterances).
struct Normalizer {
  FeatureKind kind = FeatureKind::kSpectrogram;
  std::vector<double> mean;
  std::vector<double> sd;  // population sd; zero-variance entries hold 1

  bool operator==(const Normalizer &) const = default;
};

Normalizer fit_normalizer(std::span<const FeatureMatrix> train_features);
FeatureMatrix apply_normalizer(const Normalizer &n, const FeatureMatrix &m);

// A directory of "<utt_id>.feat" files plus a "features.ini" descriptor
// recording how they were made.
struct FeatureSetInfo {
  FeatureKind kind = FeatureKind::kSpectrogram;
  std::optional<StftConfig> stft;  // absent for imported embeddings
};

std::filesystem::path feature_path(const std::filesystem::path &dir,
                                   std::string_view utt_id);
void write_feature_set_info(const std::filesystem::path &dir,
                            const FeatureSetInfo &info);
// Returns nullopt when the directory carries no descriptor.
std::optional<FeatureSetInfo> read_feature_set_info(const std::filesystem::path &dir);

}  // namespace moscope

#endif  // MOSCOPE_FEATURES_H_
