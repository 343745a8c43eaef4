// features.cc

#include "moscope/features.h"

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fftw3.h>
#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"

namespace moscope {

std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::kSpectrogram ? "spectrogram" : "embedding";
}

FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "spectrogram") return FeatureKind::kSpectrogram;
  if (s == "embedding") return FeatureKind::kEmbedding;
  throw DataError(fmt::format("unknown feature kind '{}'", s));
}

FeatureMatrix::FeatureMatrix(FeatureKind kind, std::size_t rows,
                             std::size_t cols, std::vector<double> data)
    : kind_(kind), rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows_ < 1 || cols_ < 1)
    throw ShapeError(fmt::format("feature matrix must be at least 1x1, got {}x{}",
                                 rows_, cols_));
  if (data_.size() != rows_ * cols_)
    throw ShapeError(fmt::format("feature data length {} != {}x{}", data_.size(),
                                 rows_, cols_));
  if (kind_ == FeatureKind::kEmbedding && cols_ != 1)
    throw ShapeError(fmt::format("embedding must have one column, got {}", cols_));
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw DataError(fmt::format("non-finite feature value at row {}, column {}",
                                  i / cols_, i % cols_));
}

FeatureMatrix FeatureMatrix::embedding(std::vector<double> values) {
  const std::size_t n = values.size();
  return FeatureMatrix(FeatureKind::kEmbedding, n, 1, std::move(values));
}

std::string_view to_string(WindowType w) {
  switch (w) {
    case WindowType::kHann: return "hann";
    case WindowType::kHamming: return "hamming";
    case WindowType::kRect: return "rect";
  }
  return "?";
}

WindowType parse_window(std::string_view s) {
  if (s == "hann") return WindowType::kHann;
  if (s == "hamming") return WindowType::kHamming;
  if (s == "rect") return WindowType::kRect;
  throw DataError(fmt::format("unknown window '{}'", s));
}

void StftConfig::validate() const {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw DataError(fmt::format("fft_size {} is not a power of two", fft_size));
  if (hop == 0 || hop > fft_size)
    throw DataError(fmt::format("hop {} must be in [1, fft_size={}]", hop, fft_size));
}

std::vector<double> make_window(WindowType type, std::size_t n) {
  std::vector<double> w(n, 1.0);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double c = std::cos(step * static_cast<double>(i));
    if (type == WindowType::kHann) w[i] = 0.5 - 0.5 * c;
    else if (type == WindowType::kHamming) w[i] = 0.54 - 0.46 * c;
  }
  return w;
}

namespace {

// FFTW's planner is not re-entrant; execution on distinct buffers is.
std::mutex &planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(std::size_t bin) const {
    return std::hypot(out_[bin][0], out_[bin][1]);
  }

 private:
  std::size_t n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

FeatureMatrix stft_magnitude(const AudioBuffer &audio, const StftConfig &cfg) {
  cfg.validate();
  const std::size_t n = audio.samples.size();
  if (n < cfg.fft_size)
    throw DataError(fmt::format("audio has {} samples, shorter than one {}-sample frame",
                                n, cfg.fft_size));
  const std::size_t frames = 1 + (n - cfg.fft_size) / cfg.hop;
  const std::size_t bins = cfg.n_bins();
  const std::vector<double> window = make_window(cfg.window, cfg.fft_size);

  RealFft fft(cfg.fft_size);
  std::vector<double> data(frames * bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double *frame = audio.samples.data() + t * cfg.hop;
    double *in = fft.input();
    for (std::size_t i = 0; i < cfg.fft_size; ++i) in[i] = frame[i] * window[i];
    fft.execute();
    double *row = data.data() + t * bins;
    for (std::size_t f = 0; f < bins; ++f) {
      double mag = fft.magnitude(f);
      row[f] = cfg.log_magnitude ? std::log(std::max(mag, 1e-10)) : mag;
    }
  }
  return FeatureMatrix(FeatureKind::kSpectrogram, frames, bins, std::move(data));
}

FeatureMatrix average_spectrum_embedding(const AudioBuffer &audio,
                                         const StftConfig &cfg) {
  FeatureMatrix spec = stft_magnitude(audio, cfg);
  std::vector<double> mean(spec.cols(), 0.0);
  for (std::size_t t = 0; t < spec.rows(); ++t)
    for (std::size_t f = 0; f < spec.cols(); ++f) mean[f] += spec(t, f);
  for (double &v : mean) v /= static_cast<double>(spec.rows());
  return FeatureMatrix::embedding(std::move(mean));
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix &m) {
  ByteWriter out;
  out.put_bytes("FEAT");
  out.put_u32(kFeatureFormatVersion);
  out.put_u8(static_cast<std::uint8_t>(m.kind()));
  out.put_u32(static_cast<std::uint32_t>(m.rows()));
  out.put_u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) out.put_f32(static_cast<float>(v));
  return out.bytes();
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes,
                              const std::string &source) {
  ByteReader in(bytes, source);
  if (in.get_bytes(4, "magic") != "FEAT")
    throw FormatError(source + ": bad magic, not a FEAT file");
  std::uint32_t version = in.get_u32("version");
  if (version != kFeatureFormatVersion)
    throw FormatError(fmt::format("{}: unsupported FEAT version {}", source, version));
  std::uint8_t kind = in.get_u8("kind");
  if (kind > 1) throw FormatError(fmt::format("{}: unknown kind {}", source, kind));
  std::uint32_t rows = in.get_u32("rows");
  std::uint32_t cols = in.get_u32("cols");
  const std::uint64_t count = std::uint64_t{rows} * cols;
  if (in.remaining() < count * 4)
    throw FormatError(fmt::format("{}: truncated payload, expected {} floats", source, count));
  std::vector<double> data(count);
  for (double &v : data) v = in.get_f32("payload");
  if (in.remaining() != 0)
    throw FormatError(fmt::format("{}: {} trailing bytes", source, in.remaining()));
  try {
    return FeatureMatrix(static_cast<FeatureKind>(kind), rows, cols, std::move(data));
  } catch (const Error &e) {
    throw DataError(source + ": " + e.what());
  }
}

void write_features(const std::filesystem::path &path, const FeatureMatrix &m) {
  write_file_atomic(path, encode_features(m));
}

FeatureMatrix read_features(const std::filesystem::path &path) {
  return decode_features(read_file_bytes(path), path.string());
}

FeatureMatrix load_embedding(const std::filesystem::path &path,
                             std::optional<std::size_t> expected_dim) {
  FeatureMatrix m = read_features(path);
  if (m.kind() != FeatureKind::kEmbedding)
    throw ShapeError(path.string() + ": holds a spectrogram, expected an embedding");
  if (expected_dim && m.rows() != *expected_dim)
    throw ShapeError(fmt::format("{}: embedding dimension {} != expected {}",
                                 path.string(), m.rows(), *expected_dim));
  return m;
}

Normalizer fit_normalizer(std::span<const FeatureMatrix> train_features) {
  if (train_features.empty()) throw DataError("cannot fit a normalizer on no features");
  const FeatureMatrix &first = train_features.front();
  Normalizer n;
  n.kind = first.kind();
  const bool embedding = n.kind == FeatureKind::kEmbedding;
  const std::size_t dim = embedding ? first.rows() : first.cols();
  std::size_t total_rows = 0;
  for (const FeatureMatrix &m : train_features) {
    if (m.kind() != n.kind) throw DataError("normalizer fit over mixed feature kinds");
    if (m.cols() != first.cols() || (embedding && m.rows() != first.rows()))
      throw ShapeError("normalizer fit over mismatched feature shapes");
    total_rows += m.rows();
  }
  if (total_rows < 2) throw DataError("normalizer needs at least 2 rows");
  const std::size_t observations =
      embedding ? train_features.size() : total_rows;
  if (observations < 2)
    throw DataError("normalizer needs at least 2 embeddings");

  // Two passes: mean first, then centred squares.
  n.mean.assign(dim, 0.0);
  for (const FeatureMatrix &m : train_features)
    for (std::size_t i = 0; i < m.data().size(); ++i)
      n.mean[embedding ? i : i % dim] += m.data()[i];
  for (double &v : n.mean) v /= static_cast<double>(observations);

  std::vector<double> var(dim, 0.0);
  for (const FeatureMatrix &m : train_features)
    for (std::size_t i = 0; i < m.data().size(); ++i) {
      std::size_t j = embedding ? i : i % dim;
      double d = m.data()[i] - n.mean[j];
      var[j] += d * d;
    }
  n.sd.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double sd = std::sqrt(var[j] / static_cast<double>(observations));
    n.sd[j] = sd < 1e-12 ? 1.0 : sd;
  }
  return n;
}

FeatureMatrix apply_normalizer(const Normalizer &n, const FeatureMatrix &m) {
  if (m.kind() != n.kind) throw DataError("normalizer applied to a different feature kind");
  const bool embedding = n.kind == FeatureKind::kEmbedding;
  const std::size_t dim = embedding ? m.rows() : m.cols();
  if (dim != n.mean.size())
    throw ShapeError(fmt::format("normalizer has {} entries, features have {}",
                                 n.mean.size(), dim));
  std::vector<double> out(m.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t j = embedding ? i : i % dim;
    out[i] = (m.data()[i] - n.mean[j]) / n.sd[j];
  }
  return FeatureMatrix(m.kind(), m.rows(), m.cols(), std::move(out));
}

std::filesystem::path feature_path(const std::filesystem::path &dir,
                                   std::string_view utt_id) {
  return dir / (std::string(utt_id) + ".feat");
}

void write_feature_set_info(const std::filesystem::path &dir,
                            const FeatureSetInfo &info) {
  std::string text = fmt::format("kind = {}\n", to_string(info.kind));
  if (info.stft) {
    text += fmt::format("fft_size = {}\nhop = {}\nwindow = {}\nlog_magnitude = {}\n",
                        info.stft->fft_size, info.stft->hop,
                        to_string(info.stft->window),
                        info.stft->log_magnitude ? "true" : "false");
  }
  write_file_atomic(dir / "features.ini", text);
}

std::optional<FeatureSetInfo> read_feature_set_info(const std::filesystem::path &dir) {
  const std::filesystem::path path = dir / "features.ini";
  if (!std::filesystem::exists(path)) return std::nullopt;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw FormatError(path.string() + ": " + e.message());
  }
  FeatureSetInfo info;
  info.kind = parse_feature_kind(tree.get<std::string>("kind", "spectrogram"));
  if (tree.count("fft_size")) {
    StftConfig cfg;
    cfg.fft_size = tree.get<std::size_t>("fft_size");
    cfg.hop = tree.get<std::size_t>("hop", cfg.fft_size / 2);
    cfg.window = parse_window(tree.get<std::string>("window", "hann"));
    cfg.log_magnitude = tree.get<bool>("log_magnitude", false);
    cfg.validate();
    info.stft = cfg;
  }
  return info;
}

}  // namespace moscope
