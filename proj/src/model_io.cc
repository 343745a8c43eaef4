// model_io.cc
//
// MOSR layout, little-endian:
//   "MOSR" u32 version u8 architecture
//   u32 n, n bytes of "key=value\n" config text
//   u8 has_normalizer [u8 kind u32 count, count f32 means, count f32 sds]
//   u32 n_blocks, then per block: u32 layer index, u64 count, count f32
// Blocks carry each layer's parameters followed by its state tensors.

#include <charconv>
#include <map>

#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"
#include "moscope/models.h"

namespace moscope {

namespace {

using KeyValues = std::map<std::string, std::string, std::less<>>;

std::string fmt_double(double v) { return fmt::format("{}", v); }

KeyValues parse_key_values(std::string_view text, const std::string &source) {
  KeyValues kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError(fmt::format("{}: config line '{}' has no '='", source, line));
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return kv;
}

class ConfigReader {
 public:
  ConfigReader(KeyValues kv, const std::string &source) : kv_(std::move(kv)), source_(source) {}

  const std::string &str(const std::string &key) const {
    auto it = kv_.find(key);
    if (it == kv_.end())
      throw FormatError(fmt::format("{}: config is missing '{}'", source_, key));
    return it->second;
  }
  bool has(const std::string &key) const { return kv_.count(key) != 0; }

  template <typename T>
  T number(const std::string &key) const {
    const std::string &s = str(key);
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw FormatError(fmt::format("{}: bad value '{}' for '{}'", source_, s, key));
    return v;
  }

  bool boolean(const std::string &key) const {
    const std::string &s = str(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw FormatError(fmt::format("{}: bad boolean '{}' for '{}'", source_, s, key));
  }

 private:
  KeyValues kv_;
  std::string source_;
};

}  // namespace

std::string model_config_text(const TrainedModel &model) {
  std::string out;
  auto add = [&out](std::string_view k, const std::string &v) {
    out += fmt::format("{}={}\n", k, v);
  };
  add("architecture", std::string(to_string(model.architecture)));
  add("input_dim", std::to_string(model.input_dim));
  add("scale_min", fmt_double(model.scale_min));
  add("scale_max", fmt_double(model.scale_max));
  if (const auto *c = std::get_if<LowCapacityCNNConfig>(&model.config)) {
    add("filters", std::to_string(c->filters));
    add("kernel", std::to_string(c->kernel));
    add("pool", std::to_string(c->pool));
    add("dropout_rate", fmt_double(c->dropout_rate));
    add("l2", fmt_double(c->l2));
    add("input_batchnorm", c->input_batchnorm ? "true" : "false");
    add("batch_size", std::to_string(c->batch_size));
    add("seed", std::to_string(c->seed));
    add("alpha", fmt_double(c->alpha));
    add("normalize", c->normalize ? "true" : "false");
    add("initial_output", fmt_double(c->initial_output));
    if (c->learning_rate) add("learning_rate", fmt_double(*c->learning_rate));
  } else {
    const auto &f = std::get<FrameModelConfig>(model.config);
    add("filters", std::to_string(f.filters));
    add("kernel", std::to_string(f.kernel));
    add("pool", std::to_string(f.pool));
    add("alpha", fmt_double(f.alpha));
    add("l2", fmt_double(f.l2));
    add("batch_size", std::to_string(f.batch_size));
    add("seed", std::to_string(f.seed));
    add("normalize", f.normalize ? "true" : "false");
    add("initial_output", fmt_double(f.initial_output));
  }
  if (model.stft) {
    add("stft.fft_size", std::to_string(model.stft->fft_size));
    add("stft.hop", std::to_string(model.stft->hop));
    add("stft.window", std::string(to_string(model.stft->window)));
    add("stft.log_magnitude", model.stft->log_magnitude ? "true" : "false");
  }
  return out;
}

std::vector<std::uint8_t> encode_model(const TrainedModel &model_in) {
  TrainedModel model = model_in;  // tensors_of needs mutable access
  ByteWriter w;
  w.put_bytes("MOSR");
  w.put_u32(kModelFormatVersion);
  w.put_u8(static_cast<std::uint8_t>(model.architecture));
  const std::string text = model_config_text(model);
  w.put_u32(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  w.put_u8(model.normalizer ? 1 : 0);
  if (model.normalizer) {
    const Normalizer &n = *model.normalizer;
    w.put_u8(static_cast<std::uint8_t>(n.kind));
    w.put_u32(static_cast<std::uint32_t>(n.mean.size()));
    for (double v : n.mean) w.put_f32(static_cast<float>(v));
    for (double v : n.sd) w.put_f32(static_cast<float>(v));
  }
  std::vector<std::pair<std::uint32_t, std::vector<nn::Tensor2D *>>> blocks;
  for (std::size_t i = 0; i < model.net.size(); ++i) {
    auto tensors = model.net.tensors_of(i);
    if (!tensors.empty()) blocks.emplace_back(static_cast<std::uint32_t>(i), tensors);
  }
  w.put_u32(static_cast<std::uint32_t>(blocks.size()));
  for (auto &[index, tensors] : blocks) {
    std::uint64_t count = 0;
    for (nn::Tensor2D *t : tensors) count += static_cast<std::uint64_t>(t->size());
    w.put_u32(index);
    w.put_u64(count);
    for (nn::Tensor2D *t : tensors)
      for (Eigen::Index k = 0; k < t->size(); ++k) w.put_f32(static_cast<float>(t->data()[k]));
  }
  return w.bytes();
}

TrainedModel decode_model(std::span<const std::uint8_t> bytes, const std::string &source) {
  ByteReader r(bytes, source);
  if (r.get_bytes(4, "magic") != "MOSR")
    throw FormatError(fmt::format("{}: not a model file (bad magic)", source));
  const std::uint32_t version = r.get_u32("version");
  if (version != kModelFormatVersion)
    throw FormatError(fmt::format("{}: unsupported model format version {} (expected {})",
                                  source, version, kModelFormatVersion));
  const std::uint8_t arch_byte = r.get_u8("architecture");
  if (arch_byte > 1)
    throw FormatError(fmt::format("{}: unknown architecture code {}", source, arch_byte));
  const auto arch = static_cast<Architecture>(arch_byte);
  const std::uint32_t text_len = r.get_u32("config length");
  ConfigReader cfg(parse_key_values(r.get_bytes(text_len, "config"), source), source);
  if (cfg.str("architecture") != to_string(arch))
    throw FormatError(fmt::format("{}: architecture code and config disagree", source));

  const auto input_dim = cfg.number<std::size_t>("input_dim");
  TrainedModel model;
  try {
    if (arch == Architecture::kLowCapacity) {
      LowCapacityCNNConfig c;
      c.filters = cfg.number<std::size_t>("filters");
      c.kernel = cfg.number<std::size_t>("kernel");
      c.pool = cfg.number<std::size_t>("pool");
      c.dropout_rate = cfg.number<double>("dropout_rate");
      c.l2 = cfg.number<double>("l2");
      c.input_batchnorm = cfg.boolean("input_batchnorm");
      c.batch_size = cfg.number<std::size_t>("batch_size");
      c.seed = cfg.number<std::uint64_t>("seed");
      c.alpha = cfg.number<double>("alpha");
      c.normalize = cfg.boolean("normalize");
      c.initial_output = cfg.number<double>("initial_output");
      if (cfg.has("learning_rate")) c.learning_rate = cfg.number<double>("learning_rate");
      model = build_low_capacity_cnn(c, input_dim);
    } else {
      FrameModelConfig f;
      f.filters = cfg.number<std::size_t>("filters");
      f.kernel = cfg.number<std::size_t>("kernel");
      f.pool = cfg.number<std::size_t>("pool");
      f.alpha = cfg.number<double>("alpha");
      f.l2 = cfg.number<double>("l2");
      f.batch_size = cfg.number<std::size_t>("batch_size");
      f.seed = cfg.number<std::uint64_t>("seed");
      f.normalize = cfg.boolean("normalize");
      f.initial_output = cfg.number<double>("initial_output");
      model = build_frame_model(f, input_dim);
    }
  } catch (const FormatError &) {
    throw;
  } catch (const Error &e) {
    throw FormatError(fmt::format("{}: stored config is invalid: {}", source, e.what()));
  }
  model.scale_min = cfg.number<double>("scale_min");
  model.scale_max = cfg.number<double>("scale_max");
  if (cfg.has("stft.fft_size")) {
    StftConfig s;
    s.fft_size = cfg.number<std::size_t>("stft.fft_size");
    s.hop = cfg.number<std::size_t>("stft.hop");
    s.window = parse_window(cfg.str("stft.window"));
    s.log_magnitude = cfg.boolean("stft.log_magnitude");
    model.stft = s;
  }

  if (r.get_u8("normalizer flag")) {
    Normalizer n;
    const std::uint8_t kind = r.get_u8("normalizer kind");
    if (kind > 1) throw FormatError(fmt::format("{}: bad normalizer kind {}", source, kind));
    n.kind = static_cast<FeatureKind>(kind);
    const std::uint32_t count = r.get_u32("normalizer count");
    const std::size_t expected = input_dim;
    if (count != expected)
      throw FormatError(fmt::format("{}: normalizer has {} entries, model input has {}",
                                    source, count, expected));
    n.mean.resize(count);
    n.sd.resize(count);
    for (double &v : n.mean) v = r.get_f32("normalizer mean");
    for (double &v : n.sd) v = r.get_f32("normalizer sd");
    model.normalizer = std::move(n);
  }

  const std::uint32_t n_blocks = r.get_u32("block count");
  std::vector<bool> filled(model.net.size(), false);
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    const std::uint32_t index = r.get_u32("layer index");
    if (index >= model.net.size() || filled[index])
      throw FormatError(fmt::format("{}: bad or repeated layer index {}", source, index));
    auto tensors = model.net.tensors_of(index);
    std::uint64_t expected = 0;
    for (nn::Tensor2D *t : tensors) expected += static_cast<std::uint64_t>(t->size());
    const std::uint64_t count = r.get_u64("tensor count");
    if (count != expected)
      throw FormatError(fmt::format("{}: layer {} holds {} values, architecture needs {}",
                                    source, index, count, expected));
    for (nn::Tensor2D *t : tensors)
      for (Eigen::Index k = 0; k < t->size(); ++k) t->data()[k] = r.get_f32("weights");
    filled[index] = true;
  }
  for (std::size_t i = 0; i < model.net.size(); ++i)
    if (!filled[i] && !model.net.tensors_of(i).empty())
      throw FormatError(fmt::format("{}: no weights for layer {}", source, i));
  if (r.remaining() != 0)
    throw FormatError(fmt::format("{}: {} trailing bytes", source, r.remaining()));
  return model;
}

void save_model(const std::filesystem::path &path, const TrainedModel &model) {
  write_file_atomic(path, encode_model(model));
}

TrainedModel load_model(const std::filesystem::path &path) {
  return decode_model(read_file_bytes(path), path.string());
}

}  // namespace moscope
