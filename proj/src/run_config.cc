// run_config.cc

#include "moscope/run_config.h"

#include <charconv>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/error.h"

namespace moscope {

namespace {

using boost::property_tree::ptree;

class Section {
 public:
  Section(const ptree *tree, std::string name, const std::string &source)
      : tree_(tree), name_(std::move(name)), source_(source) {}

  std::optional<std::string> raw(const std::string &key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return boost::trim_copy(it->second.data());
  }

  template <typename T>
  void number(const std::string &key, T &out) {
    if (auto s = raw(key)) out = parse_number<T>(key, *s);
  }

  void boolean(const std::string &key, bool &out) {
    if (auto s = raw(key)) out = parse_bool(key, *s);
  }

  template <typename T>
  void number_list(const std::string &key, std::vector<T> &out) {
    if (auto s = raw(key)) {
      out.clear();
      for (const std::string &item : split(key, *s)) out.push_back(parse_number<T>(key, item));
    }
  }

  void bool_list(const std::string &key, std::vector<bool> &out) {
    if (auto s = raw(key)) {
      out.clear();
      for (const std::string &item : split(key, *s)) out.push_back(parse_bool(key, item));
    }
  }

  void optional_list(const std::string &key, std::vector<std::optional<double>> &out) {
    if (auto s = raw(key)) {
      out.clear();
      for (const std::string &item : split(key, *s))
        out.push_back(item == "none" ? std::nullopt
                                     : std::optional<double>(parse_number<double>(key, item)));
    }
  }

  // Throws on any key that was never asked for.
  void reject_unknown() const {
    if (!tree_) return;
    for (const auto &[key, child] : *tree_)
      if (!used_.count(key))
        throw FormatError(fmt::format("{}: unknown key '{}' in [{}]", source_, key, name_));
  }

  template <typename T>
  T parse_number(const std::string &key, const std::string &s) const {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw FormatError(fmt::format("{}: [{}] {} = '{}' is not a valid number", source_, name_,
                                    key, s));
    return v;
  }

  bool parse_bool(const std::string &key, const std::string &s) const {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw FormatError(fmt::format("{}: [{}] {} = '{}' is not a boolean", source_, name_, key, s));
  }

 private:
  std::vector<std::string> split(const std::string &key, const std::string &s) const {
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(","));
    for (std::string &p : parts) {
      boost::trim(p);
      if (p.empty())
        throw FormatError(fmt::format("{}: [{}] {} has an empty list item", source_, name_, key));
    }
    return parts;
  }

  const ptree *tree_;
  std::string name_;
  std::string source_;
  std::set<std::string> used_;
};

}  // namespace

ModelConfig RunConfig::model_config() const {
  const double init = initial_output.value_or(0.5 * (scale_min + scale_max));
  if (architecture == Architecture::kLowCapacity) {
    LowCapacityCNNConfig c = low_capacity;
    c.initial_output = init;
    return c;
  }
  FrameModelConfig f = frame;
  f.initial_output = init;
  return f;
}

std::vector<LowCapacityCNNConfig> RunConfig::expand_grid() const {
  LowCapacityCNNConfig base = low_capacity;
  base.initial_output = initial_output.value_or(0.5 * (scale_min + scale_max));
  std::vector<LowCapacityCNNConfig> out;
  for (std::size_t f : grid.filters)
    for (double d : grid.dropout_rate)
      for (double l2 : grid.l2)
        for (bool bn : grid.input_batchnorm)
          for (std::size_t b : grid.batch_size)
            for (const std::optional<double> &lr : grid.learning_rate) {
              LowCapacityCNNConfig c = base;
              c.filters = f;
              c.dropout_rate = d;
              c.l2 = l2;
              c.input_batchnorm = bn;
              c.batch_size = b;
              c.learning_rate = lr;
              c.validate();
              out.push_back(c);
            }
  if (out.empty()) throw DataError("grid is empty");
  return out;
}

RunConfig parse_run_config(std::string_view text, const std::string &source) {
  ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw FormatError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  static const std::set<std::string> kSections{"model", "optimizer", "early_stop", "features",
                                               "scale", "grid"};
  for (const auto &[name, child] : tree) {
    if (!kSections.count(name))
      throw FormatError(fmt::format("{}: unknown section or top-level key '{}'", source, name));
  }
  auto section = [&](const std::string &name) {
    auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name, source);
  };

  RunConfig c;
  {
    Section s = section("model");
    if (auto a = s.raw("architecture")) c.architecture = parse_architecture(*a);
    LowCapacityCNNConfig &lc = c.low_capacity;
    FrameModelConfig &fm = c.frame;
    // Both configs read the shared keys; the architecture picks one.
    const bool frame = c.architecture == Architecture::kFrame;
    if (frame) {
      s.number("filters", fm.filters);
      s.number("kernel", fm.kernel);
      s.number("pool", fm.pool);
      s.number("l2", fm.l2);
      s.number("batch_size", fm.batch_size);
      s.number("alpha", fm.alpha);
      s.number("seed", fm.seed);
      s.boolean("normalize", fm.normalize);
      lc.seed = fm.seed;
      for (const char *k : {"dropout_rate", "input_batchnorm", "learning_rate"})
        if (s.raw(k))
          throw FormatError(fmt::format("{}: [model] {} does not apply to the frame model",
                                        source, k));
    } else {
      s.number("filters", lc.filters);
      s.number("kernel", lc.kernel);
      s.number("pool", lc.pool);
      s.number("dropout_rate", lc.dropout_rate);
      s.number("l2", lc.l2);
      s.boolean("input_batchnorm", lc.input_batchnorm);
      s.number("batch_size", lc.batch_size);
      s.number("alpha", lc.alpha);
      s.number("seed", lc.seed);
      s.boolean("normalize", lc.normalize);
      if (auto lr = s.raw("learning_rate"))
        lc.learning_rate = s.parse_number<double>("learning_rate", *lr);
      fm.seed = lc.seed;
    }
    if (auto v = s.raw("initial_output"))
      c.initial_output = s.parse_number<double>("initial_output", *v);
    s.reject_unknown();
  }
  {
    Section s = section("optimizer");
    s.number("learning_rate", c.optimizer.learning_rate);
    s.number("beta1", c.optimizer.beta1);
    s.number("beta2", c.optimizer.beta2);
    s.number("epsilon", c.optimizer.epsilon);
    s.reject_unknown();
  }
  {
    Section s = section("early_stop");
    s.number("patience", c.early_stop.patience);
    s.number("max_epochs", c.early_stop.max_epochs);
    s.number("min_delta", c.early_stop.min_delta);
    s.reject_unknown();
  }
  {
    Section s = section("features");
    s.number("fft_size", c.stft.fft_size);
    s.number("hop", c.stft.hop);
    if (auto w = s.raw("window")) c.stft.window = parse_window(*w);
    s.boolean("log_magnitude", c.stft.log_magnitude);
    s.reject_unknown();
  }
  {
    Section s = section("scale");
    s.number("min", c.scale_min);
    s.number("max", c.scale_max);
    s.reject_unknown();
  }
  {
    Section s = section("grid");
    s.number_list("filters", c.grid.filters);
    s.number_list("dropout_rate", c.grid.dropout_rate);
    s.number_list("l2", c.grid.l2);
    s.bool_list("input_batchnorm", c.grid.input_batchnorm);
    s.number_list("batch_size", c.grid.batch_size);
    s.optional_list("learning_rate", c.grid.learning_rate);
    s.reject_unknown();
  }

  if (!(c.scale_min < c.scale_max))
    throw DataError(fmt::format("{}: scale min {} must be below max {}", source, c.scale_min,
                                c.scale_max));
  std::visit([](const auto &m) { m.validate(); }, c.model_config());
  c.optimizer.validate();
  c.early_stop.validate();
  c.stft.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char *>(bytes.data()),
                                           bytes.size()),
                          path.string());
}

}  // namespace moscope
