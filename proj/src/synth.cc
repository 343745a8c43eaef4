// synth.cc

#include "moscope/synth.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "moscope/error.h"

namespace moscope {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64 &rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// E[clamp(X, lo, hi)] for X ~ N(mu, sd^2).
double clamped_normal_mean(double mu, double sd, double lo, double hi) {
  if (sd <= 0.0) return std::clamp(mu, lo, hi);
  const double a = (lo - mu) / sd, b = (hi - mu) / sd;
  const double pa = normal_cdf(a), pb = normal_cdf(b);
  return lo * pa + hi * (1.0 - pb) + mu * (pb - pa) + sd * (normal_pdf(a) - normal_pdf(b));
}

}  // namespace

void SynthSpec::validate() const {
  if (n_speakers < 2) throw DataError("synthetic corpus needs at least 2 speakers");
  if (n_systems < 2) throw DataError("synthetic corpus needs at least 2 systems");
  if (utts_per_pair < 1) throw DataError("synthetic corpus needs at least 1 utterance per pair");
  if (sample_rate < 8000) throw DataError("sample rate below 8000 Hz");
  if (!(duration_s * sample_rate >= 512.0))
    throw DataError(fmt::format("duration {} s is shorter than one analysis frame", duration_s));
  if (!(label_noise_sd >= 0.0)) throw DataError("label noise sd must be non-negative");
}

double synth_uniform(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double synth_normal(std::mt19937_64 &rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - synth_uniform(rng);
  const double u2 = synth_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SynthDesign design_corpus(const SynthSpec &spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthDesign d;
  const std::size_t ns = spec.n_speakers;
  for (std::size_t s = 0; s < ns; ++s) {
    SynthSpeaker sp;
    sp.id = fmt::format("spk{:02}", s);
    sp.f0 = 90.0 + 190.0 * synth_uniform(rng);
    for (std::size_t h = 1; h <= kSynthHarmonics; ++h)
      sp.harmonics.push_back((0.3 + 0.7 * synth_uniform(rng)) / std::pow(double(h), 0.7));
    d.speakers.push_back(std::move(sp));
  }
  const std::vector<std::size_t> clarity_order = permutation(ns, rng);
  for (std::size_t s = 0; s < ns; ++s)
    d.speakers[s].clarity = -kSynthClarityRange + 2.0 * kSynthClarityRange *
                                                      double(clarity_order[s]) / double(ns - 1);
  // 60/20/20 by speaker; val and test get at least one speaker when n >= 3.
  std::size_t n_val = static_cast<std::size_t>(std::lround(0.2 * double(ns)));
  std::size_t n_test = n_val;
  if (ns >= 3) n_val = n_test = std::max<std::size_t>(1, n_val);
  else n_val = 1, n_test = 0;
  const std::vector<std::size_t> split_order = permutation(ns, rng);
  for (std::size_t k = 0; k < ns; ++k) {
    SynthSpeaker &sp = d.speakers[split_order[k]];
    if (k < n_test) sp.split = Split::kTest;
    else if (k < n_test + n_val) sp.split = Split::kVal;
    else sp.split = Split::kTrain;
  }
  for (std::size_t k = 0; k < spec.n_systems; ++k)
    d.systems.push_back({fmt::format("sys{}", k), double(k) / double(spec.n_systems - 1)});
  return d;
}

std::string synth_utt_id(std::size_t speaker, std::size_t system, std::size_t utt) {
  return fmt::format("spk{:02}_sys{}_{:03}", speaker, system, utt);
}

double synth_severity(double b, double c, double jitter) {
  return std::clamp(b + c + jitter, 0.0, 1.0);
}

double synth_mos(double severity, double label_noise) {
  return std::clamp(10.0 - 9.0 * severity + label_noise, 1.0, 10.0);
}

std::uint64_t synth_utterance_seed(std::uint64_t seed, std::size_t speaker,
                                   std::size_t system, std::size_t utt) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ speaker);
  h = splitmix64(h ^ system);
  return splitmix64(h ^ utt);
}

AudioBuffer render_utterance(const SynthSpeaker &speaker, double severity,
                             const SynthSpec &spec, std::mt19937_64 &rng) {
  const double sr = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * sr));
  std::vector<double> x(n, 0.0);
  double weight_sum = 0.0;
  for (double w : speaker.harmonics) weight_sum += w;

  // Syllables of 150-250 ms, each a harmonic tone at a jittered pitch under
  // a sine envelope.
  std::size_t pos = 0;
  while (pos < n) {
    const auto len = static_cast<std::size_t>((0.15 + 0.1 * synth_uniform(rng)) * sr);
    const double pitch = speaker.f0 * (0.85 + 0.3 * synth_uniform(rng));
    const std::size_t end = std::min(n, pos + len);
    std::vector<double> phase(kSynthHarmonics);
    for (double &p : phase) p = 2.0 * std::numbers::pi * synth_uniform(rng);
    for (std::size_t i = pos; i < end; ++i) {
      const double t = double(i - pos) / sr;
      const double env = std::sin(std::numbers::pi * double(i - pos) / double(len));
      double v = 0.0;
      for (std::size_t h = 0; h < kSynthHarmonics; ++h) {
        const double f = pitch * double(h + 1);
        if (f >= 0.45 * sr) break;
        v += speaker.harmonics[h] * std::sin(2.0 * std::numbers::pi * f * t + phase[h]);
      }
      x[i] = 0.5 * env * v / weight_sum;
    }
    pos = end;
  }

  // Degradations; both grow with severity.
  const double a = 0.95 * severity;
  double y = 0.0;
  for (double &v : x) {
    y = (1.0 - a) * v + a * y;
    v = y;
  }
  const double noise_sd = 0.003 + 0.12 * severity;
  for (double &v : x) v = std::clamp(v + noise_sd * synth_normal(rng), -1.0, 1.0);

  AudioBuffer audio;
  audio.samples = std::move(x);
  audio.sample_rate = spec.sample_rate;
  return audio;
}

CorpusManifest generate_corpus(const SynthSpec &spec, const std::filesystem::path &out_dir,
                               std::size_t workers) {
  const SynthDesign d = design_corpus(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", (out_dir / "wav").string(), ec.message()));

  const std::size_t per_speaker = spec.n_systems * spec.utts_per_pair;
  const std::size_t total = spec.n_speakers * per_speaker;
  std::vector<UtteranceRecord> records(total);
  parallel_for(
      total,
      [&](std::size_t i) {
        const std::size_t s = i / per_speaker;
        const std::size_t k = (i % per_speaker) / spec.utts_per_pair;
        const std::size_t u = i % spec.utts_per_pair;
        std::mt19937_64 rng(synth_utterance_seed(spec.seed, s, k, u));
        const double jitter = kSynthJitter * (2.0 * synth_uniform(rng) - 1.0);
        const double q = synth_severity(d.systems[k].severity, d.speakers[s].clarity, jitter);
        const double noise = spec.label_noise_sd * synth_normal(rng);
        UtteranceRecord &r = records[i];
        r.utt_id = synth_utt_id(s, k, u);
        r.speaker_id = d.speakers[s].id;
        r.system_id = d.systems[k].id;
        r.mos = synth_mos(q, noise);
        r.split = d.speakers[s].split;
        r.audio_path = "wav/" + r.utt_id + ".wav";
        write_wav(out_dir / r.audio_path, render_utterance(d.speakers[s], q, spec, rng));
      },
      workers);
  CorpusManifest manifest(std::move(records));
  write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

double expected_mos(double b, double c, double label_noise_sd) {
  // Midpoint rule over the uniform jitter; the clamped normal is exact.
  constexpr int kNodes = 2000;
  double sum = 0.0;
  for (int i = 0; i < kNodes; ++i) {
    const double j = kSynthJitter * (2.0 * (i + 0.5) / kNodes - 1.0);
    sum += clamped_normal_mean(10.0 - 9.0 * synth_severity(b, c, j), label_noise_sd, 1.0, 10.0);
  }
  return sum / kNodes;
}

OracleTables oracle_tables(const SynthSpec &spec) {
  const SynthDesign d = design_corpus(spec);
  OracleTables t;
  std::vector<std::vector<double>> cell(d.speakers.size(), std::vector<double>(d.systems.size()));
  for (std::size_t s = 0; s < d.speakers.size(); ++s)
    for (std::size_t k = 0; k < d.systems.size(); ++k)
      cell[s][k] = expected_mos(d.systems[k].severity, d.speakers[s].clarity, spec.label_noise_sd);
  for (std::size_t s = 0; s < d.speakers.size(); ++s) {
    double sum = 0.0;
    for (double v : cell[s]) sum += v;
    t.speaker[d.speakers[s].id] = sum / double(d.systems.size());
    t.speaker_split[d.speakers[s].id] = d.speakers[s].split;
  }
  for (std::size_t k = 0; k < d.systems.size(); ++k) {
    double sum = 0.0;
    for (std::size_t s = 0; s < d.speakers.size(); ++s) sum += cell[s][k];
    t.system[d.systems[k].id] = sum / double(d.speakers.size());
  }
  return t;
}

std::string format_oracle_csv(const OracleTables &tables) {
  std::string out = "level,group_id,split,expected_mos\n";
  for (const auto &[id, v] : tables.speaker)
    out += fmt::format("speaker,{},{},{:.6f}\n", id, to_string(tables.speaker_split.at(id)), v);
  for (const auto &[id, v] : tables.system) out += fmt::format("system,{},,{:.6f}\n", id, v);
  return out;
}

}  // namespace moscope
