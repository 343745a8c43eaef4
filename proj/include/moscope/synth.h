// moscope/synth.h
//
// A synthetic multi-speaker, multi-system corpus with known quality. Each
// utterance is a harmonic tone sequence degraded by a single-pole lowpass and
// white noise whose strengths grow with the severity
//   q = clamp(b_system + c_speaker + jitter, 0, 1),
// and is labeled mos = clamp(10 - 9 q + noise, 1, 10).

#ifndef MOSCOPE_SYNTH_H_
#define MOSCOPE_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "moscope/corpus.h"
#include "moscope/parallel.h"

namespace moscope {

struct SynthSpec {
  std::size_t n_speakers = 10;
  std::size_t n_systems = 5;
  std::size_t utts_per_pair = 20;
  std::uint64_t seed = 7;
  double duration_s = 2.0;
  std::uint32_t sample_rate = 16000;
  double label_noise_sd = 0.3;

  // n_speakers >= 2, n_systems >= 2, utts_per_pair >= 1, duration long
  // enough for a 512-sample frame.
  void validate() const;
};

inline constexpr double kSynthJitter = 0.05;
inline constexpr double kSynthClarityRange = 0.1;
inline constexpr std::size_t kSynthHarmonics = 8;

struct SynthSpeaker {
  std::string id;
  double f0 = 0.0;                  // Hz, in [90, 280]
  std::vector<double> harmonics;    // kSynthHarmonics weights
  double clarity = 0.0;             // c_s in [-0.1, 0.1]
  Split split = Split::kTrain;
};

struct SynthSystem {
  std::string id;
  double severity = 0.0;  // b_k, equally spaced on [0, 1]
};

struct SynthDesign {
  std::vector<SynthSpeaker> speakers;
  std::vector<SynthSystem> systems;
};

// Speaker and system parameters; depends only on the spec.
SynthDesign design_corpus(const SynthSpec &spec);

std::string synth_utt_id(std::size_t speaker, std::size_t system, std::size_t utt);

double synth_severity(double b, double c, double jitter);
double synth_mos(double severity, double label_noise);

// Seed of the random stream for one utterance.
std::uint64_t synth_utterance_seed(std::uint64_t seed, std::size_t speaker,
                                   std::size_t system, std::size_t utt);

// Uniform [0, 1) and standard normal draws computed from raw engine output,
// so a corpus is identical across standard libraries.
double synth_uniform(std::mt19937_64 &rng);
double synth_normal(std::mt19937_64 &rng);

AudioBuffer render_utterance(const SynthSpeaker &speaker, double severity,
                             const SynthSpec &spec, std::mt19937_64 &rng);

// Writes out_dir/wav/<utt>.wav and out_dir/manifest.csv; audio paths in the
// manifest are relative to out_dir.
CorpusManifest generate_corpus(const SynthSpec &spec,
                               const std::filesystem::path &out_dir,
                               std::size_t workers = worker_count());

// Expected MOS with jitter and label noise integrated out, clamps included.
struct OracleTables {
  std::map<std::string, double> speaker;
  std::map<std::string, double> system;
  std::map<std::string, Split> speaker_split;
};

double expected_mos(double b, double c, double label_noise_sd);
OracleTables oracle_tables(const SynthSpec &spec);
std::string format_oracle_csv(const OracleTables &tables);

}  // namespace moscope

#endif  // MOSCOPE_SYNTH_H_
