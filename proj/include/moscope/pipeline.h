// moscope/pipeline.h
//
// Glue between manifests, feature directories and models, shared by the
// command-line tool and the end-to-end tests.

#ifndef MOSCOPE_PIPELINE_H_
#define MOSCOPE_PIPELINE_H_

#include <filesystem>
#include <optional>
#include <vector>

#include "moscope/corpus.h"
#include "moscope/features.h"
#include "moscope/metrics.h"
#include "moscope/models.h"
#include "moscope/parallel.h"

namespace moscope {

// Computes one feature file per manifest record into out_dir and writes
// features.ini. Files written before a failure are removed.
FeatureSetInfo extract_features(const CorpusManifest &manifest,
                                const std::filesystem::path &audio_dir,
                                const std::filesystem::path &out_dir, FeatureKind kind,
                                const StftConfig &stft, std::size_t workers = worker_count());

// Labeled examples of one split, in manifest order.
std::vector<Example> load_examples(const CorpusManifest &manifest,
                                   const std::filesystem::path &features_dir, Split split);

// Predictions for every record (of `split`, if given) in the manifest.
PredictionSet predict_manifest(const TrainedModel &model, const CorpusManifest &manifest,
                               const std::filesystem::path &features_dir,
                               std::optional<Split> split = std::nullopt,
                               std::size_t workers = worker_count());

// Throws DataError if the directory's features do not suit the model.
void check_feature_set(const TrainedModel &model, const std::filesystem::path &features_dir);

}  // namespace moscope

#endif  // MOSCOPE_PIPELINE_H_
