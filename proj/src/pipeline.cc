// pipeline.cc

#include "moscope/pipeline.h"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "moscope/error.h"

namespace moscope {

FeatureSetInfo extract_features(const CorpusManifest &manifest,
                                const std::filesystem::path &audio_dir,
                                const std::filesystem::path &out_dir, FeatureKind kind,
                                const StftConfig &stft, std::size_t workers) {
  stft.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  const auto &records = manifest.records();
  std::vector<char> written(records.size(), 0);
  try {
    parallel_for(
        records.size(),
        [&](std::size_t i) {
          const UtteranceRecord &r = records[i];
          const std::filesystem::path wav = audio_dir / r.audio_path;
          AudioBuffer audio;
          try {
            audio = read_wav(wav);
          } catch (const Error &e) {
            throw DataError(fmt::format("utt_id '{}': {}", r.utt_id, e.what()));
          }
          FeatureMatrix m = kind == FeatureKind::kSpectrogram
                                ? stft_magnitude(audio, stft)
                                : average_spectrum_embedding(audio, stft);
          write_features(feature_path(out_dir, r.utt_id), m);
          written[i] = 1;
        },
        workers);
  } catch (...) {
    for (std::size_t i = 0; i < records.size(); ++i)
      if (written[i]) std::filesystem::remove(feature_path(out_dir, records[i].utt_id), ec);
    throw;
  }
  FeatureSetInfo info{kind, stft};
  write_feature_set_info(out_dir, info);
  spdlog::info("extracted {} {} feature files into {}", records.size(), to_string(kind),
               out_dir.string());
  return info;
}

std::vector<Example> load_examples(const CorpusManifest &manifest,
                                   const std::filesystem::path &features_dir, Split split) {
  std::vector<Example> out;
  std::size_t unlabeled = 0;
  for (const UtteranceRecord &r : manifest.records()) {
    if (r.split != split) continue;
    if (!r.mos) {
      ++unlabeled;
      continue;
    }
    out.push_back({r.utt_id, read_features(feature_path(features_dir, r.utt_id)), *r.mos});
  }
  if (unlabeled)
    spdlog::warn("{} unlabeled {} utterances skipped", unlabeled, to_string(split));
  return out;
}

void check_feature_set(const TrainedModel &model, const std::filesystem::path &features_dir) {
  const std::optional<FeatureSetInfo> info = read_feature_set_info(features_dir);
  if (!info) return;
  if (info->kind != model.input_kind())
    throw DataError(fmt::format("{} holds {} features but the {} model needs {}",
                                features_dir.string(), to_string(info->kind),
                                to_string(model.architecture), to_string(model.input_kind())));
  if (model.stft && info->stft && !(*model.stft == *info->stft))
    throw DataError(fmt::format("{}: analysis settings differ from those the model was "
                                "trained on", features_dir.string()));
}

PredictionSet predict_manifest(const TrainedModel &model, const CorpusManifest &manifest,
                               const std::filesystem::path &features_dir,
                               std::optional<Split> split, std::size_t workers) {
  check_feature_set(model, features_dir);
  std::vector<const UtteranceRecord *> selected;
  for (const UtteranceRecord &r : manifest.records())
    if (!split || r.split == *split) selected.push_back(&r);
  if (selected.empty()) throw DataError("no utterances selected for prediction");
  std::vector<double> scores(selected.size());
  parallel_for(
      selected.size(),
      [&](std::size_t i) {
        try {
          scores[i] = predict(model, read_features(feature_path(features_dir, selected[i]->utt_id)));
        } catch (const Error &e) {
          throw DataError(fmt::format("utt_id '{}': {}", selected[i]->utt_id, e.what()));
        }
      },
      workers);
  PredictionSet preds;
  for (std::size_t i = 0; i < selected.size(); ++i) preds[selected[i]->utt_id] = scores[i];
  return preds;
}

}  // namespace moscope
