#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmfuse/adapter.hpp"
#include "mmfuse/aggregate.hpp"
#include "mmfuse/classify.hpp"
#include "mmfuse/core.hpp"
#include "mmfuse/mlp.hpp"
#include "mmfuse/scaler.hpp"

namespace mmfuse {

struct PerModalityScalers {
  FeatureScaler fed;  // each fitted on its 1024-wide slice only
  FeatureScaler ser;
  FeatureScaler ted;
};

enum class ClassifierKind : std::uint8_t { Linear = 0, Mlp = 1 };

struct FusionModel {
  PerModalityScalers scalers;
  ClassifierHead classifier;  // input dim 3072, 5 classes
  std::optional<AdapterModel> adapter;
  std::string metadata;  // newline-separated key=value provenance block
  std::uint64_t seed = 0;

  void save(const std::string& path) const;
  static FusionModel load(const std::string& path);
};

// Pool each fusion modality, normalize to 1024, concatenate FED|SER|TED.
// A zero-frame sequence throws when allow_empty is false (training data must
// carry frames) and contributes an all-zero slice otherwise (degraded
// inference input).
FusedVector fuse_embeddings(const std::map<ModalityId, EmbeddingSequence>& embeddings,
                            const PoolingModes& modes, bool allow_empty);

struct TrainOptions {
  PoolingModes pooling;
  std::optional<AdapterModel> adapter;
  ClassifierKind kind = ClassifierKind::Linear;

  LogregConfig logreg;                            // base config; C comes from the grid
  std::vector<double> c_grid = default_c_grid();  // cross-validated over cv_folds
  int cv_folds = 5;
  bool strict_cv = false;  // refit per-modality scalers inside each CV fold

  std::vector<int> mlp_hidden = default_mlp_hidden();
  MlpConfig mlp;                  // layer sizes and seed are filled in by the pipeline
  double mlp_val_fraction = 0.0;  // > 0 carves a best-checkpoint validation split

  std::uint64_t seed = 0;
  std::string metadata;  // extra key=value lines recorded in the model
};

struct TrainOutcome {
  FusionModel model;
  std::optional<GridSearchResult> grid;  // linear classifier
  std::optional<MlpTrainResult> mlp;     // mlp classifier
};

// Training order: pool, normalize_dim, concat3, optional adapter, split3,
// fit per-modality scalers, scale, re-concatenate, train classifier.
TrainOutcome train_pipeline(const std::vector<LabeledSample>& dataset, const TrainOptions& options);

struct Prediction {
  SentimentClass label = SentimentClass::VeryNegative;
  Eigen::VectorXd probabilities;  // length 5
};

Prediction predict_pipeline(const FusionModel& model,
                            const std::map<ModalityId, EmbeddingSequence>& embeddings,
                            const PoolingModes& modes);

// Inference intermediates, exposed so tests can check the transform order
// matches training exactly.
struct PredictTrace {
  FusedVector fused;      // after concat3, before the adapter
  FusedVector processed;  // after the optional adapter
  Eigen::VectorXd scaled; // re-concatenated per-modality scaled slices
  Prediction prediction;
};

PredictTrace predict_pipeline_trace(const FusionModel& model,
                                    const std::map<ModalityId, EmbeddingSequence>& embeddings,
                                    const PoolingModes& modes);

}  // namespace mmfuse
