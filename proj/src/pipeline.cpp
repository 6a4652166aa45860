#include "mmfuse/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "mmfuse/binio.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

FusedVector fuse_embeddings(const std::map<ModalityId, EmbeddingSequence>& embeddings,
                            const PoolingModes& modes, bool allow_empty) {
  std::vector<UniformVector> parts;
  parts.reserve(3);
  for (ModalityId m : kFusionModalities) {
    const auto it = embeddings.find(m);
    if (it == embeddings.end())
      throw DomainError(std::string("missing modality ") + modality_name(m));
    const EmbeddingSequence& seq = it->second;
    if (seq.frames().rows() == 0) {
      if (!allow_empty)
        throw EmptySequenceError(std::string("zero-frame sequence for ") + modality_name(m));
      parts.emplace_back(m, Eigen::VectorXd::Zero(kUniformDim));
    } else {
      parts.push_back(normalize_dim(pool(seq, modes.for_modality(m)), m));
    }
  }
  return concat3(parts[0], parts[1], parts[2]);
}

namespace {

// Scale each 1024-wide slice with its own scaler and re-concatenate.
Eigen::VectorXd scale_slices(const PerModalityScalers& scalers, const Eigen::VectorXd& processed) {
  Eigen::VectorXd out(kFusedDim);
  out.segment(0, kUniformDim) = scalers.fed.transform(processed.segment(0, kUniformDim));
  out.segment(kUniformDim, kUniformDim) =
      scalers.ser.transform(processed.segment(kUniformDim, kUniformDim));
  out.segment(2 * kUniformDim, kUniformDim) =
      scalers.ted.transform(processed.segment(2 * kUniformDim, kUniformDim));
  return out;
}

PerModalityScalers fit_slice_scalers(const Eigen::MatrixXd& processed) {
  PerModalityScalers scalers;
  scalers.fed = FeatureScaler::fit(processed.middleCols(0, kUniformDim));
  scalers.ser = FeatureScaler::fit(processed.middleCols(kUniformDim, kUniformDim));
  scalers.ted = FeatureScaler::fit(processed.middleCols(2 * kUniformDim, kUniformDim));
  return scalers;
}

Eigen::MatrixXd scale_rows(const PerModalityScalers& scalers, const Eigen::MatrixXd& processed) {
  Eigen::MatrixXd out(processed.rows(), kFusedDim);
  out.middleCols(0, kUniformDim) = scalers.fed.transform_rows(processed.middleCols(0, kUniformDim));
  out.middleCols(kUniformDim, kUniformDim) =
      scalers.ser.transform_rows(processed.middleCols(kUniformDim, kUniformDim));
  out.middleCols(2 * kUniformDim, kUniformDim) =
      scalers.ted.transform_rows(processed.middleCols(2 * kUniformDim, kUniformDim));
  return out;
}

SentimentClass argmax_class(const Eigen::VectorXd& probs) {
  // maxCoeff reports the first maximum, which is the lowest class ordinal.
  Eigen::Index arg = 0;
  probs.maxCoeff(&arg);
  return static_cast<SentimentClass>(arg);
}

}  // namespace

TrainOutcome train_pipeline(const std::vector<LabeledSample>& dataset,
                            const TrainOptions& options) {
  if (dataset.empty()) throw DomainError("train_pipeline: empty dataset");
  if (options.adapter.has_value() && options.adapter->dim() != kFusedDim)
    throw DomainError("train_pipeline: adapter dimension mismatch");

  const Eigen::Index n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd processed(n, kFusedDim);
  std::vector<SentimentClass> labels(dataset.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const LabeledSample& sample = dataset[static_cast<std::size_t>(i)];
    FusedVector fused = fuse_embeddings(sample.embeddings, options.pooling, false);
    if (options.adapter.has_value()) fused = options.adapter->apply(fused);
    processed.row(i) = fused.values.transpose();
    labels[static_cast<std::size_t>(i)] = discretize_sentiment(sample.score);
  }

  // Scalers of the shipped model are always fitted on the full training set;
  // strict CV only changes how fold scores are computed.
  PerModalityScalers scalers = fit_slice_scalers(processed);

  TrainOutcome outcome{FusionModel{std::move(scalers), MlpHead{}, options.adapter,
                                   options.metadata, options.seed},
                       std::nullopt, std::nullopt};

  std::vector<int> int_labels(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) int_labels[i] = static_cast<int>(labels[i]);

  if (options.kind == ClassifierKind::Linear) {
    LogregConfig base = options.logreg;
    base.n_classes = kNumClasses;
    const std::set<int> distinct(int_labels.begin(), int_labels.end());
    if (distinct.size() < 2) {
      // Degenerate single-class data: no decision boundary to learn. A zero
      // head with a one-hot-ish bias predicts the class everywhere.
      Eigen::VectorXd bias = Eigen::VectorXd::Zero(kNumClasses);
      bias(*distinct.begin()) = 1.0;
      std::vector<int> classes(kNumClasses);
      std::iota(classes.begin(), classes.end(), 0);
      outcome.model.classifier =
          LinearSoftmaxHead(Eigen::MatrixXd::Zero(kNumClasses, kFusedDim), bias, classes);
      return outcome;
    }
    GridSearchResult grid = [&] {
      if (options.strict_cv) {
        FoldTransform per_fold = [](const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& x_val) {
          const PerModalityScalers fold_scalers = fit_slice_scalers(x_train);
          return std::make_pair(scale_rows(fold_scalers, x_train), scale_rows(fold_scalers, x_val));
        };
        return grid_search_cv(processed, labels, options.c_grid, options.cv_folds, options.seed,
                              base, per_fold);
      }
      const Eigen::MatrixXd scaled = scale_rows(outcome.model.scalers, processed);
      return grid_search_cv(scaled, labels, options.c_grid, options.cv_folds, options.seed, base);
    }();
    outcome.model.classifier = grid.refit.head;
    outcome.grid = std::move(grid);
  } else {
    MlpConfig config = options.mlp;
    config.layer_sizes.clear();
    config.layer_sizes.push_back(kFusedDim);
    config.layer_sizes.insert(config.layer_sizes.end(), options.mlp_hidden.begin(),
                              options.mlp_hidden.end());
    config.layer_sizes.push_back(kNumClasses);
    config.seed = derive_seed(options.seed, "mlp");

    const Eigen::MatrixXd scaled = scale_rows(outcome.model.scalers, processed);
    MlpTrainResult fit;
    if (options.mlp_val_fraction > 0.0) {
      if (!(options.mlp_val_fraction < 1.0))
        throw DomainError("train_pipeline: mlp_val_fraction must lie in (0,1)");
      std::vector<int> order(int_labels.size());
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(derive_seed(options.seed, "mlp_val_split"));
      deterministic_shuffle(order, rng);
      const Eigen::Index n_val =
          std::lround(static_cast<double>(n) * options.mlp_val_fraction);
      if (n_val < 1 || n - n_val < 1)
        throw DomainError("train_pipeline: mlp validation split leaves an empty side");
      Eigen::MatrixXd x_tr(n - n_val, kFusedDim), x_va(n_val, kFusedDim);
      std::vector<int> y_tr, y_va;
      for (Eigen::Index i = 0; i < n - n_val; ++i) {
        x_tr.row(i) = scaled.row(order[static_cast<std::size_t>(i)]);
        y_tr.push_back(int_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
      }
      for (Eigen::Index i = 0; i < n_val; ++i) {
        x_va.row(i) = scaled.row(order[static_cast<std::size_t>(n - n_val + i)]);
        y_va.push_back(
            int_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(n - n_val + i)])]);
      }
      fit = mlp_train(x_tr, y_tr, config, &x_va, &y_va);
      outcome.model.classifier = fit.best.has_value() ? *fit.best : fit.head;
    } else {
      fit = mlp_train(scaled, int_labels, config);
      outcome.model.classifier = fit.head;
    }
    outcome.mlp = std::move(fit);
  }
  return outcome;
}

PredictTrace predict_pipeline_trace(const FusionModel& model,
                                    const std::map<ModalityId, EmbeddingSequence>& embeddings,
                                    const PoolingModes& modes) {
  FusedVector fused = fuse_embeddings(embeddings, modes, true);
  FusedVector processed = model.adapter.has_value() ? model.adapter->apply(fused) : fused;
  Eigen::VectorXd scaled = scale_slices(model.scalers, processed.values);

  const Eigen::VectorXd probs = head_predict(model.classifier, scaled);
  if (probs.size() != kNumClasses) throw DomainError("fusion model: classifier is not 5-class");
  PredictTrace trace{std::move(fused), std::move(processed), std::move(scaled),
                     Prediction{argmax_class(probs), probs}};
  return trace;
}

Prediction predict_pipeline(const FusionModel& model,
                            const std::map<ModalityId, EmbeddingSequence>& embeddings,
                            const PoolingModes& modes) {
  return predict_pipeline_trace(model, embeddings, modes).prediction;
}

// ---------------------------------------------------------------------------
// FUS1 serialization
// ---------------------------------------------------------------------------

namespace {

void write_matrix(BinWriter& out, const Eigen::MatrixXd& m) {
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::RowVectorXd row = m.row(r);
    out.f64_array(row.data(), static_cast<std::size_t>(row.size()));
  }
}

Eigen::MatrixXd read_matrix(BinReader& in, const char* what) {
  const std::uint32_t rows = in.u32(what);
  const std::uint32_t cols = in.u32(what);
  if (rows == 0 || cols == 0 || rows > 1u << 20 || cols > 1u << 20)
    throw DataError(std::string(what) + ": implausible matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    Eigen::RowVectorXd row(cols);
    in.f64_array(row.data(), cols, what);
    m.row(r) = row;
  }
  return m;
}

void write_vector(BinWriter& out, const Eigen::VectorXd& v) {
  out.u32(static_cast<std::uint32_t>(v.size()));
  out.f64_array(v.data(), static_cast<std::size_t>(v.size()));
}

Eigen::VectorXd read_vector(BinReader& in, const char* what) {
  const std::uint32_t n = in.u32(what);
  if (n == 0 || n > 1u << 20) throw DataError(std::string(what) + ": implausible vector length");
  Eigen::VectorXd v(n);
  in.f64_array(v.data(), n, what);
  return v;
}

}  // namespace

void FusionModel::save(const std::string& path) const {
  BinWriter out(path);
  out.magic("FUS1");
  const bool linear = std::holds_alternative<LinearSoftmaxHead>(classifier);
  out.u8(linear ? 0 : 1);
  out.u8(adapter.has_value() ? 1 : 0);
  scalers.fed.write(out);
  scalers.ser.write(out);
  scalers.ted.write(out);
  if (adapter.has_value()) adapter->write(out);
  if (linear) {
    const auto& head = std::get<LinearSoftmaxHead>(classifier);
    write_matrix(out, head.weights);
    write_vector(out, head.bias);
    out.u32(static_cast<std::uint32_t>(head.classes.size()));
    for (int c : head.classes) out.u32(static_cast<std::uint32_t>(c));
  } else {
    const auto& head = std::get<MlpHead>(classifier);
    out.f64(head.dropout_p);
    out.u32(static_cast<std::uint32_t>(head.layers.size()));
    for (const auto& layer : head.layers) {
      out.u8(static_cast<std::uint8_t>(layer.activation));
      write_matrix(out, layer.weights);
      write_vector(out, layer.bias);
    }
  }
  out.u64(seed);
  out.utf8(metadata);
  out.close();
}

FusionModel FusionModel::load(const std::string& path) {
  BinReader in = BinReader::from_file(path);
  in.magic("FUS1", "fusion magic");
  const std::uint8_t kind = in.u8("classifier kind");
  if (kind > 1) throw DataError(path + ": unknown classifier kind tag");
  const std::uint8_t has_adapter = in.u8("adapter flag");
  if (has_adapter > 1) throw DataError(path + ": bad adapter flag");

  FusionModel model;
  try {
    model.scalers.fed = FeatureScaler::read(in);
    model.scalers.ser = FeatureScaler::read(in);
    model.scalers.ted = FeatureScaler::read(in);
    if (has_adapter == 1) model.adapter = AdapterModel::read(in, path);
    if (kind == 0) {
      Eigen::MatrixXd weights = read_matrix(in, "classifier weights");
      Eigen::VectorXd bias = read_vector(in, "classifier bias");
      const std::uint32_t nc = in.u32("class count");
      if (nc != weights.rows()) throw DataError(path + ": class count mismatch");
      std::vector<int> classes(nc);
      for (std::uint32_t i = 0; i < nc; ++i)
        classes[i] = static_cast<int>(in.u32("class label"));
      model.classifier = LinearSoftmaxHead(std::move(weights), std::move(bias), classes);
    } else {
      const double dropout = in.f64("dropout");
      const std::uint32_t n_layers = in.u32("layer count");
      if (n_layers == 0 || n_layers > 64) throw DataError(path + ": implausible layer count");
      std::vector<MlpLayer> layers;
      layers.reserve(n_layers);
      for (std::uint32_t l = 0; l < n_layers; ++l) {
        MlpLayer layer;
        const std::uint8_t act = in.u8("activation tag");
        if (act > 1) throw DataError(path + ": unknown activation tag");
        layer.activation = static_cast<Activation>(act);
        layer.weights = read_matrix(in, "layer weights");
        layer.bias = read_vector(in, "layer bias");
        layers.push_back(std::move(layer));
      }
      model.classifier = MlpHead(std::move(layers), dropout);
    }
    model.seed = in.u64("seed");
    model.metadata = in.utf8("metadata");
    in.expect_end("metadata");
  } catch (const DomainError& e) {
    throw DataError(path + ": " + e.what());
  }

  const Eigen::Index in_dim = std::visit(
      [](const auto& h) {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearSoftmaxHead>)
          return h.weights.cols();
        else
          return h.input_dim();
      },
      model.classifier);
  const Eigen::Index out_dim = std::visit(
      [](const auto& h) {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearSoftmaxHead>)
          return h.weights.rows();
        else
          return h.output_dim();
      },
      model.classifier);
  if (in_dim != kFusedDim || out_dim != kNumClasses)
    throw DataError(path + ": classifier shape is not 3072 -> 5");
  if (model.scalers.fed.dim() != kUniformDim || model.scalers.ser.dim() != kUniformDim ||
      model.scalers.ted.dim() != kUniformDim)
    throw DataError(path + ": scaler dimension is not 1024");
  if (model.adapter.has_value() && model.adapter->dim() != kFusedDim)
    throw DataError(path + ": adapter dimension is not 3072");
  return model;
}

}  // namespace mmfuse
