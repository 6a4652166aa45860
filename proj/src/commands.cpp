#include "mmfuse/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "mmfuse/agents.hpp"
#include "mmfuse/archive.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/pipeline.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/textio.hpp"

namespace mmfuse {

namespace {

PoolingMode pooling_key(const Config& config, const std::string& key) {
  const std::string name = config.str(key, "mean");
  const auto mode = pooling_from_name(name);
  if (!mode.has_value())
    throw ConfigError(config.source() + ": key '" + key + "' must be mean, median, or max");
  return *mode;
}

PoolingModes pooling_from_config(const Config& config) {
  PoolingModes modes;
  modes.fed = pooling_key(config, "pooling.fed");
  modes.ser = pooling_key(config, "pooling.ser");
  modes.ted = pooling_key(config, "pooling.ted");
  return modes;
}

SyntheticProfile profile_from_config(const Config& config,
                                     std::function<int(const SegmentKey&)> class_of) {
  SyntheticProfile profile;
  profile.min_frames = static_cast<int>(config.integer("synthetic.min_frames", 3));
  profile.max_frames = static_cast<int>(config.integer("synthetic.max_frames", 8));
  profile.noise = config.number("synthetic.noise", 1.0);
  profile.shift = config.number("synthetic.shift", 4.0);
  profile.speech_fraction = config.number("synthetic.speech_fraction", 1.0);
  profile.class_of = std::move(class_of);
  return profile;
}

void report_header(std::ostream& out, const char* command, const Config& config,
                   std::uint64_t seed) {
  out << "command " << command << '\n';
  out << "config_digest " << config.digest_hex() << '\n';
  out << "seed " << seed << '\n';
}

std::string status_line(const std::map<ModalityId, std::string>& status) {
  std::string out;
  for (const auto& [m, s] : status) {
    if (!out.empty()) out += ",";
    out += modality_name(m);
    out += ":";
    out += s;
  }
  return out;
}

// Aligned feature matrices for the keys common to both archives.
std::pair<Eigen::MatrixXd, std::vector<SegmentKey>> fused_rows(const EmbeddingArchive& archive,
                                                               const std::vector<SegmentKey>& keys,
                                                               const PoolingModes& modes) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keys.size()), kFusedDim);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::map<ModalityId, EmbeddingSequence> sample;
    for (ModalityId m : kFusionModalities) sample.emplace(m, archive.read(keys[i], m));
    rows.row(static_cast<Eigen::Index>(i)) = fuse_embeddings(sample, modes, false).values;
  }
  return {std::move(rows), keys};
}

std::vector<SegmentKey> keys_with_fusion_modalities(const EmbeddingArchive& archive) {
  std::vector<SegmentKey> out;
  for (const SegmentKey& key : archive.keys()) {
    const bool complete = std::all_of(kFusionModalities.begin(), kFusionModalities.end(),
                                      [&](ModalityId m) { return archive.has(key, m); });
    if (complete) out.push_back(key);
  }
  return out;
}

void write_confusion(std::ostream& out, const EvalReport& report) {
  for (int t = 0; t < kNumClasses; ++t) {
    out << "confusion " << sentiment_name(static_cast<SentimentClass>(t));
    for (int p = 0; p < kNumClasses; ++p)
      out << ' ' << report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    out << '\n';
  }
  for (int t = 0; t < kNumClasses; ++t) {
    out << "confusion_normalized " << sentiment_name(static_cast<SentimentClass>(t));
    for (int p = 0; p < kNumClasses; ++p)
      out << ' '
          << fmt_g17(
                 report.confusion_normalized[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]);
    out << '\n';
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

void cmd_gen_synthetic(const Config& config, std::ostream& out) {
  const std::uint64_t seed = config.seed("seed", 0);
  const std::string archive_path = config.require("paths.archive");
  const std::string labels_path = config.str("paths.labels", archive_path + ".labels");
  const auto segments = config.integer("dataset.segments", 100);
  const std::string prefix = config.str("dataset.prefix", "synth");
  std::vector<double> balance = config.number_list("dataset.balance", {1, 1, 1, 1, 1});
  if (segments < 1) throw ConfigError("dataset.segments must be positive");
  if (balance.size() != kNumClasses)
    throw ConfigError("dataset.balance needs exactly 5 weights");
  for (double w : balance) {
    if (!(w >= 0.0)) throw ConfigError("dataset.balance weights must be nonnegative");
  }
  const double weight_sum = std::accumulate(balance.begin(), balance.end(), 0.0);
  if (!(weight_sum > 0.0)) throw ConfigError("dataset.balance weights sum to zero");

  // Largest-remainder apportionment of segments across classes.
  std::array<std::int64_t, kNumClasses> counts{};
  {
    std::array<double, kNumClasses> exact{};
    std::int64_t assigned = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      exact[static_cast<std::size_t>(c)] =
          static_cast<double>(segments) * balance[static_cast<std::size_t>(c)] / weight_sum;
      counts[static_cast<std::size_t>(c)] =
          static_cast<std::int64_t>(std::floor(exact[static_cast<std::size_t>(c)]));
      assigned += counts[static_cast<std::size_t>(c)];
    }
    std::array<int, kNumClasses> order{0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = exact[static_cast<std::size_t>(a)] -
                        std::floor(exact[static_cast<std::size_t>(a)]);
      const double fb = exact[static_cast<std::size_t>(b)] -
                        std::floor(exact[static_cast<std::size_t>(b)]);
      return fa > fb;
    });
    for (int i = 0; assigned < segments; ++i, ++assigned)
      counts[static_cast<std::size_t>(order[static_cast<std::size_t>(i % kNumClasses)])]++;
  }

  // Segment i gets the next class with remaining quota, round-robin, so class
  // labels interleave instead of clustering.
  std::vector<int> label_of(static_cast<std::size_t>(segments), 0);
  {
    auto remaining = counts;
    int c = 0;
    for (std::int64_t i = 0; i < segments; ++i) {
      int tried = 0;
      while (remaining[static_cast<std::size_t>(c)] == 0 && tried < kNumClasses) {
        c = (c + 1) % kNumClasses;
        tried++;
      }
      label_of[static_cast<std::size_t>(i)] = c;
      remaining[static_cast<std::size_t>(c)]--;
      c = (c + 1) % kNumClasses;
    }
  }

  // Scores sampled inside safe interiors of each class's bin, so they
  // discretize back exactly.
  constexpr double kBinLo[kNumClasses] = {-2.9, -0.9, -0.25, 0.35, 1.1};
  constexpr double kBinHi[kNumClasses] = {-1.1, -0.35, 0.25, 0.9, 2.9};

  std::map<std::string, int> class_by_key;
  std::vector<LabelRecord> labels;
  labels.reserve(static_cast<std::size_t>(segments));
  std::mt19937_64 score_rng(derive_seed(seed, "synthetic_scores"));
  for (std::int64_t i = 0; i < segments; ++i) {
    const int c = label_of[static_cast<std::size_t>(i)];
    SegmentKey key{prefix, static_cast<std::uint32_t>(i)};
    const double u = uniform_unit(score_rng);
    const double score = kBinLo[c] + u * (kBinHi[c] - kBinLo[c]);
    class_by_key[key.str()] = c;
    labels.push_back(LabelRecord{std::move(key), score});
  }

  const auto class_of = [class_by_key](const SegmentKey& key) {
    const auto it = class_by_key.find(key.str());
    return it == class_by_key.end() ? -1 : it->second;
  };
  const SyntheticProfile profile = profile_from_config(config, class_of);
  config.reject_unknown();

  std::map<ModalityId, std::shared_ptr<EncoderBackend>> backends;
  for (ModalityId m : kAllModalities) backends[m] = synthetic_backend(seed, m, profile);

  ArchiveWriter writer(archive_path);
  for (const LabelRecord& record : labels) {
    for (ModalityId m : kAllModalities) {
      writer.add(record.key, backends[m]->extract(record.key, ""));
    }
  }
  writer.close();
  write_label_file(labels_path, labels);

  report_header(out, "gen-synthetic", config, seed);
  out << "segments " << segments << '\n';
  out << "class_counts";
  for (int c = 0; c < kNumClasses; ++c) out << ' ' << counts[static_cast<std::size_t>(c)];
  out << '\n';
  out << "archive " << archive_path << '\n';
  out << "labels " << labels_path << '\n';
}

// ---------------------------------------------------------------------------
// train-adapter
// ---------------------------------------------------------------------------

void cmd_train_adapter(const Config& config, std::ostream& out) {
  const std::uint64_t seed = config.seed("seed", 0);
  const std::string current_path = config.require("paths.current");
  const std::string target_path = config.require("paths.target");
  const std::string adapter_path = config.require("paths.adapter");
  const double val_fraction = config.number("adapter.val_fraction", 0.2);
  const double alpha_default = config.number("adapter.alpha", 1.0);
  std::vector<double> alphas =
      config.has("adapter.alpha_grid")
          ? config.number_list("adapter.alpha_grid", {})
          : std::vector<double>{alpha_default};
  const PoolingModes modes = pooling_from_config(config);
  config.reject_unknown();

  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  const EmbeddingArchive current = EmbeddingArchive::open(current_path);
  const EmbeddingArchive target = EmbeddingArchive::open(target_path);

  const std::vector<SegmentKey> current_keys = keys_with_fusion_modalities(current);
  const std::vector<SegmentKey> target_keys = keys_with_fusion_modalities(target);
  std::vector<SegmentKey> shared;
  std::set_intersection(current_keys.begin(), current_keys.end(), target_keys.begin(),
                        target_keys.end(), std::back_inserter(shared));
  if (shared.empty())
    throw DomainError("no shared segment keys between " + current_path + " and " + target_path);

  const auto [x_rows, keys] = fused_rows(current, shared, modes);
  const auto [y_rows, keys2] = fused_rows(target, shared, modes);

  // Grid scored by validation R²; ties keep the smaller alpha.
  struct Candidate {
    double alpha;
    AdapterTrainResult result;
  };
  std::vector<Candidate> candidates;
  for (double alpha : alphas) {
    candidates.push_back({alpha, adapter_train(x_rows, y_rows, alpha, val_fraction, seed)});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].result.validation.r2 > candidates[best].result.validation.r2) best = i;
  }
  const Candidate& chosen = candidates[best];
  chosen.result.model.save(adapter_path);

  report_header(out, "train-adapter", config, seed);
  out << "rows " << shared.size() << '\n';
  out << "train_rows " << chosen.result.train_rows << '\n';
  out << "val_rows " << chosen.result.val_rows << '\n';
  for (const Candidate& c : candidates) {
    out << "alpha_candidate " << fmt_g17(c.alpha) << " r2 " << fmt_g17(c.result.validation.r2)
        << " rmse " << fmt_g17(c.result.validation.rmse) << '\n';
  }
  out << "alpha " << fmt_g17(chosen.alpha) << '\n';
  out << "mse " << fmt_g17(chosen.result.validation.mse) << '\n';
  out << "rmse " << fmt_g17(chosen.result.validation.rmse) << '\n';
  out << "r2 " << fmt_g17(chosen.result.validation.r2) << '\n';
  out << "adapter " << adapter_path << '\n';
}

// ---------------------------------------------------------------------------
// train-classifier
// ---------------------------------------------------------------------------

void cmd_train_classifier(const Config& config, std::ostream& out) {
  const std::uint64_t seed = config.seed("seed", 0);
  const std::string archive_path = config.require("paths.archive");
  const std::string labels_path = config.require("paths.labels");
  const std::string model_path = config.require("paths.model");

  TrainOptions options;
  options.seed = seed;
  options.pooling = pooling_from_config(config);
  options.cv_folds = static_cast<int>(config.integer("cv.folds", 5));
  options.c_grid = config.number_list("cv.c_grid", default_c_grid());
  options.strict_cv = config.flag("cv.strict", false);
  options.logreg.max_iter = static_cast<int>(config.integer("logreg.max_iter", 5000));
  options.logreg.tol = config.number("logreg.tol", 1e-5);
  const std::string weighting = config.str("logreg.class_weight", "balanced");
  if (weighting != "balanced" && weighting != "none")
    throw ConfigError("logreg.class_weight must be 'balanced' or 'none'");
  options.logreg.balanced = weighting == "balanced";

  const std::string kind = config.str("classifier.kind", "linear");
  if (kind == "linear") {
    options.kind = ClassifierKind::Linear;
  } else if (kind == "mlp") {
    options.kind = ClassifierKind::Mlp;
  } else {
    throw ConfigError("classifier.kind must be 'linear' or 'mlp'");
  }
  const double width_factor = config.number("mlp.width_factor", 1.0);
  options.mlp_hidden = default_mlp_hidden(width_factor);
  if (config.has("mlp.hidden")) {
    options.mlp_hidden.clear();
    for (double h : config.number_list("mlp.hidden", {})) {
      if (h < 1.0 || h != std::floor(h))
        throw ConfigError("mlp.hidden entries must be positive integers");
      options.mlp_hidden.push_back(static_cast<int>(h));
    }
  }
  options.mlp.dropout_p = config.number("mlp.dropout", 0.1);
  options.mlp.learning_rate = config.number("mlp.lr", 1.86e-4);
  options.mlp.weight_decay = config.number("mlp.weight_decay", 0.1);
  options.mlp.epochs = static_cast<int>(config.integer("mlp.epochs", 80));
  options.mlp.batch_size = static_cast<int>(config.integer("mlp.batch_size", 64));
  options.mlp.grad_clip = config.number("mlp.grad_clip", 0.3);
  options.mlp_val_fraction = config.number("mlp.val_fraction", 0.0);

  if (config.has("adapter.path")) options.adapter = AdapterModel::load(config.require("adapter.path"));
  const int holdout_folds = static_cast<int>(config.integer("eval.holdout_folds", 5));
  if (holdout_folds < 2) throw ConfigError("eval.holdout_folds must be at least 2");
  config.reject_unknown();

  options.metadata = "config_digest=" + config.digest_hex();

  const EmbeddingArchive archive = EmbeddingArchive::open(archive_path);
  const std::vector<LabelRecord> label_records = read_label_file(labels_path);
  std::map<std::string, double> score_by_key;
  for (const auto& r : label_records) score_by_key[r.key.str()] = r.score;

  std::vector<LabeledSample> dataset;
  for (const SegmentKey& key : keys_with_fusion_modalities(archive)) {
    const auto it = score_by_key.find(key.str());
    if (it == score_by_key.end()) continue;
    LabeledSample sample;
    sample.key = key;
    sample.score = it->second;
    for (ModalityId m : kFusionModalities) sample.embeddings.emplace(m, archive.read(key, m));
    dataset.push_back(std::move(sample));
  }
  if (dataset.empty())
    throw DomainError("no segments shared between " + archive_path + " and " + labels_path);

  // Stratified holdout: fold 0 of a k-fold split is the test set.
  std::vector<SentimentClass> all_labels;
  all_labels.reserve(dataset.size());
  for (const auto& s : dataset) all_labels.push_back(discretize_sentiment(s.score));
  const auto folds = stratified_kfold(all_labels, holdout_folds, derive_seed(seed, "holdout"));
  std::vector<char> in_test(dataset.size(), 0);
  for (int i : folds[0]) in_test[static_cast<std::size_t>(i)] = 1;

  std::vector<LabeledSample> train_set;
  std::vector<const LabeledSample*> test_set;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (in_test[i]) {
      test_set.push_back(&dataset[i]);
    } else {
      train_set.push_back(dataset[i]);
    }
  }

  const TrainOutcome outcome = train_pipeline(train_set, options);
  outcome.model.save(model_path);

  report_header(out, "train-classifier", config, seed);
  out << "samples " << dataset.size() << '\n';
  out << "train_rows " << train_set.size() << '\n';
  out << "test_rows " << test_set.size() << '\n';
  if (outcome.grid.has_value()) {
    const GridSearchResult& grid = *outcome.grid;
    for (const CvFoldFit& fit : grid.fits) {
      out << "cv_fold c " << fmt_g17(fit.c) << " fold " << fit.fold << " weighted_f1 "
          << fmt_g17(fit.weighted_f1) << " iterations " << fit.iterations << " stop "
          << stop_reason_name(fit.stop) << '\n';
    }
    for (const auto& [c, f1] : grid.mean_f1) {
      out << "cv_mean c " << fmt_g17(c) << " weighted_f1 " << fmt_g17(f1) << '\n';
    }
    out << "selected_c " << fmt_g17(grid.best_c) << '\n';
    out << "refit iterations " << grid.refit.iterations << " stop "
        << stop_reason_name(grid.refit.stop) << " grad_inf_norm "
        << fmt_g17(grid.refit.grad_inf_norm) << '\n';
  }
  if (outcome.mlp.has_value()) {
    out << "mlp final_train_loss " << fmt_g17(outcome.mlp->final_train_loss) << '\n';
    if (outcome.mlp->best_epoch >= 0) {
      out << "mlp best_epoch " << outcome.mlp->best_epoch << " val_accuracy "
          << fmt_g17(outcome.mlp->best_val_accuracy) << '\n';
    }
  }

  std::vector<SentimentClass> truths;
  std::vector<SentimentClass> predictions;
  for (const LabeledSample* sample : test_set) {
    truths.push_back(discretize_sentiment(sample->score));
    predictions.push_back(
        predict_pipeline(outcome.model, sample->embeddings, options.pooling).label);
  }
  if (!test_set.empty()) {
    const EvalReport report = compute_metrics(predictions, truths);
    out << "holdout accuracy " << fmt_g17(report.accuracy) << " weighted_f1 "
        << fmt_g17(report.weighted_f1) << " mae " << fmt_g17(report.mae) << '\n';
    write_confusion(out, report);
  }
  out << "model " << model_path << '\n';
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

void cmd_infer(const Config& config, std::ostream& out) {
  const std::uint64_t seed = config.seed("seed", 0);
  const std::string model_path = config.require("paths.model");
  const std::string archive_path = config.require("paths.archive");
  const std::string predictions_path = config.require("paths.predictions");

  SupervisorConfig sup;
  sup.pooling = pooling_from_config(config);
  sup.timeout = std::chrono::milliseconds(config.integer("supervisor.timeout_ms", 5000));
  sup.retries = static_cast<int>(config.integer("supervisor.retries", 1));
  sup.speech_top_k = static_cast<int>(config.integer("supervisor.top_k", 5));
  const std::string policy = config.str("supervisor.policy", "zerofill");
  if (policy == "zerofill") {
    sup.policy = DegradationPolicy::ZeroFill;
  } else if (policy == "failclosed") {
    sup.policy = DegradationPolicy::FailClosed;
  } else {
    throw ConfigError("supervisor.policy must be 'zerofill' or 'failclosed'");
  }
  config.reject_unknown();

  const FusionModel model = FusionModel::load(model_path);
  auto archive = std::make_shared<EmbeddingArchive>(EmbeddingArchive::open(archive_path));

  AgentRegistry registry;
  std::vector<std::shared_ptr<AgentInstance>> agents;
  for (ModalityId m : kAllModalities) {
    auto agent = std::make_shared<AgentInstance>(std::string("archive-") + modality_name(m),
                                                 archive_backend(archive, m), registry.router());
    registry.register_agent(agent);
    agents.push_back(std::move(agent));
  }

  std::ofstream pred_out(predictions_path, std::ios::trunc);
  if (!pred_out) throw DataError("cannot open for writing: " + predictions_path);

  std::int64_t ok_count = 0;
  std::int64_t degraded_count = 0;
  std::int64_t error_count = 0;
  for (const SegmentKey& key : archive->keys()) {
    try {
      const SupervisorResult result = supervisor_infer(key, "", registry, model, sup);
      pred_out << key.str() << '\t' << sentiment_name(result.prediction.label);
      for (int c = 0; c < kNumClasses; ++c)
        pred_out << '\t' << fmt_g17(result.prediction.probabilities(c));
      pred_out << '\t' << (result.degraded ? "degraded" : "intact") << '\t'
               << status_line(result.modality_status) << '\n';
      ok_count++;
      if (result.degraded) degraded_count++;
    } catch (const std::exception& e) {
      // Per-segment isolation: one bad segment never aborts the batch.
      std::string reason = e.what();
      std::replace(reason.begin(), reason.end(), '\t', ' ');
      std::replace(reason.begin(), reason.end(), '\n', ' ');
      pred_out << key.str() << '\t' << "error" << '\t' << reason << '\n';
      error_count++;
    }
  }
  pred_out.close();
  if (!pred_out) throw DataError("write failed: " + predictions_path);
  for (auto& agent : agents) agent->kill();

  report_header(out, "infer", config, seed);
  out << "model " << model_path << '\n';
  out << "archive " << archive_path << '\n';
  out << "predictions " << predictions_path << '\n';
  out << "segments " << ok_count + error_count << '\n';
  out << "degraded " << degraded_count << '\n';
  out << "errors " << error_count << '\n';
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

void cmd_evaluate(const Config& config, std::ostream& out) {
  const std::uint64_t seed = config.seed("seed", 0);
  const std::string predictions_path = config.require("paths.predictions");
  const std::string labels_path = config.require("paths.labels");
  const std::string report_path = config.require("paths.report");
  config.reject_unknown();

  const std::vector<LabelRecord> label_records = read_label_file(labels_path);
  std::map<std::string, double> score_by_key;
  for (const auto& r : label_records) score_by_key[r.key.str()] = r.score;

  std::ifstream pred_in(predictions_path);
  if (!pred_in) throw DataError("cannot open: " + predictions_path);

  std::vector<SentimentClass> truths;
  std::vector<SentimentClass> predictions;
  std::vector<std::string> unknown;
  std::int64_t skipped = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(pred_in, line)) {
    line_no++;
    if (line.empty()) continue;
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos)
      throw DataError(predictions_path + ":" + std::to_string(line_no) + ": expected tab-separated fields");
    const std::string key_text = line.substr(0, tab1);
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    const std::string class_text =
        line.substr(tab1 + 1, (tab2 == std::string::npos ? line.size() : tab2) - tab1 - 1);
    if (class_text == "error") {
      skipped++;  // failed segments carry no prediction
      continue;
    }
    const auto cls = sentiment_from_name(class_text);
    if (!cls.has_value())
      throw DataError(predictions_path + ":" + std::to_string(line_no) + ": unknown class '" +
                      class_text + "'");
    const auto it = score_by_key.find(key_text);
    if (it == score_by_key.end()) {
      unknown.push_back(key_text);
      continue;
    }
    predictions.push_back(*cls);
    truths.push_back(discretize_sentiment(it->second));
  }
  if (!unknown.empty()) {
    std::string joined;
    for (const auto& k : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += k;
    }
    throw DomainError("prediction keys missing from " + labels_path + ": " + joined);
  }
  if (predictions.empty()) throw DomainError("no evaluable predictions in " + predictions_path);

  const EvalReport report = compute_metrics(predictions, truths);

  std::ostringstream body;
  report_header(body, "evaluate", config, seed);
  body << "samples " << report.sample_count << '\n';
  body << "skipped " << skipped << '\n';
  body << "accuracy " << fmt_g17(report.accuracy) << '\n';
  body << "weighted_f1 " << fmt_g17(report.weighted_f1) << '\n';
  body << "mae " << fmt_g17(report.mae) << '\n';
  write_confusion(body, report);

  std::ofstream report_out(report_path, std::ios::trunc);
  if (!report_out) throw DataError("cannot open for writing: " + report_path);
  report_out << body.str();
  report_out.close();
  if (!report_out) throw DataError("write failed: " + report_path);
  out << body.str();
}

}  // namespace mmfuse
