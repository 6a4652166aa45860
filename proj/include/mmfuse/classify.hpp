#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mmfuse/core.hpp"

namespace mmfuse {

// Max-subtraction softmax; entries in (0,1], sum 1.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Single affine layer feeding softmax (the linear heads and the fusion
// logistic-regression classifier share this shape).
struct LinearSoftmaxHead {
  LinearSoftmaxHead(Eigen::MatrixXd weights, Eigen::VectorXd bias, std::vector<int> classes);

  Eigen::MatrixXd weights;   // K x d
  Eigen::VectorXd bias;      // K
  std::vector<int> classes;  // K labels
};

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1 };

struct MlpLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation = Activation::ReLU;
};

// Layered affine+ReLU map with an Identity final layer feeding softmax.
// dropout_p applies after hidden activations during training only.
struct MlpHead {
  MlpHead() = default;
  MlpHead(std::vector<MlpLayer> layers, double dropout_p);

  std::vector<MlpLayer> layers;
  double dropout_p = 0.0;

  Eigen::Index input_dim() const { return layers.front().weights.cols(); }
  Eigen::Index output_dim() const { return layers.back().weights.rows(); }
};

// MlpHead first: its default state makes the variant default-constructible
// for deserialization staging.
using ClassifierHead = std::variant<MlpHead, LinearSoftmaxHead>;

Eigen::VectorXd head_predict(const LinearSoftmaxHead& head, const Eigen::VectorXd& x);
Eigen::VectorXd head_predict(const MlpHead& head, const Eigen::VectorXd& x);  // dropout inactive
Eigen::VectorXd head_predict(const ClassifierHead& head, const Eigen::VectorXd& x);

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

struct LogregConfig {
  double c = 1.0;     // inverse L2 strength; penalty is ||W||_F^2 / (2C)
  int max_iter = 5000;
  double tol = 1e-5;  // on the inf-norm of the sample-averaged gradient
  bool balanced = true;
  int n_classes = kNumClasses;
  std::uint64_t seed = 0;  // unused by the deterministic solver, kept for provenance
};

enum class StopReason { Converged, MaxIter, Stalled };

const char* stop_reason_name(StopReason r);

struct LogregResult {
  LinearSoftmaxHead head;
  int iterations = 0;
  StopReason stop = StopReason::MaxIter;
  double grad_inf_norm = 0.0;
};

// Objective exposed for gradient verification: sample-averaged class-weighted
// cross-entropy plus ||W||_F^2 / (2 C N); same minimizer as the sum-form
// objective with penalty 1/(2C).
double logreg_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                        const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                        const LogregConfig& config);
void logreg_gradient(const Eigen::MatrixXd& X, const std::vector<int>& y,
                     const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                     const LogregConfig& config, Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_b);

// Deterministic L-BFGS from zero initialization; balanced class weights are
// w_c = N / (K_present * N_c).
LogregResult logreg_train(const Eigen::MatrixXd& X, const std::vector<int>& y,
                          const LogregConfig& config);

std::vector<double> class_weights(const std::vector<int>& y, int n_classes, bool balanced);

// ---------------------------------------------------------------------------
// Cross-validated grid search over C
// ---------------------------------------------------------------------------

// Seven values spanning [0.01, 50].
std::vector<double> default_c_grid();

struct CvFoldFit {
  double c = 0.0;
  int fold = 0;
  double weighted_f1 = 0.0;
  int iterations = 0;
  StopReason stop = StopReason::MaxIter;
};

struct GridSearchResult {
  std::vector<CvFoldFit> fits;                      // k folds per C value
  std::vector<std::pair<double, double>> mean_f1;   // (C, mean weighted F1), ascending C
  double best_c = 0.0;
  LogregResult refit;                               // best C refitted on all rows
};

// Optional per-fold feature transform (strict mode refits scalers inside each
// fold); receives (X_train, X_val), returns their transformed versions.
using FoldTransform =
    std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(const Eigen::MatrixXd&,
                                                              const Eigen::MatrixXd&)>;

GridSearchResult grid_search_cv(const Eigen::MatrixXd& X, const std::vector<SentimentClass>& y,
                                const std::vector<double>& grid, int k, std::uint64_t seed,
                                const LogregConfig& base, const FoldTransform& transform = {});

}  // namespace mmfuse
