#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mmfuse/aggregate.hpp"
#include "mmfuse/core.hpp"
#include "mmfuse/scaler.hpp"

namespace mmfuse {

class BinReader;
class BinWriter;

struct RegressionMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

struct RidgeSolution {
  Eigen::MatrixXd weights;  // K x D, output-major
  Eigen::VectorXd bias;     // K
};

// Closed-form ridge on centered data: weights solve
// (Xc^T Xc + alpha I) W = Xc^T Yc via a symmetric positive-definite
// factorization (the Gram-side formulation is used when N < D; both solve the
// same normal equations). Bias absorbs the column means. The normal-equation
// residual is verified to relative norm < 1e-8.
RidgeSolution ridge_fit(const Eigen::MatrixXd& Xs, const Eigen::MatrixXd& Y, double alpha);

// Pooled over all entries: mse/rmse elementwise, r2 = 1 - SS_res/SS_tot with
// SS_tot taken around the grand mean of Y_true. SS_tot == 0 degenerates to
// r2 = 1 when SS_res == 0, else 0.
RegressionMetrics evaluate_regression(const Eigen::MatrixXd& Y_true, const Eigen::MatrixXd& Y_pred);

// Scaler-plus-ridge affine map aligning one feature space with another.
class AdapterModel {
 public:
  AdapterModel(FeatureScaler scaler, Eigen::MatrixXd weights, Eigen::VectorXd bias, double alpha);

  // Exact pass-through: unit scaler, identity weights, zero bias.
  static AdapterModel identity(int dim);

  Eigen::VectorXd apply_vec(const Eigen::VectorXd& x) const;
  FusedVector apply(const FusedVector& f) const;  // requires dim() == 3072

  Eigen::Index dim() const { return bias_.size(); }
  double alpha() const { return alpha_; }
  const FeatureScaler& scaler() const { return scaler_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }

  void save(const std::string& path) const;
  static AdapterModel load(const std::string& path);

  // Stream forms of the same blob, for embedding inside other model files.
  void write(BinWriter& out) const;
  static AdapterModel read(BinReader& in, const std::string& context);

 private:
  FeatureScaler scaler_;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
  double alpha_ = 1.0;
};

struct AdapterTrainResult {
  AdapterModel model;
  RegressionMetrics validation;
  int train_rows = 0;
  int val_rows = 0;
};

// Rows of `current` and `target` must already be aligned by segment key.
// Scaler and ridge are fitted on the seed-deterministic training split only;
// metrics come from the held-out rows.
AdapterTrainResult adapter_train(const Eigen::MatrixXd& current, const Eigen::MatrixXd& target,
                                 double alpha, double val_fraction, std::uint64_t seed);

}  // namespace mmfuse
