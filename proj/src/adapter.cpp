#include "mmfuse/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Cholesky>

#include "mmfuse/binio.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

namespace {

Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) {
    return llt.solve(B);
  }
  // alpha > 0 keeps A positive definite; LDLT is the near-semidefinite fallback.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("ridge normal-equation factorization failed");
  }
  return ldlt.solve(B);
}

}  // namespace

RidgeSolution ridge_fit(const Eigen::MatrixXd& Xs, const Eigen::MatrixXd& Y, double alpha) {
  const Eigen::Index n = Xs.rows();
  const Eigen::Index d = Xs.cols();
  const Eigen::Index k = Y.cols();
  if (n < 1 || Y.rows() != n) {
    throw DomainError("ridge_fit needs matching row counts with N >= 1");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw DomainError("ridge_fit alpha must be positive and finite");
  }
  if (!Xs.allFinite() || !Y.allFinite()) {
    throw DomainError("ridge_fit inputs contain NaN/Inf");
  }

  const Eigen::RowVectorXd x_mean = Xs.colwise().mean();
  const Eigen::RowVectorXd y_mean = Y.colwise().mean();
  const Eigen::MatrixXd Xc = Xs.rowwise() - x_mean;
  const Eigen::MatrixXd Yc = Y.rowwise() - y_mean;

  Eigen::MatrixXd wt;  // D x K
  if (n < d) {
    // Gram-side solve: W = Xc^T (Xc Xc^T + alpha I)^-1 Yc, identical solution
    // to the feature-side normal equations at N x N cost.
    Eigen::MatrixXd gram = Xc * Xc.transpose();
    gram.diagonal().array() += alpha;
    wt = Xc.transpose() * spd_solve(gram, Yc);
  } else {
    Eigen::MatrixXd normal = Xc.transpose() * Xc;
    normal.diagonal().array() += alpha;
    wt = spd_solve(normal, Xc.transpose() * Yc);
  }

  // Residual of (Xc^T Xc + alpha I) W - Xc^T Yc, computed at N*D*K cost.
  const Eigen::MatrixXd residual = Xc.transpose() * (Xc * wt - Yc) + alpha * wt;
  const double rhs_norm = (Xc.transpose() * Yc).norm();
  const double rel = residual.norm() / std::max(rhs_norm, 1e-300);
  if (rhs_norm > 0.0 && rel > 1e-8) {
    throw NumericError("ridge solve residual too large: relative norm " + std::to_string(rel));
  }

  RidgeSolution sol;
  sol.weights = wt.transpose();
  sol.bias = y_mean.transpose() - sol.weights * x_mean.transpose();
  if (!sol.weights.allFinite() || !sol.bias.allFinite()) {
    throw NumericError("ridge solution contains NaN/Inf");
  }
  (void)k;
  return sol;
}

RegressionMetrics evaluate_regression(const Eigen::MatrixXd& Y_true,
                                      const Eigen::MatrixXd& Y_pred) {
  if (Y_true.rows() != Y_pred.rows() || Y_true.cols() != Y_pred.cols()) {
    throw DomainError("evaluate_regression shape mismatch");
  }
  if (Y_true.rows() < 1) {
    throw DomainError("evaluate_regression needs at least one row");
  }
  const double count = static_cast<double>(Y_true.rows()) * static_cast<double>(Y_true.cols());
  const double ss_res = (Y_true - Y_pred).squaredNorm();
  const double grand_mean = Y_true.mean();
  const double ss_tot = (Y_true.array() - grand_mean).square().sum();

  RegressionMetrics m;
  m.mse = ss_res / count;
  m.rmse = std::sqrt(m.mse);
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - ss_res / ss_tot;
  } else {
    m.r2 = ss_res == 0.0 ? 1.0 : 0.0;
  }
  return m;
}

AdapterModel::AdapterModel(FeatureScaler scaler, Eigen::MatrixXd weights, Eigen::VectorXd bias,
                           double alpha)
    : scaler_(std::move(scaler)), weights_(std::move(weights)), bias_(std::move(bias)),
      alpha_(alpha) {
  if (weights_.rows() != bias_.size() || weights_.cols() != scaler_.dim() ||
      weights_.rows() != weights_.cols()) {
    throw DomainError("adapter model shapes inconsistent");
  }
  if (!(alpha_ > 0.0)) {
    throw DomainError("adapter alpha must be positive");
  }
  if (!weights_.allFinite() || !bias_.allFinite()) {
    throw DomainError("adapter parameters contain NaN/Inf");
  }
}

AdapterModel AdapterModel::identity(int dim) {
  FeatureScaler unit(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));
  return AdapterModel(std::move(unit), Eigen::MatrixXd::Identity(dim, dim),
                      Eigen::VectorXd::Zero(dim), 1.0);
}

Eigen::VectorXd AdapterModel::apply_vec(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) {
    throw DomainError("adapter_apply dimension mismatch: model " + std::to_string(dim()) +
                      ", input " + std::to_string(x.size()));
  }
  return weights_ * scaler_.transform(x) + bias_;
}

FusedVector AdapterModel::apply(const FusedVector& f) const {
  if (dim() != kFusedDim) {
    throw DomainError("adapter model dimension is " + std::to_string(dim()) +
                      ", fused vectors need 3072");
  }
  return FusedVector(apply_vec(f.values));
}

void AdapterModel::write(BinWriter& out) const {
  out.magic("ADP1");
  out.u32(static_cast<std::uint32_t>(dim()));
  out.f64(alpha_);
  out.f64_array(scaler_.means().data(), static_cast<std::size_t>(dim()));
  out.f64_array(scaler_.stds().data(), static_cast<std::size_t>(dim()));
  // weights row-major
  for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
    Eigen::RowVectorXd row = weights_.row(r);
    out.f64_array(row.data(), static_cast<std::size_t>(row.size()));
  }
  out.f64_array(bias_.data(), static_cast<std::size_t>(bias_.size()));
}

AdapterModel AdapterModel::read(BinReader& in, const std::string& context) {
  in.magic("ADP1", "adapter magic");
  const std::uint32_t d = in.u32("adapter dimension");
  if (d == 0 || d > 1u << 20) {
    throw DataError(context + ": implausible adapter dimension " + std::to_string(d));
  }
  const double alpha = in.f64("adapter alpha");
  Eigen::VectorXd means(d), stds(d), bias(d);
  in.f64_array(means.data(), d, "adapter means");
  in.f64_array(stds.data(), d, "adapter stds");
  Eigen::MatrixXd weights(d, d);
  for (std::uint32_t r = 0; r < d; ++r) {
    Eigen::RowVectorXd row(d);
    in.f64_array(row.data(), d, "adapter weights");
    weights.row(r) = row;
  }
  in.f64_array(bias.data(), d, "adapter bias");
  try {
    return AdapterModel(FeatureScaler(std::move(means), std::move(stds)), std::move(weights),
                        std::move(bias), alpha);
  } catch (const DomainError& e) {
    throw DataError(context + ": " + e.what());
  }
}

void AdapterModel::save(const std::string& path) const {
  BinWriter out(path);
  write(out);
  out.close();
}

AdapterModel AdapterModel::load(const std::string& path) {
  BinReader in = BinReader::from_file(path);
  AdapterModel model = read(in, path);
  in.expect_end("adapter bias");
  return model;
}

AdapterTrainResult adapter_train(const Eigen::MatrixXd& current, const Eigen::MatrixXd& target,
                                 double alpha, double val_fraction, std::uint64_t seed) {
  const Eigen::Index n = current.rows();
  if (n != target.rows()) {
    throw DomainError("adapter_train: current/target row counts differ");
  }
  if (n < 4) {
    throw DomainError("adapter_train needs at least 4 aligned rows, got " + std::to_string(n));
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DomainError("adapter_train val_fraction must lie in (0,1)");
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "adapter_split"));
  deterministic_shuffle(order, rng);

  const int n_val = static_cast<int>(std::lround(static_cast<double>(n) * val_fraction));
  const int n_train = static_cast<int>(n) - n_val;
  if (n_train < 2 || n_val < 2) {
    throw DomainError("adapter_train split leaves fewer than 2 rows on one side (train " +
                      std::to_string(n_train) + ", val " + std::to_string(n_val) + ")");
  }

  Eigen::MatrixXd x_train(n_train, current.cols()), y_train(n_train, target.cols());
  Eigen::MatrixXd x_val(n_val, current.cols()), y_val(n_val, target.cols());
  for (int i = 0; i < n_train; ++i) {
    x_train.row(i) = current.row(order[static_cast<std::size_t>(i)]);
    y_train.row(i) = target.row(order[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i < n_val; ++i) {
    x_val.row(i) = current.row(order[static_cast<std::size_t>(n_train + i)]);
    y_val.row(i) = target.row(order[static_cast<std::size_t>(n_train + i)]);
  }

  FeatureScaler scaler = FeatureScaler::fit(x_train);
  RidgeSolution sol = ridge_fit(scaler.transform_rows(x_train), y_train, alpha);

  const Eigen::MatrixXd x_val_scaled = scaler.transform_rows(x_val);
  Eigen::MatrixXd y_hat = x_val_scaled * sol.weights.transpose();
  y_hat.rowwise() += sol.bias.transpose();

  AdapterTrainResult result{
      AdapterModel(std::move(scaler), std::move(sol.weights), std::move(sol.bias), alpha),
      evaluate_regression(y_val, y_hat), n_train, n_val};
  return result;
}

}  // namespace mmfuse
