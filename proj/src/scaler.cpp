#include "mmfuse/scaler.hpp"

#include <cmath>
#include <string>

#include "mmfuse/binio.hpp"

namespace mmfuse {

FeatureScaler::FeatureScaler(Eigen::VectorXd means, Eigen::VectorXd stds)
    : means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.size() != stds_.size()) {
    throw DomainError("scaler means/stds length mismatch");
  }
  if (!means_.allFinite() || !stds_.allFinite() || (stds_.array() <= 0.0).any()) {
    throw DomainError("scaler parameters must be finite with strictly positive stds");
  }
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  if (n < 2) {
    throw DomainError("scaler_fit needs at least 2 rows, got " + std::to_string(n));
  }
  if (!X.allFinite()) {
    throw DomainError("scaler_fit input contains NaN/Inf");
  }
  Eigen::VectorXd means = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - means.transpose();
  // Population standard deviation (divide by N).
  Eigen::VectorXd stds =
      (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < stds.size(); ++j) {
    if (stds[j] < kScalerStdGuard) stds[j] = 1.0;
  }
  return FeatureScaler(std::move(means), std::move(stds));
}

Eigen::VectorXd FeatureScaler::transform(const Eigen::VectorXd& x) const {
  if (x.size() != means_.size()) {
    throw DomainError("scaler_transform dimension mismatch: fitted " +
                      std::to_string(means_.size()) + ", got " + std::to_string(x.size()));
  }
  return (x - means_).cwiseQuotient(stds_);
}

Eigen::MatrixXd FeatureScaler::transform_rows(const Eigen::MatrixXd& X) const {
  if (X.cols() != means_.size()) {
    throw DomainError("scaler_transform dimension mismatch: fitted " +
                      std::to_string(means_.size()) + ", got " + std::to_string(X.cols()));
  }
  return (X.rowwise() - means_.transpose()).array().rowwise() / stds_.transpose().array();
}

Eigen::VectorXd FeatureScaler::inverse_transform(const Eigen::VectorXd& z) const {
  if (z.size() != means_.size()) {
    throw DomainError("scaler inverse_transform dimension mismatch");
  }
  return z.cwiseProduct(stds_) + means_;
}

void FeatureScaler::write(BinWriter& out) const {
  out.u32(static_cast<std::uint32_t>(means_.size()));
  out.f64_array(means_.data(), static_cast<std::size_t>(means_.size()));
  out.f64_array(stds_.data(), static_cast<std::size_t>(stds_.size()));
}

FeatureScaler FeatureScaler::read(BinReader& in) {
  const std::uint32_t dim = in.u32("scaler dimension");
  Eigen::VectorXd means(dim), stds(dim);
  in.f64_array(means.data(), dim, "scaler means");
  in.f64_array(stds.data(), dim, "scaler stds");
  return FeatureScaler(std::move(means), std::move(stds));
}

}  // namespace mmfuse
