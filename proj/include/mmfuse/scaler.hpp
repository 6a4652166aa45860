#pragma once

#include <Eigen/Dense>

#include "mmfuse/errors.hpp"

namespace mmfuse {

class BinReader;
class BinWriter;

// Zero-mean/unit-variance feature scaler. Columns whose population standard
// deviation falls below 1e-12 get std := 1, so constant (e.g. zero-padded)
// columns map to zero instead of dividing by zero.
class FeatureScaler {
 public:
  FeatureScaler() = default;
  FeatureScaler(Eigen::VectorXd means, Eigen::VectorXd stds);

  static FeatureScaler fit(const Eigen::MatrixXd& X);  // needs N >= 2 rows

  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd inverse_transform(const Eigen::VectorXd& z) const;

  Eigen::Index dim() const { return means_.size(); }
  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& stds() const { return stds_; }

  void write(BinWriter& out) const;
  static FeatureScaler read(BinReader& in);

 private:
  Eigen::VectorXd means_;
  Eigen::VectorXd stds_;
};

constexpr double kScalerStdGuard = 1e-12;

}  // namespace mmfuse
