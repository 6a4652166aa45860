#include "mmfuse/aggregate.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace mmfuse {

const char* pooling_name(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::Mean: return "mean";
    case PoolingMode::Median: return "median";
    case PoolingMode::Max: return "max";
  }
  return "?";
}

std::optional<PoolingMode> pooling_from_name(std::string_view name) {
  if (name == "mean") return PoolingMode::Mean;
  if (name == "median") return PoolingMode::Median;
  if (name == "max") return PoolingMode::Max;
  return std::nullopt;
}

PoolingMode PoolingModes::for_modality(ModalityId m) const {
  switch (m) {
    case ModalityId::FED: return fed;
    case ModalityId::SER: return ser;
    case ModalityId::TED: return ted;
    default: throw DomainError("no pooling mode for modality AED");
  }
}

UniformVector::UniformVector(ModalityId modality_, Eigen::VectorXd values_)
    : modality(modality_), values(std::move(values_)) {
  if (!is_fusion_modality(modality)) {
    throw DomainError("uniform vector modality must be FED/SER/TED");
  }
  if (values.size() != kUniformDim) {
    throw DomainError("uniform vector must have length 1024, got " +
                      std::to_string(values.size()));
  }
  if (!values.allFinite()) {
    throw DomainError("uniform vector contains NaN/Inf");
  }
}

FusedVector::FusedVector(Eigen::VectorXd values_) : values(std::move(values_)) {
  if (values.size() != kFusedDim) {
    throw DomainError("fused vector must have length 3072, got " + std::to_string(values.size()));
  }
  if (!values.allFinite()) throw DomainError("fused vector contains NaN/Inf");
}

Eigen::VectorXd pool(const EmbeddingSequence& seq, PoolingMode mode) {
  const auto& frames = seq.frames();
  const Eigen::Index t = frames.rows();
  const Eigen::Index d = frames.cols();
  if (t == 0) {
    throw EmptySequenceError(std::string("cannot pool zero-frame sequence (modality ") +
                             modality_name(seq.modality()) + ")");
  }

  Eigen::VectorXd out(d);
  switch (mode) {
    case PoolingMode::Mean:
      out = frames.cast<double>().colwise().mean();
      break;
    case PoolingMode::Max:
      out = frames.cast<double>().colwise().maxCoeff();
      break;
    case PoolingMode::Median: {
      std::vector<double> column(static_cast<std::size_t>(t));
      for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < t; ++i) {
          column[static_cast<std::size_t>(i)] = static_cast<double>(frames(i, j));
        }
        std::sort(column.begin(), column.end());
        const std::size_t mid = column.size() / 2;
        out[j] = (column.size() % 2 == 1) ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
      }
      break;
    }
  }
  return out;
}

Eigen::VectorXd pad_or_truncate(const Eigen::VectorXd& v, int target) {
  if (target < 1) {
    throw DomainError("pad_or_truncate target must be >= 1");
  }
  if (!v.allFinite()) {
    throw DomainError("pad_or_truncate input contains NaN/Inf");
  }
  if (v.size() >= target) {
    return v.head(target);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(target);
  out.head(v.size()) = v;
  return out;
}

UniformVector normalize_dim(const Eigen::VectorXd& v, ModalityId modality) {
  return UniformVector(modality, pad_or_truncate(v, kUniformDim));
}

FusedVector concat3(const UniformVector& fed, const UniformVector& ser, const UniformVector& ted) {
  if (fed.modality != ModalityId::FED || ser.modality != ModalityId::SER ||
      ted.modality != ModalityId::TED) {
    throw DomainError("concat3 expects (FED, SER, TED) in that order");
  }
  Eigen::VectorXd out(kFusedDim);
  out.segment(0, kUniformDim) = fed.values;
  out.segment(kUniformDim, kUniformDim) = ser.values;
  out.segment(2 * kUniformDim, kUniformDim) = ted.values;
  return FusedVector(std::move(out));
}

std::array<UniformVector, 3> split3(const FusedVector& fused) {
  return {UniformVector(ModalityId::FED, fused.values.segment(0, kUniformDim)),
          UniformVector(ModalityId::SER, fused.values.segment(kUniformDim, kUniformDim)),
          UniformVector(ModalityId::TED, fused.values.segment(2 * kUniformDim, kUniformDim))};
}

}  // namespace mmfuse
