#pragma once

#include <array>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "mmfuse/core.hpp"

namespace mmfuse {

// Raised by pool() on a zero-frame sequence; the supervisor catches it and
// applies its degradation policy, everyone else treats it as a domain error.
class EmptySequenceError : public DomainError {
 public:
  using DomainError::DomainError;
};

enum class PoolingMode { Mean, Median, Max };

const char* pooling_name(PoolingMode mode);
std::optional<PoolingMode> pooling_from_name(std::string_view name);

struct PoolingModes {
  PoolingMode fed = PoolingMode::Mean;
  PoolingMode ser = PoolingMode::Mean;
  PoolingMode ted = PoolingMode::Mean;

  PoolingMode for_modality(ModalityId m) const;
};

// Length-1024 per-modality vector (fusion modalities only, finite entries).
struct UniformVector {
  UniformVector(ModalityId modality, Eigen::VectorXd values);

  ModalityId modality;
  Eigen::VectorXd values;
};

// Length-3072 fused vector, slices laid out FED [0,1024) | SER [1024,2048) |
// TED [2048,3072).
struct FusedVector {
  explicit FusedVector(Eigen::VectorXd values);

  Eigen::VectorXd values;
};

// Column-wise reduction of the T x d frame matrix. Median of an even frame
// count is the mean of the two middle order statistics.
Eigen::VectorXd pool(const EmbeddingSequence& seq, PoolingMode mode);

// Zero-pad below `target` entries, truncate above. Prefix min(d, target) is
// preserved exactly.
Eigen::VectorXd pad_or_truncate(const Eigen::VectorXd& v, int target);

UniformVector normalize_dim(const Eigen::VectorXd& v, ModalityId modality);

FusedVector concat3(const UniformVector& fed, const UniformVector& ser, const UniformVector& ted);

std::array<UniformVector, 3> split3(const FusedVector& fused);

}  // namespace mmfuse
