#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mmfuse/classify.hpp"

namespace mmfuse {

struct MlpConfig {
  std::vector<int> layer_sizes;  // input, hidden..., output
  double dropout_p = 0.1;
  double learning_rate = 1.86e-4;
  double weight_decay = 0.1;
  int epochs = 80;
  int batch_size = 64;
  double grad_clip = 0.3;  // global L2 norm; <= 0 disables clipping
  std::uint64_t seed = 0;
};

// Hidden sizes of the default fusion net (six layers), optionally narrowed.
std::vector<int> default_mlp_hidden(double width_factor = 1.0);

struct MlpTrainResult {
  MlpHead head;                   // parameters after the last epoch
  std::optional<MlpHead> best;    // best-validation checkpoint, if validation given
  int best_epoch = -1;            // 1-based; -1 when no validation
  double best_val_accuracy = 0.0;
  double final_train_loss = 0.0;
};

// He-initialized weights, zero biases; hidden layers ReLU, final Identity.
MlpHead mlp_init(const MlpConfig& config);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
};

// Mean cross-entropy over rows, dropout inactive. Exposed for gradient checks.
double mlp_loss(const MlpHead& head, const Eigen::MatrixXd& X, const std::vector<int>& y);
MlpGradients mlp_gradients(const MlpHead& head, const Eigen::MatrixXd& X,
                           const std::vector<int>& y);

// AdamW mini-batch training with inverted dropout (hidden activations only)
// and global gradient-norm clipping; deterministic for a fixed seed.
MlpTrainResult mlp_train(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const MlpConfig& config,
                         const Eigen::MatrixXd* x_val = nullptr,
                         const std::vector<int>* y_val = nullptr);

}  // namespace mmfuse
