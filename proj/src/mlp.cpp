#include "mmfuse/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

std::vector<int> default_mlp_hidden(double width_factor) {
  if (!(width_factor > 0.0) || width_factor > 1.0)
    throw DomainError("mlp width factor must be in (0,1]");
  const int width = std::max(1, static_cast<int>(std::lround(1024.0 * width_factor)));
  return std::vector<int>(6, width);
}

namespace {

void check_mlp_config(const MlpConfig& config) {
  if (config.layer_sizes.size() < 2) throw DomainError("mlp: need input and output sizes");
  for (int s : config.layer_sizes) {
    if (s < 1) throw DomainError("mlp: layer sizes must be positive");
  }
  if (config.layer_sizes.back() < 2) throw DomainError("mlp: need at least 2 output classes");
  if (!(config.dropout_p >= 0.0 && config.dropout_p < 1.0))
    throw DomainError("mlp: dropout_p must be in [0,1)");
  if (!(config.learning_rate > 0.0)) throw DomainError("mlp: learning rate must be positive");
  if (config.epochs < 0) throw DomainError("mlp: epochs must be nonnegative");
  if (config.batch_size < 1) throw DomainError("mlp: batch size must be positive");
  if (!(config.weight_decay >= 0.0)) throw DomainError("mlp: weight decay must be nonnegative");
}

// Per-sample loss and the logits' softmax for a forward pass without dropout.
struct Forward {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input, size L+1
  std::vector<Eigen::MatrixXd> pre;          // pre-activations per layer
  Eigen::MatrixXd probs;                     // rows softmaxed
};

Forward forward_pass(const MlpHead& head, const Eigen::MatrixXd& X, double dropout_p,
                     std::mt19937_64* dropout_rng, std::vector<Eigen::MatrixXd>* masks) {
  Forward fw;
  fw.activations.reserve(head.layers.size() + 1);
  fw.pre.reserve(head.layers.size());
  fw.activations.push_back(X);
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    const auto& layer = head.layers[l];
    Eigen::MatrixXd z = fw.activations.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    fw.pre.push_back(z);
    Eigen::MatrixXd a =
        layer.activation == Activation::ReLU ? z.cwiseMax(0.0).eval() : std::move(z);
    const bool hidden = l + 1 < head.layers.size();
    if (hidden && dropout_rng != nullptr && dropout_p > 0.0) {
      // Inverted dropout: scale kept units by 1/(1-p) so inference needs no rescale.
      Eigen::MatrixXd mask(a.rows(), a.cols());
      const double keep = 1.0 - dropout_p;
      for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
          mask(i, j) = uniform_unit(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        }
      }
      a = a.cwiseProduct(mask);
      if (masks != nullptr) masks->push_back(std::move(mask));
    } else if (hidden && masks != nullptr) {
      masks->push_back(Eigen::MatrixXd());
    }
    fw.activations.push_back(std::move(a));
  }
  const Eigen::MatrixXd& logits = fw.activations.back();
  fw.probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - zmax).exp();
    fw.probs.row(i) = e / e.sum();
  }
  return fw;
}

double ce_loss(const Eigen::MatrixXd& logits, const std::vector<int>& y) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    const double lse = std::log((logits.row(i).array() - zmax).exp().sum()) + zmax;
    loss += lse - logits(i, y[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(logits.rows());
}

// Backprop of mean cross-entropy through the recorded forward pass.
MlpGradients backward_pass(const MlpHead& head, const Forward& fw, const std::vector<int>& y,
                           const std::vector<Eigen::MatrixXd>& masks) {
  const Eigen::Index n = fw.probs.rows();
  const std::size_t nl = head.layers.size();
  MlpGradients grads;
  grads.weights.resize(nl);
  grads.bias.resize(nl);

  Eigen::MatrixXd delta = fw.probs;
  for (Eigen::Index i = 0; i < n; ++i) delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  delta /= static_cast<double>(n);

  for (std::size_t l = nl; l-- > 0;) {
    grads.weights[l] = delta.transpose() * fw.activations[l];
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    delta = delta * head.layers[l].weights;
    if (!masks.empty() && masks[l - 1].size() > 0) delta = delta.cwiseProduct(masks[l - 1]);
    if (head.layers[l - 1].activation == Activation::ReLU)
      delta = delta.cwiseProduct((fw.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

void check_labels(const std::vector<int>& y, Eigen::Index n_rows, int n_classes) {
  if (static_cast<Eigen::Index>(y.size()) != n_rows)
    throw DomainError("mlp: X/y row count mismatch");
  for (int label : y) {
    if (label < 0 || label >= n_classes) throw DomainError("mlp: label out of range");
  }
}

}  // namespace

MlpHead mlp_init(const MlpConfig& config) {
  check_mlp_config(config);
  std::vector<MlpLayer> layers;
  const std::size_t nl = config.layer_sizes.size() - 1;
  layers.reserve(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    const int fan_in = config.layer_sizes[l];
    const int fan_out = config.layer_sizes[l + 1];
    std::mt19937_64 rng(derive_seed(config.seed, "mlp_init", l));
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    MlpLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
        layer.weights(i, j) = scale * gaussian(rng);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = l + 1 < nl ? Activation::ReLU : Activation::Identity;
    layers.push_back(std::move(layer));
  }
  return MlpHead(std::move(layers), config.dropout_p);
}

double mlp_loss(const MlpHead& head, const Eigen::MatrixXd& X, const std::vector<int>& y) {
  check_labels(y, X.rows(), static_cast<int>(head.output_dim()));
  if (X.rows() == 0) throw DomainError("mlp: empty dataset");
  const Forward fw = forward_pass(head, X, 0.0, nullptr, nullptr);
  return ce_loss(fw.activations.back(), y);
}

MlpGradients mlp_gradients(const MlpHead& head, const Eigen::MatrixXd& X,
                           const std::vector<int>& y) {
  check_labels(y, X.rows(), static_cast<int>(head.output_dim()));
  if (X.rows() == 0) throw DomainError("mlp: empty dataset");
  const Forward fw = forward_pass(head, X, 0.0, nullptr, nullptr);
  return backward_pass(head, fw, y, {});
}

MlpTrainResult mlp_train(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const MlpConfig& config, const Eigen::MatrixXd* x_val,
                         const std::vector<int>* y_val) {
  check_mlp_config(config);
  if (X.rows() == 0) throw DomainError("mlp: empty dataset");
  if (X.cols() != config.layer_sizes.front()) throw DomainError("mlp: input dimension mismatch");
  if (config.batch_size > X.rows()) throw DomainError("mlp: batch size exceeds dataset");
  check_labels(y, X.rows(), config.layer_sizes.back());
  if ((x_val == nullptr) != (y_val == nullptr))
    throw DomainError("mlp: validation features and labels must come together");
  if (x_val != nullptr) {
    if (x_val->cols() != X.cols()) throw DomainError("mlp: validation dimension mismatch");
    check_labels(*y_val, x_val->rows(), config.layer_sizes.back());
  }
  if (!X.allFinite()) throw NumericError("mlp: non-finite features");

  MlpHead head = mlp_init(config);
  MlpTrainResult result;

  // AdamW state, one slot per layer; decay applies to weights only.
  const std::size_t nl = head.layers.size();
  std::vector<Eigen::MatrixXd> m_w(nl), v_w(nl);
  std::vector<Eigen::VectorXd> m_b(nl), v_b(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    m_w[l] = Eigen::MatrixXd::Zero(head.layers[l].weights.rows(), head.layers[l].weights.cols());
    v_w[l] = m_w[l];
    m_b[l] = Eigen::VectorXd::Zero(head.layers[l].bias.size());
    v_b[l] = m_b[l];
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  std::int64_t adam_t = 0;

  auto val_accuracy = [&](const MlpHead& h) {
    std::int64_t hits = 0;
    for (Eigen::Index i = 0; i < x_val->rows(); ++i) {
      const Eigen::VectorXd p = head_predict(h, x_val->row(i).transpose());
      Eigen::Index arg = 0;
      p.maxCoeff(&arg);
      if (static_cast<int>(arg) == (*y_val)[static_cast<std::size_t>(i)]) hits++;
    }
    return static_cast<double>(hits) / static_cast<double>(x_val->rows());
  };

  std::vector<int> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(
        derive_seed(config.seed, "mlp_epoch", static_cast<std::uint64_t>(epoch)));
    std::mt19937_64 dropout_rng(
        derive_seed(config.seed, "mlp_dropout", static_cast<std::uint64_t>(epoch)));
    deterministic_shuffle(order, shuffle_rng);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Eigen::Index bs = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd xb(bs, X.cols());
      std::vector<int> yb(static_cast<std::size_t>(bs));
      for (Eigen::Index i = 0; i < bs; ++i) {
        xb.row(i) = X.row(order[start + static_cast<std::size_t>(i)]);
        yb[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(order[start + static_cast<std::size_t>(i)])];
      }

      std::vector<Eigen::MatrixXd> masks;
      const Forward fw = forward_pass(head, xb, config.dropout_p, &dropout_rng, &masks);
      MlpGradients grads = backward_pass(head, fw, yb, masks);

      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (std::size_t l = 0; l < nl; ++l)
          sq += grads.weights[l].squaredNorm() + grads.bias[l].squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip) {
          const double scale = config.grad_clip / norm;
          for (std::size_t l = 0; l < nl; ++l) {
            grads.weights[l] *= scale;
            grads.bias[l] *= scale;
          }
        }
      }

      adam_t++;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t));
      for (std::size_t l = 0; l < nl; ++l) {
        auto& layer = head.layers[l];
        m_w[l] = kBeta1 * m_w[l] + (1.0 - kBeta1) * grads.weights[l];
        v_w[l] = kBeta2 * v_w[l] + (1.0 - kBeta2) * grads.weights[l].cwiseAbs2();
        m_b[l] = kBeta1 * m_b[l] + (1.0 - kBeta1) * grads.bias[l];
        v_b[l] = kBeta2 * v_b[l] + (1.0 - kBeta2) * grads.bias[l].cwiseAbs2();
        layer.weights -=
            config.learning_rate *
            ((m_w[l] / bc1).cwiseQuotient(((v_w[l] / bc2).cwiseSqrt().array() + kEps).matrix()) +
             config.weight_decay * layer.weights);
        layer.bias -= config.learning_rate *
                      (m_b[l] / bc1).cwiseQuotient(((v_b[l] / bc2).cwiseSqrt().array() + kEps).matrix());
      }
    }

    if (x_val != nullptr && x_val->rows() > 0) {
      const double acc = val_accuracy(head);
      if (!result.best.has_value() || acc > result.best_val_accuracy) {
        result.best = head;
        result.best_val_accuracy = acc;
        result.best_epoch = epoch + 1;
      }
    }
  }

  result.final_train_loss = mlp_loss(head, X, y);
  result.head = std::move(head);
  return result;
}

}  // namespace mmfuse
