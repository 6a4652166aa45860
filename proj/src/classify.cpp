#include "mmfuse/classify.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw DomainError("softmax: empty logits");
  if (!logits.allFinite()) throw NumericError("softmax: non-finite logits");
  const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  Eigen::VectorXd p = shifted.array().exp();
  p /= p.sum();
  return p;
}

LinearSoftmaxHead::LinearSoftmaxHead(Eigen::MatrixXd w, Eigen::VectorXd b, std::vector<int> cls)
    : weights(std::move(w)), bias(std::move(b)), classes(std::move(cls)) {
  if (weights.rows() < 2) throw DomainError("linear head: need at least 2 classes");
  if (bias.size() != weights.rows()) throw DomainError("linear head: bias/weights row mismatch");
  if (static_cast<Eigen::Index>(classes.size()) != weights.rows())
    throw DomainError("linear head: class list length mismatch");
  if (!weights.allFinite() || !bias.allFinite())
    throw NumericError("linear head: non-finite parameters");
}

MlpHead::MlpHead(std::vector<MlpLayer> ls, double p) : layers(std::move(ls)), dropout_p(p) {
  if (layers.empty()) throw DomainError("mlp head: no layers");
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("mlp head: dropout_p must be in [0,1)");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i + 1].weights.cols() != layers[i].weights.rows())
      throw DomainError("mlp head: layer dimension chain broken");
  }
  for (const auto& l : layers) {
    if (l.bias.size() != l.weights.rows()) throw DomainError("mlp head: bias length mismatch");
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw NumericError("mlp head: non-finite parameters");
  }
  if (layers.back().activation != Activation::Identity)
    throw DomainError("mlp head: final layer must be Identity into softmax");
}

Eigen::VectorXd head_predict(const LinearSoftmaxHead& head, const Eigen::VectorXd& x) {
  if (x.size() != head.weights.cols()) throw DomainError("linear head: input dimension mismatch");
  return softmax(head.weights * x + head.bias);
}

Eigen::VectorXd head_predict(const MlpHead& head, const Eigen::VectorXd& x) {
  if (head.layers.empty()) throw DomainError("mlp head: no layers");
  if (x.size() != head.input_dim()) throw DomainError("mlp head: input dimension mismatch");
  Eigen::VectorXd h = x;
  for (const auto& layer : head.layers) {
    h = layer.weights * h + layer.bias;
    if (layer.activation == Activation::ReLU) h = h.cwiseMax(0.0);
  }
  return softmax(h);
}

Eigen::VectorXd head_predict(const ClassifierHead& head, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& h) { return head_predict(h, x); }, head);
}

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxIter: return "max_iter";
    case StopReason::Stalled: return "stalled";
  }
  throw DomainError("unknown stop reason");
}

std::vector<double> class_weights(const std::vector<int>& y, int n_classes, bool balanced) {
  std::vector<double> w(static_cast<std::size_t>(n_classes), 1.0);
  if (!balanced) return w;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int label : y) counts[static_cast<std::size_t>(label)]++;
  const auto present =
      std::count_if(counts.begin(), counts.end(), [](std::int64_t c) { return c > 0; });
  const double n = static_cast<double>(y.size());
  for (int c = 0; c < n_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0)
      w[static_cast<std::size_t>(c)] =
          n / (static_cast<double>(present) * static_cast<double>(counts[static_cast<std::size_t>(c)]));
  }
  return w;
}

namespace {

void check_logreg_inputs(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const LogregConfig& config) {
  if (X.rows() == 0) throw DomainError("logreg: empty dataset");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw DomainError("logreg: X/y row count mismatch");
  if (config.n_classes < 2) throw DomainError("logreg: need at least 2 classes");
  if (!(config.c > 0.0) || !std::isfinite(config.c))
    throw DomainError("logreg: C must be positive and finite");
  if (config.max_iter < 1) throw DomainError("logreg: max_iter must be positive");
  if (!(config.tol > 0.0)) throw DomainError("logreg: tol must be positive");
  if (!X.allFinite()) throw NumericError("logreg: non-finite features");
  for (int label : y) {
    if (label < 0 || label >= config.n_classes) throw DomainError("logreg: label out of range");
  }
  std::set<int> distinct(y.begin(), y.end());
  if (distinct.size() < 2) throw DomainError("logreg: training data has a single class");
}

// Value and gradient of the sample-averaged objective at (W, b).
double objective_impl(const Eigen::MatrixXd& X, const std::vector<int>& y,
                      const std::vector<double>& w_class, double c_inv_n,
                      const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                      Eigen::MatrixXd* grad_w, Eigen::VectorXd* grad_b) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd Z = X * W.transpose();  // n x K
  Z.rowwise() += b.transpose();

  double loss = 0.0;
  // P becomes the weighted residual (p - onehot) * w_i / n used by the gradient.
  Eigen::MatrixXd P(n, W.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zmax = Z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (Z.row(i).array() - zmax).exp();
    const double denom = e.sum();
    const double wi = w_class[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
    loss += wi * (std::log(denom) + zmax - Z(i, y[static_cast<std::size_t>(i)]));
    P.row(i) = e * (wi / denom);
    P(i, y[static_cast<std::size_t>(i)]) -= wi;
  }
  loss /= static_cast<double>(n);
  loss += 0.5 * c_inv_n * W.squaredNorm();
  if (grad_w != nullptr) {
    *grad_w = (P.transpose() * X) / static_cast<double>(n);
    *grad_w += c_inv_n * W;
    *grad_b = P.colwise().sum().transpose() / static_cast<double>(n);
  }
  if (!std::isfinite(loss)) throw NumericError("logreg: objective overflow");
  return loss;
}

}  // namespace

double logreg_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                        const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                        const LogregConfig& config) {
  check_logreg_inputs(X, y, config);
  const auto w = class_weights(y, config.n_classes, config.balanced);
  const double c_inv_n = 1.0 / (config.c * static_cast<double>(X.rows()));
  return objective_impl(X, y, w, c_inv_n, weights, bias, nullptr, nullptr);
}

void logreg_gradient(const Eigen::MatrixXd& X, const std::vector<int>& y,
                     const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                     const LogregConfig& config, Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_b) {
  check_logreg_inputs(X, y, config);
  const auto w = class_weights(y, config.n_classes, config.balanced);
  const double c_inv_n = 1.0 / (config.c * static_cast<double>(X.rows()));
  objective_impl(X, y, w, c_inv_n, weights, bias, &grad_w, &grad_b);
}

LogregResult logreg_train(const Eigen::MatrixXd& X, const std::vector<int>& y,
                          const LogregConfig& config) {
  check_logreg_inputs(X, y, config);
  const Eigen::Index d = X.cols();
  const Eigen::Index k = config.n_classes;
  const auto w_class = class_weights(y, config.n_classes, config.balanced);
  const double c_inv_n = 1.0 / (config.c * static_cast<double>(X.rows()));

  const Eigen::Index n_params = k * d + k;
  auto unpack_w = [&](const Eigen::VectorXd& theta) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               theta.data(), k, d)
        .eval();
  };
  auto unpack_b = [&](const Eigen::VectorXd& theta) {
    return Eigen::VectorXd(theta.segment(k * d, k));
  };
  auto eval = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const Eigen::MatrixXd W = unpack_w(theta);
    const Eigen::VectorXd b = unpack_b(theta);
    Eigen::MatrixXd gw;
    Eigen::VectorXd gb;
    const double f = objective_impl(X, y, w_class, c_inv_n, W, b, &gw, &gb);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data(), k, d) = gw;
    grad.segment(k * d, k) = gb;
    return f;
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_params);
  Eigen::VectorXd grad(n_params);
  double f = eval(theta, grad);

  // L-BFGS with memory 10 and Armijo backtracking.
  constexpr int kMemory = 10;
  constexpr double kArmijoC1 = 1e-4;
  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;

  int iter = 0;
  StopReason stop = StopReason::MaxIter;
  for (; iter < config.max_iter; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < config.tol) {
      stop = StopReason::Converged;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double dg = dir.dot(grad);
    if (dg >= 0.0) {  // not a descent direction, fall back to steepest descent
      dir = -grad;
      dg = -grad.squaredNorm();
    }

    double step = 1.0;
    Eigen::VectorXd theta_new(n_params);
    Eigen::VectorXd grad_new(n_params);
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      theta_new = theta + step * dir;
      f_new = eval(theta_new, grad_new);
      if (f_new <= f + kArmijoC1 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      stop = StopReason::Stalled;
      break;
    }

    Eigen::VectorXd s = theta_new - theta;
    Eigen::VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta = std::move(theta_new);
    grad = std::move(grad_new);
    f = f_new;
  }
  if (stop == StopReason::MaxIter && grad.lpNorm<Eigen::Infinity>() < config.tol)
    stop = StopReason::Converged;

  std::vector<int> classes(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) classes[static_cast<std::size_t>(c)] = static_cast<int>(c);
  LogregResult result{LinearSoftmaxHead(unpack_w(theta), unpack_b(theta), classes), iter, stop,
                      grad.lpNorm<Eigen::Infinity>()};
  return result;
}

std::vector<double> default_c_grid() { return {0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0}; }

GridSearchResult grid_search_cv(const Eigen::MatrixXd& X, const std::vector<SentimentClass>& y,
                                const std::vector<double>& grid, int k, std::uint64_t seed,
                                const LogregConfig& base, const FoldTransform& transform) {
  if (grid.empty()) throw DomainError("grid search: empty C grid");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw DomainError("grid search: X/y row count mismatch");
  for (double c : grid) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("grid search: C must be positive");
  }

  std::vector<double> cs = grid;
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());

  const auto folds = stratified_kfold(y, k, seed);

  std::vector<int> labels(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) labels[i] = static_cast<int>(y[i]);

  // Fold membership is fixed across the grid, so materialize each fold once.
  struct Fold {
    Eigen::MatrixXd x_train, x_val;
    std::vector<int> y_train;
    std::vector<SentimentClass> y_val;
  };
  std::vector<Fold> prepared;
  prepared.reserve(folds.size());
  for (const auto& val_idx : folds) {
    std::vector<char> in_val(y.size(), 0);
    for (int i : val_idx) in_val[static_cast<std::size_t>(i)] = 1;
    Fold fold;
    fold.x_train.resize(X.rows() - static_cast<Eigen::Index>(val_idx.size()), X.cols());
    fold.x_val.resize(static_cast<Eigen::Index>(val_idx.size()), X.cols());
    Eigen::Index tr = 0, va = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (in_val[static_cast<std::size_t>(i)]) {
        fold.x_val.row(va++) = X.row(i);
        fold.y_val.push_back(y[static_cast<std::size_t>(i)]);
      } else {
        fold.x_train.row(tr++) = X.row(i);
        fold.y_train.push_back(labels[static_cast<std::size_t>(i)]);
      }
    }
    if (transform) {
      auto [xt, xv] = transform(fold.x_train, fold.x_val);
      fold.x_train = std::move(xt);
      fold.x_val = std::move(xv);
    }
    prepared.push_back(std::move(fold));
  }

  std::vector<CvFoldFit> fits;
  std::vector<std::pair<double, double>> mean_f1;
  for (double c : cs) {
    LogregConfig config = base;
    config.c = c;
    double f1_sum = 0.0;
    for (std::size_t fi = 0; fi < prepared.size(); ++fi) {
      const auto& fold = prepared[fi];
      const LogregResult fit = logreg_train(fold.x_train, fold.y_train, config);
      std::vector<SentimentClass> pred;
      pred.reserve(fold.y_val.size());
      for (Eigen::Index i = 0; i < fold.x_val.rows(); ++i) {
        const Eigen::VectorXd p = head_predict(fit.head, fold.x_val.row(i).transpose());
        Eigen::Index arg = 0;
        p.maxCoeff(&arg);
        pred.push_back(static_cast<SentimentClass>(arg));
      }
      const EvalReport report = compute_metrics(pred, fold.y_val);
      fits.push_back({c, static_cast<int>(fi), report.weighted_f1, fit.iterations, fit.stop});
      f1_sum += report.weighted_f1;
    }
    mean_f1.emplace_back(c, f1_sum / static_cast<double>(prepared.size()));
  }

  // Strictly-better wins; ties keep the smaller C already in place.
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_f1.size(); ++i) {
    if (mean_f1[i].second > mean_f1[best].second) best = i;
  }
  const double best_c = mean_f1[best].first;

  LogregConfig refit_config = base;
  refit_config.c = best_c;
  LogregResult refit = [&] {
    if (transform) {
      // Refit sees the full-data transform (scalers fitted on every row).
      auto [xt, xt_same] = transform(X, X);
      (void)xt_same;
      return logreg_train(xt, labels, refit_config);
    }
    return logreg_train(X, labels, refit_config);
  }();
  return GridSearchResult{std::move(fits), std::move(mean_f1), best_c, std::move(refit)};
}

}  // namespace mmfuse
