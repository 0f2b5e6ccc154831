#include <cmath>

#include <Eigen/Dense>

#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"

namespace fundascreen::models {

double LinearModel::predict(std::size_t target, std::span<const double> x) const {
  const auto& w = weights.at(target);
  if (x.size() != w.size()) {
    fail(ErrorCode::shape_mismatch, "linear model expects " + std::to_string(w.size()) + " features, got " +
                                        std::to_string(x.size()));
  }
  double z = intercepts[target];
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// Design matrix with a leading intercept column.
Eigen::MatrixXd design(const std::vector<std::vector<double>>& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto p = static_cast<Eigen::Index>(x.empty() ? 0 : x[0].size());
  Eigen::MatrixXd a(n, p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(x[i].size()) != p) fail(ErrorCode::shape_mismatch, "ragged design matrix");
    a(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) a(i, j + 1) = x[i][j];
  }
  return a;
}

}  // namespace

LinearModel fit_metadata_regression(const std::vector<std::vector<double>>& x,
                                    const std::vector<std::vector<double>>& y) {
  if (x.size() != y.size() || x.empty()) fail(ErrorCode::shape_mismatch, "regression needs equal, non-zero row counts");
  const Eigen::MatrixXd a = design(x);
  const auto n = a.rows();
  const auto p = a.cols();
  if (n < p) {
    fail(ErrorCode::invalid_argument, "regression needs rows >= columns + 1 (" + std::to_string(n) + " rows, " +
                                          std::to_string(p - 1) + " columns)");
  }
  const auto t = static_cast<Eigen::Index>(y[0].size());
  Eigen::MatrixXd b(n, t);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(y[i].size()) != t) fail(ErrorCode::shape_mismatch, "ragged target matrix");
    for (Eigen::Index k = 0; k < t; ++k) b(i, k) = y[i][k];
  }

  Eigen::MatrixXd gram = a.transpose() * a;
  LinearModel model;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.rank() < p) model.warnings.push_back("rank-deficient design; solved with ridge " + std::to_string(kRidge));
  for (Eigen::Index j = 1; j < p; ++j) gram(j, j) += kRidge;
  const Eigen::MatrixXd beta = gram.ldlt().solve(a.transpose() * b);

  model.weights.assign(static_cast<std::size_t>(t), std::vector<double>(static_cast<std::size_t>(p - 1)));
  model.intercepts.assign(static_cast<std::size_t>(t), 0.0);
  for (Eigen::Index k = 0; k < t; ++k) {
    model.intercepts[k] = beta(0, k);
    for (Eigen::Index j = 1; j < p; ++j) model.weights[k][j - 1] = beta(j, k);
  }
  return model;
}

LinearModel fit_metadata_logistic(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                                  const LogisticOptions& options) {
  if (x.size() != labels.size() || x.empty()) fail(ErrorCode::shape_mismatch, "logistic fit needs equal, non-zero row counts");
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorCode::invalid_argument, "logistic labels must be 0 or 1");
    (y == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1) fail(ErrorCode::single_class, "logistic regression needs both classes");

  const Eigen::MatrixXd a = design(x);
  const auto n = static_cast<double>(a.rows());
  Eigen::VectorXd y(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)];

  // The CE Hessian is bounded by A^T A / (4 n).
  const Eigen::MatrixXd gram = a.transpose() * a / n;
  const double lipschitz = 0.25 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(a.cols());
  LinearModel model;
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd p = a * beta;
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(p(i));
    const Eigen::VectorXd grad = a.transpose() * (p - y) / n;
    if (grad.norm() <= options.gradient_tolerance) {
      converged = true;
      break;
    }
    beta -= step * grad;
  }
  if (!converged) {
    model.warnings.push_back("logistic regression stopped at " + std::to_string(options.max_iterations) +
                             " iterations before reaching the gradient tolerance");
  }
  model.intercepts = {beta(0)};
  model.weights.assign(1, std::vector<double>(static_cast<std::size_t>(a.cols() - 1)));
  for (Eigen::Index j = 1; j < a.cols(); ++j) model.weights[0][j - 1] = beta(j);
  return model;
}

}  // namespace fundascreen::models
