#include "toxflow/baselines.hpp"

#include <cmath>
#include <deque>

#include "toxflow/errors.hpp"

namespace toxflow {

double logreg_nll(const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXd>& y,
                  const Eigen::VectorXd& w, double l2) {
  const Eigen::Index M = X.rows();
  if (w.size() != M + 1) throw ConfigError("logreg: parameter dim mismatch");
  double nll = 0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    nll += bce_loss(w.head(M).dot(X.col(j)) + w(M), y(j));
  }
  return nll + 0.5 * l2 * w.head(M).squaredNorm();
}

namespace {

void nll_grad(const Eigen::Ref<const Eigen::MatrixXd>& X,
              const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::VectorXd& w,
              double l2, double* nll, Eigen::VectorXd* grad) {
  const Eigen::Index M = X.rows();
  Eigen::VectorXd f = X.transpose() * w.head(M);
  f.array() += w(M);
  *nll = 0;
  Eigen::VectorXd resid(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    *nll += bce_loss(f(j), y(j));
    resid(j) = sigmoid(f(j)) - y(j);
  }
  *nll += 0.5 * l2 * w.head(M).squaredNorm();
  grad->resize(M + 1);
  grad->head(M).noalias() = X * resid;
  grad->head(M) += l2 * w.head(M);
  (*grad)(M) = resid.sum();
}

}  // namespace

LogRModel fit_logreg(const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y, double l2,
                     int max_iter) {
  const Eigen::Index M = X.rows();
  const Eigen::Index N = X.cols();
  if (N == 0) throw DataError("logreg: empty training set");
  if (N != y.size()) throw DataError("logreg: feature/label count mismatch");
  if (l2 < 0) throw ConfigError("logreg: ridge coefficient must be >= 0");

  LogRModel model;
  model.w = Eigen::VectorXd::Zero(M + 1);

  std::int64_t pos = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    if (y(j) != 0.0 && y(j) != 1.0) throw DataError("logreg: labels must be 0/1");
    if (y(j) == 1.0) ++pos;
  }
  if (pos == 0 || pos == N) {
    // One-class data: the unpenalized likelihood pushes the intercept to
    // +-inf, so pin the smoothed base rate and keep the weights at zero.
    const double rate = (static_cast<double>(pos) + 0.5) / (static_cast<double>(N) + 1.0);
    model.w(M) = std::log(rate / (1 - rate));
    model.converged = true;
    model.final_nll = logreg_nll(X, y, model.w, l2);
    return model;
  }

  // Limited-memory BFGS with two-loop recursion and Armijo backtracking.
  const int memory = 10;
  const double grad_tol = 1e-6 * std::max(1.0, static_cast<double>(N));
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  double nll;
  Eigen::VectorXd grad;
  nll_grad(X, y, model.w, l2, &nll, &grad);

  for (int it = 0; it < max_iter; ++it) {
    if (grad.norm() <= grad_tol) {
      model.converged = true;
      break;
    }

    // two-loop recursion for d = -H grad
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd d = -q;
    double slope = d.dot(grad);
    if (slope >= 0) {  // curvature history went stale; fall back to descent
      d = -grad;
      slope = -grad.squaredNorm();
    }

    // Armijo backtracking from unit step.
    double step = 1.0;
    double new_nll = 0;
    Eigen::VectorXd w_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = model.w + step * d;
      new_nll = logreg_nll(X, y, w_new, l2);
      if (std::isfinite(new_nll) && new_nll <= nll + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no progress possible at double precision

    Eigen::VectorXd grad_new;
    double check_nll;
    nll_grad(X, y, w_new, l2, &check_nll, &grad_new);

    const Eigen::VectorXd s = w_new - model.w;
    const Eigen::VectorXd yk = grad_new - grad;
    const double sy = s.dot(yk);
    if (sy > 1e-12 * s.norm() * yk.norm()) {  // keep only solid curvature pairs
      s_hist.push_back(s);
      y_hist.push_back(yk);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    model.w = w_new;
    nll = new_nll;
    grad = grad_new;
    model.iterations = it + 1;
  }
  if (!model.converged && grad.norm() <= grad_tol) model.converged = true;
  model.final_nll = nll;
  return model;
}

}  // namespace toxflow
