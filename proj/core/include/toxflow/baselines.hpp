#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "toxflow/nnet.hpp"

namespace toxflow {

// ============================================================================
// Benchmark models: a frozen logistic regression fit on the warmup set, and
// a running Bernoulli success-rate estimator updated online through the
// same delayed-label scheduler as the filter.
// ============================================================================

struct LogRModel {
  Eigen::VectorXd w;  // feature weights followed by the intercept (dim M+1)
  bool converged = false;
  double final_nll = 0;
  int iterations = 0;

  double logit(const Eigen::VectorXd& x) const {
    return w.head(w.size() - 1).dot(x) + w(w.size() - 1);
  }
  double predict(const Eigen::VectorXd& x) const { return sigmoid(logit(x)); }
};

// Ridge-penalized maximum likelihood (penalty on the weights, not the
// intercept) by limited-memory BFGS with backtracking line search. X holds
// one sample per column; y in {0,1}. If only one class is present the fit
// degenerates to an intercept-only model at the smoothed base rate
// (k + 1/2) / (n + 1). Non-convergence within max_iter is reported through
// the flag, never thrown.
LogRModel fit_logreg(const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y, double l2 = 1e-6,
                     int max_iter = 500);

// Penalized NLL at arbitrary parameters (exposed for probing the surface).
double logreg_nll(const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXd>& y,
                  const Eigen::VectorXd& w, double l2);

// ============================================================================
// Recursive Bernoulli MLE
// ============================================================================

struct MleState {
  std::int64_t success = 0;
  std::int64_t total = 0;
};

inline MleState mle_update(MleState s, bool y) {
  if (y) ++s.success;
  ++s.total;
  return s;
}

// Empty state is uninformative rather than 0/0.
inline double mle_predict(const MleState& s) {
  return s.total == 0 ? 0.5
                      : static_cast<double>(s.success) / static_cast<double>(s.total);
}

// AsyncScheduler adapter; features are ignored by construction.
class MleOnline {
 public:
  MleOnline() = default;
  explicit MleOnline(MleState warm_start) : state_(warm_start) {}

  double predict(const Eigen::VectorXd&) const { return mle_predict(state_); }
  void update(const Eigen::VectorXd&, bool y) {
    state_ = mle_update(state_, y);
    ++updates_;
  }
  std::int64_t version() const { return updates_; }  // warm start not counted
  const MleState& state() const { return state_; }

 private:
  MleState state_;
  std::int64_t updates_ = 0;
};

// Frozen-model adapter: predictions only, updates are no-ops.
class LogROnline {
 public:
  explicit LogROnline(const LogRModel* model) : model_(model) {}
  double predict(const Eigen::VectorXd& x) const { return model_->predict(x); }
  void update(const Eigen::VectorXd&, bool) {}
  std::int64_t version() const { return 0; }

 private:
  const LogRModel* model_;
};

}  // namespace toxflow
