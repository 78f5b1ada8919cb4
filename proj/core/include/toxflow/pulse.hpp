#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "toxflow/nnet.hpp"
#include "toxflow/warmup.hpp"

namespace toxflow {

// ============================================================================
// Online recursive variational filter over the network's last layer w and
// the projected hidden parameters z (psi = A z + b). Each resolved label
// moves the Gaussian posterior by one inversion-free step:
//
//   hbar = h(mu; x),  fbar = nu' hbar,  r = y - sigma(fbar),  s = sigma'(fbar)
//   nu    <- nu + Sigma hbar r
//   Sigma <- Sigma - s (Sigma hbar)(Sigma hbar)' / (1 + s hbar' Sigma hbar)
//   mu    <- mu + Gamma Fz r,  with Fz = d/dz [nu' h(z; x)] at mu
//   Gamma <- Gamma - s (Gamma Fz)(Gamma Fz)' / (1 + s Fz' Gamma Fz)
//
// The covariance recursions are the Sherman-Morrison form of rank-1
// precision additions, so precision never decreases along the update
// direction and no matrix is ever inverted or factorized on the hot path.
// ============================================================================

struct PulsePosterior {
  Eigen::VectorXd nu;     // head-weight mean, dim L
  Eigen::MatrixXd Sigma;  // L x L
  Eigen::VectorXd mu;     // projected hidden mean, dim d
  Eigen::MatrixXd Gamma;  // d x d
  std::int64_t update_count = 0;

  // Symmetry + positive definiteness within tol (eigenvalue check; not for
  // the hot path).
  bool is_spd(double tol = 1e-12) const;
};

// nu0 = w_final, Sigma0 = sigma2_w I, mu0 = A'(psi_final - b) = 0 because
// b is the final iterate, Gamma0 = sigma2_z I.
PulsePosterior init_priors(const SubspaceModel& model);

// Per-engine scratch. psi = A mu + b is cached and stamped with the
// posterior's update_count, so back-to-back predictions between updates do
// not repay the D x d reconstruction. Never share one workspace across
// posteriors.
struct PulseWorkspace {
  Eigen::VectorXd psi;
  std::int64_t psi_version = -1;
  MlpWorkspace mlp;
  Eigen::VectorXd x_std, hbar, dpsi, Fz, Sh, Gf;
};

// Plug-in probability sigma(nu' h(mu; x)); x is raw and standardized
// internally. Depends on the means only, never on Sigma or Gamma.
double pulse_predict(const PulsePosterior& post, const SubspaceModel& model,
                     const Eigen::VectorXd& x, PulseWorkspace& ws);

// One Theorem-style update from a resolved label.
void pulse_update(PulsePosterior& post, const SubspaceModel& model,
                  const Eigen::VectorXd& x, bool y, PulseWorkspace& ws);

// Formula core on precomputed statistics; y may be any value in [0,1] so
// tests can drive the zero-residual path exactly. Production passes 0/1.
void pulse_update_core(PulsePosterior& post, const Eigen::VectorXd& hbar,
                       const Eigen::VectorXd& Fz, double y);

// Adapter satisfying the AsyncScheduler model contract. Holds its own
// posterior and workspace; the subspace model is shared and never written.
class PulseOnline {
 public:
  PulseOnline(PulsePosterior prior, const SubspaceModel* model)
      : post_(std::move(prior)), model_(model) {}

  double predict(const Eigen::VectorXd& x) {
    return pulse_predict(post_, *model_, x, ws_);
  }
  void update(const Eigen::VectorXd& x, bool y) {
    pulse_update(post_, *model_, x, y, ws_);
  }
  std::int64_t version() const { return post_.update_count; }
  const PulsePosterior& posterior() const { return post_; }

 private:
  PulsePosterior post_;
  const SubspaceModel* model_;
  PulseWorkspace ws_;
};

}  // namespace toxflow
