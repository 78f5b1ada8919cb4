#include "toxflow/pulse.hpp"

#include <cmath>

#include "toxflow/errors.hpp"

namespace toxflow {

bool PulsePosterior::is_spd(double tol) const {
  auto check = [&](const Eigen::MatrixXd& S) {
    if (S.rows() != S.cols()) return false;
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    if (eig.info() != Eigen::Success) return false;
    return eig.eigenvalues()(0) > -tol * scale;
  };
  return check(Sigma) && check(Gamma);
}

PulsePosterior init_priors(const SubspaceModel& model) {
  PulsePosterior p;
  p.nu = model.w_final;
  p.Sigma = model.cfg.sigma2_w *
            Eigen::MatrixXd::Identity(model.w_final.size(), model.w_final.size());
  // Literal projected residual; zero by construction since b is psi_final.
  p.mu = model.A.transpose() * (model.b - model.b);
  p.Gamma = model.cfg.sigma2_z *
            Eigen::MatrixXd::Identity(model.A.cols(), model.A.cols());
  return p;
}

namespace {

// psi = A mu + b, recomputed only when the posterior moved.
void refresh_psi(const PulsePosterior& post, const SubspaceModel& model,
                 PulseWorkspace& ws) {
  if (ws.psi_version == post.update_count && ws.psi.size() == model.b.size()) return;
  ws.psi.noalias() = model.A * post.mu;
  ws.psi += model.b;
  ws.psi_version = post.update_count;
}

}  // namespace

double pulse_predict(const PulsePosterior& post, const SubspaceModel& model,
                     const Eigen::VectorXd& x, PulseWorkspace& ws) {
  refresh_psi(post, model, ws);
  ws.x_std = x;
  model.standardizer.apply_inplace(ws.x_std);
  const double f = mlp_logit(model.arch, ws.psi, post.nu, ws.x_std, ws.mlp);
  if (!std::isfinite(f)) throw NumericError("pulse: non-finite logit in predict");
  return sigmoid(f);
}

void pulse_update_core(PulsePosterior& post, const Eigen::VectorXd& hbar,
                       const Eigen::VectorXd& Fz, double y) {
  if (hbar.size() != post.nu.size() || Fz.size() != post.mu.size()) {
    throw ConfigError("pulse: statistic dims do not match the posterior");
  }
  const double fbar = post.nu.dot(hbar);
  const double p = sigmoid(fbar);
  const double r = y - p;
  const double s = p * (1 - p);
  if (!std::isfinite(fbar) || !std::isfinite(r)) {
    throw NumericError("pulse: non-finite statistics at update " +
                       std::to_string(post.update_count) + " (fbar=" +
                       std::to_string(fbar) + ")");
  }

  // Last layer: mean moves with the pre-update covariance, then the
  // covariance absorbs the rank-1 precision gain.
  const Eigen::VectorXd Sh = post.Sigma * hbar;
  post.nu += Sh * r;
  const double denom_w = 1.0 + s * hbar.dot(Sh);
  post.Sigma -= (s / denom_w) * (Sh * Sh.transpose());

  // Projected hidden parameters, same shape with Fz in place of hbar.
  const Eigen::VectorXd Gf = post.Gamma * Fz;
  post.mu += Gf * r;
  const double denom_z = 1.0 + s * Fz.dot(Gf);
  post.Gamma -= (s / denom_z) * (Gf * Gf.transpose());

  if (!std::isfinite(post.nu.sum()) || !std::isfinite(post.mu.sum()) ||
      !std::isfinite(post.Sigma.sum()) || !std::isfinite(post.Gamma.sum())) {
    throw NumericError("pulse: posterior went non-finite at update " +
                       std::to_string(post.update_count) +
                       " (|nu|=" + std::to_string(post.nu.norm()) +
                       ", |mu|=" + std::to_string(post.mu.norm()) + ")");
  }

  ++post.update_count;
  // Rank-1 arithmetic drifts off symmetry in the last bits; re-centring
  // every 1e3 steps keeps long deployments clean.
  if (post.update_count % 1000 == 0) {
    post.Sigma = ((post.Sigma + post.Sigma.transpose()) / 2).eval();
    post.Gamma = ((post.Gamma + post.Gamma.transpose()) / 2).eval();
  }
}

void pulse_update(PulsePosterior& post, const SubspaceModel& model,
                  const Eigen::VectorXd& x, bool y, PulseWorkspace& ws) {
  refresh_psi(post, model, ws);
  ws.x_std = x;
  model.standardizer.apply_inplace(ws.x_std);
  // One backward pass yields both hbar = h(mu; x) and the psi-gradient of
  // nu' g(psi; x); chain rule through psi = A z + b gives Fz = A' dpsi.
  logit_grad_psi(model.arch, ws.psi, post.nu, ws.x_std, ws.mlp, ws.dpsi, ws.hbar);
  ws.Fz.noalias() = model.A.transpose() * ws.dpsi;
  pulse_update_core(post, ws.hbar, ws.Fz, y ? 1.0 : 0.0);
}

}  // namespace toxflow
