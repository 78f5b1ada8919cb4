// Release acceptance gate. Each criterion is an independent end-to-end check
// with its own oracle — numerical KL minimization, precision-form filtering,
// finite differences, stateless rescans, power iteration, hand-counted
// tables — and prints exactly one PASS/FAIL line. The process exit code is
// the number of failed criteria, so CI needs no output parsing.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "feature_oracle.hpp"
#include "test_util.hpp"
#include "toxflow/baselines.hpp"
#include "toxflow/csv.hpp"
#include "toxflow/evaluation.hpp"
#include "toxflow/features.hpp"
#include "toxflow/labeler.hpp"
#include "toxflow/market_data.hpp"
#include "toxflow/nnet.hpp"
#include "toxflow/online.hpp"
#include "toxflow/pipeline.hpp"
#include "toxflow/pulse.hpp"
#include "toxflow/rng.hpp"
#include "toxflow/strategy.hpp"
#include "toxflow/warmup.hpp"

namespace {

using namespace toxflow;
namespace fs = std::filesystem;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw CheckFailure(what);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Eigen::VectorXd randn(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

Eigen::MatrixXd randn_mat(Rng& rng, Eigen::Index r, Eigen::Index c,
                          double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Orthonormal columns from a Gaussian draw.
Eigen::MatrixXd random_orthonormal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::MatrixXd g = randn_mat(rng, rows, cols);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
         Eigen::MatrixXd::Identity(rows, cols);
}

// SPD matrix with eigenvalues within a small factor of `scale`.
Eigen::MatrixXd random_spd(Rng& rng, int n, double scale) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) L(i, j) = 0.2 * rng.normal();
    L(i, i) = 1.0 + 0.1 * std::abs(rng.normal());
  }
  return scale * (L * L.transpose());
}

double rel_err_mat(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

double rel_err_vec(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

// Smallest |pre-activation| across all layers of the last forward pass;
// finite-difference probes are only trusted when this margin dwarfs the
// probe step (the hidden stack is piecewise linear).
double min_kink_margin(const MlpWorkspace& ws) {
  double m = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& pre : ws.pre) {
    if (pre.size() > 0) m = std::min(m, pre.cwiseAbs().minCoeff());
  }
  return m;
}

// ============================================================================
// Shared numerical tooling: finite-difference gradients and a compact L-BFGS
// with Armijo backtracking. Only used by the oracles, never by the library.
// ============================================================================

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    const double saved = xp(i);
    xp(i) = saved + h;
    const double fp = f(xp);
    xp(i) = saved - h;
    const double fm = f(xp);
    xp(i) = saved;
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

Eigen::VectorXd lbfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                               Eigen::VectorXd x, int max_iter = 500) {
  const std::size_t mem = 10;
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;
  Eigen::VectorXd g = fd_gradient(f, x);
  double fx = f(x);
  for (int it = 0; it < max_iter; ++it) {
    // FD gradients bottom out near 1e-9; below 1e-8 the iterate is converged
    // far beyond the tolerances being tested.
    if (g.lpNorm<Eigen::Infinity>() < 1e-8) break;

    // two-loop recursion for the quasi-Newton direction
    Eigen::VectorXd q = g;
    std::vector<double> alpha(S.size());
    for (std::size_t i = S.size(); i-- > 0;) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t i = 0; i < S.size(); ++i) {
      q += (alpha[i] - rho[i] * Y[i].dot(q)) * S[i];
    }
    Eigen::VectorXd p = -q;
    if (p.dot(g) >= 0) p = -g;  // curvature went bad; steepest descent

    const double gp = g.dot(p);
    double t = 1.0;
    Eigen::VectorXd xn;
    double fn = fx;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      xn = x + t * p;
      fn = f(xn);
      if (fn <= fx + 1e-4 * t * gp) {
        moved = true;
        break;
      }
    }
    if (!moved) break;

    Eigen::VectorXd gn = fd_gradient(f, xn);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      S.push_back(s);
      Y.push_back(yv);
      rho.push_back(1.0 / sy);
      if (S.size() > mem) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    x = std::move(xn);
    g = std::move(gn);
    fx = fn;
  }
  return x;
}

// ============================================================================
// Criterion 1 — one filter step equals the numerical minimizer of the
// KL objective it is derived from: Gaussian-prior KL terms plus the expected
// negative log of the moment-matched Gaussian likelihood whose mean is the
// first-order expansion of sigma(w' h(z; x)) around the previous posterior
// means and whose variance is the constant sigma'(fbar). The oracle knows
// nothing of the closed-form update: it evaluates the objective with
// Gauss-Hermite quadrature and minimizes with L-BFGS over means and Cholesky
// factors, starting from the previous posterior.
// ============================================================================

// 5-point Gauss-Hermite rule (weight e^{-t^2}); exact through degree-9
// polynomials, far beyond the quadratic integrand it is applied to.
constexpr double kGhNode[5] = {-2.020182870456086, -0.958572464613819, 0.0,
                               0.958572464613819, 2.020182870456086};
constexpr double kGhWeight[5] = {0.019953242059046, 0.393619323152241,
                                 0.945308720482942, 0.393619323152241,
                                 0.019953242059046};

// E[f(g1, g2)] for independent g1 ~ N(m1, v1), g2 ~ N(m2, v2).
template <class F>
double gauss_hermite_2d(double m1, double v1, double m2, double v2, const F& f) {
  const double s1 = std::sqrt(2 * std::max(v1, 0.0));
  const double s2 = std::sqrt(2 * std::max(v2, 0.0));
  double acc = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      acc += kGhWeight[i] * kGhWeight[j] * f(m1 + s1 * kGhNode[i], m2 + s2 * kGhNode[j]);
    }
  }
  constexpr double kPi = 3.14159265358979323846;
  return acc / kPi;
}

// KL(N(m, LL') || N(m0, S0)) given the prior's inverse and log-determinant.
double kl_to_prior(const Eigen::VectorXd& m, const Eigen::MatrixXd& L,
                   const Eigen::VectorXd& m0, const Eigen::MatrixXd& S0_inv,
                   double logdet_S0) {
  const double tr = (S0_inv * L).cwiseProduct(L).sum();
  const Eigen::VectorXd dm = m - m0;
  const double quad = dm.dot(S0_inv * dm);
  double logdet1 = 0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet1 += 2 * std::log(L(i, i));
  return 0.5 * (tr + quad - static_cast<double>(L.rows()) + logdet_S0 - logdet1);
}

struct Criterion1Instance {
  SubspaceModel model;
  PulsePosterior prior;
  Eigen::VectorXd x;
  bool y = false;
  // linearization statistics, computed independently of the library update
  Eigen::VectorXd hbar, Fz;
  double fbar = 0, sbar = 0;
};

// theta = [nu | mu | vech(L_w) | vech(L_z)], diagonals stored as logs so the
// factors stay positive definite throughout the search.
struct KlParameterization {
  int L, d;

  Eigen::Index size() const {
    return L + d + L * (L + 1) / 2 + d * (d + 1) / 2;
  }

  static Eigen::MatrixXd unpack_factor(const Eigen::VectorXd& theta,
                                       Eigen::Index& at, int n) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        F(i, j) = i == j ? std::exp(theta(at)) : theta(at);
        ++at;
      }
    }
    return F;
  }

  static void pack_factor(const Eigen::MatrixXd& F, Eigen::VectorXd& theta,
                          Eigen::Index& at) {
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        theta(at++) = i == j ? std::log(F(i, j)) : F(i, j);
      }
    }
  }
};

std::string criterion1() {
  Rng rng(0xacc1);
  double worst_mean = 0, worst_cov = 0;
  const int n_instances = 24;

  for (int inst = 0; inst < n_instances; ++inst) {
    // --- toy instance: head dim L in 2..4, subspace dim d in 1..3 ---
    const int L = 2 + inst % 3;
    const int d = 1 + (inst / 3) % 3;
    const int M = 2 + inst % 2;

    Criterion1Instance c;
    c.model.arch.input_dim = M;
    c.model.arch.hidden = {L - 1};
    c.model.cfg.subspace_dim = d;
    const Eigen::Index D = c.model.arch.psi_dim();
    require(d <= D, "toy subspace wider than psi");

    // The explicit one-step formulas drop the posterior-coupling terms of
    // the objective, an error of relative size sbar*(h'Sh + F'GF). The toys
    // therefore live in the small-variance regime where the derivation
    // holds; kappa below enforces it.
    for (int attempt = 0;; ++attempt) {
      require(attempt < 500, "could not draw a usable toy instance");
      c.model.A = random_orthonormal(rng, D, d);
      c.model.b = randn(rng, D, 0.4);
      c.model.w_final = randn(rng, L);
      c.model.standardizer.mean = Eigen::VectorXd::Zero(M);
      c.model.standardizer.scale = Eigen::VectorXd::Ones(M);

      c.prior.nu = randn(rng, L);
      if (c.prior.nu.norm() < 0.8) continue;  // keep the denominator honest
      c.prior.mu = randn(rng, d, 0.1);
      const double s2w = rng.uniform(0.002, 0.015);
      const double s2z = rng.uniform(0.002, 0.015);
      c.prior.Sigma = random_spd(rng, L, s2w);
      c.prior.Gamma = random_spd(rng, d, s2z);
      c.x = randn(rng, M, 0.8);

      // independent statistics: direct forward for hbar, central differences
      // in z for Fz (valid only away from the piecewise-linear kinks)
      MlpWorkspace ws;
      const Eigen::VectorXd psi = c.model.A * c.prior.mu + c.model.b;
      mlp_hidden(c.model.arch, psi, c.x, ws, c.hbar);
      if (min_kink_margin(ws) < 1e-3) continue;
      c.fbar = c.prior.nu.dot(c.hbar);
      const double sig = sigmoid(c.fbar);
      c.sbar = sig * (1 - sig);

      c.Fz.resize(d);
      const double eps = 1e-6;
      Eigen::VectorXd h_probe;
      for (int k = 0; k < d; ++k) {
        Eigen::VectorXd mu_p = c.prior.mu;
        mu_p(k) += eps;
        mlp_hidden(c.model.arch, c.model.A * mu_p + c.model.b, c.x, ws, h_probe);
        const double fp = c.prior.nu.dot(h_probe);
        mu_p(k) = c.prior.mu(k) - eps;
        mlp_hidden(c.model.arch, c.model.A * mu_p + c.model.b, c.x, ws, h_probe);
        c.Fz(k) = (fp - c.prior.nu.dot(h_probe)) / (2 * eps);
      }
      if (c.Fz.norm() < 1e-3) continue;  // dead hidden stack; uninformative

      const double kappa = c.sbar * (c.hbar.dot(c.prior.Sigma * c.hbar) +
                                     c.Fz.dot(c.prior.Gamma * c.Fz));
      if (kappa > 0.03) continue;
      break;
    }
    c.y = rng.bernoulli(0.5);

    // --- library step ---
    PulsePosterior got = c.prior;
    PulseWorkspace pws;
    pulse_update(got, c.model, c.x, c.y, pws);

    // --- oracle: numerically minimize the KL objective ---
    const Eigen::MatrixXd Sw_inv =
        Eigen::LLT<Eigen::MatrixXd>(c.prior.Sigma)
            .solve(Eigen::MatrixXd::Identity(L, L));
    const Eigen::MatrixXd Sz_inv =
        Eigen::LLT<Eigen::MatrixXd>(c.prior.Gamma)
            .solve(Eigen::MatrixXd::Identity(d, d));
    double logdet_w = 0, logdet_z = 0;
    {
      const Eigen::MatrixXd Lw = Eigen::LLT<Eigen::MatrixXd>(c.prior.Sigma).matrixL();
      const Eigen::MatrixXd Lz = Eigen::LLT<Eigen::MatrixXd>(c.prior.Gamma).matrixL();
      for (int i = 0; i < L; ++i) logdet_w += 2 * std::log(Lw(i, i));
      for (int i = 0; i < d; ++i) logdet_z += 2 * std::log(Lz(i, i));

      KlParameterization par{L, d};
      Eigen::VectorXd theta0(par.size());
      theta0.head(L) = c.prior.nu;
      theta0.segment(L, d) = c.prior.mu;
      Eigen::Index at = L + d;
      KlParameterization::pack_factor(Lw, theta0, at);
      KlParameterization::pack_factor(Lz, theta0, at);

      const double sig_f = sigmoid(c.fbar);
      const double ytarget = c.y ? 1.0 : 0.0;
      const auto objective = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd nu = theta.head(L);
        const Eigen::VectorXd mu = theta.segment(L, d);
        Eigen::Index pos = L + d;
        const Eigen::MatrixXd Fw = KlParameterization::unpack_factor(theta, pos, L);
        const Eigen::MatrixXd Fzf = KlParameterization::unpack_factor(theta, pos, d);

        double j = kl_to_prior(nu, Fw, c.prior.nu, Sw_inv, logdet_w) +
                   kl_to_prior(mu, Fzf, c.prior.mu, Sz_inv, logdet_z);
        const double m1 = c.hbar.dot(nu - c.prior.nu);
        const double v1 = (Fw.transpose() * c.hbar).squaredNorm();
        const double m2 = c.Fz.dot(mu - c.prior.mu);
        const double v2 = (Fzf.transpose() * c.Fz).squaredNorm();
        const double expected_sq =
            gauss_hermite_2d(m1, v1, m2, v2, [&](double g1, double g2) {
              const double r = ytarget - (sig_f + c.sbar * (g1 + g2));
              return r * r;
            });
        return j + expected_sq / (2 * c.sbar);
      };

      const Eigen::VectorXd theta_star = lbfgs_minimize(objective, theta0);

      const Eigen::VectorXd nu_star = theta_star.head(L);
      const Eigen::VectorXd mu_star = theta_star.segment(L, d);
      at = L + d;
      const Eigen::MatrixXd Lw_star =
          KlParameterization::unpack_factor(theta_star, at, L);
      const Eigen::MatrixXd Lz_star =
          KlParameterization::unpack_factor(theta_star, at, d);
      const Eigen::MatrixXd Sigma_star = Lw_star * Lw_star.transpose();
      const Eigen::MatrixXd Gamma_star = Lz_star * Lz_star.transpose();

      Eigen::VectorXd mean_got(L + d), mean_star(L + d);
      mean_got << got.nu, got.mu;
      mean_star << nu_star, mu_star;
      const double mean_rel = rel_err_vec(mean_got, mean_star);
      const double cov_rel =
          std::sqrt((got.Sigma - Sigma_star).squaredNorm() +
                    (got.Gamma - Gamma_star).squaredNorm()) /
          std::sqrt(Sigma_star.squaredNorm() + Gamma_star.squaredNorm());

      worst_mean = std::max(worst_mean, mean_rel);
      worst_cov = std::max(worst_cov, cov_rel);
      require(mean_rel <= 1e-2, "instance " + std::to_string(inst) +
                                    ": mean rel err " + num(mean_rel));
      require(cov_rel <= 5e-2, "instance " + std::to_string(inst) +
                                   ": cov rel err " + num(cov_rel));
    }
  }
  return std::to_string(n_instances) + " instances, worst mean rel " +
         num(worst_mean) + ", worst cov rel " + num(worst_cov);
}

// ============================================================================
// Criterion 2 — the inversion-free covariance recursions equal the precision
// form: accumulate rank-one precision terms, invert fresh every step. Both
// tracks are driven by identical per-step statistics so only the algebra of
// the update differs.
// ============================================================================

std::string criterion2() {
  Rng rng(0xacc2);
  const int d = 5, L = 6, M = 4;

  SubspaceModel model;
  model.arch.input_dim = M;
  model.arch.hidden = {L - 1};
  model.cfg.subspace_dim = d;
  model.cfg.sigma2_w = 0.05;
  model.cfg.sigma2_z = 0.05;
  const Eigen::Index D = model.arch.psi_dim();
  model.A = random_orthonormal(rng, D, d);
  model.b = randn(rng, D, 0.3);
  model.w_final = randn(rng, L);
  model.standardizer.mean = Eigen::VectorXd::Zero(M);
  model.standardizer.scale = Eigen::VectorXd::Ones(M);

  PulsePosterior can = init_priors(model);
  Eigen::MatrixXd Pw = Eigen::MatrixXd::Identity(L, L) / model.cfg.sigma2_w;
  Eigen::MatrixXd Pz = Eigen::MatrixXd::Identity(d, d) / model.cfg.sigma2_z;
  Eigen::VectorXd nu_sh = can.nu, mu_sh = can.mu;
  Eigen::MatrixXd Sig_sh = can.Sigma, Gam_sh = can.Gamma;

  MlpWorkspace ws;
  Eigen::VectorXd hbar, gpsi;
  double worst = 0;
  for (int step = 0; step < 100; ++step) {
    const Eigen::VectorXd x = randn(rng, M);
    const bool y = rng.bernoulli(0.5);

    // shared statistics from the (canonical) pre-update state
    const Eigen::VectorXd psi = model.A * can.mu + model.b;
    logit_grad_psi(model.arch, psi, can.nu, x, ws, gpsi, hbar);
    const Eigen::VectorXd Fz = model.A.transpose() * gpsi;
    const double fbar = can.nu.dot(hbar);
    const double s = sigmoid(fbar) * (1 - sigmoid(fbar));
    const double r = (y ? 1.0 : 0.0) - sigmoid(fbar);

    pulse_update_core(can, hbar, Fz, y);

    nu_sh += Sig_sh * hbar * r;
    Pw += s * (hbar * hbar.transpose());
    Sig_sh = Eigen::LLT<Eigen::MatrixXd>(Pw).solve(Eigen::MatrixXd::Identity(L, L));
    mu_sh += Gam_sh * Fz * r;
    Pz += s * (Fz * Fz.transpose());
    Gam_sh = Eigen::LLT<Eigen::MatrixXd>(Pz).solve(Eigen::MatrixXd::Identity(d, d));

    const double e = std::max({rel_err_mat(can.Sigma, Sig_sh),
                               rel_err_mat(can.Gamma, Gam_sh),
                               rel_err_vec(can.nu, nu_sh),
                               rel_err_vec(can.mu, mu_sh)});
    worst = std::max(worst, e);
    require(e <= 1e-8,
            "step " + std::to_string(step) + ": divergence " + num(e));
  }
  return "100 steps (d=5, L=6), worst rel divergence " + num(worst);
}

// ============================================================================
// Criterion 3 — gradients. Every component of the backpropagated partials
// (head logit wrt psi, subspace direction Fz, batched NLL wrt psi) matches
// central finite differences; the head gradient of the NLL equals the
// canonical-link closed form (sigma(f) - y) h summed over the batch.
// ============================================================================

std::string criterion3() {
  Rng rng(0xacc3);
  double worst_fd = 0, worst_head = 0;

  for (int net = 0; net < 20; ++net) {
    MlpArch arch;
    arch.input_dim = 2 + net % 4;
    arch.hidden.clear();
    const int n_layers = 1 + net % 2;
    for (int l = 0; l < n_layers; ++l) arch.hidden.push_back(2 + (net + l) % 4);
    const Eigen::Index P = arch.psi_dim();
    const int Lh = arch.head_dim();

    MlpWorkspace ws;
    Eigen::VectorXd psi, x, nu, grad, h;
    for (int attempt = 0;; ++attempt) {
      require(attempt < 500, "net " + std::to_string(net) + ": no kink margin");
      psi = randn(rng, P, 0.7);
      x = randn(rng, arch.input_dim);
      nu = randn(rng, Lh);
      mlp_hidden(arch, psi, x, ws, h);
      if (min_kink_margin(ws) > 1e-2) break;
    }

    // (a) all partials of nu' g(psi; x) wrt psi vs central differences
    logit_grad_psi(arch, psi, nu, x, ws, grad, h);
    Eigen::VectorXd fd(P);
    Eigen::VectorXd probe = psi, hp;
    const double eps = 1e-5;
    for (Eigen::Index k = 0; k < P; ++k) {
      const double saved = probe(k);
      probe(k) = saved + eps;
      mlp_hidden(arch, probe, x, ws, hp);
      const double fp = nu.dot(hp);
      probe(k) = saved - eps;
      mlp_hidden(arch, probe, x, ws, hp);
      fd(k) = (fp - nu.dot(hp)) / (2 * eps);
      probe(k) = saved;
    }
    double e = rel_err_vec(grad, fd);
    worst_fd = std::max(worst_fd, e);
    require(e <= 1e-6, "net " + std::to_string(net) + ": psi partials off by " + num(e));
    for (Eigen::Index k = 0; k < P; ++k) {
      require(std::abs(grad(k) - fd(k)) <= 1e-6 * (1.0 + std::abs(fd(k))),
              "net " + std::to_string(net) + ": psi partial " + std::to_string(k));
    }

    // (b) subspace direction: A' grad vs central differences along z
    const int d = 1 + net % 3;
    const Eigen::MatrixXd A = random_orthonormal(rng, P, d);
    Eigen::VectorXd b, mu;
    for (int attempt = 0;; ++attempt) {
      require(attempt < 500, "net " + std::to_string(net) + ": no z margin");
      b = randn(rng, P, 0.5);
      mu = randn(rng, d, 0.3);
      mlp_hidden(arch, A * mu + b, x, ws, h);
      if (min_kink_margin(ws) > 1e-2) break;
    }
    logit_grad_psi(arch, A * mu + b, nu, x, ws, grad, h);
    const Eigen::VectorXd Fz = A.transpose() * grad;
    Eigen::VectorXd fz_fd(d);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd mu_p = mu;
      mu_p(k) += eps;
      mlp_hidden(arch, A * mu_p + b, x, ws, hp);
      const double fp = nu.dot(hp);
      mu_p(k) = mu(k) - eps;
      mlp_hidden(arch, A * mu_p + b, x, ws, hp);
      fz_fd(k) = (fp - nu.dot(hp)) / (2 * eps);
    }
    e = rel_err_vec(Fz, fz_fd);
    worst_fd = std::max(worst_fd, e);
    require(e <= 1e-6, "net " + std::to_string(net) + ": Fz off by " + num(e));

    // (c) batched NLL: psi gradient vs finite differences of the summed loss,
    // head gradient vs the canonical-link closed form
    const int B = 6;
    Eigen::MatrixXd X(arch.input_dim, B);
    Eigen::VectorXd yb(B);
    for (int attempt = 0;; ++attempt) {
      require(attempt < 500, "net " + std::to_string(net) + ": no batch margin");
      X = randn_mat(rng, arch.input_dim, B);
      double margin = std::numeric_limits<double>::infinity();
      for (int i = 0; i < B; ++i) {
        mlp_hidden(arch, psi, X.col(i), ws, hp);
        margin = std::min(margin, min_kink_margin(ws));
      }
      if (margin > 1e-2) break;
    }
    for (int i = 0; i < B; ++i) yb(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Eigen::VectorXd w = randn(rng, Lh);

    const NllGrad ng = nll_and_grad(arch, psi, w, X, yb);
    const auto batch_loss = [&](const Eigen::VectorXd& p) {
      double loss = 0;
      for (int i = 0; i < B; ++i) {
        loss += bce_loss(mlp_logit(arch, p, w, X.col(i), ws), yb(i));
      }
      return loss;
    };
    Eigen::VectorXd nll_fd(P);
    probe = psi;
    for (Eigen::Index k = 0; k < P; ++k) {
      const double saved = probe(k);
      probe(k) = saved + eps;
      const double fp = batch_loss(probe);
      probe(k) = saved - eps;
      nll_fd(k) = (fp - batch_loss(probe)) / (2 * eps);
      probe(k) = saved;
    }
    e = rel_err_vec(ng.g_psi, nll_fd);
    worst_fd = std::max(worst_fd, e);
    require(e <= 1e-6, "net " + std::to_string(net) + ": NLL psi grad off by " + num(e));

    Eigen::VectorXd gw_closed = Eigen::VectorXd::Zero(Lh);
    for (int i = 0; i < B; ++i) {
      mlp_hidden(arch, psi, X.col(i), ws, hp);
      gw_closed += (sigmoid(w.dot(hp)) - yb(i)) * hp;
    }
    e = rel_err_vec(ng.g_w, gw_closed);
    worst_head = std::max(worst_head, e);
    require(e <= 1e-12,
            "net " + std::to_string(net) + ": head grad vs closed form " + num(e));
  }
  return "20 nets, worst FD rel " + num(worst_fd) + ", worst head rel " +
         num(worst_head);
}

// ============================================================================
// Criterion 4 — labeler. The sweep labeler, the per-trade binary-search
// labeler, and a naive full-rescan oracle agree exactly on random tapes up
// to 1e5 quotes, and per-trade labels are monotone in the horizon.
// ============================================================================

Label naive_label(const Tape& tape, const TradeEvent& trade, Horizon h) {
  Label lab;
  const Micros t_end = tape.quotes.back().ts;
  lab.censored = trade.ts + h.g > t_end;
  lab.resolved_ts = std::min(trade.ts + h.g, t_end);
  const Quote* prevailing = nullptr;
  for (const Quote& q : tape.quotes) {
    if (q.ts <= trade.ts) prevailing = &q;
  }
  for (const Quote& q : tape.quotes) {
    if (q.ts <= trade.ts || q.ts > lab.resolved_ts) continue;
    const bool hit = trade.side == Side::Buy ? q.bid > prevailing->ask
                                             : q.ask < prevailing->bid;
    if (hit) {
      lab.y = true;
      lab.tau = q.ts;
      return lab;
    }
  }
  return lab;
}

bool labels_equal(const Label& a, const Label& b) {
  return a.y == b.y && a.resolved_ts == b.resolved_ts && a.censored == b.censored &&
         a.tau == b.tau;
}

std::string criterion4() {
  Rng rng(0xacc4);
  std::size_t n_trades_checked = 0;
  std::size_t max_quotes_seen = 0;

  for (int t = 0; t < 50; ++t) {
    testutil::RandomTapeOpts opts;
    opts.max_quotes = t % 7 == 3 ? 100'000 : t % 7 == 5 ? 20'000 : 120 + 211 * t;
    opts.max_trades = 10 + (t * 13) % 190;
    const Tape tape = testutil::make_random_tape(rng, opts);
    max_quotes_seen = std::max(max_quotes_seen, tape.quotes.size());

    const Micros span = tape.quotes.back().ts;
    const Micros g = t % 3 == 0   ? span / 64 + 1
                     : t % 3 == 1 ? span / 8 + 1
                                  : span / 2 + 1;
    const Horizon h{g};

    const std::vector<Label> sweep = label_tape(tape, h);
    require(sweep.size() == tape.trades.size(), "sweep row count");
    for (std::size_t i = 0; i < tape.trades.size(); ++i) {
      const Label want = naive_label(tape, tape.trades[i], h);
      require(labels_equal(sweep[i], want),
              "tape " + std::to_string(t) + " trade " + std::to_string(i) +
                  ": sweep vs naive rescan");
      require(labels_equal(label_trade(tape, tape.trades[i], h), want),
              "tape " + std::to_string(t) + " trade " + std::to_string(i) +
                  ": single-trade scan vs naive rescan");
      ++n_trades_checked;
    }

    // monotone in the horizon: once toxic, toxic at every longer horizon,
    // with the same earliest qualifying quote
    std::vector<Label> prev;
    for (int k = 0; k < 6; ++k) {
      const Horizon hk{std::max<Micros>(1, span >> (7 - k))};
      const std::vector<Label> cur = label_tape(tape, hk);
      if (k > 0) {
        for (std::size_t i = 0; i < cur.size(); ++i) {
          require(cur[i].y >= prev[i].y, "label flipped toxic -> benign");
          if (prev[i].y) {
            require(cur[i].tau == prev[i].tau, "earliest toxic quote moved");
          }
          require(cur[i].resolved_ts >= prev[i].resolved_ts,
                  "resolve time shrank with the horizon");
        }
      }
      prev = std::move(cur);
    }
  }
  return std::to_string(n_trades_checked) + " trades across 50 tapes, largest " +
         std::to_string(max_quotes_seen) + " quotes";
}

// ============================================================================
// Criterion 5 — featurizer. The streaming featurizer equals a stateless
// full-history rescan on every trade of 20 random tapes: count-valued slots
// exactly, everything else to 1e-10 relative. Output dimension is 183.
// ============================================================================

bool is_count_slot(std::size_t i) {
  if (i == 10 || i == 11 || i == 12) return true;
  if (i < static_cast<std::size_t>(kStateFeatures)) return false;
  const std::size_t s = (i - kStateFeatures) % kStats;
  return s == 1 || s == 2;
}

std::string criterion5() {
  Rng rng(0xacc5);
  require(kFullFeatureDim == 183, "full feature dim");
  require(FeatureConfig{}.dim() == 183, "default config dim");

  const int seq_days[] = {1, 2, 3, 2, 1, 3, 2, 2, 1, 3};  // 20 tapes total
  std::size_t n_tapes = 0, n_rows = 0;
  for (int seq = 0; seq < 10; ++seq) {
    std::vector<Tape> tapes;
    std::vector<std::vector<Label>> labels;
    std::size_t n_clients = 0;
    for (int dday = 0; dday < seq_days[seq]; ++dday) {
      Tape tape = testutil::make_random_tape(rng);
      tape.day_id = dday;
      n_clients = std::max(n_clients, tape.clients.size());
      labels.push_back(label_tape(tape, Horizon{2'000'000}));
      tapes.push_back(std::move(tape));
      ++n_tapes;
    }

    const FeatureConfig cfg;
    const std::vector<FeatureRow> rows = featurize_tapes(tapes, labels, cfg, n_clients);
    std::size_t r = 0;
    for (std::size_t dday = 0; dday < tapes.size(); ++dday) {
      for (std::size_t i = 0; i < tapes[dday].trades.size(); ++i, ++r) {
        require(rows[r].x.size() == 183, "row dimension");
        const std::vector<double> want =
            testutil::oracle_features(tapes, labels, cfg, dday, i);
        for (std::size_t k = 0; k < want.size(); ++k) {
          const double got = rows[r].x[k];
          if (is_count_slot(k)) {
            require(got == want[k], "seq " + std::to_string(seq) + " day " +
                                        std::to_string(dday) + " trade " +
                                        std::to_string(i) + " count slot " +
                                        std::to_string(k));
          } else {
            const double tol =
                1e-10 * (1.0 + std::max(std::abs(got), std::abs(want[k])));
            require(std::abs(got - want[k]) <= tol,
                    "seq " + std::to_string(seq) + " day " + std::to_string(dday) +
                        " trade " + std::to_string(i) + " slot " +
                        std::to_string(k) + ": got " + num(got) + " want " +
                        num(want[k]));
          }
        }
        ++n_rows;
      }
    }
    require(r == rows.size(), "row count");
  }
  require(n_tapes == 20, "tape count");
  return std::to_string(n_rows) + " rows across 20 tapes, dim 183";
}

// ============================================================================
// Criterion 6 — subspace extraction. The projection has orthonormal columns
// on raw Gaussian histories, and on spectrally separated histories equals,
// up to sign, an independent power-iteration-with-deflation oracle for the
// top-d right singular vectors.
// ============================================================================

std::string criterion6() {
  Rng rng(0xacc6);
  double worst_ortho = 0, worst_col = 0;

  // orthonormality on unstructured draws
  for (int trial = 0; trial < 5; ++trial) {
    const int R = 8 + 9 * trial;
    const int D = trial % 2 == 0 ? R + 25 : R - 3;
    const int d = 2 + trial;
    const Eigen::MatrixXd E = randn_mat(rng, R, D);
    const Eigen::MatrixXd A = compute_projection(E, d);
    const double e = (A.transpose() * A - Eigen::MatrixXd::Identity(d, d)).norm();
    worst_ortho = std::max(worst_ortho, e);
    require(e < 1e-10, "trial " + std::to_string(trial) + ": ||A'A - I|| = " + num(e));
  }

  // power-iteration oracle on histories with a well-separated spectrum
  for (int trial = 0; trial < 5; ++trial) {
    const int R = trial % 2 == 0 ? 14 + 4 * trial : 34;
    const int D = trial % 2 == 0 ? 40 : 18 + trial;
    const int d = 5;
    const int K = std::min(R, D);
    const Eigen::MatrixXd U = random_orthonormal(rng, R, K);
    const Eigen::MatrixXd V = random_orthonormal(rng, D, K);
    Eigen::VectorXd sv(K);
    for (int k = 0; k < K; ++k) sv(k) = 3.0 * std::pow(0.55, k);
    const Eigen::MatrixXd E = U * sv.asDiagonal() * V.transpose();

    const Eigen::MatrixXd A = compute_projection(E, d);
    require((A.transpose() * A - Eigen::MatrixXd::Identity(d, d)).norm() < 1e-10,
            "oracle trial " + std::to_string(trial) + ": not orthonormal");

    Eigen::MatrixXd S = E.transpose() * E;  // D x D
    std::vector<Eigen::VectorXd> found;
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd v = randn(rng, D);
      for (int it = 0; it < 600; ++it) {
        v = S * v;
        for (const Eigen::VectorXd& u : found) v -= u.dot(v) * u;
        v /= v.norm();
      }
      const double lambda = v.dot(S * v);
      S -= lambda * (v * v.transpose());
      if (v.dot(A.col(k)) < 0) v = -v;
      const double e = (A.col(k) - v).norm();
      worst_col = std::max(worst_col, e);
      require(e <= 1e-8, "oracle trial " + std::to_string(trial) + " column " +
                             std::to_string(k) + ": off by " + num(e));
      found.push_back(std::move(v));
    }
  }
  return "worst ||A'A - I|| " + num(worst_ortho) + ", worst column gap " +
         num(worst_col);
}

// ============================================================================
// Criterion 7 — asynchronous scheduler. On the canonical irregular-arrival
// fixture (arrivals 4x {0, 1, 2.75, 4, 4.25, 4.5, 7.5}, horizon 4x 2.5) the
// parameters version used for each prediction matches the hand derivation
// {0, 0, 1, 2, 2, 2, 6}: an arrival may only consume labels that resolved
// strictly before it.
// ============================================================================

std::string criterion7() {
  AsyncScheduler<MleOnline> sched{MleOnline{}};
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  const std::vector<Micros> ts = {0, 4, 11, 16, 17, 18, 30};
  const Micros g = 10;
  const std::vector<std::int64_t> want = {0, 0, 1, 2, 2, 2, 6};

  for (std::size_t i = 0; i < ts.size(); ++i) {
    Label lab;
    lab.y = i % 2 == 0;
    lab.resolved_ts = ts[i] + g;
    const auto pred = sched.process_arrival(ts[i], x, lab);
    require(pred.params_version == want[i],
            "arrival " + std::to_string(i) + ": used version " +
                std::to_string(pred.params_version) + ", want " +
                std::to_string(want[i]));
  }
  require(sched.pending() == 1, "one label should still be in flight");
  sched.end_of_day();
  require(sched.pending() == 0, "end_of_day must flush the queue");
  require(sched.model().version() == 7, "all seven labels applied");
  return "versions {0,0,1,2,2,2,6} reproduced exactly";
}

// ============================================================================
// Criterion 8 — end-to-end learning signal on a calibrated synthetic market:
// 4 deploy days x 14,400 trades with planted per-client informedness. The
// toxic rate at a 30s horizon lands in [0.50, 0.66]; pooled deploy AUC has
// the filter above 0.55 and at least matching frozen logistic regression,
// while the label-frequency baseline stays at chance.
// ============================================================================

struct DeployScores {
  std::vector<ScoredTrade> scored;  // censored excluded
  std::size_t n_rows = 0;
  std::size_t n_toxic = 0;  // over all rows, censored included
};

DeployScores load_deploy_scores(const std::string& out_dir, const std::string& model,
                                int first_day, int last_day) {
  DeployScores out;
  for (int day = first_day; day <= last_day; ++day) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "day_%03d", day);
    const CsvTable preds = read_csv(out_dir + "/predictions/h30000000/" + model +
                                    "/" + std::string(tag) + ".csv");
    const CsvTable labels =
        read_csv(out_dir + "/labels/h30000000/" + std::string(tag) + ".csv");
    require(preds.rows.size() == labels.rows.size(),
            model + " " + tag + ": prediction/label row mismatch");
    const int pc = preds.column("p_toxic");
    const int yc = labels.column("y");
    const int cc = labels.column("censored");
    const int tc = labels.column("ts_us");
    require(pc >= 0 && yc >= 0 && cc >= 0 && tc >= 0, "missing columns");
    for (std::size_t i = 0; i < preds.rows.size(); ++i) {
      require(preds.rows[i][0] == labels.rows[i][0] &&
                  preds.rows[i][1] == labels.rows[i][1],
              model + " " + tag + ": row " + std::to_string(i) + " misaligned");
      ScoredTrade s;
      s.p = parse_f64(preds.rows[i][static_cast<std::size_t>(pc)], "p_toxic");
      s.y = labels.rows[i][static_cast<std::size_t>(yc)] == "1";
      s.censored = labels.rows[i][static_cast<std::size_t>(cc)] == "1";
      s.ts = parse_i64(labels.rows[i][static_cast<std::size_t>(tc)], "ts_us");
      s.day_id = day;
      ++out.n_rows;
      if (s.y) ++out.n_toxic;
      if (!s.censored) out.scored.push_back(s);
    }
  }
  return out;
}

std::string criterion8() {
  RunConfig cfg;
  cfg.seed = 414243;
  cfg.out_dir = (fs::temp_directory_path() / "toxflow_acceptance_e2e").string();

  // Planted signal sized against the label's first-passage noise: in a
  // zero-drift regime the +-1 tick quote walk (5/s) clears an 8-tick spread
  // within 30s with p ~= 0.44, while a 1.5e-6/s drift regime moves ~45 ticks
  // per horizon, so right-way trades are ~0.98 toxic and wrong-way ~0.005.
  // Pooled toxic rate lands near 0.57 and side/drift alignment carries the
  // predictable part.
  SynthConfig syn;
  syn.seed = 20260814;
  syn.n_days = 5;
  syn.session_len = 3'600'000'000;
  syn.spread_ticks = 8;
  syn.drift_regime_rate = 1.0 / 240.0;
  syn.drift_magnitude = 1.5e-6;
  syn.trade_rate = 0.5;  // 8 clients -> 14,400 trades/day
  syn.informedness = {0.9, 0.7, 0.5, 0.3, 0.1, 0.0, 0.0, 0.0};
  cfg.synth = syn;

  cfg.warmup_days = 1;
  cfg.horizons_us = {30'000'000};
  cfg.models = {"pulse", "logreg", "mle"};
  cfg.hidden = {100, 100, 100};
  cfg.warmup.epochs = 50;
  cfg.warmup.skip = 10;
  cfg.warmup.thin = 2;  // stores 21 iterates; the subspace needs >= 20
  cfg.warmup.subspace_dim = 20;
  cfg.warmup.alpha = 1e-3;
  cfg.warmup.batch_size = 512;
  cfg.warmup.sigma2_w = 2e-3;
  cfg.warmup.sigma2_z = 2e-3;
  cfg.strategy.cutoffs = {0.25, 0.5, 0.75};
  cfg.strategy.aversions = {0.0};

  fs::remove_all(cfg.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  run_pipeline(cfg);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  require(elapsed < 1800.0, "pipeline took " + num(elapsed) + "s");

  const DeployScores pulse = load_deploy_scores(cfg.out_dir, "pulse", 1, 4);
  const DeployScores logr = load_deploy_scores(cfg.out_dir, "logreg", 1, 4);
  const DeployScores mle = load_deploy_scores(cfg.out_dir, "mle", 1, 4);

  require(pulse.n_rows >= 50'000,
          "only " + std::to_string(pulse.n_rows) + " deploy trades");
  const double toxic_rate =
      static_cast<double>(pulse.n_toxic) / static_cast<double>(pulse.n_rows);
  require(toxic_rate >= 0.50 && toxic_rate <= 0.66,
          "toxic rate " + num(toxic_rate) + " outside [0.50, 0.66]");

  const double auc_pulse = auc(pulse.scored);
  const double auc_logr = auc(logr.scored);
  const double auc_mle = auc(mle.scored);
  require(auc_pulse > 0.55, "filter AUC " + num(auc_pulse) + " <= 0.55");
  require(auc_pulse >= auc_logr, "filter AUC " + num(auc_pulse) +
                                     " below frozen logistic " + num(auc_logr));
  require(std::abs(auc_mle - 0.5) < 0.02,
          "frequency baseline AUC " + num(auc_mle) + " is not chance");

  return std::to_string(pulse.n_rows) + " deploy trades, toxic rate " +
         num(toxic_rate) + ", AUC pulse " + num(auc_pulse) + " / logreg " +
         num(auc_logr) + " / mle " + num(auc_mle) + ", " + num(elapsed) + "s";
}

// ============================================================================
// Criterion 9 — latency of the full arrival path (release pending labels,
// update, predict, queue) at production dimensions: 183 features, hidden
// stack 100-100-100 (head dim 101), subspace dim 20.
// ============================================================================

SubspaceModel production_scale_model() {
  SubspaceModel m;
  m.arch.input_dim = 183;
  m.arch.hidden = {100, 100, 100};
  m.cfg.subspace_dim = 20;
  m.cfg.sigma2_w = 2e-3;
  m.cfg.sigma2_z = 2e-3;
  const Eigen::Index D = m.arch.psi_dim();
  Rng rng(0xacc9);
  m.A = random_orthonormal(rng, D, 20);
  m.b = randn(rng, D, 0.05);
  m.w_final = randn(rng, m.arch.head_dim(), 0.1);
  m.standardizer.mean = Eigen::VectorXd::Zero(183);
  m.standardizer.scale = Eigen::VectorXd::Ones(183);
  return m;
}

std::string criterion9() {
  const SubspaceModel model = production_scale_model();
  AsyncScheduler<PulseOnline> sched{PulseOnline(init_priors(model), &model)};

  Rng rng(0xacc9 + 1);
  std::vector<Eigen::VectorXd> pool;
  for (int i = 0; i < 256; ++i) pool.push_back(randn(rng, 183));

  const int n = 10'000;
  const Micros g = 30'000'000;
  std::vector<double> lat;
  lat.reserve(n);
  Micros ts = 0;
  for (int i = 0; i < n; ++i) {
    Label lab;
    lab.y = (i & 3) == 0;
    lab.resolved_ts = ts + g;
    lab.tau = lab.y ? std::optional<Micros>(ts + g / 2) : std::nullopt;
    const Eigen::VectorXd& x = pool[static_cast<std::size_t>(i) % pool.size()];
    const auto c0 = std::chrono::steady_clock::now();
    const auto pred = sched.process_arrival(ts, x, lab);
    lat.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count());
    require(std::isfinite(pred.p), "prediction went non-finite");
    ts += 500'000;  // two arrivals per second, ~60 labels in flight
  }

  std::sort(lat.begin(), lat.end());
  const double median = lat[lat.size() / 2];
  const double p99 = lat[static_cast<std::size_t>(0.99 * lat.size())];
  require(median < 1e-3, "median " + num(median * 1e3) + "ms >= 1ms");
  require(p99 < 5e-3, "p99 " + num(p99 * 1e3) + "ms >= 5ms");
  return "10k arrivals at (183, 101, 20): median " + num(median * 1e3) +
         "ms, p99 " + num(p99 * 1e3) + "ms";
}

// ============================================================================
// Criterion 10 — strategy. Realized plus avoided PnL is invariant across the
// whole (cutoff, aversion) grid to the cent; internalised volume share is
// non-decreasing in the cutoff at zero aversion; and decide() agrees with
// brute-force maximization of the broker's one-shot objective.
// ============================================================================

// Expected mark-to-market plus quadratic inventory penalty, evaluated
// exhaustively over the two actions. Kept in raw (S, half_spread, eta, phi)
// parameters so it cannot share the reduced cutoff/aversion algebra.
double broker_objective(int delta, Side side, double S, double half_spread,
                        double eta, double phi, double Q, double p) {
  if (side == Side::Buy) {
    const double inv = Q - delta;
    return delta * (S + half_spread) + (S + eta * p) * inv - phi * inv * inv;
  }
  const double inv = Q + delta;
  return -delta * (S - half_spread) + (S - eta * p) * inv - phi * inv * inv;
}

std::string criterion10() {
  Rng rng(0xacc10);

  // conservation + monotonicity on a synthetic session, then on a second
  // session whose horizon spills past the close (every unwind flagged)
  std::size_t grid_cells = 0;
  for (int scenario = 0; scenario < 2; ++scenario) {
    SynthConfig sc;
    sc.seed = 99 + static_cast<std::uint64_t>(scenario);
    sc.n_days = 1;
    sc.session_len = 1'200'000'000;
    sc.trade_rate = 0.15;
    const Tape tape = generate_tapes(sc)[0];
    std::vector<double> preds;
    preds.reserve(tape.trades.size());
    for (std::size_t i = 0; i < tape.trades.size(); ++i) {
      preds.push_back(rng.uniform01());
    }

    const Micros horizon = scenario == 0 ? 10'000'000 : 600'000'000;
    const double fee = scenario == 0 ? 2e-5 : 0.0;
    std::optional<double> total;
    std::vector<double> pct_at_zero_aversion;
    for (double cutoff : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      for (double aversion : {0.0, 0.05, 0.5}) {
        StrategyConfig cfg;
        cfg.cutoff = cutoff;
        cfg.aversion = aversion;
        cfg.horizon = horizon;
        cfg.fee_per_notional = fee;
        const BacktestLedger led = run_backtest(tape, preds, cfg);
        const double t = led.total_pnl_usd + led.total_avoided_pnl_usd;
        if (!total) total = t;
        require(std::abs(t - *total) < 0.005,
                "scenario " + std::to_string(scenario) + ": realized+avoided "
                "moved by " + num(std::abs(t - *total)) + " USD across the grid");
        if (aversion == 0.0) {
          if (!pct_at_zero_aversion.empty()) {
            require(led.internalised_volume_pct >=
                        pct_at_zero_aversion.back() - 1e-12,
                    "internalised volume fell as the cutoff rose");
          }
          pct_at_zero_aversion.push_back(led.internalised_volume_pct);
        }
        ++grid_cells;
      }
    }
    require(pct_at_zero_aversion.front() == 0.0, "cutoff 0 must externalise all");
    require(pct_at_zero_aversion.back() == 100.0, "cutoff 1 must internalise all");
  }

  // decide() vs exhaustive maximization, eta > 2 * half_spread throughout
  int checked = 0;
  for (int trial = 0; trial < 10'000; ++trial) {
    const double half_spread = 0.5 + rng.uniform01();
    const double eta = 2 * half_spread * (1.01 + 3 * rng.uniform01());
    const double phi = rng.uniform01() * 2 * half_spread;
    const double Q = 6 * (rng.uniform01() - 0.5);
    const double p = rng.uniform01();
    const double S = 50 + 100 * rng.uniform01();  // must cancel out entirely
    const Side side = rng.bernoulli(0.5) ? Side::Buy : Side::Sell;

    const double keep = broker_objective(1, side, S, half_spread, eta, phi, Q, p);
    const double pass = broker_objective(0, side, S, half_spread, eta, phi, Q, p);
    if (std::abs(keep - pass) <= 1e-9 * (std::abs(keep) + std::abs(pass))) {
      continue;  // indifference set has measure zero; skip numerical ties
    }
    StrategyConfig cfg;
    cfg.cutoff = half_spread / eta - phi / eta;
    cfg.aversion = 2 * phi / eta;
    const Decision want = keep > pass ? Decision::Internalise : Decision::Externalise;
    require(decide(p, side, Q, cfg) == want,
            "trial " + std::to_string(trial) + ": decide() disagrees");
    ++checked;
  }
  require(checked > 9'000, "too many ties skipped");
  return std::to_string(grid_cells) + " grid cells conserved, " +
         std::to_string(checked) + " decide() parameterizations";
}

// ============================================================================
// Criterion 11 — evaluation. Rank-based AUC equals the trapezoidal area
// under the traced ROC on random score sets (with and without ties), and
// strict-cutoff TPR/FPR match hand-counted confusion tables.
// ============================================================================

std::string criterion11() {
  Rng rng(0xacc11);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(399);
    std::vector<ScoredTrade> scored;
    bool has_pos = false, has_neg = false;
    while (!(has_pos && has_neg)) {
      scored.clear();
      has_pos = has_neg = false;
      const bool discrete = trial % 2 == 0;
      const double base = 0.3 + 0.4 * rng.uniform01();
      for (std::size_t i = 0; i < n; ++i) {
        ScoredTrade s;
        s.p = discrete ? 0.1 * static_cast<double>(rng.uniform_int(11))
                       : rng.uniform01();
        s.y = rng.bernoulli(base);
        (s.y ? has_pos : has_neg) = true;
        scored.push_back(s);
      }
    }
    const double a1 = auc(scored);
    const double a2 = trapezoid_area(roc_curve(scored));
    worst = std::max(worst, std::abs(a1 - a2));
    require(std::abs(a1 - a2) <= 1e-12,
            "trial " + std::to_string(trial) + ": rank AUC " + num(a1) +
                " vs trapezoid " + num(a2));
  }

  // hand-counted confusion tables; flagged means p strictly above cutoff
  const auto mk = [](double p, bool y) {
    ScoredTrade s;
    s.p = p;
    s.y = y;
    return s;
  };
  const std::vector<ScoredTrade> fixture = {mk(0.9, true), mk(0.8, true),
                                            mk(0.7, false), mk(0.6, true),
                                            mk(0.4, false), mk(0.2, false)};
  // cutoff 0.5: flags {0.9, 0.8, 0.7, 0.6} -> TP 3 of 3, FP 1 of 3
  ConfusionRates r = tpr_fpr(fixture, 0.5);
  require(r.tpr && *r.tpr == 3.0 / 3.0, "fixture tpr at 0.5");
  require(r.fpr && *r.fpr == 1.0 / 3.0, "fixture fpr at 0.5");
  // cutoff 0.7: the tie at 0.7 is NOT flagged -> TP 2, FP 0
  r = tpr_fpr(fixture, 0.7);
  require(r.tpr && *r.tpr == 2.0 / 3.0, "fixture tpr at 0.7");
  require(r.fpr && *r.fpr == 0.0, "fixture fpr at 0.7");
  // cutoff 0.9: nothing flagged
  r = tpr_fpr(fixture, 0.9);
  require(r.tpr && *r.tpr == 0.0, "fixture tpr at 0.9");
  require(r.fpr && *r.fpr == 0.0, "fixture fpr at 0.9");

  const std::vector<ScoredTrade> tied = {mk(0.5, true), mk(0.5, false),
                                         mk(0.6, true), mk(0.4, false)};
  r = tpr_fpr(tied, 0.5);  // only 0.6 clears a strict 0.5
  require(r.tpr && *r.tpr == 1.0 / 2.0, "tied tpr");
  require(r.fpr && *r.fpr == 0.0, "tied fpr");

  const std::vector<ScoredTrade> one_class = {mk(0.3, false), mk(0.8, false)};
  r = tpr_fpr(one_class, 0.5);
  require(!r.tpr, "tpr must be absent without positives");
  require(r.fpr && *r.fpr == 1.0 / 2.0, "one-class fpr");

  return "100 score sets, worst |rank - trapezoid| " + num(worst) +
         ", confusion fixtures exact";
}

// ============================================================================
// Harness
// ============================================================================

struct Criterion {
  int id;
  const char* what;
  std::string (*fn)();
};

}  // namespace

int main() {
  const std::vector<Criterion> gate = {
      {1, "one-step update matches the numerical KL minimizer", criterion1},
      {2, "rank-one covariance updates equal precision-accumulate-then-invert",
       criterion2},
      {3, "backprop partials match finite differences and the closed head form",
       criterion3},
      {4, "sweep labeler equals the naive rescan and is horizon-monotone",
       criterion4},
      {5, "streaming features equal the stateless rescan at dimension 183",
       criterion5},
      {6, "subspace projection is orthonormal and equals the power-iteration "
          "oracle",
       criterion6},
      {7, "asynchronous scheduler consumes labels strictly after resolution",
       criterion7},
      {8, "end-to-end learning signal on the calibrated synthetic market",
       criterion8},
      {9, "online arrival path latency at production dimensions", criterion9},
      {10, "strategy conserves PnL, is cutoff-monotone, and maximizes the "
           "broker objective",
       criterion10},
      {11, "rank AUC equals trapezoidal ROC area; confusion rates hand-checked",
       criterion11},
  };

  int failures = 0;
  for (const Criterion& c : gate) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::string note = c.fn();
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      std::printf("[PASS] criterion %d: %s — %s (%.1fs)\n", c.id, c.what,
                  note.c_str(), secs);
    } catch (const std::exception& ex) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      std::printf("[FAIL] criterion %d: %s — %s (%.1fs)\n", c.id, c.what,
                  ex.what(), secs);
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures == 0) {
    std::printf("all %zu criteria passed\n", gate.size());
  } else {
    std::printf("%d criteria FAILED\n", failures);
  }
  return failures;
}
