#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "toxflow/rng.hpp"

namespace toxflow {

// ============================================================================
// Fixed MLP: input -> ReLU hidden layers -> linear head.
//
// The hidden stack g(.;psi) maps an M-vector to the last hidden layer's
// activations with a constant 1 appended (so the head weight vector w gets a
// bias coordinate). psi is the flat vector of all hidden-layer parameters,
// laid out layer by layer as [W column-major (out x in)][b], giving
//   psi_dim = sum over layers of (in + 1) * out
// = 38,600 for the default 183 -> 100 -> 100 -> 100 stack.
// ============================================================================

struct MlpArch {
  int input_dim = 183;
  std::vector<int> hidden = {100, 100, 100};

  int hidden_out() const { return hidden.back(); }
  int head_dim() const { return hidden_out() + 1; }  // appended constant 1
  std::int64_t psi_dim() const {
    std::int64_t n = 0;
    int in = input_dim;
    for (int out : hidden) {
      n += static_cast<std::int64_t>(in + 1) * out;
      in = out;
    }
    return n;
  }
  bool operator==(const MlpArch&) const = default;
};

// Scratch buffers reused across calls; no allocation on the hot path after
// the first call with a given arch.
struct MlpWorkspace {
  std::vector<Eigen::VectorXd> pre;    // pre-activations per layer
  std::vector<Eigen::VectorXd> act;    // act[0] = x, act[l+1] = relu(pre[l])
  std::vector<Eigen::VectorXd> delta;  // backprop buffers
};

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + e^x) without overflow for large |x|
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// -[y log sigma(f) + (1-y) log(1-sigma(f))] = softplus(f) - y * f
inline double bce_loss(double logit, double y) {
  return softplus(logit) - y * logit;
}

// g(psi; x) with the constant 1 appended. h_out is resized to head_dim().
void mlp_hidden(const MlpArch& arch, const Eigen::VectorXd& psi,
                const Eigen::VectorXd& x, MlpWorkspace& ws,
                Eigen::VectorXd& h_out);

double mlp_logit(const MlpArch& arch, const Eigen::VectorXd& psi,
                 const Eigen::VectorXd& w, const Eigen::VectorXd& x,
                 MlpWorkspace& ws);

// grad_out = d/d psi of nu' g(psi; x); the appended constant contributes
// nothing. Fills h_out with g(psi; x) from the same forward pass.
void logit_grad_psi(const MlpArch& arch, const Eigen::VectorXd& psi,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& x,
                    MlpWorkspace& ws, Eigen::VectorXd& grad_out,
                    Eigen::VectorXd& h_out);

struct NllGrad {
  double loss = 0;  // sum over the batch, not the mean
  Eigen::VectorXd g_psi;
  Eigen::VectorXd g_w;
};

// Batched loss and exact gradients. X holds one sample per column; y in {0,1}.
NllGrad nll_and_grad(const MlpArch& arch, const Eigen::VectorXd& psi,
                     const Eigen::VectorXd& w,
                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y);

// ============================================================================
// Adam
// ============================================================================

struct AdamState {
  Eigen::VectorXd m, v;  // first/second moment accumulators
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(Eigen::Index n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double alpha);

// ============================================================================
// Initialization (seeded, layout-order draws so results are reproducible)
// ============================================================================

// Hidden weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases 0.
Eigen::VectorXd he_uniform_init(const MlpArch& arch, Rng& rng);

// Head weights drawn the same way from the last hidden width; bias 0.
Eigen::VectorXd head_init(const MlpArch& arch, Rng& rng);

}  // namespace toxflow
