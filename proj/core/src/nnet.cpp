#include "toxflow/nnet.hpp"

#include <cmath>

#include "toxflow/errors.hpp"

namespace toxflow {

namespace {

// Views into the flat psi vector for layer l; advances `off` past the layer.
struct LayerView {
  Eigen::Map<const Eigen::MatrixXd> W;
  Eigen::Map<const Eigen::VectorXd> b;
};

LayerView layer_view(const double* psi, std::int64_t& off, int in, int out) {
  Eigen::Map<const Eigen::MatrixXd> W(psi + off, out, in);
  off += static_cast<std::int64_t>(out) * in;
  Eigen::Map<const Eigen::VectorXd> b(psi + off, out);
  off += out;
  return {W, b};
}

void check_shapes(const MlpArch& arch, const Eigen::VectorXd& psi,
                  const Eigen::VectorXd* w, Eigen::Index x_dim) {
  if (psi.size() != arch.psi_dim()) {
    throw ConfigError("nnet: psi has " + std::to_string(psi.size()) +
                      " parameters, arch wants " + std::to_string(arch.psi_dim()));
  }
  if (x_dim != arch.input_dim) {
    throw ConfigError("nnet: input dim " + std::to_string(x_dim) +
                      " != " + std::to_string(arch.input_dim));
  }
  if (w && w->size() != arch.head_dim()) {
    throw ConfigError("nnet: head has " + std::to_string(w->size()) +
                      " weights, arch wants " + std::to_string(arch.head_dim()));
  }
}

}  // namespace

void mlp_hidden(const MlpArch& arch, const Eigen::VectorXd& psi,
                const Eigen::VectorXd& x, MlpWorkspace& ws,
                Eigen::VectorXd& h_out) {
  check_shapes(arch, psi, nullptr, x.size());
  const std::size_t depth = arch.hidden.size();
  ws.pre.resize(depth);
  ws.act.resize(depth + 1);
  ws.act[0] = x;

  std::int64_t off = 0;
  int in = arch.input_dim;
  for (std::size_t l = 0; l < depth; ++l) {
    const int out = arch.hidden[l];
    const LayerView lv = layer_view(psi.data(), off, in, out);
    ws.pre[l].noalias() = lv.W * ws.act[l];
    ws.pre[l] += lv.b;
    ws.act[l + 1] = ws.pre[l].cwiseMax(0.0);
    in = out;
  }
  h_out.resize(arch.head_dim());
  h_out.head(arch.hidden_out()) = ws.act[depth];
  h_out(arch.hidden_out()) = 1.0;
}

double mlp_logit(const MlpArch& arch, const Eigen::VectorXd& psi,
                 const Eigen::VectorXd& w, const Eigen::VectorXd& x,
                 MlpWorkspace& ws) {
  check_shapes(arch, psi, &w, x.size());
  Eigen::VectorXd h;
  mlp_hidden(arch, psi, x, ws, h);
  return w.dot(h);
}

void logit_grad_psi(const MlpArch& arch, const Eigen::VectorXd& psi,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& x,
                    MlpWorkspace& ws, Eigen::VectorXd& grad_out,
                    Eigen::VectorXd& h_out) {
  check_shapes(arch, psi, &nu, x.size());
  mlp_hidden(arch, psi, x, ws, h_out);

  const std::size_t depth = arch.hidden.size();
  ws.delta.resize(depth);
  grad_out.resize(psi.size());

  // Seed the top layer with the head weights (the appended 1 has no psi
  // dependence), then walk down: mask by the ReLU gate (subgradient at 0
  // taken as 0), emit this layer's parameter gradients, push through W'.
  ws.delta[depth - 1] = nu.head(arch.hidden_out());
  std::int64_t off = psi.size();
  for (std::size_t l = depth; l-- > 0;) {
    const int out = arch.hidden[l];
    const int in = l > 0 ? arch.hidden[l - 1] : arch.input_dim;
    off -= static_cast<std::int64_t>(in + 1) * out;
    std::int64_t o = off;
    const LayerView lv = layer_view(psi.data(), o, in, out);

    for (Eigen::Index i = 0; i < out; ++i) {
      if (ws.pre[l](i) <= 0) ws.delta[l](i) = 0;
    }
    Eigen::Map<Eigen::MatrixXd> gW(grad_out.data() + off, out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad_out.data() + off +
                                       static_cast<std::int64_t>(out) * in,
                                   out);
    gW.noalias() = ws.delta[l] * ws.act[l].transpose();
    gb = ws.delta[l];
    if (l > 0) ws.delta[l - 1].noalias() = lv.W.transpose() * ws.delta[l];
  }
}

NllGrad nll_and_grad(const MlpArch& arch, const Eigen::VectorXd& psi,
                     const Eigen::VectorXd& w,
                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_shapes(arch, psi, &w, X.rows());
  if (X.cols() != y.size()) throw ConfigError("nnet: batch size mismatch");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("nnet: labels must be 0/1");
  }
  const std::size_t depth = arch.hidden.size();
  const Eigen::Index B = X.cols();
  const int H = arch.hidden_out();

  // Batched forward, one sample per column.
  std::vector<Eigen::MatrixXd> pre(depth), act(depth + 1);
  act[0] = X;
  std::int64_t off = 0;
  int in = arch.input_dim;
  for (std::size_t l = 0; l < depth; ++l) {
    const int out = arch.hidden[l];
    const LayerView lv = layer_view(psi.data(), off, in, out);
    pre[l].noalias() = lv.W * act[l];
    pre[l].colwise() += lv.b;
    act[l + 1] = pre[l].cwiseMax(0.0);
    in = out;
  }

  NllGrad out;
  out.g_psi.setZero(psi.size());
  out.g_w.setZero(w.size());

  // logits f = w_h' h + w_bias; residuals sigma(f) - y
  Eigen::VectorXd f = act[depth].transpose() * w.head(H);
  f.array() += w(H);
  Eigen::VectorXd resid(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    out.loss += bce_loss(f(i), y(i));
    resid(i) = sigmoid(f(i)) - y(i);
  }
  if (!std::isfinite(out.loss)) throw NumericError("nnet: non-finite loss");

  // d loss / d w: canonical form, residual-weighted hidden outputs
  out.g_w.head(H).noalias() = act[depth] * resid;
  out.g_w(H) = resid.sum();

  // backprop through the stack
  Eigen::MatrixXd delta = (w.head(H) * resid.transpose()).eval();
  for (std::size_t l = depth; l-- > 0;) {
    delta = (pre[l].array() > 0).select(delta, 0.0);
    const int outw = arch.hidden[l];
    in = l > 0 ? arch.hidden[l - 1] : arch.input_dim;
    off -= static_cast<std::int64_t>(in + 1) * outw;
    std::int64_t o = off;
    const LayerView lv = layer_view(psi.data(), o, in, outw);
    Eigen::Map<Eigen::MatrixXd> gW(out.g_psi.data() + off, outw, in);
    Eigen::Map<Eigen::VectorXd> gb(
        out.g_psi.data() + off + static_cast<std::int64_t>(outw) * in, outw);
    gW.noalias() = delta * act[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0) delta = (lv.W.transpose() * delta).eval();
  }
  return out;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double alpha) {
  if (params.size() != grad.size() || params.size() != state.m.size()) {
    throw ConfigError("adam: shape mismatch");
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      alpha * (state.m / c1).array() / ((state.v / c2).array().sqrt() + state.eps);
}

Eigen::VectorXd he_uniform_init(const MlpArch& arch, Rng& rng) {
  Eigen::VectorXd psi(arch.psi_dim());
  std::int64_t off = 0;
  int in = arch.input_dim;
  for (int out : arch.hidden) {
    const double lim = std::sqrt(6.0 / in);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(out) * in; ++i) {
      psi(off++) = rng.uniform(-lim, lim);
    }
    for (int i = 0; i < out; ++i) psi(off++) = 0.0;
    in = out;
  }
  return psi;
}

Eigen::VectorXd head_init(const MlpArch& arch, Rng& rng) {
  Eigen::VectorXd w(arch.head_dim());
  const double lim = std::sqrt(6.0 / arch.hidden_out());
  for (int i = 0; i < arch.hidden_out(); ++i) w(i) = rng.uniform(-lim, lim);
  w(arch.hidden_out()) = 0.0;
  return w;
}

}  // namespace toxflow
