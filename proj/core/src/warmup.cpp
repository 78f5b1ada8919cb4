#include "toxflow/warmup.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "toxflow/checkpoint.hpp"
#include "toxflow/errors.hpp"

namespace toxflow {

void WarmupConfig::validate() const {
  if (epochs < 1) throw ConfigError("warmup: epochs must be >= 1");
  if (skip < 1 || skip >= epochs) {
    throw ConfigError("warmup: need 0 < skip < epochs, got skip=" +
                      std::to_string(skip) + " epochs=" + std::to_string(epochs));
  }
  if (thin < 1) throw ConfigError("warmup: thin must be >= 1");
  if (subspace_dim < 1) throw ConfigError("warmup: subspace_dim must be >= 1");
  if (alpha <= 0) throw ConfigError("warmup: alpha must be positive");
  if (batch_size < 1) throw ConfigError("warmup: batch_size must be >= 1");
  if (sigma2_w <= 0 || sigma2_z <= 0) {
    throw ConfigError("warmup: prior variances must be positive");
  }
}

// ============================================================================
// Standardizer
// ============================================================================

void Standardizer::fit(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() < 1) throw DataError("standardizer: empty sample");
  mean = X.rowwise().mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    var += (X.col(j) - mean).cwiseAbs2();
  }
  var /= static_cast<double>(X.cols());
  scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    // Variance of a constant feature is rounding noise, not signal; dividing
    // by it would catapult any later out-of-sample value. Constant within
    // float precision means constant.
    const double floor = 1e-12 * std::max(1.0, std::abs(mean(i)));
    if (!(scale(i) > floor) || !std::isfinite(scale(i))) scale(i) = 1.0;
  }
}

Eigen::MatrixXd Standardizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.rows() != mean.size()) throw ConfigError("standardizer: dim mismatch");
  return (X.colwise() - mean).array().colwise() / scale.array();
}

void Standardizer::apply_inplace(Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw ConfigError("standardizer: dim mismatch");
  x = (x - mean).cwiseQuotient(scale);
}

// ============================================================================
// Training loop
// ============================================================================

namespace {

// Epochs whose iterates are stored: walk back from the last epoch in steps
// of `thin`, keeping everything that lands at or after `skip`. This always
// retains the final iterate and stores floor((epochs-skip)/thin) + 1 rows;
// when thin divides (epochs-skip) it is exactly {skip, skip+thin, ..., epochs}.
std::vector<int> stored_epochs(int epochs, int skip, int thin) {
  const int count = (epochs - skip) / thin + 1;
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    out[static_cast<std::size_t>(count - 1 - j)] = epochs - j * thin;
  }
  return out;
}

}  // namespace

WarmupResult run_warmup(const MlpArch& arch,
                        const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        const WarmupConfig& cfg) {
  cfg.validate();
  if (X.cols() == 0) throw DataError("warmup: empty training set");
  if (X.cols() != y.size()) throw DataError("warmup: feature/label count mismatch");
  if (X.rows() != arch.input_dim) {
    throw ConfigError("warmup: arch expects " + std::to_string(arch.input_dim) +
                      " features, data has " + std::to_string(X.rows()));
  }

  WarmupResult res;
  res.model.arch = arch;
  res.model.cfg = cfg;
  res.model.standardizer.fit(X);
  const Eigen::MatrixXd Xs = res.model.standardizer.apply(X);
  const Eigen::Index N = Xs.cols();

  Rng init_rng(mix_seed(cfg.seed, 0x1717));
  Eigen::VectorXd psi = he_uniform_init(arch, init_rng);
  Eigen::VectorXd w = head_init(arch, init_rng);
  AdamState st_psi(psi.size());
  AdamState st_w(w.size());

  res.init_loss = nll_and_grad(arch, psi, w, Xs, y).loss;

  const std::vector<int> keep = stored_epochs(cfg.epochs, cfg.skip, cfg.thin);
  res.iterate_epochs = keep;
  res.iterates.resize(static_cast<Eigen::Index>(keep.size()), psi.size());

  Rng shuffle_rng(mix_seed(cfg.seed, 0x5f5f));
  std::vector<std::size_t> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd xb(Xs.rows(), cfg.batch_size);
  Eigen::VectorXd yb(cfg.batch_size);

  std::size_t next_keep = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    deterministic_shuffle(order, shuffle_rng);
    double epoch_loss = 0;
    for (Eigen::Index start = 0; start < N; start += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, N - start);
      for (Eigen::Index j = 0; j < bs; ++j) {
        const std::size_t src = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = Xs.col(static_cast<Eigen::Index>(src));
        yb(j) = y(static_cast<Eigen::Index>(src));
      }
      const NllGrad g = nll_and_grad(arch, psi, w, xb.leftCols(bs), yb.head(bs));
      if (!std::isfinite(g.loss)) {
        throw NumericError("warmup: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += g.loss;
      adam_step(psi, g.g_psi, st_psi, cfg.alpha);
      adam_step(w, g.g_w, st_w, cfg.alpha);
    }
    res.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(N));
    if (next_keep < keep.size() && keep[next_keep] == epoch) {
      res.iterates.row(static_cast<Eigen::Index>(next_keep)) = psi.transpose();
      ++next_keep;
    }
  }

  res.final_loss = nll_and_grad(arch, psi, w, Xs, y).loss;
  res.model.b = psi;
  res.model.w_final = w;
  if (cfg.subspace_dim > res.iterates.rows() || cfg.subspace_dim > psi.size()) {
    throw ConfigError("warmup: subspace_dim " + std::to_string(cfg.subspace_dim) +
                      " exceeds stored iterates (" + std::to_string(res.iterates.rows()) +
                      ")");
  }
  bool padded = false;
  res.model.A = compute_projection(res.iterates, cfg.subspace_dim, &padded);
  if (padded) {
    std::cerr << "warmup: iterate history is rank-deficient; projection padded "
                 "with an orthonormal completion\n";
  }
  return res;
}

// ============================================================================
// Subspace extraction
// ============================================================================

Eigen::MatrixXd compute_projection(const Eigen::Ref<const Eigen::MatrixXd>& iterates,
                                   int d, bool* padded) {
  const Eigen::Index R = iterates.rows();
  const Eigen::Index D = iterates.cols();
  if (d < 1 || d > R || d > D) {
    throw ConfigError("projection: need 1 <= d <= min(rows, cols)");
  }

  // Right singular vectors via the R x R Gram matrix: cheap because the
  // stored history is short (hundreds of rows) while D is tens of thousands.
  const Eigen::MatrixXd G = iterates * iterates.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success) {
    throw NumericError("projection: eigendecomposition failed");
  }
  // eigenvalues come back ascending; walk from the top
  const Eigen::VectorXd evals = eig.eigenvalues();
  const Eigen::MatrixXd evecs = eig.eigenvectors();
  const double smax = std::sqrt(std::max(evals(R - 1), 0.0));
  const double tol = smax * static_cast<double>(std::max(R, D)) *
                     std::numeric_limits<double>::epsilon();

  Eigen::MatrixXd A(D, d);
  int have = 0;
  for (Eigen::Index k = R - 1; k >= 0 && have < d; --k) {
    const double sigma = std::sqrt(std::max(evals(k), 0.0));
    if (sigma <= tol || sigma == 0.0) break;  // rank exhausted
    A.col(have) = iterates.transpose() * evecs.col(k) / sigma;
    ++have;
  }
  if (padded) *padded = have < d;

  // Deterministic completion of missing directions.
  Rng pad_rng(0x9a7);
  while (have < d) {
    Eigen::VectorXd v(D);
    for (Eigen::Index i = 0; i < D; ++i) v(i) = pad_rng.normal();
    A.col(have) = v;
    ++have;
  }

  // Two rounds of modified Gram-Schmidt: preserves column order and
  // direction while scrubbing the O(eps * kappa) non-orthogonality the
  // Gram route leaves behind.
  for (int round = 0; round < 2; ++round) {
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < j; ++i) {
        A.col(j) -= A.col(i).dot(A.col(j)) * A.col(i);
      }
      const double n = A.col(j).norm();
      if (n < 1e-300) throw NumericError("projection: degenerate completion");
      A.col(j) /= n;
    }
  }

  // Sign convention: the first largest-magnitude entry of each column is
  // positive, so results do not depend on eigen-solver sign choices.
  for (int j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    double best = -1;
    for (Eigen::Index i = 0; i < D; ++i) {
      if (std::abs(A(i, j)) > best) {
        best = std::abs(A(i, j));
        arg = i;
      }
    }
    if (A(arg, j) < 0) A.col(j) = -A.col(j);
  }
  return A;
}

// ============================================================================
// Checkpoints
// ============================================================================

namespace {

Eigen::MatrixXd mat_of(const TensorBlob& t) { return tensor_matrix(t); }
Eigen::VectorXd vec_of(const TensorBlob& t) { return tensor_vector(t); }

}  // namespace

void save_subspace(const std::string& path, const SubspaceModel& model) {
  nlohmann::json meta;
  meta["kind"] = "subspace";
  meta["arch"] = {{"input_dim", model.arch.input_dim}, {"hidden", model.arch.hidden}};
  meta["warmup"] = {{"epochs", model.cfg.epochs},
                    {"skip", model.cfg.skip},
                    {"thin", model.cfg.thin},
                    {"subspace_dim", model.cfg.subspace_dim},
                    {"alpha", model.cfg.alpha},
                    {"batch_size", model.cfg.batch_size},
                    {"seed", model.cfg.seed},
                    {"sigma2_w", model.cfg.sigma2_w},
                    {"sigma2_z", model.cfg.sigma2_z}};
  // The online filter's priors are fully determined by the tensors above,
  // but downstream consumers should not need to know the construction rule,
  // so they are materialized too.
  const Eigen::Index L = model.w_final.size();
  const Eigen::Index d = model.A.cols();
  save_checkpoint(
      path, meta,
      {blob_mat("A", model.A), blob_vec("b", model.b),
       blob_vec("w_final", model.w_final),
       blob_vec("std_mean", model.standardizer.mean),
       blob_vec("std_scale", model.standardizer.scale),
       blob_vec("nu0", model.w_final),
       blob_mat("Sigma0", model.cfg.sigma2_w * Eigen::MatrixXd::Identity(L, L)),
       blob_vec("mu0", Eigen::VectorXd::Zero(d)),
       blob_mat("Gamma0", model.cfg.sigma2_z * Eigen::MatrixXd::Identity(d, d))});
}

SubspaceModel load_subspace(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "subspace") {
    throw DataError("checkpoint: " + path + " is not a subspace model");
  }
  SubspaceModel m;
  m.arch.input_dim = ck.meta.at("arch").at("input_dim").get<int>();
  m.arch.hidden = ck.meta.at("arch").at("hidden").get<std::vector<int>>();
  const auto& wu = ck.meta.at("warmup");
  m.cfg.epochs = wu.at("epochs").get<int>();
  m.cfg.skip = wu.at("skip").get<int>();
  m.cfg.thin = wu.at("thin").get<int>();
  m.cfg.subspace_dim = wu.at("subspace_dim").get<int>();
  m.cfg.alpha = wu.at("alpha").get<double>();
  m.cfg.batch_size = wu.at("batch_size").get<int>();
  m.cfg.seed = wu.at("seed").get<std::uint64_t>();
  m.cfg.sigma2_w = wu.at("sigma2_w").get<double>();
  m.cfg.sigma2_z = wu.at("sigma2_z").get<double>();

  m.A = mat_of(ck.tensor("A"));
  m.b = vec_of(ck.tensor("b"));
  m.w_final = vec_of(ck.tensor("w_final"));
  m.standardizer.mean = vec_of(ck.tensor("std_mean"));
  m.standardizer.scale = vec_of(ck.tensor("std_scale"));

  if (m.b.size() != m.arch.psi_dim() || m.A.rows() != m.b.size() ||
      m.w_final.size() != m.arch.head_dim() ||
      m.standardizer.mean.size() != m.arch.input_dim) {
    throw DataError("checkpoint: inconsistent shapes in " + path);
  }
  return m;
}

}  // namespace toxflow
