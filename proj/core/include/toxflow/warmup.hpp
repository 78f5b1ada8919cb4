#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "toxflow/nnet.hpp"

namespace toxflow {

// ============================================================================
// Offline stage: fit the MLP by mini-batch Adam on resolved labels, stack a
// thinned history of the per-epoch psi iterates, extract the dominant
// directions of that history as the projection psi = A z + b, and hand the
// result to the online filter as its starting point.
// ============================================================================

struct WarmupConfig {
  int epochs = 850;
  int skip = 50;          // drop iterates before this epoch
  int thin = 4;           // keep every thin-th epoch after that
  int subspace_dim = 20;  // d
  double alpha = 1e-7;    // Adam learning rate
  int batch_size = 512;
  std::uint64_t seed = 1;
  double sigma2_w = 1.0;  // prior variance for the head weights
  double sigma2_z = 1.0;  // prior variance for the projected hidden params

  void validate() const;  // 0 < skip < epochs, thin >= 1, subspace_dim >= 1
};

// Per-feature affine map to zero mean / unit variance, fitted once on the
// warmup set and frozen afterwards. Features constant up to float rounding
// keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean, scale;

  void fit(const Eigen::Ref<const Eigen::MatrixXd>& X);  // one sample per column
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  void apply_inplace(Eigen::VectorXd& x) const;
};

struct SubspaceModel {
  MlpArch arch;
  Standardizer standardizer;
  Eigen::MatrixXd A;        // psi_dim x d, orthonormal columns
  Eigen::VectorXd b;        // psi_dim; the final psi iterate
  Eigen::VectorXd w_final;  // head_dim
  WarmupConfig cfg;         // configuration the model was trained with
};

struct WarmupResult {
  SubspaceModel model;
  Eigen::MatrixXd iterates;          // stored psi history, one row per epoch kept
  std::vector<int> iterate_epochs;   // 1-based epochs of those rows (last == epochs)
  std::vector<double> epoch_mean_loss;  // mean per-sample batch loss by epoch
  double init_loss = 0;   // full-set NLL at initialization
  double final_loss = 0;  // full-set NLL after training
};

// X: raw (unstandardized) features, one sample per column; y in {0,1}.
// arch.input_dim must equal X.rows().
WarmupResult run_warmup(const MlpArch& arch,
                        const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        const WarmupConfig& cfg);

// Top-d right singular vectors of `iterates` (rows = observations), ordered
// by descending singular value, sign-fixed so each column's largest-magnitude
// entry is positive. Rank-deficient input is padded with an orthonormal
// completion; *padded reports whether that happened.
Eigen::MatrixXd compute_projection(const Eigen::Ref<const Eigen::MatrixXd>& iterates,
                                   int d, bool* padded = nullptr);

// Checkpoint I/O (binary tensors + JSON header).
void save_subspace(const std::string& path, const SubspaceModel& model);
SubspaceModel load_subspace(const std::string& path);

}  // namespace toxflow
