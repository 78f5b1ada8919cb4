#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace toxflow {

// ============================================================================
// Checkpoint files: 4-byte magic "TXF1", u32 little-endian header length,
// UTF-8 JSON header, then all tensor payloads back to back as 64-bit
// little-endian reals in the header's listed order. The header carries a
// free-form "meta" object plus the tensor table (name, rows, cols).
// Matrices are stored column-major.
// ============================================================================

struct TensorBlob {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 1;
  std::vector<double> data;  // rows * cols, column-major
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<TensorBlob> tensors;

  const TensorBlob& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<TensorBlob>& tensors);

Checkpoint load_checkpoint(const std::string& path);

// Eigen bridges.
TensorBlob blob_mat(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m);
TensorBlob blob_vec(const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& v);
Eigen::MatrixXd tensor_matrix(const TensorBlob& t);
Eigen::VectorXd tensor_vector(const TensorBlob& t);  // throws unless cols == 1

}  // namespace toxflow
