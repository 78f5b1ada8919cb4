#include "toxflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "toxflow/errors.hpp"

namespace toxflow {

namespace {

constexpr char kMagic[4] = {'T', 'X', 'F', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const TensorBlob& Checkpoint::tensor(const std::string& name) const {
  for (const TensorBlob& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("checkpoint: no tensor named '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const TensorBlob& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<TensorBlob>& tensors) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const TensorBlob& t : tensors) {
    if (t.rows < 0 || t.cols < 0 ||
        t.data.size() != static_cast<std::size_t>(t.rows * t.cols)) {
      throw ConfigError("checkpoint: tensor '" + t.name + "' shape/data mismatch");
    }
    header["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  const std::string hdr = header.dump();

  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, static_cast<std::uint32_t>(hdr.size()));
  buf += hdr;
  for (const TensorBlob& t : tensors) {
    for (double d : t.data) put_f64(buf, d);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  f.flush();
  if (!f) throw DataError("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint: " + path + " is not a TXF1 file");
  }
  const std::uint32_t hlen = get_u32(p + 4);
  if (buf.size() < 8 + static_cast<std::size_t>(hlen)) {
    throw DataError("checkpoint: truncated header in " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(8, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: bad header in " + path + ": " + e.what());
  }

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  std::size_t off = 8 + hlen;
  for (const auto& jt : header.at("tensors")) {
    TensorBlob t;
    t.name = jt.at("name").get<std::string>();
    t.rows = jt.at("rows").get<std::int64_t>();
    t.cols = jt.at("cols").get<std::int64_t>();
    const std::size_t n = static_cast<std::size_t>(t.rows * t.cols);
    if (off + 8 * n > buf.size()) {
      throw DataError("checkpoint: truncated payload for '" + t.name + "' in " + path);
    }
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = get_f64(p + off + 8 * i);
    off += 8 * n;
    ck.tensors.push_back(std::move(t));
  }
  if (off != buf.size()) {
    throw DataError("checkpoint: trailing bytes in " + path);
  }
  return ck;
}

}  // namespace toxflow

namespace toxflow {

TensorBlob blob_mat(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  TensorBlob t;
  t.name = name;
  t.rows = m.rows();
  t.cols = m.cols();
  t.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::MatrixXd>(t.data.data(), m.rows(), m.cols()) = m;
  return t;
}

TensorBlob blob_vec(const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& v) {
  TensorBlob t;
  t.name = name;
  t.rows = v.size();
  t.cols = 1;
  t.data.resize(static_cast<std::size_t>(v.size()));
  Eigen::Map<Eigen::VectorXd>(t.data.data(), v.size()) = v;
  return t;
}

Eigen::MatrixXd tensor_matrix(const TensorBlob& t) {
  return Eigen::Map<const Eigen::MatrixXd>(t.data.data(), t.rows, t.cols);
}

Eigen::VectorXd tensor_vector(const TensorBlob& t) {
  if (t.cols != 1) {
    throw DataError("checkpoint: tensor '" + t.name + "' is not a vector");
  }
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), t.rows);
}

}  // namespace toxflow
