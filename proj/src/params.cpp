#include "gevbf/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "gevbf/error.hpp"

namespace gevbf {

void ParamStore::add(const std::string& name, Eigen::MatrixXd init, bool trainable) {
  require(!contains(name), ErrorKind::kInvalidInput, "duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.grad = Eigen::MatrixXd::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  e.trainable = trainable;
  entries_.push_back(std::move(e));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

int ParamStore::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (entries_[i].name == name) return i;
  fail(ErrorKind::kNotFound, "no parameter named " + name);
}

void ParamStore::check_mutable(const char* what) const {
  if (frozen_) fail(ErrorKind::kFreezeViolation, std::string(what) + " on a frozen parameter store");
}

Eigen::MatrixXd& ParamStore::mutable_value(const std::string& name) {
  check_mutable("write");
  return entries_[index_of(name)].value;
}

void ParamStore::accumulate(int index, const Eigen::MatrixXd& delta) {
  check_mutable("gradient accumulation");
  auto& e = entries_.at(index);
  require(delta.rows() == e.grad.rows() && delta.cols() == e.grad.cols(), ErrorKind::kShape,
          "gradient shape mismatch for " + e.name);
  e.grad += delta;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

void ParamStore::sgd_step(double lr) {
  check_mutable("update");
  for (auto& e : entries_)
    if (e.trainable) e.value -= lr * e.grad;
}

void ParamStore::add_grads(const ParamStore& other) {
  require_same_topology(other);
  for (int i = 0; i < size(); ++i) accumulate(i, other.entries_[i].grad);
}

std::size_t ParamStore::num_trainable() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

Eigen::VectorXd ParamStore::flat_values() const {
  Eigen::VectorXd out(num_trainable());
  Eigen::Index k = 0;
  for (const auto& e : entries_)
    if (e.trainable)
      for (Eigen::Index i = 0; i < e.value.size(); ++i) out(k++) = e.value.data()[i];
  return out;
}

Eigen::VectorXd ParamStore::flat_grads() const {
  Eigen::VectorXd out(num_trainable());
  Eigen::Index k = 0;
  for (const auto& e : entries_)
    if (e.trainable)
      for (Eigen::Index i = 0; i < e.grad.size(); ++i) out(k++) = e.grad.data()[i];
  return out;
}

void ParamStore::set_flat_values(const Eigen::VectorXd& v) {
  check_mutable("write");
  require(static_cast<std::size_t>(v.size()) == num_trainable(), ErrorKind::kShape, "flat parameter size");
  Eigen::Index k = 0;
  for (auto& e : entries_)
    if (e.trainable)
      for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] = v(k++);
}

std::string ParamStore::digest() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& e : entries_) {
    EVP_DigestUpdate(ctx, e.name.data(), e.name.size() + 1);
    const std::int64_t shape[2] = {e.value.rows(), e.value.cols()};
    EVP_DigestUpdate(ctx, shape, sizeof(shape));
    EVP_DigestUpdate(ctx, e.value.data(), sizeof(double) * e.value.size());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void ParamStore::require_same_topology(const ParamStore& other) const {
  require(size() == other.size(), ErrorKind::kInvalidInput, "parameter count mismatch");
  for (int i = 0; i < size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    require(a.name == b.name && a.value.rows() == b.value.rows() && a.value.cols() == b.value.cols() &&
                a.trainable == b.trainable,
            ErrorKind::kInvalidInput, "topology mismatch at parameter " + a.name);
  }
}

void Adam::step(ParamStore& store, double lr) {
  if (m_.empty()) {
    for (int i = 0; i < store.size(); ++i) {
      const auto& g = store.entry(i).grad;
      m_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    }
  }
  require(static_cast<int>(m_.size()) == store.size(), ErrorKind::kState, "optimizer bound to another store");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    if (!e.trainable) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * e.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * e.grad.cwiseAbs2();
    const Eigen::MatrixXd step =
        ((m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps_)).matrix();
    store.mutable_value(e.name) -= lr * step;
  }
}

namespace {

constexpr char kMagic[8] = {'G', 'E', 'V', 'B', 'F', 'C', 'K', 0};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::kParse, "truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  require(n < (1u << 24), ErrorKind::kParse, "implausible string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) fail(ErrorKind::kParse, "truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(ck.kind));
  put_string(os, ck.config_text);
  put(os, ck.seed);
  put<std::uint8_t>(os, ck.store.frozen() ? 1 : 0);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.store.size()));
  for (int i = 0; i < ck.store.size(); ++i) {
    const auto& e = ck.store.entry(i);
    put_string(os, e.name);
    put<std::uint64_t>(os, e.value.rows());
    put<std::uint64_t>(os, e.value.cols());
    put<std::uint8_t>(os, e.trainable ? 1 : 0);
    // column-major, matching Eigen's storage
    os.write(reinterpret_cast<const char*>(e.value.data()), static_cast<std::streamsize>(sizeof(double) * e.value.size()));
  }
  require(static_cast<bool>(os), ErrorKind::kIo, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  require(is && std::memcmp(magic, kMagic, sizeof(magic)) == 0, ErrorKind::kParse, path + " is not a checkpoint");
  const auto version = get<std::uint32_t>(is);
  require(version == kVersion, ErrorKind::kParse, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto kind = get<std::uint32_t>(is);
  require(kind == 1 || kind == 2, ErrorKind::kParse, "unknown checkpoint kind");
  ck.kind = static_cast<CheckpointKind>(kind);
  ck.config_text = get_string(is);
  ck.seed = get<std::uint64_t>(is);
  const bool frozen = get<std::uint8_t>(is) != 0;
  const auto n = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = get_string(is);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    const bool trainable = get<std::uint8_t>(is) != 0;
    require(rows * cols < (1u << 28), ErrorKind::kParse, "implausible tensor size in checkpoint");
    Eigen::MatrixXd v(rows, cols);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
    if (!is) fail(ErrorKind::kParse, "truncated checkpoint");
    ck.store.add(name, std::move(v), trainable);
  }
  if (frozen) ck.store.freeze();
  return ck;
}

}  // namespace gevbf
