#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gevbf {

// Named real tensors with paired gradient buffers. Constant tensors (feature
// normalizers and the like) travel with the store but are never updated.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool trainable = true;
  };

  void add(const std::string& name, Eigen::MatrixXd init, bool trainable = true);

  int size() const { return static_cast<int>(entries_.size()); }
  const Entry& entry(int i) const { return entries_[i]; }
  int index_of(const std::string& name) const;  // not-found if absent
  bool contains(const std::string& name) const;

  const Eigen::MatrixXd& value(const std::string& name) const { return entries_[index_of(name)].value; }
  const Eigen::MatrixXd& grad(const std::string& name) const { return entries_[index_of(name)].grad; }

  // Mutators below throw freeze-violation on a frozen store.
  Eigen::MatrixXd& mutable_value(const std::string& name);
  void accumulate(int index, const Eigen::MatrixXd& delta);
  void accumulate(const std::string& name, const Eigen::MatrixXd& delta) { accumulate(index_of(name), delta); }
  void zero_grad();
  void sgd_step(double lr);
  // Adds other's gradients into this store's (same topology required).
  void add_grads(const ParamStore& other);

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::size_t num_trainable() const;
  // Flattened trainable values / gradients, in entry order.
  Eigen::VectorXd flat_values() const;
  Eigen::VectorXd flat_grads() const;
  void set_flat_values(const Eigen::VectorXd& v);

  // SHA-256 over names, shapes and values (hex).
  std::string digest() const;
  // Throws invalid-input unless names, shapes and trainable flags match.
  void require_same_topology(const ParamStore& other) const;

 private:
  void check_mutable(const char* what) const;

  std::vector<Entry> entries_;
  bool frozen_ = false;
};

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& store, double lr);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

enum class CheckpointKind : std::uint32_t { kMaskNet = 1, kAcousticModel = 2 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kMaskNet;
  std::string config_text;  // key=value lines describing the topology
  std::uint64_t seed = 0;
  ParamStore store;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gevbf
