#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acuity/tensor.hpp"

namespace acuity::ad {

// One node of the dynamic computation graph. Nodes are created by the op
// functions below and torn down when the last Var handle goes away.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

// Cheap handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  Tensor& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
  }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
  friend Var make_op(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backprop);
};

// Leaf constructors.
Var constant(Tensor v);
Var parameter(Tensor v);

// Reverse pass from a scalar root: visits reachable nodes in reverse
// topological order exactly once and accumulates leaf gradients.
void backward(const Var& root);

// --- elementwise / shape ops ---
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softmax(const Var& x);              // softmax over the last axis
Var sum_all(const Var& x);              // any shape -> scalar
Var flatten(const Var& x);              // BxCxL -> Bx(C*L)
Var concat(const Var& a, const Var& b); // rank-2, along the feature axis
Var transpose12(const Var& x);          // BxTxD <-> BxDxT

// --- neural ops ---
// x: B x Cin x L, w: Cout x Cin x K, b: Cout
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int padding);
// Depthwise: one kernel per channel. x: B x C x L, w: C x K, b: C
Var depthwise_conv1d(const Var& x, const Var& w, const Var& b, int stride, int padding);
Var max_pool1d(const Var& x, int k, int stride);
Var avg_pool1d(const Var& x, int k, int stride);
Var global_avg_pool1d(const Var& x);    // BxCxL -> BxC
// x: BxFin or BxTxFin, w: Fout x Fin, b: Fout; applies over the last axis.
Var dense(const Var& x, const Var& w, const Var& b);
// Broadcast per-channel gate: x BxCxL, g BxC.
Var channel_scale(const Var& x, const Var& g);
// Broadcast add of a TxD table over the batch axis of x (BxTxD).
Var add_row_table(const Var& x, const Var& table);

// Multi-head scaled dot-product attention core: per head
// softmax(Q Kt / sqrt(D/H)) V, heads re-concatenated. q,k,v: BxTxD.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, std::size_t heads);
// Core followed by the output projection wo: DxD, bo: D.
Var attention(const Var& q, const Var& k, const Var& v, const Var& wo,
              const Var& bo, std::size_t heads);

// Sinusoidal position table, T x D: even dims sin, odd dims cos, wavelengths
// geometrically spaced from 2*pi to 10000*2*pi.
Tensor positional_encoding(std::size_t T, std::size_t D);

// Mean binary cross-entropy on logits (B or Bx1), labels in {0,1}.
// Computed in log-sum-exp form.
Var bce_with_logits(const Var& logits, std::span<const double> labels);

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Adam with decoupled weight decay. Moment state starts at zero; step()
// throws TrainingDiverged on a non-finite gradient.
class AdamW {
 public:
  AdamW(std::vector<Var> params, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace acuity::ad
