#pragma once

#include "gcsim/rng.hpp"
#include "gcsim/tensor.hpp"

#include <functional>
#include <vector>

namespace gcsim {

/// Reverse-mode autodiff over a tape of primitive ops, rebuilt per forward
/// pass. Node ids are indices into the tape; replaying the recorded ops in
/// reverse creation order visits every node exactly once. Tensors of nodes
/// that never feed the loss keep a zero (empty) gradient.
class Tape {
public:
  using NodeId = int;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Tracked input (parameter or differentiable intermediate source).
  NodeId leaf(Tensor v, bool requires_grad = true);
  /// Untracked input; gradients never flow into it.
  NodeId constant(Tensor v) { return leaf(std::move(v), false); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  /// Adds a rank-1 bias to every row of a rank-2 tensor.
  NodeId add_rowvec(NodeId a, NodeId bias);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId relu(NodeId a);
  /// Numerically stabilized softmax along the last axis (per row).
  NodeId softmax_rows(NodeId a);
  /// Per-row normalization over the feature axis with learnable gain/bias.
  NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  /// Multi-head scaled dot-product self-attention with a causal mask.
  /// q,k,v are (batch*seq_len, hidden); hidden must divide by num_heads.
  NodeId causal_attention(NodeId q, NodeId k, NodeId v,
                          std::size_t batch, std::size_t seq_len, std::size_t num_heads);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1);
  NodeId select_rows(NodeId a, std::vector<std::size_t> rows);
  /// Train-mode mask-multiply; keep-probability scaling applied at train time.
  NodeId dropout(NodeId a, double rate, Rng& rng);
  NodeId sum_all(NodeId a);
  /// Sum over rows of -sum_c onehot_c * log(max(p_c, 1e-12)). Rows where the
  /// clamp fires are counted in ce_clamp_hits().
  NodeId ce_loss_sum(NodeId probs, const Tensor& onehot);
  /// Sum of elementwise squared errors.
  NodeId mse_loss_sum(NodeId pred, const Tensor& target);

  /// Reverse sweep from a scalar loss. Gradients accumulate into grad().
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  /// Gradient of the last backward() w.r.t. node id; empty tensor if the
  /// node did not influence the loss.
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

  long ce_clamp_hits() const { return ce_clamp_hits_; }

  static constexpr double kCeClamp = 1e-12;

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop; // empty for leaves/constants
  };

  Tensor& grad_buffer(NodeId id);
  NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
  bool track(NodeId a) const { return grad_enabled_ && nodes_[a].requires_grad; }

  std::vector<Node> nodes_;
  bool grad_enabled_;
  long ce_clamp_hits_ = 0;
};

/// Module-level op mirror: forward-only matmul lives in tensor.hpp; the
/// gradient-checked surface is exercised through Tape in tests.

} // namespace gcsim
