#include "gcsim/tape.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace gcsim {

Tape::NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Tape::NodeId Tape::leaf(Tensor v, bool requires_grad) {
  return push(std::move(v), requires_grad, {});
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + A.shape_str() + " x " + B.shape_str());
  std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor C({m, n});
  matmul_raw(A.data(), B.data(), C.data(), m, k, n);
  NodeId out = push(std::move(C), track(a) || track(b), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, b, out, m, k, n](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      if (t.track(a)) {
        Tensor dA({m, k});
        matmul_nt_raw(dC.data(), t.nodes_[b].value.data(), dA.data(), m, n, k);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dA[i];
      }
      if (t.track(b))
        matmul_tn_acc_raw(t.nodes_[a].value.data(), dC.data(), t.grad_buffer(b).data(), m, k, n);
    };
  return out;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B))
    throw std::invalid_argument("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  NodeId out = push(std::move(C), track(a) || track(b), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, b, out](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      for (NodeId p : {a, b})
        if (t.track(p)) {
          Tensor& g = t.grad_buffer(p);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
        }
    };
  return out;
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[bias].value;
  if (A.rank() != 2 || B.rank() != 1 || B.dim(0) != A.dim(1))
    throw std::invalid_argument("add_rowvec: shape mismatch");
  std::size_t rows = A.dim(0), cols = A.dim(1);
  Tensor C = A;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) C[r * cols + c] += B[c];
  NodeId out = push(std::move(C), track(a) || track(bias), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, bias, out, rows, cols](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      if (t.track(a)) {
        Tensor& g = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
      }
      if (t.track(bias)) {
        Tensor& g = t.grad_buffer(bias);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[c] += dC[r * cols + c];
      }
    };
  return out;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  NodeId out = push(std::move(C), track(a) || track(b), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, b, out](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      if (t.track(a)) {
        Tensor& g = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
      }
      if (t.track(b)) {
        Tensor& g = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= dC[i];
      }
    };
  return out;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  NodeId out = push(std::move(C), track(a) || track(b), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, b, out](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      if (t.track(a)) {
        Tensor& g = t.grad_buffer(a);
        const Tensor& B2 = t.nodes_[b].value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i] * B2[i];
      }
      if (t.track(b)) {
        Tensor& g = t.grad_buffer(b);
        const Tensor& A2 = t.nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i] * A2[i];
      }
    };
  return out;
}

Tape::NodeId Tape::scale(NodeId a, double s) {
  Tensor C = nodes_[a].value;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= s;
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out, s](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * dC[i];
    };
  return out;
}

Tape::NodeId Tape::relu(NodeId a) {
  Tensor C = nodes_[a].value;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = C[i] > 0.0 ? C[i] : 0.0;
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      const Tensor& A = t.nodes_[a].value;
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (A[i] > 0.0) g[i] += dC[i];
    };
  return out;
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  Tensor C = nodes_[a].value;
  softmax_rows_inplace(C);
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out](Tape& t) {
      const Tensor& Y = t.nodes_[out].value;
      const Tensor& dY = t.nodes_[out].grad;
      Tensor& g = t.grad_buffer(a);
      std::size_t rows = Y.rows(), cols = Y.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = Y.data() + r * cols;
        const double* dy = dY.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
        double* gr = g.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gr[c] += y[c] * (dy[c] - dot);
      }
    };
  return out;
}

Tape::NodeId Tape::layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& X = nodes_[x].value;
  const Tensor& G = nodes_[gain].value;
  const Tensor& B = nodes_[bias].value;
  std::size_t rows = X.rows(), cols = X.cols();
  if (G.size() != cols || B.size() != cols)
    throw std::invalid_argument("layer_norm: gain/bias width mismatch");
  Tensor Y({rows, cols});
  Tensor xhat({rows, cols});
  std::vector<double> inv_sd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[r] = isd;
    for (std::size_t c = 0; c < cols; ++c) {
      double xh = (xr[c] - mean) * isd;
      xhat[r * cols + c] = xh;
      Y[r * cols + c] = G[c] * xh + B[c];
    }
  }
  NodeId out = push(std::move(Y), track(x) || track(gain) || track(bias), {});
  if (nodes_[out].requires_grad) {
    auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
    auto isd_p = std::make_shared<std::vector<double>>(std::move(inv_sd));
    nodes_[out].backprop = [x, gain, bias, out, rows, cols, xhat_p, isd_p](Tape& t) {
      const Tensor& dY = t.nodes_[out].grad;
      const Tensor& G = t.nodes_[gain].value;
      if (t.track(gain)) {
        Tensor& gg = t.grad_buffer(gain);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            gg[c] += dY[r * cols + c] * (*xhat_p)[r * cols + c];
      }
      if (t.track(bias)) {
        Tensor& gb = t.grad_buffer(bias);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += dY[r * cols + c];
      }
      if (t.track(x)) {
        Tensor& gx = t.grad_buffer(x);
        double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = dY.data() + r * cols;
          const double* xh = xhat_p->data() + r * cols;
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            double dxh = dy[c] * G[c];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[c];
          }
          double isd = (*isd_p)[r];
          for (std::size_t c = 0; c < cols; ++c) {
            double dxh = dy[c] * G[c];
            gx[r * cols + c] += isd * (dxh - sum_dxhat / n - xh[c] * sum_dxhat_xhat / n);
          }
        }
      }
    };
  }
  return out;
}

Tape::NodeId Tape::causal_attention(NodeId q, NodeId k, NodeId v,
                                    std::size_t batch, std::size_t seq_len,
                                    std::size_t num_heads) {
  const Tensor& Q = nodes_[q].value;
  std::size_t hidden = Q.cols();
  if (Q.rows() != batch * seq_len || hidden % num_heads != 0)
    throw std::invalid_argument("causal_attention: bad layout");
  std::size_t dh = hidden / num_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& K = nodes_[k].value;
  const Tensor& V = nodes_[v].value;

  Tensor O({batch * seq_len, hidden});
  // Attention probabilities, kept for the backward pass:
  // probs[b][h] is a (seq_len x seq_len) lower-triangular row-stochastic block.
  auto probs = std::make_shared<std::vector<double>>(batch * num_heads * seq_len * seq_len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      double* P = probs->data() + (b * num_heads + h) * seq_len * seq_len;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const double* qi = Q.data() + (b * seq_len + i) * hidden + h * dh;
        // scores over keys 0..i
        double mx = -1e300;
        double* pi = P + i * seq_len;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = K.data() + (b * seq_len + j) * hidden + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          s *= scale;
          pi[j] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          sum += pi[j];
        }
        double inv = 1.0 / sum;
        double* oi = O.data() + (b * seq_len + i) * hidden + h * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          pi[j] *= inv;
          const double* vj = V.data() + (b * seq_len + j) * hidden + h * dh;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += pi[j] * vj[d];
        }
      }
    }
  }
  NodeId out = push(std::move(O), track(q) || track(k) || track(v), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [q, k, v, out, batch, seq_len, num_heads, dh, scale, probs](Tape& t) {
      std::size_t hidden = num_heads * dh;
      const Tensor& Q = t.nodes_[q].value;
      const Tensor& K = t.nodes_[k].value;
      const Tensor& V = t.nodes_[v].value;
      const Tensor& dO = t.nodes_[out].grad;
      Tensor& dQ = t.grad_buffer(q);
      Tensor& dK = t.grad_buffer(k);
      Tensor& dV = t.grad_buffer(v);
      std::vector<double> dP(seq_len);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < num_heads; ++h) {
          const double* P = probs->data() + (b * num_heads + h) * seq_len * seq_len;
          for (std::size_t i = 0; i < seq_len; ++i) {
            const double* pi = P + i * seq_len;
            const double* doi = dO.data() + (b * seq_len + i) * hidden + h * dh;
            // dP_ij = dO_i . V_j ; dV_j += P_ij dO_i
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              const double* vj = V.data() + (b * seq_len + j) * hidden + h * dh;
              double* dvj = dV.data() + (b * seq_len + j) * hidden + h * dh;
              double dp = 0.0;
              for (std::size_t d = 0; d < dh; ++d) {
                dp += doi[d] * vj[d];
                dvj[d] += pi[j] * doi[d];
              }
              dP[j] = dp;
              dot += dp * pi[j];
            }
            // softmax backward, then into Q and K
            const double* qi = Q.data() + (b * seq_len + i) * hidden + h * dh;
            double* dqi = dQ.data() + (b * seq_len + i) * hidden + h * dh;
            for (std::size_t j = 0; j <= i; ++j) {
              double ds = pi[j] * (dP[j] - dot) * scale;
              const double* kj = K.data() + (b * seq_len + j) * hidden + h * dh;
              double* dkj = dK.data() + (b * seq_len + j) * hidden + h * dh;
              for (std::size_t d = 0; d < dh; ++d) {
                dqi[d] += ds * kj[d];
                dkj[d] += ds * qi[d];
              }
            }
          }
        }
      }
    };
  return out;
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.rows() != B.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  std::size_t rows = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor C({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * ca, ca, C.data() + r * (ca + cb));
    std::copy_n(B.data() + r * cb, cb, C.data() + r * (ca + cb) + ca);
  }
  NodeId out = push(std::move(C), track(a) || track(b), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, b, out, rows, ca, cb](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      if (t.track(a)) {
        Tensor& g = t.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += dC[r * (ca + cb) + c];
      }
      if (t.track(b)) {
        Tensor& g = t.grad_buffer(b);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += dC[r * (ca + cb) + ca + c];
      }
    };
  return out;
}

Tape::NodeId Tape::slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
  const Tensor& A = nodes_[a].value;
  if (c1 > A.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  std::size_t rows = A.rows(), cols = A.cols(), w = c1 - c0;
  Tensor C({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(A.data() + r * cols + c0, w, C.data() + r * w);
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out, rows, cols, c0, w](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      Tensor& g = t.grad_buffer(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) g[r * cols + c0 + c] += dC[r * w + c];
    };
  return out;
}

Tape::NodeId Tape::select_rows(NodeId a, std::vector<std::size_t> rows) {
  const Tensor& A = nodes_[a].value;
  std::size_t cols = A.cols();
  Tensor C({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) throw std::invalid_argument("select_rows: index out of range");
    std::copy_n(A.data() + rows[i] * cols, cols, C.data() + i * cols);
  }
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad) {
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
    nodes_[out].backprop = [a, out, cols, idx](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) g[(*idx)[i] * cols + c] += dC[i * cols + c];
    };
  }
  return out;
}

Tape::NodeId Tape::dropout(NodeId a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  const Tensor& A = nodes_[a].value;
  double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(A.size());
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) {
    double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    C[i] *= m;
  }
  NodeId out = push(std::move(C), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out, mask](Tape& t) {
      const Tensor& dC = t.nodes_[out].grad;
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i] * (*mask)[i];
    };
  return out;
}

Tape::NodeId Tape::sum_all(NodeId a) {
  const Tensor& A = nodes_[a].value;
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  NodeId out = push(Tensor::scalar(s), track(a), {});
  if (nodes_[out].requires_grad)
    nodes_[out].backprop = [a, out](Tape& t) {
      double d = t.nodes_[out].grad[0];
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    };
  return out;
}

Tape::NodeId Tape::ce_loss_sum(NodeId probs, const Tensor& onehot) {
  const Tensor& P = nodes_[probs].value;
  if (!P.same_shape(onehot)) throw std::invalid_argument("ce_loss_sum: shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (onehot[i] != 0.0) {
      double p = P[i];
      if (p < kCeClamp) {
        p = kCeClamp;
        ++ce_clamp_hits_;
      }
      loss -= onehot[i] * std::log(p);
    }
  }
  NodeId out = push(Tensor::scalar(loss), track(probs), {});
  if (nodes_[out].requires_grad) {
    auto target = std::make_shared<Tensor>(onehot);
    nodes_[out].backprop = [probs, out, target](Tape& t) {
      double d = t.nodes_[out].grad[0];
      const Tensor& P = t.nodes_[probs].value;
      Tensor& g = t.grad_buffer(probs);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double tv = (*target)[i];
        if (tv != 0.0) g[i] -= d * tv / std::max(P[i], kCeClamp);
      }
    };
  }
  return out;
}

Tape::NodeId Tape::mse_loss_sum(NodeId pred, const Tensor& target) {
  const Tensor& P = nodes_[pred].value;
  if (!P.same_shape(target)) throw std::invalid_argument("mse_loss_sum: shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double e = P[i] - target[i];
    loss += e * e;
  }
  NodeId out = push(Tensor::scalar(loss), track(pred), {});
  if (nodes_[out].requires_grad) {
    auto tgt = std::make_shared<Tensor>(target);
    nodes_[out].backprop = [pred, out, tgt](Tape& t) {
      double d = t.nodes_[out].grad[0];
      const Tensor& P = t.nodes_[pred].value;
      Tensor& g = t.grad_buffer(pred);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * 2.0 * (P[i] - (*tgt)[i]);
    };
  }
  return out;
}

void Tape::backward(NodeId loss) {
  if (!grad_enabled_)
    throw std::logic_error("backward: tape was created with gradients disabled");
  if (nodes_[loss].value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                nodes_[loss].value.shape_str());
  grad_buffer(loss)[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
}

} // namespace gcsim
