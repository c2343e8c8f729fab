#include "gcsim/encoder.hpp"

#include "gcsim/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace gcsim {

int EncoderConfig::output_dim() const {
  int n = cont_out;
  for (int c : cat_classes) n += c;
  return n;
}

void EncoderConfig::validate() const {
  if (num_layers < 1 || hidden_dim < 1 || num_heads < 1 || feedforward_dim < 1 ||
      max_sequence_length < 1 || input_dim < 1)
    throw UsageError("encoder config: dimensions must be positive");
  if (hidden_dim % num_heads != 0)
    throw UsageError("encoder config: hidden_dim must be divisible by num_heads");
  for (int c : cat_classes)
    if (c < 2) throw UsageError("encoder config: categorical block needs >= 2 classes");
  if (output_dim() == 0) throw UsageError("encoder config: no output heads");
}

namespace {
Tensor sinusoidal_table(int max_len, int dim) {
  Tensor pe({static_cast<std::size_t>(max_len), static_cast<std::size_t>(dim)});
  for (int p = 0; p < max_len; ++p)
    for (int i = 0; i < dim; ++i) {
      double angle = p / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(dim));
      pe.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}
} // namespace

Encoder::Encoder(EncoderConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, "encoder.init"));
  std::size_t H = static_cast<std::size_t>(cfg_.hidden_dim);
  std::size_t F = static_cast<std::size_t>(cfg_.feedforward_dim);
  std::size_t I = static_cast<std::size_t>(cfg_.input_dim);

  w_emb_ = params_.add_xavier("embed.w", I, H, rng);
  b_emb_ = params_.add_zeros("embed.b", {H});
  for (int l = 0; l < cfg_.num_layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    LayerIdx ix;
    ix.ln1_g = params_.add_ones(p + "ln1.g", {H});
    ix.ln1_b = params_.add_zeros(p + "ln1.b", {H});
    ix.wq = params_.add_xavier(p + "attn.wq", H, H, rng);
    ix.bq = params_.add_zeros(p + "attn.bq", {H});
    ix.wk = params_.add_xavier(p + "attn.wk", H, H, rng);
    ix.bk = params_.add_zeros(p + "attn.bk", {H});
    ix.wv = params_.add_xavier(p + "attn.wv", H, H, rng);
    ix.bv = params_.add_zeros(p + "attn.bv", {H});
    ix.wo = params_.add_xavier(p + "attn.wo", H, H, rng);
    ix.bo = params_.add_zeros(p + "attn.bo", {H});
    ix.ln2_g = params_.add_ones(p + "ln2.g", {H});
    ix.ln2_b = params_.add_zeros(p + "ln2.b", {H});
    ix.w1 = params_.add_xavier(p + "ffn.w1", H, F, rng);
    ix.b1 = params_.add_zeros(p + "ffn.b1", {F});
    ix.w2 = params_.add_xavier(p + "ffn.w2", F, H, rng);
    ix.b2 = params_.add_zeros(p + "ffn.b2", {H});
    layers_.push_back(ix);
  }
  lnf_g_ = params_.add_ones("final_norm.g", {H});
  lnf_b_ = params_.add_zeros("final_norm.b", {H});
  if (!cfg_.cat_classes.empty()) {
    w_cat_ = params_.add_xavier("head.cat.w", H, static_cast<std::size_t>(cfg_.output_dim() - cfg_.cont_out), rng);
    b_cat_ = params_.add_zeros("head.cat.b", {static_cast<std::size_t>(cfg_.output_dim() - cfg_.cont_out)});
  }
  if (cfg_.cont_out > 0) {
    w_cont_ = params_.add_xavier("head.cont.w", H, static_cast<std::size_t>(cfg_.cont_out), rng);
    b_cont_ = params_.add_zeros("head.cont.b", {static_cast<std::size_t>(cfg_.cont_out)});
  }
  pos_table_ = sinusoidal_table(cfg_.max_sequence_length, cfg_.hidden_dim);
}

Tape::NodeId Encoder::embed(Tape& tape, const Tensor& input, std::size_t batch,
                            std::size_t seq_len, Pass& pass) const {
  if (input.cols() != static_cast<std::size_t>(cfg_.input_dim))
    throw DataError("encoder: input width " + std::to_string(input.cols()) +
                    " does not match config input_dim " + std::to_string(cfg_.input_dim));
  if (seq_len > static_cast<std::size_t>(cfg_.max_sequence_length))
    throw DataError("encoder: sequence length " + std::to_string(seq_len) +
                    " exceeds max_sequence_length");
  if (input.rows() != batch * seq_len)
    throw DataError("encoder: row count does not equal batch*seq_len");

  Tape::NodeId x = tape.constant(input);
  Tape::NodeId proj = tape.add_rowvec(tape.matmul(x, pass.leaves[w_emb_]), pass.leaves[b_emb_]);
  // Positional rows replicated across the batch.
  std::size_t H = static_cast<std::size_t>(cfg_.hidden_dim);
  Tensor pe({batch * seq_len, H});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < seq_len; ++t)
      std::copy_n(pos_table_.data() + t * H, H, pe.data() + (b * seq_len + t) * H);
  return tape.add(proj, tape.constant(std::move(pe)));
}

Encoder::Pass Encoder::forward(Tape& tape, const Tensor& input, std::size_t batch,
                               std::size_t seq_len, bool train_mode, Rng* dropout_rng) const {
  Pass pass;
  pass.batch = batch;
  pass.seq_len = seq_len;
  pass.leaves.reserve(params_.count());
  for (std::size_t i = 0; i < params_.count(); ++i)
    pass.leaves.push_back(tape.leaf(params_[i].value));

  Tape::NodeId h = embed(tape, input, batch, seq_len, pass);
  bool drop = train_mode && cfg_.dropout > 0.0 && dropout_rng != nullptr;
  for (const auto& L : layers_) {
    Tape::NodeId u = tape.layer_norm_rows(h, pass.leaves[L.ln1_g], pass.leaves[L.ln1_b]);
    Tape::NodeId q = tape.add_rowvec(tape.matmul(u, pass.leaves[L.wq]), pass.leaves[L.bq]);
    Tape::NodeId k = tape.add_rowvec(tape.matmul(u, pass.leaves[L.wk]), pass.leaves[L.bk]);
    Tape::NodeId v = tape.add_rowvec(tape.matmul(u, pass.leaves[L.wv]), pass.leaves[L.bv]);
    Tape::NodeId a = tape.causal_attention(q, k, v, batch, seq_len,
                                           static_cast<std::size_t>(cfg_.num_heads));
    Tape::NodeId o = tape.add_rowvec(tape.matmul(a, pass.leaves[L.wo]), pass.leaves[L.bo]);
    if (drop) o = tape.dropout(o, cfg_.dropout, *dropout_rng);
    h = tape.add(h, o);
    Tape::NodeId w = tape.layer_norm_rows(h, pass.leaves[L.ln2_g], pass.leaves[L.ln2_b]);
    Tape::NodeId f1 = tape.relu(tape.add_rowvec(tape.matmul(w, pass.leaves[L.w1]), pass.leaves[L.b1]));
    Tape::NodeId f2 = tape.add_rowvec(tape.matmul(f1, pass.leaves[L.w2]), pass.leaves[L.b2]);
    if (drop) f2 = tape.dropout(f2, cfg_.dropout, *dropout_rng);
    h = tape.add(h, f2);
  }
  pass.hidden = tape.layer_norm_rows(h, pass.leaves[lnf_g_], pass.leaves[lnf_b_]);
  return pass;
}

Tape::NodeId Encoder::head_categorical(Tape& tape, const Pass& pass) const {
  if (w_cat_ < 0) throw std::logic_error("encoder has no categorical head");
  Tape::NodeId logits = tape.relu(tape.add_rowvec(
      tape.matmul(pass.hidden, pass.leaves[w_cat_]), pass.leaves[b_cat_]));
  // Per-covariate softmax over that covariate's class block.
  if (cfg_.cat_classes.size() == 1) return tape.softmax_rows(logits);
  Tape::NodeId out = -1;
  std::size_t c0 = 0;
  for (int classes : cfg_.cat_classes) {
    Tape::NodeId block = tape.softmax_rows(
        tape.slice_cols(logits, c0, c0 + static_cast<std::size_t>(classes)));
    out = (out < 0) ? block : tape.concat_cols(out, block);
    c0 += static_cast<std::size_t>(classes);
  }
  return out;
}

Tape::NodeId Encoder::head_continuous(Tape& tape, const Pass& pass) const {
  if (w_cont_ < 0) throw std::logic_error("encoder has no continuous head");
  return tape.add_rowvec(tape.matmul(pass.hidden, pass.leaves[w_cont_]), pass.leaves[b_cont_]);
}

void Encoder::collect_grads(const Tape& tape, const Pass& pass, std::vector<Tensor>& sink) const {
  for (std::size_t i = 0; i < params_.count(); ++i) {
    const Tensor& g = tape.grad(pass.leaves[i]);
    if (g.empty()) continue;
    Tensor& s = sink[i];
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += g[j];
  }
}

// ---------------------------------------------------------------------------
// Incremental cache
// ---------------------------------------------------------------------------

namespace {
void layer_norm_rows_raw(const double* x, double* y, std::size_t rows, std::size_t cols,
                         const double* gain, const double* bias, double eps = 1e-5) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    double isd = 1.0 / std::sqrt(var + eps);
    double* yr = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) yr[c] = gain[c] * (xr[c] - mean) * isd + bias[c];
  }
}

// y = x*W + b over `rows` rows.
void affine_raw(const double* x, double* y, std::size_t rows, std::size_t in, std::size_t out,
                const double* w, const double* b) {
  matmul_raw(x, w, y, rows, in, out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out; ++c) y[r * out + c] += b[c];
}
} // namespace

EncoderCache::EncoderCache(const Encoder& enc, std::size_t batch) : enc_(&enc), batch_(batch) {
  std::size_t per_layer = batch * static_cast<std::size_t>(enc.cfg_.max_sequence_length) *
                          static_cast<std::size_t>(enc.cfg_.hidden_dim);
  key_cache_.assign(enc.cfg_.num_layers, std::vector<double>(per_layer, 0.0));
  value_cache_.assign(enc.cfg_.num_layers, std::vector<double>(per_layer, 0.0));
}

void EncoderCache::reset() { len_ = 0; }

EncoderCache EncoderCache::replicate(std::size_t copies) const {
  if (batch_ != 1) throw std::logic_error("EncoderCache::replicate requires a single-lane cache");
  EncoderCache out(*enc_, copies);
  out.len_ = len_;
  std::size_t H = static_cast<std::size_t>(enc_->cfg_.hidden_dim);
  std::size_t maxT = static_cast<std::size_t>(enc_->cfg_.max_sequence_length);
  for (int l = 0; l < enc_->cfg_.num_layers; ++l)
    for (std::size_t lane = 0; lane < copies; ++lane) {
      std::copy_n(key_cache_[l].data(), len_ * H, out.key_cache_[l].data() + lane * maxT * H);
      std::copy_n(value_cache_[l].data(), len_ * H, out.value_cache_[l].data() + lane * maxT * H);
    }
  return out;
}

Tensor EncoderCache::append(const Tensor& input, std::size_t steps) {
  const EncoderConfig& cfg = enc_->cfg_;
  std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);
  std::size_t F = static_cast<std::size_t>(cfg.feedforward_dim);
  std::size_t heads = static_cast<std::size_t>(cfg.num_heads);
  std::size_t dh = H / heads;
  std::size_t maxT = static_cast<std::size_t>(cfg.max_sequence_length);
  std::size_t rows = batch_ * steps;
  if (input.rows() != rows || input.cols() != static_cast<std::size_t>(cfg.input_dim))
    throw DataError("EncoderCache::append: bad input shape");
  if (len_ + steps > maxT) throw DataError("EncoderCache::append: sequence length overflow");

  const ParamSet& P = enc_->params_;
  auto val = [&](int idx) { return P[idx].value.data(); };

  // Embedding + positional encoding. Rows are batch-major (lane, step).
  Tensor h({rows, H});
  affine_raw(input.data(), h.data(), rows, cfg.input_dim, H, val(enc_->w_emb_), val(enc_->b_emb_));
  for (std::size_t lane = 0; lane < batch_; ++lane)
    for (std::size_t s = 0; s < steps; ++s) {
      double* hr = h.data() + (lane * steps + s) * H;
      const double* pe = enc_->pos_table_.data() + (len_ + s) * H;
      for (std::size_t c = 0; c < H; ++c) hr[c] += pe[c];
    }

  Tensor u({rows, H}), q({rows, H}), k({rows, H}), v({rows, H}), attn({rows, H});
  Tensor f1({rows, F}), f2({rows, H});
  for (std::size_t l = 0; l < enc_->layers_.size(); ++l) {
    const auto& L = enc_->layers_[l];
    layer_norm_rows_raw(h.data(), u.data(), rows, H, val(L.ln1_g), val(L.ln1_b));
    affine_raw(u.data(), q.data(), rows, H, H, val(L.wq), val(L.bq));
    affine_raw(u.data(), k.data(), rows, H, H, val(L.wk), val(L.bk));
    affine_raw(u.data(), v.data(), rows, H, H, val(L.wv), val(L.bv));
    // Stash new keys/values, then attend over everything cached so far.
    double* KC = key_cache_[l].data();
    double* VC = value_cache_[l].data();
    for (std::size_t lane = 0; lane < batch_; ++lane)
      for (std::size_t s = 0; s < steps; ++s) {
        std::copy_n(k.data() + (lane * steps + s) * H, H, KC + (lane * maxT + len_ + s) * H);
        std::copy_n(v.data() + (lane * steps + s) * H, H, VC + (lane * maxT + len_ + s) * H);
      }
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> probs(maxT);
    for (std::size_t lane = 0; lane < batch_; ++lane)
      for (std::size_t s = 0; s < steps; ++s) {
        std::size_t t_abs = len_ + s;
        const double* qi = q.data() + (lane * steps + s) * H;
        double* oi = attn.data() + (lane * steps + s) * H;
        std::fill_n(oi, H, 0.0);
        for (std::size_t hd = 0; hd < heads; ++hd) {
          const double* qh = qi + hd * dh;
          double mx = -1e300;
          for (std::size_t j = 0; j <= t_abs; ++j) {
            const double* kj = KC + (lane * maxT + j) * H + hd * dh;
            double sdot = 0.0;
            for (std::size_t d = 0; d < dh; ++d) sdot += qh[d] * kj[d];
            sdot *= scale;
            probs[j] = sdot;
            mx = std::max(mx, sdot);
          }
          double sum = 0.0;
          for (std::size_t j = 0; j <= t_abs; ++j) {
            probs[j] = std::exp(probs[j] - mx);
            sum += probs[j];
          }
          double inv = 1.0 / sum;
          double* oh = oi + hd * dh;
          for (std::size_t j = 0; j <= t_abs; ++j) {
            const double* vj = VC + (lane * maxT + j) * H + hd * dh;
            double p = probs[j] * inv;
            for (std::size_t d = 0; d < dh; ++d) oh[d] += p * vj[d];
          }
        }
      }
    // h += attn*Wo + bo ; h += FFN(LN2(h))
    affine_raw(attn.data(), u.data(), rows, H, H, val(L.wo), val(L.bo));
    for (std::size_t i = 0; i < rows * H; ++i) h.values()[i] += u.values()[i];
    layer_norm_rows_raw(h.data(), u.data(), rows, H, val(L.ln2_g), val(L.ln2_b));
    affine_raw(u.data(), f1.data(), rows, H, F, val(L.w1), val(L.b1));
    for (std::size_t i = 0; i < rows * F; ++i) f1.values()[i] = std::max(f1.values()[i], 0.0);
    affine_raw(f1.data(), f2.data(), rows, F, H, val(L.w2), val(L.b2));
    for (std::size_t i = 0; i < rows * H; ++i) h.values()[i] += f2.values()[i];
  }
  len_ += steps;
  Tensor out({rows, H});
  layer_norm_rows_raw(h.data(), out.data(), rows, H, val(enc_->lnf_g_), val(enc_->lnf_b_));
  return out;
}

Tensor EncoderCache::categorical_probs(const Tensor& hidden) const {
  if (enc_->w_cat_ < 0) throw std::logic_error("encoder has no categorical head");
  const ParamSet& P = enc_->params_;
  std::size_t rows = hidden.rows();
  std::size_t W = P[enc_->w_cat_].value.dim(1);
  Tensor logits({rows, W});
  affine_raw(hidden.data(), logits.data(), rows, hidden.cols(), W,
             P[enc_->w_cat_].value.data(), P[enc_->b_cat_].value.data());
  for (auto& x : logits.values()) x = std::max(x, 0.0);
  // per-covariate softmax
  Tensor probs({rows, W});
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t c0 = 0;
    for (int classes : enc_->cfg_.cat_classes) {
      const double* lr = logits.data() + r * W + c0;
      double* pr = probs.data() + r * W + c0;
      double mx = lr[0];
      for (int c = 1; c < classes; ++c) mx = std::max(mx, lr[c]);
      double sum = 0.0;
      for (int c = 0; c < classes; ++c) {
        pr[c] = std::exp(lr[c] - mx);
        sum += pr[c];
      }
      for (int c = 0; c < classes; ++c) pr[c] /= sum;
      c0 += static_cast<std::size_t>(classes);
    }
  }
  return probs;
}

Tensor EncoderCache::continuous_means(const Tensor& hidden) const {
  if (enc_->w_cont_ < 0) throw std::logic_error("encoder has no continuous head");
  const ParamSet& P = enc_->params_;
  std::size_t rows = hidden.rows();
  std::size_t W = P[enc_->w_cont_].value.dim(1);
  Tensor out({rows, W});
  affine_raw(hidden.data(), out.data(), rows, hidden.cols(), W,
             P[enc_->w_cont_].value.data(), P[enc_->b_cont_].value.data());
  return out;
}

} // namespace gcsim
