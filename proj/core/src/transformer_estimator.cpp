#include "gcsim/transformer_estimator.hpp"

#include "gcsim/errors.hpp"

#include <cmath>

namespace gcsim {

TransformerEstimator::TransformerEstimator(Schema schema, NormStats stats,
                                           TransformerHyperparams hp, std::uint64_t init_seed)
    : schema_(std::move(schema)), stats_(std::move(stats)), hp_(hp) {
  schema_.validate();
  if (stats_.empty()) throw DataError("transformer: normalization stats required");
  std::size_t base = feature_width(schema_);
  if (schema_.n_cat() > 0) {
    EncoderConfig cfg;
    cfg.num_layers = hp_.num_layers;
    cfg.hidden_dim = hp_.hidden_dim;
    cfg.num_heads = hp_.num_heads;
    cfg.feedforward_dim = hp_.ffn_dim();
    cfg.max_sequence_length = hp_.max_sequence_length;
    cfg.input_dim = static_cast<int>(base);
    for (std::size_t d = 0; d < schema_.n_cat(); ++d)
      cfg.cat_classes.push_back(schema_.covariates[d].classes);
    cfg.dropout = hp_.dropout;
    cat_enc_ = std::make_unique<Encoder>(cfg, derive_seed(init_seed, "model.cat"));
  }
  if (schema_.n_cont() > 0) {
    EncoderConfig cfg;
    cfg.num_layers = hp_.num_layers;
    cfg.hidden_dim = hp_.hidden_dim;
    cfg.num_heads = hp_.num_heads;
    cfg.feedforward_dim = hp_.ffn_dim();
    cfg.max_sequence_length = hp_.max_sequence_length;
    cfg.input_dim = static_cast<int>(base + schema_.onehot_width());
    cfg.cont_out = static_cast<int>(schema_.n_cont());
    cfg.dropout = hp_.dropout;
    cont_enc_ = std::make_unique<Encoder>(cfg, derive_seed(init_seed, "model.cont"));
  }
}

Tensor TransformerEstimator::assemble_inputs(const Trajectory& unit, std::size_t seq_len,
                                             bool with_next_cat) const {
  std::size_t base = feature_width(schema_);
  std::size_t extra = with_next_cat ? schema_.onehot_width() : 0;
  if (seq_len + (with_next_cat ? 1 : 0) > unit.length())
    throw DataError("assemble_inputs: sequence window exceeds trajectory length");
  Tensor x({seq_len, base + extra});
  const double* statics = unit.statics.empty() ? nullptr : unit.statics.data();
  for (std::size_t j = 0; j < seq_len; ++j) {
    double* row = x.data() + j * (base + extra);
    encode_features(schema_, stats_, unit.cov.data() + j * schema_.n_cov(),
                    unit.treat.data() + j * schema_.n_treat(), statics, row);
    if (with_next_cat)
      encode_onehot(schema_, unit.cov.data() + (j + 1) * schema_.n_cov(), row + base);
  }
  return x;
}

namespace {
// Stacks per-unit input matrices into one batch-major (B*T, W) tensor.
Tensor stack_rows(const std::vector<Tensor>& per_unit) {
  std::size_t rows = 0, cols = per_unit[0].cols();
  for (const auto& t : per_unit) rows += t.rows();
  Tensor out({rows, cols});
  std::size_t r = 0;
  for (const auto& t : per_unit) {
    std::copy_n(t.data(), t.size(), out.data() + r * cols);
    r += t.rows();
  }
  return out;
}
} // namespace

TransformerEstimator::ChunkLoss TransformerEstimator::chunk_loss(
    Tape& tape, std::span<const Trajectory* const> units, std::size_t first_target,
    bool train_mode, Rng* dropout_rng) const {
  if (units.empty()) throw DataError("chunk_loss: empty chunk");
  std::size_t T = units[0]->length();
  for (const auto* u : units)
    if (u->length() != T) throw DataError("chunk_loss: trajectories must share one length");
  if (T < 2) throw DataError("chunk_loss: trajectories need at least 2 steps");
  if (first_target < 1 || first_target >= T)
    throw DataError("chunk_loss: first_target outside [1, T)");
  std::size_t B = units.size();
  std::size_t seq = T - 1;           // encoder positions 0..T-2
  std::size_t n_targets = T - first_target;

  // Rows of interest: position t-1 predicts target t.
  std::vector<std::size_t> target_rows;
  target_rows.reserve(B * n_targets);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = first_target; t < T; ++t)
      target_rows.push_back(b * seq + (t - 1));

  ChunkLoss out;
  if (has_cat()) {
    std::vector<Tensor> inputs;
    inputs.reserve(B);
    for (const auto* u : units) inputs.push_back(assemble_inputs(*u, seq, false));
    Tensor x = stack_rows(inputs);
    out.cat_pass = cat_enc_->forward(tape, x, B, seq, train_mode, dropout_rng);
    Tape::NodeId probs = cat_enc_->head_categorical(tape, out.cat_pass);
    Tape::NodeId sel = tape.select_rows(probs, target_rows);
    // One-hot labels for the selected targets.
    std::size_t W = schema_.onehot_width();
    Tensor labels({B * n_targets, W});
    std::size_t r = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = first_target; t < T; ++t, ++r)
        encode_onehot(schema_, units[b]->cov.data() + t * schema_.n_cov(),
                      labels.data() + r * W);
    out.ce_sum = tape.ce_loss_sum(sel, labels);
    out.ce_cells = B * n_targets * schema_.n_cat();
  }
  if (has_cont()) {
    std::vector<Tensor> inputs;
    inputs.reserve(B);
    for (const auto* u : units) inputs.push_back(assemble_inputs(*u, seq, schema_.n_cat() > 0));
    Tensor x = stack_rows(inputs);
    out.cont_pass = cont_enc_->forward(tape, x, B, seq, train_mode, dropout_rng);
    Tape::NodeId preds = cont_enc_->head_continuous(tape, out.cont_pass);
    Tape::NodeId sel = tape.select_rows(preds, target_rows);
    std::size_t D = schema_.n_cont(), off = schema_.cont_offset();
    Tensor targets({B * n_targets, D});
    std::size_t r = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = first_target; t < T; ++t, ++r)
        for (std::size_t d = 0; d < D; ++d)
          targets[r * D + d] = stats_.z_cov(off + d, units[b]->cov.at(t, off + d));
    out.mse_sum = tape.mse_loss_sum(sel, targets);
    out.mse_cells = B * n_targets * D;
  }
  return out;
}

TransformerEstimator::StepPrediction
TransformerEstimator::forward_teacher_forced(const Trajectory& unit, std::size_t t) const {
  if (t < 1 || t >= unit.length())
    throw DataError("forward_teacher_forced: target time outside [1, T)");
  StepPrediction out;
  Tape tape(false);
  if (has_cat()) {
    Tensor x = assemble_inputs(unit, t, false);
    Encoder::Pass pass = cat_enc_->forward(tape, x, 1, t);
    Tape::NodeId probs = cat_enc_->head_categorical(tape, pass);
    out.cat_probs = Tensor({1, schema_.onehot_width()});
    std::copy_n(tape.value(probs).data() + (t - 1) * schema_.onehot_width(),
                schema_.onehot_width(), out.cat_probs.data());
  }
  if (has_cont()) {
    Tensor x = assemble_inputs(unit, t, schema_.n_cat() > 0);
    Encoder::Pass pass = cont_enc_->forward(tape, x, 1, t);
    Tape::NodeId preds = cont_enc_->head_continuous(tape, pass);
    out.cont_means = Tensor({1, schema_.n_cont()});
    std::copy_n(tape.value(preds).data() + (t - 1) * schema_.n_cont(), schema_.n_cont(),
                out.cont_means.data());
  }
  return out;
}

ConditionalDensityEstimator::TeacherForced
TransformerEstimator::predict_teacher_forced(const Trajectory& unit) const {
  std::size_t T = unit.length();
  if (T < 2) throw DataError("predict_teacher_forced: trajectory too short");
  Tape tape(false);
  const Trajectory* uptr = &unit;
  ChunkLoss c = chunk_loss(tape, std::span<const Trajectory* const>(&uptr, 1), 1);
  TeacherForced out;
  if (has_cat()) {
    Tape::NodeId probs_all = -1;
    // chunk_loss already ran the pass; recompute heads on the stored pass.
    probs_all = cat_enc_->head_categorical(tape, c.cat_pass);
    out.cat_probs = tape.value(probs_all);
  }
  if (has_cont()) {
    Tape::NodeId preds_all = cont_enc_->head_continuous(tape, c.cont_pass);
    out.cont_means = tape.value(preds_all);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batched rollout session
// ---------------------------------------------------------------------------

class TransformerRollout : public RolloutSession {
public:
  TransformerRollout(const TransformerEstimator& m, std::size_t n_draws)
      : m_(m), lanes_(n_draws) {}

  void prime(const Trajectory& prefix, std::size_t cov_len) override {
    if (cov_len < 1 || cov_len > prefix.length())
      throw DataError("rollout prime: bad prefix length");
    const Schema& sc = m_.schema_;
    statics_ = prefix.statics;
    last_cov_ = Tensor({lanes_, sc.n_cov()});
    for (std::size_t l = 0; l < lanes_; ++l)
      std::copy_n(prefix.cov.data() + (cov_len - 1) * sc.n_cov(), sc.n_cov(),
                  last_cov_.data() + l * sc.n_cov());
    std::size_t primed = cov_len - 1; // positions 0..cov_len-2
    if (m_.has_cat()) {
      EncoderCache single(*m_.cat_enc_, 1);
      if (primed > 0) single.append(m_.assemble_inputs(prefix, primed, false), primed);
      cat_cache_ = std::make_unique<EncoderCache>(single.replicate(lanes_));
    }
    if (m_.has_cont()) {
      EncoderCache single(*m_.cont_enc_, 1);
      if (primed > 0) single.append(m_.assemble_inputs(prefix, primed, sc.n_cat() > 0), primed);
      cont_cache_ = std::make_unique<EncoderCache>(single.replicate(lanes_));
    }
  }

  void begin_step(const Tensor& treat_rows) override {
    const Schema& sc = m_.schema_;
    if (treat_rows.rows() != lanes_ || treat_rows.cols() != sc.n_treat())
      throw DataError("rollout begin_step: bad treatment shape");
    pending_treat_ = treat_rows;
    if (m_.has_cat()) {
      Tensor x = encode_rows(false, nullptr);
      Tensor hidden = cat_cache_->append(x, 1);
      pending_cat_probs_ = cat_cache_->categorical_probs(hidden);
    }
  }

  Tensor cat_probs(std::size_t d, const std::vector<int>& /*earlier*/) override {
    // The two-encoder factorization treats categorical covariates as
    // conditionally independent given history, so earlier same-step draws
    // do not alter the block's distribution.
    const Schema& sc = m_.schema_;
    std::size_t c0 = 0;
    for (std::size_t i = 0; i < d; ++i) c0 += static_cast<std::size_t>(sc.covariates[i].classes);
    std::size_t C = static_cast<std::size_t>(sc.covariates[d].classes);
    Tensor out({lanes_, C});
    for (std::size_t l = 0; l < lanes_; ++l)
      std::copy_n(pending_cat_probs_.data() + l * sc.onehot_width() + c0, C,
                  out.data() + l * C);
    return out;
  }

  Tensor cont_means(const std::vector<int>& cat_block) override {
    const Schema& sc = m_.schema_;
    std::vector<double> classes(cat_block.begin(), cat_block.end());
    Tensor x = encode_rows(sc.n_cat() > 0, classes.data());
    Tensor hidden = cont_cache_->append(x, 1);
    return cont_cache_->continuous_means(hidden);
  }

  void commit_covariates(const Tensor& cov_rows) override {
    if (!cov_rows.same_shape(last_cov_))
      throw DataError("rollout commit: bad covariate shape");
    last_cov_ = cov_rows;
  }

  std::size_t lanes() const override { return lanes_; }

private:
  /// Encodes the pending position (last_cov, pending_treat[, next cat]) for
  /// every lane. `classes` is lane-major n_cat class indices when
  /// with_next_cat is set.
  Tensor encode_rows(bool with_next_cat, const double* classes) {
    const Schema& sc = m_.schema_;
    std::size_t base = feature_width(sc);
    std::size_t extra = with_next_cat ? sc.onehot_width() : 0;
    Tensor x({lanes_, base + extra});
    const double* st = statics_.empty() ? nullptr : statics_.data();
    for (std::size_t l = 0; l < lanes_; ++l) {
      double* row = x.data() + l * (base + extra);
      encode_features(sc, m_.stats_, last_cov_.data() + l * sc.n_cov(),
                      pending_treat_.data() + l * sc.n_treat(), st, row);
      if (with_next_cat) encode_onehot(sc, classes + l * sc.n_cat(), row + base);
    }
    return x;
  }

  const TransformerEstimator& m_;
  std::size_t lanes_;
  std::vector<double> statics_;
  Tensor last_cov_;          // (lanes, n_cov) raw
  Tensor pending_treat_;     // (lanes, n_treat) raw
  Tensor pending_cat_probs_; // (lanes, onehot_width)
  std::unique_ptr<EncoderCache> cat_cache_, cont_cache_;
};

std::unique_ptr<RolloutSession> TransformerEstimator::make_rollout(std::size_t n_draws) const {
  return std::make_unique<TransformerRollout>(*this, n_draws);
}

} // namespace gcsim
