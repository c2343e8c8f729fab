#include "gcsim/policy.hpp"

#include "gcsim/errors.hpp"

#include <cmath>

namespace gcsim {

PolicyModel::PolicyModel(Schema schema, NormStats stats, TransformerHyperparams hp,
                         std::uint64_t init_seed)
    : schema_(std::move(schema)), stats_(std::move(stats)), hp_(hp) {
  schema_.validate();
  if (schema_.n_treat() == 0) throw DataError("policy model: schema has no treatments");
  EncoderConfig cfg;
  cfg.num_layers = hp_.num_layers;
  cfg.hidden_dim = hp_.hidden_dim;
  cfg.num_heads = hp_.num_heads;
  cfg.feedforward_dim = hp_.ffn_dim();
  cfg.max_sequence_length = hp_.max_sequence_length;
  cfg.input_dim = static_cast<int>(feature_width(schema_));
  cfg.cat_classes.assign(schema_.n_treat(), 2);
  for (std::size_t j = 0; j < schema_.n_treat(); ++j)
    if (schema_.treatments[j].kind == VarKind::Continuous) dose_cols_.push_back(j);
  cfg.cont_out = static_cast<int>(dose_cols_.size());
  cfg.dropout = hp_.dropout;
  enc_ = std::make_unique<Encoder>(cfg, derive_seed(init_seed, "policy"));
  dose_residuals_.resize(dose_cols_.size());
}

Tensor PolicyModel::assemble_inputs(const Trajectory& unit, std::size_t seq_len) const {
  // Position tau conditions on (L_tau, A_{tau-1}); A_{-1} is the zero action.
  std::size_t W = feature_width(schema_);
  Tensor x({seq_len, W});
  const double* statics = unit.statics.empty() ? nullptr : unit.statics.data();
  std::vector<double> zero_treat(schema_.n_treat(), 0.0);
  for (std::size_t j = 0; j < seq_len; ++j) {
    const double* prev = j == 0 ? zero_treat.data() : unit.treat.data() + (j - 1) * schema_.n_treat();
    encode_features(schema_, stats_, unit.cov.data() + j * schema_.n_cov(), prev, statics,
                    x.data() + j * W);
  }
  return x;
}

PolicyModel::ChunkLoss PolicyModel::chunk_loss(Tape& tape,
                                               std::span<const Trajectory* const> units,
                                               bool train_mode, Rng* dropout_rng) const {
  if (units.empty()) throw DataError("policy chunk_loss: empty chunk");
  std::size_t T = units[0]->length();
  for (const auto* u : units)
    if (u->length() != T) throw DataError("policy chunk_loss: unequal lengths");
  std::size_t B = units.size();
  std::size_t nt = schema_.n_treat();

  Tensor x({B * T, feature_width(schema_)});
  for (std::size_t b = 0; b < B; ++b) {
    Tensor xb = assemble_inputs(*units[b], T);
    std::copy_n(xb.data(), xb.size(), x.data() + b * T * x.cols());
  }
  ChunkLoss out;
  out.pass = enc_->forward(tape, x, B, T, train_mode, dropout_rng);
  Tape::NodeId probs = enc_->head_categorical(tape, out.pass);

  Tensor labels({B * T, 2 * nt});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < nt; ++j) {
        bool taken = units[b]->treat.at(t, j) != 0.0;
        labels[(b * T + t) * 2 * nt + 2 * j + (taken ? 1 : 0)] = 1.0;
      }
  out.ce_sum = tape.ce_loss_sum(probs, labels);
  out.ce_cells = B * T * nt;

  if (!dose_cols_.empty()) {
    Tape::NodeId doses = enc_->head_continuous(tape, out.pass);
    std::size_t nd = dose_cols_.size();
    Tensor target({B * T, nd});
    Tensor mask({B * T, nd});
    std::size_t nonzero = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < nd; ++k) {
          double v = units[b]->treat.at(t, dose_cols_[k]);
          if (v != 0.0) {
            target[(b * T + t) * nd + k] = stats_.z_treat(dose_cols_[k], v);
            mask[(b * T + t) * nd + k] = 1.0;
            ++nonzero;
          }
        }
    Tape::NodeId masked = tape.mul(doses, tape.constant(mask));
    out.mse_sum = tape.mse_loss_sum(masked, target);
    out.mse_cells = nonzero;
  }
  return out;
}

Tensor PolicyModel::indicator_probs(const Trajectory& unit) const {
  Tape tape(false);
  std::size_t T = unit.length();
  Tensor x = assemble_inputs(unit, T);
  Encoder::Pass pass = enc_->forward(tape, x, 1, T);
  return tape.value(enc_->head_categorical(tape, pass));
}

PolicyModel::Session::Session(const PolicyModel& m, std::size_t lanes) : m_(m), lanes_(lanes) {}

void PolicyModel::Session::prime(const Trajectory& prefix, std::size_t cov_len) {
  statics_ = prefix.statics;
  std::size_t primed = cov_len - 1; // positions 0..cov_len-2
  EncoderCache single(*m_.enc_, 1);
  if (primed > 0) single.append(m_.assemble_inputs(prefix, primed), primed);
  cache_ = std::make_unique<EncoderCache>(single.replicate(lanes_));
}

Tensor PolicyModel::Session::encode_rows(const Tensor& cov_rows, const Tensor& prev_treat_rows) const {
  std::size_t W = feature_width(m_.schema_);
  Tensor x({lanes_, W});
  const double* st = statics_.empty() ? nullptr : statics_.data();
  for (std::size_t l = 0; l < lanes_; ++l)
    encode_features(m_.schema_, m_.stats_, cov_rows.data() + l * m_.schema_.n_cov(),
                    prev_treat_rows.data() + l * m_.schema_.n_treat(), st, x.data() + l * W);
  return x;
}

PolicyModel::Session::StepOut PolicyModel::Session::step(const Tensor& cov_rows,
                                                         const Tensor& prev_treat_rows) {
  Tensor hidden = cache_->append(encode_rows(cov_rows, prev_treat_rows), 1);
  StepOut out;
  out.indicator_probs = cache_->categorical_probs(hidden);
  if (!m_.dose_cols_.empty()) out.dose_means = cache_->continuous_means(hidden);
  return out;
}

} // namespace gcsim
