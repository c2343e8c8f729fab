#include "gcsim/training.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

namespace gcsim {

void TrainConfig::validate(std::size_t traj_len) const {
  if (max_epochs < 1) throw UsageError("train config: max_epochs must be >= 1");
  if (patience > max_epochs) throw UsageError("train config: patience exceeds max_epochs");
  if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
  if (first_target < 1) throw UsageError("train config: first predicted step must be >= 1");
  if (horizon != 0 && static_cast<std::size_t>(horizon) != traj_len)
    throw DataError("train config: horizon " + std::to_string(horizon) +
                    " does not match trajectory length " + std::to_string(traj_len));
  if (static_cast<std::size_t>(first_target) >= traj_len)
    throw UsageError("train config: first_target must precede the horizon");
}

double loss_ce(const Tensor& probs, const Tensor& onehot, std::size_t n_covariates) {
  if (!probs.same_shape(onehot)) throw DataError("loss_ce: shape mismatch");
  if (n_covariates == 0) throw DataError("loss_ce: no categorical covariates");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (onehot[i] != 0.0) sum -= onehot[i] * std::log(std::max(probs[i], Tape::kCeClamp));
  return sum / (static_cast<double>(probs.rows()) * static_cast<double>(n_covariates));
}

double loss_mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw DataError("loss_mse: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - target[i];
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

std::uint64_t TrainLog::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : epochs) {
    mix(e.train_total);
    mix(e.val_total);
  }
  mix(static_cast<double>(best_epoch));
  return h;
}

namespace {

struct EpochTotals {
  double ce = 0.0, mse = 0.0;
  std::size_t ce_cells = 0, mse_cells = 0;
  long clamp_hits = 0;

  void add(const Trainable::ChunkOut& c) {
    ce += c.ce_sum;
    mse += c.mse_sum;
    ce_cells += c.ce_cells;
    mse_cells += c.mse_cells;
    clamp_hits += c.clamp_hits;
  }
  double mean_ce() const { return ce_cells ? ce / static_cast<double>(ce_cells) : 0.0; }
  double mean_mse() const { return mse_cells ? mse / static_cast<double>(mse_cells) : 0.0; }
  double total() const { return mean_ce() + mean_mse(); }
};

// Runs chunks of `units` across up to cfg.threads workers; reduction order
// is fixed by chunk index regardless of completion order.
void run_batch(Trainable& model, const std::vector<const Trajectory*>& units, bool train_mode,
               std::uint64_t batch_seed, double ce_scale, double mse_scale, int threads,
               std::vector<std::vector<Tensor>>* sinks, EpochTotals& totals) {
  int n_chunks = std::min<int>(threads, static_cast<int>(units.size()));
  std::vector<Trainable::ChunkOut> outs(n_chunks);
  std::vector<std::vector<std::vector<Tensor>>> chunk_sinks(n_chunks);
  std::size_t per = (units.size() + n_chunks - 1) / n_chunks;

  auto run_one = [&](int ci) {
    std::size_t lo = ci * per;
    std::size_t hi = std::min(units.size(), lo + per);
    if (lo >= hi) return;
    std::vector<std::vector<Tensor>>* sink_ptr = nullptr;
    if (sinks) {
      for (ParamSet* ps : model.param_sets)
        chunk_sinks[ci].push_back(ps->make_grad_sink());
      sink_ptr = &chunk_sinks[ci];
    }
    outs[ci] = model.run_chunk(std::span<const Trajectory* const>(units.data() + lo, hi - lo),
                               train_mode, derive_seed(batch_seed, "chunk", ci), ce_scale,
                               mse_scale, sink_ptr);
  };

  if (n_chunks == 1) {
    run_one(0);
  } else {
    std::vector<std::thread> pool;
    for (int ci = 1; ci < n_chunks; ++ci) pool.emplace_back(run_one, ci);
    run_one(0);
    for (auto& th : pool) th.join();
  }
  for (int ci = 0; ci < n_chunks; ++ci) {
    totals.add(outs[ci]);
    if (sinks)
      for (std::size_t p = 0; p < sinks->size(); ++p) {
        if (chunk_sinks[ci].empty()) continue;
        auto& dst = (*sinks)[p];
        const auto& src = chunk_sinks[ci][p];
        for (std::size_t i = 0; i < dst.size(); ++i)
          for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
      }
  }
}

} // namespace

TrainLog train_loop(Trainable& model, std::span<const Trajectory> train_units,
                    std::span<const Trajectory> val_units, const TrainConfig& cfg) {
  if (train_units.empty() || val_units.empty())
    throw DataError("train: empty training or validation split");
  cfg.validate(train_units[0].length());

  std::vector<const Trajectory*> order;
  order.reserve(train_units.size());
  for (const auto& u : train_units) order.push_back(&u);
  std::vector<const Trajectory*> val_ptrs;
  val_ptrs.reserve(val_units.size());
  for (const auto& u : val_units) val_ptrs.push_back(&u);

  std::vector<Adam> opts;
  for (std::size_t i = 0; i < model.param_sets.size(); ++i) opts.emplace_back(cfg.adam);

  TrainLog log;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<Tensor>> best_snapshot;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double lr = cfg.schedule.at(epoch);
    // Seeded Fisher-Yates shuffle.
    Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);

    EpochTotals train_totals;
    std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      std::size_t lo = bi * cfg.batch_size;
      std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<const Trajectory*> batch(order.begin() + lo, order.begin() + hi);
      // Cell counts over the whole batch pin the mean-loss scale so that
      // chunked gradients add up to exactly the full-batch gradient.
      std::size_t ce_cells = 0, mse_cells = 0;
      for (const auto* u : batch) {
        auto [c, m] = model.cells(*u);
        ce_cells += c;
        mse_cells += m;
      }
      double ce_scale = ce_cells ? 1.0 / static_cast<double>(ce_cells) : 0.0;
      double mse_scale = mse_cells ? 1.0 / static_cast<double>(mse_cells) : 0.0;

      std::vector<std::vector<Tensor>> sinks;
      for (ParamSet* ps : model.param_sets) sinks.push_back(ps->make_grad_sink());
      EpochTotals batch_totals;
      run_batch(model, batch, true, derive_seed(cfg.seed, "train.batch", epoch, bi), ce_scale,
                mse_scale, cfg.threads, &sinks, batch_totals);
      if (!std::isfinite(batch_totals.ce) || !std::isfinite(batch_totals.mse))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(bi));
      train_totals.add({batch_totals.ce, batch_totals.mse, batch_totals.ce_cells,
                        batch_totals.mse_cells, batch_totals.clamp_hits});
      for (std::size_t p = 0; p < model.param_sets.size(); ++p) {
        model.param_sets[p]->zero_grads();
        model.param_sets[p]->accumulate_grads(sinks[p]);
        opts[p].step(*model.param_sets[p], lr);
      }
    }

    EpochTotals val_totals;
    run_batch(model, val_ptrs, false, derive_seed(cfg.seed, "val", epoch), 0.0, 0.0, cfg.threads,
              nullptr, val_totals);
    if (!std::isfinite(val_totals.total()))
      throw NumericalError("train: non-finite validation loss at epoch " + std::to_string(epoch));

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.train_ce = train_totals.mean_ce();
    el.train_mse = train_totals.mean_mse();
    el.train_total = train_totals.total();
    el.val_ce = val_totals.mean_ce();
    el.val_mse = val_totals.mean_mse();
    el.val_total = val_totals.total();
    log.ce_clamp_hits += train_totals.clamp_hits;

    if (el.val_total < best_val) {
      best_val = el.val_total;
      log.best_epoch = epoch;
      epochs_since_best = 0;
      el.is_best = true;
      best_snapshot.clear();
      for (ParamSet* ps : model.param_sets) best_snapshot.push_back(ps->snapshot_values());
    } else {
      ++epochs_since_best;
    }
    log.epochs.push_back(el);
    if (epochs_since_best > cfg.patience) break;
  }

  log.best_val = best_val;
  if (!best_snapshot.empty())
    for (std::size_t p = 0; p < model.param_sets.size(); ++p)
      model.param_sets[p]->restore_values(best_snapshot[p]);
  return log;
}

TrainLog train(TransformerEstimator& model, std::span<const Trajectory> train_units,
               std::span<const Trajectory> val_units, const TrainConfig& cfg) {
  Trainable t;
  if (model.has_cat()) t.param_sets.push_back(&model.cat_encoder()->params());
  if (model.has_cont()) t.param_sets.push_back(&model.cont_encoder()->params());
  std::size_t ft = static_cast<std::size_t>(cfg.first_target);
  const Schema& sc = model.schema();
  t.cells = [&sc, ft](const Trajectory& u) {
    std::size_t targets = u.length() > ft ? u.length() - ft : 0;
    return std::make_pair(targets * sc.n_cat(), targets * sc.n_cont());
  };
  t.run_chunk = [&model, ft](std::span<const Trajectory* const> units, bool train_mode,
                             std::uint64_t dropout_seed, double ce_scale, double mse_scale,
                             std::vector<std::vector<Tensor>>* sinks) {
    Tape tape(sinks != nullptr);
    Rng drop_rng(dropout_seed);
    auto chunk = model.chunk_loss(tape, units, ft, train_mode, &drop_rng);
    Trainable::ChunkOut out;
    out.ce_cells = chunk.ce_cells;
    out.mse_cells = chunk.mse_cells;
    out.clamp_hits = tape.ce_clamp_hits();
    if (chunk.ce_sum >= 0) out.ce_sum = tape.value(chunk.ce_sum)[0];
    if (chunk.mse_sum >= 0) out.mse_sum = tape.value(chunk.mse_sum)[0];
    if (sinks) {
      Tape::NodeId loss = -1;
      if (chunk.ce_sum >= 0) loss = tape.scale(chunk.ce_sum, ce_scale);
      if (chunk.mse_sum >= 0) {
        Tape::NodeId m = tape.scale(chunk.mse_sum, mse_scale);
        loss = loss < 0 ? m : tape.add(loss, m);
      }
      tape.backward(loss);
      std::size_t p = 0;
      if (model.has_cat()) model.cat_encoder()->collect_grads(tape, chunk.cat_pass, (*sinks)[p++]);
      if (model.has_cont()) model.cont_encoder()->collect_grads(tape, chunk.cont_pass, (*sinks)[p]);
    }
    return out;
  };
  return train_loop(t, train_units, val_units, cfg);
}

TrainLog fit_observational_policy(PolicyModel& policy, std::span<const Trajectory> train_units,
                                  std::span<const Trajectory> val_units, const TrainConfig& cfg) {
  Trainable t;
  t.param_sets.push_back(&policy.encoder().params());
  const Schema& sc = policy.schema();
  const auto& dose_cols = policy.dose_columns();
  t.cells = [&sc, &dose_cols](const Trajectory& u) {
    std::size_t nonzero = 0;
    for (std::size_t tt = 0; tt < u.length(); ++tt)
      for (std::size_t k : dose_cols)
        if (u.treat.at(tt, k) != 0.0) ++nonzero;
    return std::make_pair(u.length() * sc.n_treat(), nonzero);
  };
  t.run_chunk = [&policy](std::span<const Trajectory* const> units, bool train_mode,
                          std::uint64_t dropout_seed, double ce_scale, double mse_scale,
                          std::vector<std::vector<Tensor>>* sinks) {
    Tape tape(sinks != nullptr);
    Rng drop_rng(dropout_seed);
    auto chunk = policy.chunk_loss(tape, units, train_mode, &drop_rng);
    Trainable::ChunkOut out;
    out.ce_cells = chunk.ce_cells;
    out.mse_cells = chunk.mse_cells;
    out.clamp_hits = tape.ce_clamp_hits();
    if (chunk.ce_sum >= 0) out.ce_sum = tape.value(chunk.ce_sum)[0];
    if (chunk.mse_sum >= 0) out.mse_sum = tape.value(chunk.mse_sum)[0];
    if (sinks) {
      Tape::NodeId loss = tape.scale(chunk.ce_sum, ce_scale);
      if (chunk.mse_sum >= 0 && chunk.mse_cells > 0)
        loss = tape.add(loss, tape.scale(chunk.mse_sum, mse_scale));
      tape.backward(loss);
      policy.encoder().collect_grads(tape, chunk.pass, (*sinks)[0]);
    }
    return out;
  };
  TrainLog log = train_loop(t, train_units, val_units, cfg);

  // Dose residual pools from the validation split (nonzero cells only),
  // normalized units.
  if (!dose_cols.empty()) {
    for (auto& pool : policy.dose_residuals()) pool.clear();
    for (const auto& u : val_units) {
      Tape tape(false);
      const Trajectory* up = &u;
      auto chunk = policy.chunk_loss(tape, std::span<const Trajectory* const>(&up, 1), false);
      Tensor doses = tape.value(policy.encoder().head_continuous(tape, chunk.pass));
      for (std::size_t tt = 0; tt < u.length(); ++tt)
        for (std::size_t k = 0; k < dose_cols.size(); ++k) {
          double v = u.treat.at(tt, dose_cols[k]);
          if (v != 0.0)
            policy.dose_residuals()[k].push_back(policy.stats().z_treat(dose_cols[k], v) -
                                                 doses.at(tt, k));
        }
    }
  }
  return log;
}

} // namespace gcsim
