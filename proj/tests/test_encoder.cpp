#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gcsim/encoder.hpp"
#include "support/finite_diff.hpp"

#include <cmath>

using namespace gcsim;
using gcsim::testing::max_rel_error;

namespace {

EncoderConfig small_config(int input_dim, std::vector<int> cats, int cont) {
  EncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.hidden_dim = 16;
  cfg.num_heads = 4;
  cfg.feedforward_dim = 24;
  cfg.max_sequence_length = 12;
  cfg.input_dim = input_dim;
  cfg.cat_classes = std::move(cats);
  cfg.cont_out = cont;
  return cfg;
}

Tensor random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({rows, cols});
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

Encoder::Pass forge_pass(const Encoder& enc, Tape& tape, const Tensor& hidden) {
  Encoder::Pass pass;
  pass.batch = 1;
  pass.seq_len = hidden.rows();
  for (std::size_t i = 0; i < enc.params().count(); ++i)
    pass.leaves.push_back(tape.leaf(enc.params()[i].value));
  pass.hidden = tape.constant(hidden);
  return pass;
}

void set_param(Encoder& enc, const std::string& name, const Tensor& v) {
  for (std::size_t i = 0; i < enc.params().count(); ++i)
    if (enc.params()[i].name == name) {
      REQUIRE(enc.params()[i].value.same_shape(v));
      enc.params()[i].value = v;
      return;
    }
  FAIL("no such param ", name);
}

} // namespace

TEST_CASE("embed: zero inputs with zero bias leave only the positional encoding") {
  Encoder enc(small_config(5, {}, 3), 1);
  Tape tape(false);
  Encoder::Pass pass;
  for (std::size_t i = 0; i < enc.params().count(); ++i)
    pass.leaves.push_back(tape.leaf(enc.params()[i].value));
  Tensor zeros({6, 5});
  int e = enc.embed(tape, zeros, 1, 6, pass);
  const Tensor& val = tape.value(e);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(val.at(t, c) == enc.positional_table().at(t, c));
}

TEST_CASE("embed: width contract and length overflow are errors") {
  Encoder enc(small_config(5, {}, 3), 1);
  Tape tape(false);
  CHECK_THROWS(enc.forward(tape, Tensor({4, 7}), 1, 4));
  CHECK_THROWS(enc.forward(tape, Tensor({20, 5}), 1, 20));
}

TEST_CASE("embed: permuting two time steps permutes the embedded rows (before positional add)") {
  Encoder enc(small_config(5, {}, 3), 2);
  Tensor x = random_input(6, 5, 7);
  Tensor xp = x;
  for (std::size_t c = 0; c < 5; ++c) std::swap(xp.at(1, c), xp.at(4, c));
  Tape tape(false);
  Encoder::Pass p1, p2;
  for (std::size_t i = 0; i < enc.params().count(); ++i) {
    p1.leaves.push_back(tape.leaf(enc.params()[i].value));
    p2.leaves.push_back(p1.leaves.back());
  }
  Tensor e1 = tape.value(enc.embed(tape, x, 1, 6, p1));
  Tensor e2 = tape.value(enc.embed(tape, xp, 1, 6, p2));
  for (std::size_t t = 0; t < 6; ++t) {
    std::size_t src = t == 1 ? 4 : (t == 4 ? 1 : t);
    for (std::size_t c = 0; c < 16; ++c) {
      double lhs = e2.at(t, c) - enc.positional_table().at(t, c);
      double rhs = e1.at(src, c) - enc.positional_table().at(src, c);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention over a length-1 sequence is identity mixing") {
  Tape tape(false);
  Rng rng(3);
  Tensor q({1, 8}), k({1, 8}), v({1, 8});
  for (auto* t : {&q, &k, &v})
    for (auto& x : t->values()) x = rng.normal();
  int o = tape.causal_attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, 1, 2);
  for (std::size_t c = 0; c < 8; ++c) CHECK(tape.value(o)[c] == v[c]);
}

TEST_CASE("causality: perturbing position t leaves outputs before t bitwise unchanged") {
  Encoder enc(small_config(4, {}, 2), 9);
  Tensor x = random_input(8, 4, 11);
  Tape tape(false);
  Tensor base = tape.value(enc.forward(tape, x, 1, 8).hidden);
  Tensor xp = x;
  std::size_t t = 5;
  for (std::size_t c = 0; c < 4; ++c) xp.at(t, c) += 0.37;
  Tape tape2(false);
  Tensor pert = tape2.value(enc.forward(tape2, xp, 1, 8).hidden);
  double change_before = 0.0, change_after = 0.0;
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      double d = std::abs(pert.at(r, c) - base.at(r, c));
      if (r < t)
        change_before = std::max(change_before, d);
      else
        change_after = std::max(change_after, d);
    }
  CHECK(change_before == 0.0); // exact: earlier positions never see position t
  CHECK(change_after > 0.0);
}

TEST_CASE("per-prefix encoding equals the position outputs of one masked pass") {
  Encoder enc(small_config(4, {}, 2), 13);
  Tensor x = random_input(8, 4, 17);
  Tape tape(false);
  Tensor full = tape.value(enc.forward(tape, x, 1, 8).hidden);
  for (std::size_t t = 1; t <= 8; ++t) {
    Tensor prefix({t, 4});
    std::copy_n(x.data(), t * 4, prefix.data());
    Tape t2(false);
    Tensor h = t2.value(enc.forward(t2, prefix, 1, t).hidden);
    for (std::size_t c = 0; c < 16; ++c) {
      double rel = std::abs(h.at(t - 1, c) - full.at(t - 1, c)) /
                   std::max(1.0, std::abs(full.at(t - 1, c)));
      CHECK(rel < 1e-10);
    }
  }
}

TEST_CASE("batched forward equals per-unit forwards") {
  Encoder enc(small_config(4, {2}, 1), 21);
  Tensor a = random_input(6, 4, 31), b = random_input(6, 4, 32);
  Tensor stacked({12, 4});
  std::copy_n(a.data(), 24, stacked.data());
  std::copy_n(b.data(), 24, stacked.data() + 24);
  Tape tape(false);
  Tensor batch = tape.value(enc.forward(tape, stacked, 2, 6).hidden);
  Tape t1(false), t2(false);
  Tensor ha = t1.value(enc.forward(t1, a, 1, 6).hidden);
  Tensor hb = t2.value(enc.forward(t2, b, 1, 6).hidden);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(batch[i] == doctest::Approx(ha[i]).epsilon(1e-12));
    CHECK(batch[i + ha.size()] == doctest::Approx(hb[i]).epsilon(1e-12));
  }
}

TEST_CASE("head_categorical: zero weights give the uniform distribution per covariate") {
  Encoder enc(small_config(4, {3, 2}, 0), 23);
  set_param(enc, "head.cat.w", Tensor({16, 5}));
  set_param(enc, "head.cat.b", Tensor({5}));
  Tape tape(false);
  Encoder::Pass pass = forge_pass(enc, tape, random_input(3, 16, 41));
  Tensor probs = tape.value(enc.head_categorical(tape, pass));
  for (std::size_t r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) CHECK(probs.at(r, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    for (int c = 3; c < 5; ++c) CHECK(probs.at(r, c) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("head_categorical: probability vectors per covariate sum to one") {
  Encoder enc(small_config(4, {3, 2}, 0), 29);
  Tape tape(false);
  Encoder::Pass pass = forge_pass(enc, tape, random_input(5, 16, 43));
  Tensor probs = tape.value(enc.head_categorical(tape, pass));
  for (std::size_t r = 0; r < 5; ++r) {
    double s1 = probs.at(r, 0) + probs.at(r, 1) + probs.at(r, 2);
    double s2 = probs.at(r, 3) + probs.at(r, 4);
    CHECK(std::abs(s1 - 1.0) <= 1e-12);
    CHECK(std::abs(s2 - 1.0) <= 1e-12);
    for (std::size_t c = 0; c < 5; ++c) CHECK(probs.at(r, c) >= 0.0);
  }
}

TEST_CASE("head_categorical: bias logits (ln1, ln2, ln3) give (1/6, 2/6, 3/6)") {
  Encoder enc(small_config(4, {3}, 0), 31);
  set_param(enc, "head.cat.w", Tensor({16, 3}));
  set_param(enc, "head.cat.b", Tensor::row({std::log(1.0), std::log(2.0), std::log(3.0)}));
  Tape tape(false);
  Encoder::Pass pass = forge_pass(enc, tape, random_input(1, 16, 47));
  Tensor probs = tape.value(enc.head_categorical(tape, pass));
  CHECK(probs[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(probs[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("head_continuous: zero weights broadcast the bias; affine identity holds") {
  Encoder enc(small_config(4, {}, 3), 37);
  set_param(enc, "head.cont.w", Tensor({16, 3}));
  set_param(enc, "head.cont.b", Tensor::row({1.5, -2.0, 0.25}));
  Tape tape(false);
  Encoder::Pass pass = forge_pass(enc, tape, random_input(2, 16, 53));
  Tensor out = tape.value(enc.head_continuous(tape, pass));
  CHECK(out.cols() == 3); // width equals the continuous output count
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out.at(r, 0) == 1.5);
    CHECK(out.at(r, 1) == -2.0);
    CHECK(out.at(r, 2) == 0.25);
  }

  // affine identity: head(alpha*h) = alpha*head(h) + (1-alpha)*bias
  Encoder enc2(small_config(4, {}, 3), 39);
  Tensor h = random_input(2, 16, 59);
  Tensor ah = h;
  double alpha = 0.37;
  for (auto& v : ah.values()) v *= alpha;
  Tape t2(false);
  Encoder::Pass pa = forge_pass(enc2, t2, h);
  Tensor y = t2.value(enc2.head_continuous(t2, pa));
  Encoder::Pass pb = forge_pass(enc2, t2, ah);
  Tensor ya = t2.value(enc2.head_continuous(t2, pb));
  const Tensor& bias = enc2.params()[enc2.params().count() - 1].value;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(ya.at(r, c) ==
            doctest::Approx(alpha * y.at(r, c) + (1 - alpha) * bias[c]).epsilon(1e-10));
}

TEST_CASE("full encoder block passes the finite-difference gradient check") {
  EncoderConfig cfg = small_config(3, {2}, 0);
  cfg.num_layers = 1;
  cfg.hidden_dim = 8;
  cfg.num_heads = 2;
  cfg.feedforward_dim = 12;
  Encoder enc(cfg, 61);
  Tensor x = random_input(4, 3, 67);
  Tensor onehot({4, 2});
  Rng lr(71);
  for (std::size_t r = 0; r < 4; ++r) onehot.at(r, lr.index(2)) = 1.0;

  auto loss_with = [&](Encoder& e) {
    Tape tape(false);
    Encoder::Pass pass = e.forward(tape, x, 1, 4);
    return tape.value(tape.ce_loss_sum(e.head_categorical(tape, pass), onehot))[0];
  };
  Tape tape;
  Encoder::Pass pass = enc.forward(tape, x, 1, 4);
  tape.backward(tape.ce_loss_sum(enc.head_categorical(tape, pass), onehot));
  auto sink = enc.params().make_grad_sink();
  enc.collect_grads(tape, pass, sink);

  for (std::size_t pi = 0; pi < enc.params().count(); ++pi) {
    const std::string& name = enc.params()[pi].name;
    CAPTURE(name);
    Tensor& value = enc.params()[pi].value;
    auto f = [&](const Tensor& v) {
      Tensor saved = value;
      value = v;
      double out = loss_with(enc);
      value = saved;
      return out;
    };
    CHECK(max_rel_error(f, value, sink[pi], 1e-5, 1e-5) < 1e-4);
  }
}

TEST_CASE("incremental cache reproduces the masked forward pass") {
  Encoder enc(small_config(5, {2}, 0), 73);
  Tensor x = random_input(7, 5, 79);
  Tape tape(false);
  Encoder::Pass pass = enc.forward(tape, x, 1, 7);
  Tensor full = tape.value(pass.hidden);
  Tensor full_probs = tape.value(enc.head_categorical(tape, pass));

  EncoderCache cache(enc, 1);
  // Block prefill for the first 3 positions, then one position at a time.
  Tensor block({3, 5});
  std::copy_n(x.data(), 15, block.data());
  Tensor h = cache.append(block, 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(h.at(r, c) == doctest::Approx(full.at(r, c)).epsilon(1e-10));
  for (std::size_t t = 3; t < 7; ++t) {
    Tensor row({1, 5});
    std::copy_n(x.data() + t * 5, 5, row.data());
    Tensor ht = cache.append(row, 1);
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(ht[c] == doctest::Approx(full.at(t, c)).epsilon(1e-10));
    Tensor probs = cache.categorical_probs(ht);
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(probs[c] == doctest::Approx(full_probs.at(t, c)).epsilon(1e-10));
  }

  // Lane replication preserves values across all lanes.
  EncoderCache single(enc, 1);
  single.append(block, 3);
  EncoderCache wide = single.replicate(4);
  Tensor rows({4, 5});
  for (int l = 0; l < 4; ++l) std::copy_n(x.data() + 3 * 5, 5, rows.data() + l * 5);
  Tensor hw = wide.append(rows, 1);
  for (int l = 0; l < 4; ++l)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(hw.at(l, c) == doctest::Approx(full.at(3, c)).epsilon(1e-10));
}
