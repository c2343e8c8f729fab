#include "gcsim/config.hpp"

#include "gcsim/errors.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace gcsim {

using nlohmann::json;

namespace {

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;

  json g;
  g["kind"] = c.generator.kind;
  g["n_train"] = c.generator.n_train;
  g["n_val"] = c.generator.n_val;
  g["n_test"] = c.generator.n_test;
  const auto& tu = c.generator.tumor;
  g["tumor"] = {{"horizon", tu.horizon},
                {"cf_window", tu.cf_window},
                {"max_volume", tu.max_volume},
                {"growth_mean", tu.growth_mean},
                {"growth_sd", tu.growth_sd},
                {"chemo_effect_mean", tu.chemo_effect_mean},
                {"chemo_effect_sd", tu.chemo_effect_sd},
                {"chemo_decay", tu.chemo_decay},
                {"chemo_dose", tu.chemo_dose},
                {"radio_alpha_mean", tu.radio_alpha_mean},
                {"radio_alpha_sd", tu.radio_alpha_sd},
                {"radio_beta_ratio", tu.radio_beta_ratio},
                {"radio_dose", tu.radio_dose},
                {"noise_sd", tu.noise_sd},
                {"policy_window", tu.policy_window},
                {"policy_gamma", tu.policy_gamma},
                {"policy_center_frac", tu.policy_center_frac},
                {"init_log_mean", tu.init_log_mean},
                {"init_log_sd", tu.init_log_sd}};
  const auto& he = c.generator.hemo;
  g["hemo"] = {{"horizon", he.horizon},     {"switch_time", he.switch_time},
               {"noise_scale", he.noise_scale}, {"tbv_leak", he.tbv_leak},
               {"tpr_leak", he.tpr_leak},   {"fluid_gain", he.fluid_gain},
               {"vaso_gain", he.vaso_gain}};
  const auto& md = c.generator.mdp;
  g["mdp"] = {{"classes", md.classes},
              {"horizon", md.horizon},
              {"n_units", md.n_units},
              {"action_insensitive", md.action_insensitive},
              {"max_paths", md.max_paths}};
  j["generator"] = g;

  json m;
  m["kind"] = c.model.kind;
  m["transformer"] = {{"num_layers", c.model.transformer.num_layers},
                      {"hidden_dim", c.model.transformer.hidden_dim},
                      {"num_heads", c.model.transformer.num_heads},
                      {"feedforward_dim", c.model.transformer.feedforward_dim},
                      {"max_sequence_length", c.model.transformer.max_sequence_length},
                      {"dropout", c.model.transformer.dropout}};
  m["linear"] = {{"lag_window", c.model.linear.lag_window},
                 {"ridge", c.model.linear.ridge},
                 {"logistic_iters", c.model.linear.logistic_iters},
                 {"logistic_lr", c.model.linear.logistic_lr}};
  j["model"] = m;

  j["train"] = {{"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"batch_size", c.train.batch_size},
                {"base_lr", c.train.base_lr},
                {"lr_t0", c.train.schedule.t0},
                {"lr_eta_min", c.train.schedule.eta_min},
                {"first_target", c.train.first_target},
                {"weight_decay", c.train.adam.weight_decay}};

  j["simulation"] = {{"n_draws", c.simulation.n_draws},
                     {"start", c.simulation.start},
                     {"horizon", c.simulation.horizon},
                     {"store_draws", c.simulation.store_draws},
                     {"joint_residual_draws", c.simulation.joint_residual_draws},
                     {"clip_to_bounds", c.simulation.clip_to_bounds},
                     {"regimes", c.simulation.regimes}};

  j["evaluation"] = {{"metrics", c.evaluation.metrics},
                     {"q_low", c.evaluation.q_low},
                     {"q_high", c.evaluation.q_high}};
  return j;
}

template <typename T> void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void from_json_into(const json& j, ExperimentConfig& c) {
  maybe(j, "seed", c.seed);
  maybe(j, "output_dir", c.output_dir);
  maybe(j, "threads", c.threads);
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    maybe(g, "kind", c.generator.kind);
    maybe(g, "n_train", c.generator.n_train);
    maybe(g, "n_val", c.generator.n_val);
    maybe(g, "n_test", c.generator.n_test);
    if (g.contains("tumor")) {
      const json& t = g.at("tumor");
      auto& tu = c.generator.tumor;
      maybe(t, "horizon", tu.horizon);
      maybe(t, "cf_window", tu.cf_window);
      maybe(t, "max_volume", tu.max_volume);
      maybe(t, "growth_mean", tu.growth_mean);
      maybe(t, "growth_sd", tu.growth_sd);
      maybe(t, "chemo_effect_mean", tu.chemo_effect_mean);
      maybe(t, "chemo_effect_sd", tu.chemo_effect_sd);
      maybe(t, "chemo_decay", tu.chemo_decay);
      maybe(t, "chemo_dose", tu.chemo_dose);
      maybe(t, "radio_alpha_mean", tu.radio_alpha_mean);
      maybe(t, "radio_alpha_sd", tu.radio_alpha_sd);
      maybe(t, "radio_beta_ratio", tu.radio_beta_ratio);
      maybe(t, "radio_dose", tu.radio_dose);
      maybe(t, "noise_sd", tu.noise_sd);
      maybe(t, "policy_window", tu.policy_window);
      maybe(t, "policy_gamma", tu.policy_gamma);
      maybe(t, "policy_center_frac", tu.policy_center_frac);
      maybe(t, "init_log_mean", tu.init_log_mean);
      maybe(t, "init_log_sd", tu.init_log_sd);
    }
    if (g.contains("hemo")) {
      const json& h = g.at("hemo");
      auto& he = c.generator.hemo;
      maybe(h, "horizon", he.horizon);
      maybe(h, "switch_time", he.switch_time);
      maybe(h, "noise_scale", he.noise_scale);
      maybe(h, "tbv_leak", he.tbv_leak);
      maybe(h, "tpr_leak", he.tpr_leak);
      maybe(h, "fluid_gain", he.fluid_gain);
      maybe(h, "vaso_gain", he.vaso_gain);
    }
    if (g.contains("mdp")) {
      const json& m = g.at("mdp");
      auto& md = c.generator.mdp;
      maybe(m, "classes", md.classes);
      maybe(m, "horizon", md.horizon);
      maybe(m, "n_units", md.n_units);
      maybe(m, "action_insensitive", md.action_insensitive);
      maybe(m, "max_paths", md.max_paths);
    }
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe(m, "kind", c.model.kind);
    if (m.contains("transformer")) {
      const json& t = m.at("transformer");
      auto& hp = c.model.transformer;
      maybe(t, "num_layers", hp.num_layers);
      maybe(t, "hidden_dim", hp.hidden_dim);
      maybe(t, "num_heads", hp.num_heads);
      maybe(t, "feedforward_dim", hp.feedforward_dim);
      maybe(t, "max_sequence_length", hp.max_sequence_length);
      maybe(t, "dropout", hp.dropout);
    }
    if (m.contains("linear")) {
      const json& l = m.at("linear");
      auto& lc = c.model.linear;
      maybe(l, "lag_window", lc.lag_window);
      maybe(l, "ridge", lc.ridge);
      maybe(l, "logistic_iters", lc.logistic_iters);
      maybe(l, "logistic_lr", lc.logistic_lr);
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "max_epochs", c.train.max_epochs);
    maybe(t, "patience", c.train.patience);
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "base_lr", c.train.base_lr);
    maybe(t, "lr_t0", c.train.schedule.t0);
    maybe(t, "lr_eta_min", c.train.schedule.eta_min);
    maybe(t, "first_target", c.train.first_target);
    maybe(t, "weight_decay", c.train.adam.weight_decay);
    c.train.schedule.base = c.train.base_lr;
  }
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    maybe(s, "n_draws", c.simulation.n_draws);
    maybe(s, "start", c.simulation.start);
    maybe(s, "horizon", c.simulation.horizon);
    maybe(s, "store_draws", c.simulation.store_draws);
    maybe(s, "joint_residual_draws", c.simulation.joint_residual_draws);
    maybe(s, "clip_to_bounds", c.simulation.clip_to_bounds);
    maybe(s, "regimes", c.simulation.regimes);
  }
  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    maybe(e, "metrics", c.evaluation.metrics);
    maybe(e, "q_low", c.evaluation.q_low);
    maybe(e, "q_high", c.evaluation.q_high);
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text); // plain string
  }
}

} // namespace

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file " + path);
    try {
      is >> j;
    } catch (const json::parse_error& e) {
      throw UsageError("config parse error in " + path + ": " + e.what());
    }
  }
  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos) throw UsageError("override must be key.path=value: " + ov);
    std::string pathspec = ov.substr(0, eq);
    json value = parse_override_value(ov.substr(eq + 1));
    json* node = &j;
    std::istringstream ps(pathspec);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ps, part, '.')) parts.push_back(part);
    if (parts.empty()) throw UsageError("empty override path: " + ov);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
    (*node)[parts.back()] = value;
  }
  ExperimentConfig cfg;
  from_json_into(j, cfg);
  // Keep the schedule's base in sync with the configured base rate.
  cfg.train.schedule.base = cfg.train.base_lr;
  cfg.train.seed = cfg.seed;
  cfg.train.threads = cfg.threads;
  return cfg;
}

std::string dump_experiment_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

void write_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << dump_experiment_config(cfg) << '\n';
}

std::string experiment_config_hash(const ExperimentConfig& cfg) {
  std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace gcsim
