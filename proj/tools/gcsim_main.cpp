// gcsim: g-computation counterfactual simulation engine.
//
// Subcommands: gen, train, simulate, eval, check, verify-oracle.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include "gcsim/config.hpp"
#include "gcsim/datagen_hemo.hpp"
#include "gcsim/datagen_mdp.hpp"
#include "gcsim/datagen_tumor.hpp"
#include "gcsim/errors.hpp"
#include "gcsim/io.hpp"
#include "gcsim/metrics.hpp"
#include "gcsim/svg.hpp"
#include "gcsim/tabular_estimator.hpp"
#include "gcsim/training.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace gcsim;

namespace {

std::string resolve_out(const std::string& dir) {
  fs::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("GCSIM_OUTPUT_ROOT")) p = fs::path(root) / p;
  }
  fs::create_directories(p);
  return p.string();
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

ExperimentConfig load_cfg(const CommonOpts& c) {
  return load_experiment_config(c.config_path, c.overrides);
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os.precision(17);
  os << "epoch,lr,train_ce,train_mse,train_total,val_ce,val_mse,val_total,is_best\n";
  for (const auto& e : log.epochs)
    os << e.epoch << ',' << e.lr << ',' << e.train_ce << ',' << e.train_mse << ','
       << e.train_total << ',' << e.val_ce << ',' << e.val_mse << ',' << e.val_total << ','
       << (e.is_best ? 1 : 0) << '\n';
}

std::unique_ptr<TreatmentRegime> build_regime(const ExperimentConfig& cfg, const Dataset& data,
                                              const std::string& id) {
  const std::string& gen = data.meta.generator;
  if (id.rfind("policy:", 0) == 0) {
    Checkpoint pc = load_checkpoint(id.substr(7));
    if (pc.kind != "policy") throw DataError("regime checkpoint is not a policy model");
    return std::make_unique<StochasticPolicyRegime>("observational_policy", pc.policy);
  }
  if (id == "withhold") return std::make_unique<WithholdRegime>();
  if (gen == "tumor") return tumor_regime(cfg.generator.tumor, id);
  if (gen == "hemo") return hemo_regime(cfg.generator.hemo, id);
  if (gen == "oracle_mdp" && id == "rule") {
    RuleSpec spec;
    RuleSpec::PerTreatment pt;
    pt.conditions = {{0, false, 0.5}}; // treat when the outcome state leaves class 0
    pt.dose_intercept = 1.0;
    pt.dose_max = 1.0;
    spec.treatments = {pt};
    return std::make_unique<RuleBasedRegime>("rule", spec);
  }
  throw DataError("unknown regime '" + id + "' for generator '" + gen + "'");
}

std::vector<ClipBounds> clip_bounds_for(const ExperimentConfig& cfg, const Dataset& data) {
  if (!cfg.simulation.clip_to_bounds) return {};
  std::vector<ClipBounds> clip(data.schema.n_cov());
  if (data.meta.generator == "tumor") {
    std::size_t j = static_cast<std::size_t>(data.schema.outcome_index);
    clip[j] = {0.0, cfg.generator.tumor.max_volume};
  }
  return clip;
}

int cmd_gen(const CommonOpts& common, bool text_export) {
  ExperimentConfig cfg = load_cfg(common);
  std::string out = resolve_out(common.out.empty() ? cfg.output_dir : common.out);
  std::string hash = experiment_config_hash(cfg);
  write_experiment_config(cfg, out + "/config.json");
  auto save = [&](Dataset& ds, const std::string& name) {
    ds.meta.config_hash = hash;
    save_dataset(ds, out + "/" + name + ".gcds");
    if (text_export) export_dataset_csv(ds, out + "/" + name);
    std::cout << name << ": " << ds.size() << " units\n";
  };
  const auto& G = cfg.generator;
  if (G.kind == "tumor") {
    TumorSimConfig tc = G.tumor;
    tc.seed = cfg.seed;
    Dataset train = gen_tumor_observational(tc, 0, G.n_train);
    Dataset val = gen_tumor_observational(tc, G.n_train, G.n_val);
    Dataset test = gen_tumor_observational(tc, G.n_train + G.n_val, G.n_test);
    save(train, "obs_train");
    save(val, "obs_val");
    save(test, "obs_test");
    for (const auto& rid : tumor_regime_ids()) {
      Dataset cf = gen_tumor_counterfactual(tc, G.n_train + G.n_val, G.n_test, rid);
      save(cf, "cf_" + rid);
    }
  } else if (G.kind == "hemo") {
    HemoSimConfig hc = G.hemo;
    hc.seed = cfg.seed;
    Dataset train = gen_hemo_observational(hc, 0, G.n_train);
    Dataset val = gen_hemo_observational(hc, G.n_train, G.n_val);
    Dataset test = gen_hemo_observational(hc, G.n_train + G.n_val, G.n_test);
    save(train, "obs_train");
    save(val, "obs_val");
    save(test, "obs_test");
    for (const std::string rid : {"c1", "c2"}) {
      Dataset cf = gen_hemo_counterfactual(hc, G.n_train + G.n_val, G.n_test, rid);
      save(cf, "cf_" + rid);
    }
  } else if (G.kind == "oracle") {
    OracleMdpConfig mc = G.mdp;
    mc.seed = cfg.seed;
    Dataset obs = gen_oracle_mdp(mc);
    save(obs, "obs");
  } else {
    throw UsageError("unknown generator kind '" + G.kind + "'");
  }
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_path, const std::string& val_path,
              const std::string& model_kind, bool policy_target) {
  ExperimentConfig cfg = load_cfg(common);
  std::string out = common.out.empty() ? (resolve_out(cfg.output_dir) + "/model.gcck") : common.out;
  Dataset train_ds = load_dataset(data_path);
  Dataset val_ds = load_dataset(val_path);
  if (!(train_ds.schema == val_ds.schema))
    throw DataError("train/validation schema mismatch");
  std::string hash = experiment_config_hash(cfg);
  write_experiment_config(cfg, out + ".config.json");

  // Normalization statistics always come from the training split.
  NormStats stats = compute_norm_stats(train_ds.schema, train_ds.units);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  tc.threads = cfg.threads;

  std::size_t bank_first = train_ds.meta.switch_time > 0
                               ? static_cast<std::size_t>(train_ds.meta.switch_time)
                               : 1;
  Checkpoint ck;
  ck.seed = cfg.seed;
  ck.config_hash = hash;

  if (policy_target) {
    TransformerHyperparams hp = cfg.model.transformer;
    hp.max_sequence_length =
        std::max<int>(hp.max_sequence_length, static_cast<int>(train_ds.units[0].length()) + 1);
    auto policy = std::make_shared<PolicyModel>(train_ds.schema, stats, hp,
                                                derive_seed(cfg.seed, "policy.init"));
    TrainLog log = fit_observational_policy(*policy, train_ds.units, val_ds.units, tc);
    ck.kind = "policy";
    ck.policy = policy;
    ck.train_digest = log.digest();
    save_checkpoint(ck, out);
    write_train_log_csv(log, out + ".trainlog.csv");
    std::cout << "policy trained: best epoch " << log.best_epoch << " val " << log.best_val
              << "\n";
    return 0;
  }

  std::string kind = model_kind.empty() ? cfg.model.kind : model_kind;
  if (kind == "transformer") {
    TransformerHyperparams hp = cfg.model.transformer;
    hp.max_sequence_length =
        std::max<int>(hp.max_sequence_length, static_cast<int>(train_ds.units[0].length()) + 1);
    auto model = std::make_unique<TransformerEstimator>(train_ds.schema, stats, hp,
                                                        derive_seed(cfg.seed, "model.init"));
    TrainLog log = train(*model, train_ds.units, val_ds.units, tc);
    ck.kind = "transformer";
    ck.transformer = std::move(model);
    ck.train_digest = log.digest();
    if (ck.transformer->has_cont())
      ck.bank = build_residual_bank(*ck.transformer, val_ds.units, bank_first);
    save_checkpoint(ck, out);
    write_train_log_csv(log, out + ".trainlog.csv");
    std::cout << "transformer trained: best epoch " << log.best_epoch << " val " << log.best_val
              << " (" << log.epochs.size() << " epochs)\n";
  } else if (kind == "linear") {
    auto model = fit_linear_gcomp(train_ds.units, train_ds.schema, stats, cfg.model.linear);
    ck.kind = "linear";
    ck.linear = std::move(model);
    if (ck.linear->schema().n_cont() > 0)
      ck.bank = build_residual_bank(*ck.linear, val_ds.units, bank_first);
    save_checkpoint(ck, out);
    std::cout << "linear baseline fitted (ridge lambda " << ck.linear->ridge_used() << ")\n";
  } else {
    throw UsageError("unknown model kind '" + kind + "'");
  }
  return 0;
}

int cmd_simulate(const CommonOpts& common, const std::string& ckpt_path,
                 const std::string& data_path, const std::string& regime_id) {
  ExperimentConfig cfg = load_cfg(common);
  Checkpoint ck = load_checkpoint(ckpt_path);
  Dataset data = load_dataset(data_path);
  const ConditionalDensityEstimator& est = ck.estimator();
  if (!(est.schema() == data.schema))
    throw DataError("checkpoint/dataset schema mismatch");
  std::string out =
      common.out.empty() ? (resolve_out(cfg.output_dir) + "/results_" + regime_id + ".gcsr")
                         : common.out;
  write_experiment_config(cfg, out + ".config.json");

  SimulationConfig sc;
  sc.n_draws = cfg.simulation.n_draws;
  sc.start = cfg.simulation.start >= 0 ? static_cast<std::size_t>(cfg.simulation.start)
                                       : static_cast<std::size_t>(std::max(1, data.meta.switch_time));
  sc.horizon = cfg.simulation.horizon >= 0 ? static_cast<std::size_t>(cfg.simulation.horizon)
                                           : data.units[0].length();
  sc.seed = derive_seed(cfg.seed, "simulate", derive_seed(0, regime_id));
  sc.store_draws = cfg.simulation.store_draws;
  sc.joint_residual_draws = cfg.simulation.joint_residual_draws;
  sc.clip = clip_bounds_for(cfg, data);

  auto regime = build_regime(cfg, data, regime_id);
  auto results = simulate_dataset(est, data, *regime, sc, ck.bank, cfg.threads);

  ResultsFile rf;
  rf.schema = data.schema;
  rf.stats = est.stats();
  rf.regime_id = regime_id;
  rf.config_hash = experiment_config_hash(cfg);
  rf.seed = sc.seed;
  rf.start = sc.start;
  rf.horizon = sc.horizon;
  rf.n_draws = sc.n_draws;
  rf.units = std::move(results);
  save_results(rf, out);
  std::cout << "simulated " << rf.units.size() << " units x " << sc.n_draws << " draws under '"
            << regime_id << "' -> " << out << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& results_path,
             const std::string& truth_path, const std::string& metrics_csv, double scale) {
  ExperimentConfig cfg = load_cfg(common);
  ResultsFile rf = load_results(results_path);
  Dataset truth = load_dataset(truth_path);
  if (!(rf.schema == truth.schema)) throw DataError("results/truth schema mismatch");
  std::string out = resolve_out(common.out.empty() ? cfg.output_dir : common.out);
  write_experiment_config(cfg, out + "/config.json");
  std::vector<std::string> metrics = cfg.evaluation.metrics;
  if (!metrics_csv.empty()) {
    metrics.clear();
    std::istringstream ms(metrics_csv);
    std::string tok;
    while (std::getline(ms, tok, ',')) metrics.push_back(tok);
  }
  const NormStats& norm = rf.stats;
  for (const std::string& m : metrics) {
    MetricReport rep;
    if (m == "percent_rmse")
      rep = percent_rmse(rf.units, truth, scale);
    else if (m == "individual_rmse")
      rep = individual_rmse(rf.units, truth, norm);
    else if (m == "population_rmse")
      rep = population_rmse(rf.units, truth, norm);
    else if (m == "rmse_over_time")
      rep = rmse_over_time(rf.units, truth, norm);
    else if (m == "calibration")
      rep = calibration(rf.units, truth, cfg.evaluation.q_low, cfg.evaluation.q_high);
    else
      throw UsageError("unknown metric '" + m + "'");
    rep.config_hash = rf.config_hash;
    std::string base = out + "/" + m + "_" + rf.regime_id;
    write_metric_csv(rep, base + ".csv");
    write_metric_summary(rep, base + ".summary.json");
    if (!rep.per_time.empty()) {
      LineSeries s;
      s.label = m;
      for (std::size_t i = 0; i < rep.times.size(); ++i) {
        s.x.push_back(static_cast<double>(rep.times[i]));
        s.y.push_back(rep.per_time[i]);
      }
      write_line_chart(base + ".svg", m + " under " + rf.regime_id, "time", m, {s});
    }
    std::cout << m << " [" << rf.regime_id << "]: " << rep.aggregate << "\n";
  }
  return 0;
}

int cmd_check(const CommonOpts& common, const std::string& ckpt_path,
              const std::string& policy_path, const std::string& data_path, int k) {
  ExperimentConfig cfg = load_cfg(common);
  Checkpoint ck = load_checkpoint(ckpt_path);
  Checkpoint pk = load_checkpoint(policy_path);
  if (pk.kind != "policy") throw DataError("second checkpoint must be a policy model");
  Dataset data = load_dataset(data_path);
  const ConditionalDensityEstimator& est = ck.estimator();
  if (!(est.schema() == data.schema)) throw DataError("checkpoint/dataset schema mismatch");
  std::string out = resolve_out(common.out.empty() ? cfg.output_dir : common.out);
  write_experiment_config(cfg, out + "/config.json");

  SimulationConfig sc;
  sc.n_draws = cfg.simulation.n_draws;
  sc.horizon = cfg.simulation.horizon >= 0 ? static_cast<std::size_t>(cfg.simulation.horizon)
                                           : data.units[0].length();
  sc.seed = derive_seed(cfg.seed, "check", static_cast<std::uint64_t>(k));
  auto rep = predictive_check(est, pk.policy, data, static_cast<std::size_t>(k), sc, ck.bank,
                              cfg.threads);
  if (rep.empty) {
    std::cout << "empty simulation window (k >= horizon); nothing to report\n";
    return 0;
  }
  for (const MetricReport* r : {&rep.individual, &rep.over_time, &rep.calib}) {
    std::string base = out + "/check_" + r->name + "_k" + std::to_string(k);
    write_metric_csv(*r, base + ".csv");
    write_metric_summary(*r, base + ".summary.json");
    std::cout << r->name << ": " << r->aggregate << "\n";
  }
  return 0;
}

int cmd_verify_oracle(const CommonOpts& common) {
  ExperimentConfig cfg = load_cfg(common);
  std::string out = resolve_out(common.out.empty() ? cfg.output_dir : common.out);
  write_experiment_config(cfg, out + "/config.json");
  OracleMdpConfig mc = cfg.generator.mdp;
  mc.seed = cfg.seed;
  MdpSystem sys = make_mdp_system(mc);
  TabularMdpEstimator est(sys);
  Dataset obs = gen_oracle_mdp(mc);

  std::size_t K = mc.horizon;
  std::size_t m = K - 2;
  const Trajectory& unit = obs.units[0];

  auto rule = [&]() {
    RuleSpec spec;
    RuleSpec::PerTreatment pt;
    pt.conditions = {{0, false, 0.5}};
    pt.dose_intercept = 1.0;
    pt.dose_max = 1.0;
    spec.treatments = {pt};
    return std::make_unique<RuleBasedRegime>("rule", spec);
  };

  SimulationConfig sc;
  sc.n_draws = 100000;
  sc.start = m;
  sc.horizon = K;
  sc.seed = derive_seed(cfg.seed, "verify");
  ResidualBank empty_bank;

  bool all_pass = true;
  std::cout << "regime      horizon  TV        verdict\n";
  sc.store_draws = true;
  for (int which = 0; which < 2; ++which) {
    std::unique_ptr<TreatmentRegime> regime =
        which == 0 ? std::unique_ptr<TreatmentRegime>(std::make_unique<WithholdRegime>()) : rule();
    SimulationResult res = simulate_mc(est, unit, *regime, sc, empty_bank, 0);
    for (std::size_t target = m; target < K; ++target) {
      std::vector<double> exact = exact_gformula(sys, unit, m, *regime, target, mc.max_paths);
      std::vector<double> emp(sys.n_states(), 0.0);
      for (const auto& d : res.draws)
        emp[sys.state_index(d.data() + (target - m) * obs.schema.n_cov())] +=
            1.0 / static_cast<double>(sc.n_draws);
      double tv = 0.0;
      for (std::size_t s = 0; s < emp.size(); ++s) tv += std::abs(emp[s] - exact[s]);
      tv /= 2.0;
      bool pass = tv <= 0.02;
      all_pass = all_pass && pass;
      std::printf("%-10s  t=m+%zu    %.5f   %s\n", regime->id().c_str(), target - m + 1, tv,
                  pass ? "PASS" : "FAIL");
    }
  }
  return all_pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"g-computation counterfactual simulation engine"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string data_path, val_path, ckpt_path, policy_path, results_path, truth_path;
  std::string model_kind, regime_id, metrics_csv;
  bool policy_target = false, text_export = false;
  double scale = 1150.0;
  int k = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config JSON");
    sub->add_option("--set", common.overrides, "override config fields (a.b=c)");
    sub->add_option("--out", common.out, "output path");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate datasets");
  add_common(gen);
  gen->add_flag("--text", text_export, "also export a lossless CSV bundle");

  CLI::App* tr = app.add_subcommand("train", "train a model checkpoint");
  add_common(tr);
  tr->add_option("--data", data_path, "training dataset")->required();
  tr->add_option("--val", val_path, "validation dataset")->required();
  tr->add_option("--model", model_kind, "transformer | linear (default: config)");
  tr->add_flag("--policy", policy_target, "fit the observational treatment policy");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo counterfactual simulation");
  add_common(sim);
  sim->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  sim->add_option("--data", data_path, "dataset providing observed prefixes")->required();
  sim->add_option("--regime", regime_id, "treatment regime id")->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate results against truth");
  add_common(ev);
  ev->add_option("--results", results_path, "simulation results file")->required();
  ev->add_option("--truth", truth_path, "ground-truth dataset")->required();
  ev->add_option("--metrics", metrics_csv, "comma-separated metric list");
  ev->add_option("--scale", scale, "percent RMSE scale (default 1150)");

  CLI::App* chk = app.add_subcommand("check", "predictive check under the observational policy");
  add_common(chk);
  chk->add_option("--checkpoint", ckpt_path, "density model checkpoint")->required();
  chk->add_option("--policy", policy_path, "policy checkpoint")->required();
  chk->add_option("--data", data_path, "held-out factual dataset")->required();
  chk->add_option("--k", k, "simulation start time");

  CLI::App* vo = app.add_subcommand("verify-oracle", "simulate_mc vs exact g-formula");
  add_common(vo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, text_export);
    if (tr->parsed()) return cmd_train(common, data_path, val_path, model_kind, policy_target);
    if (sim->parsed()) return cmd_simulate(common, ckpt_path, data_path, regime_id);
    if (ev->parsed()) return cmd_eval(common, results_path, truth_path, metrics_csv, scale);
    if (chk->parsed()) return cmd_check(common, ckpt_path, policy_path, data_path, k);
    if (vo->parsed()) return cmd_verify_oracle(common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
