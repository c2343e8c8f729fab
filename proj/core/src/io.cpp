#include "gcsim/io.hpp"

#include "gcsim/errors.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace gcsim {

using nlohmann::json;

namespace {

void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <typename T> void write_pod(std::ofstream& os, T v) { write_bytes(os, &v, sizeof(T)); }
void write_doubles(std::ofstream& os, const double* p, std::size_t n) {
  write_bytes(os, p, n * sizeof(double));
}

void read_bytes(std::ifstream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw DataError("file truncated");
}
template <typename T> T read_pod(std::ifstream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}
void read_doubles(std::ifstream& is, double* p, std::size_t n) {
  read_bytes(is, p, n * sizeof(double));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path, const char magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path);
  char got[4];
  read_bytes(is, got, 4);
  if (std::string_view(got, 4) != std::string_view(magic, 4))
    throw DataError(path + ": wrong file type");
  std::uint32_t ver = read_pod<std::uint32_t>(is);
  if (ver != kFormatVersion)
    throw DataError(path + ": format version " + std::to_string(ver) + " does not match " +
                    std::to_string(kFormatVersion));
  return is;
}

void write_header(std::ofstream& os, const char magic[4], const json& header) {
  write_bytes(os, magic, 4);
  write_pod<std::uint32_t>(os, kFormatVersion);
  std::string text = header.dump();
  write_pod<std::uint64_t>(os, text.size());
  write_bytes(os, text.data(), text.size());
}

json read_header(std::ifstream& is) {
  std::uint64_t len = read_pod<std::uint64_t>(is);
  std::string text(len, '\0');
  read_bytes(is, text.data(), len);
  return json::parse(text);
}

json schema_to_json(const Schema& sc) {
  json j;
  j["covariates"] = json::array();
  for (const auto& c : sc.covariates)
    j["covariates"].push_back({{"name", c.name},
                               {"kind", c.kind == VarKind::Categorical ? "cat" : "cont"},
                               {"classes", c.classes}});
  j["treatments"] = json::array();
  for (const auto& t : sc.treatments)
    j["treatments"].push_back(
        {{"name", t.name}, {"kind", t.kind == VarKind::Categorical ? "cat" : "cont"}});
  j["statics"] = sc.static_names;
  j["outcome_index"] = sc.outcome_index;
  return j;
}

Schema schema_from_json(const json& j) {
  Schema sc;
  for (const auto& c : j.at("covariates"))
    sc.covariates.push_back({c.at("name").get<std::string>(),
                             c.at("kind") == "cat" ? VarKind::Categorical : VarKind::Continuous,
                             c.at("classes").get<int>()});
  for (const auto& t : j.at("treatments"))
    sc.treatments.push_back({t.at("name").get<std::string>(),
                             t.at("kind") == "cat" ? VarKind::Categorical : VarKind::Continuous});
  sc.static_names = j.at("statics").get<std::vector<std::string>>();
  sc.outcome_index = j.at("outcome_index").get<int>();
  sc.validate();
  return sc;
}

json stats_to_json(const NormStats& s) {
  json j;
  j["cov_mean"] = s.cov_mean;
  j["cov_std"] = s.cov_std;
  j["treat_mean"] = s.treat_mean;
  j["treat_std"] = s.treat_std;
  j["static_mean"] = s.static_mean;
  j["static_std"] = s.static_std;
  return j;
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  s.cov_mean = j.at("cov_mean").get<std::vector<double>>();
  s.cov_std = j.at("cov_std").get<std::vector<double>>();
  s.treat_mean = j.at("treat_mean").get<std::vector<double>>();
  s.treat_std = j.at("treat_std").get<std::vector<double>>();
  s.static_mean = j.at("static_mean").get<std::vector<double>>();
  s.static_std = j.at("static_std").get<std::vector<double>>();
  return s;
}

json meta_to_json(const DatasetMeta& m) {
  json j;
  j["generator"] = m.generator;
  j["regime_id"] = m.regime_id;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["switch_time"] = m.switch_time;
  j["extra"] = m.extra;
  return j;
}

DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  m.generator = j.at("generator").get<std::string>();
  m.regime_id = j.at("regime_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.switch_time = j.at("switch_time").get<int>();
  m.extra = j.at("extra").get<std::map<std::string, std::string>>();
  return m;
}

void write_tensor(std::ofstream& os, const Tensor& t) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d)
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.dim(d)));
  write_doubles(os, t.data(), t.size());
}

Tensor read_tensor(std::ifstream& is) {
  std::uint32_t rank = read_pod<std::uint32_t>(is);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
  Tensor t(shape);
  read_doubles(is, t.data(), t.size());
  return t;
}

void write_param_set(std::ofstream& os, const ParamSet& ps) {
  write_pod<std::uint64_t>(os, ps.count());
  for (std::size_t i = 0; i < ps.count(); ++i) write_tensor(os, ps[i].value);
}

void read_param_set(std::ifstream& is, ParamSet& ps) {
  std::uint64_t n = read_pod<std::uint64_t>(is);
  if (n != ps.count()) throw DataError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < ps.count(); ++i) {
    Tensor t = read_tensor(is);
    if (!t.same_shape(ps[i].value)) throw DataError("checkpoint: parameter shape mismatch");
    ps[i].value = std::move(t);
  }
}

json hp_to_json(const TransformerHyperparams& hp) {
  return json{{"num_layers", hp.num_layers},
              {"hidden_dim", hp.hidden_dim},
              {"num_heads", hp.num_heads},
              {"feedforward_dim", hp.feedforward_dim},
              {"max_sequence_length", hp.max_sequence_length},
              {"dropout", hp.dropout}};
}

TransformerHyperparams hp_from_json(const json& j) {
  TransformerHyperparams hp;
  hp.num_layers = j.at("num_layers").get<int>();
  hp.hidden_dim = j.at("hidden_dim").get<int>();
  hp.num_heads = j.at("num_heads").get<int>();
  hp.feedforward_dim = j.at("feedforward_dim").get<int>();
  hp.max_sequence_length = j.at("max_sequence_length").get<int>();
  hp.dropout = j.at("dropout").get<double>();
  return hp;
}

void write_bank(std::ofstream& os, const ResidualBank& bank) {
  write_pod<std::uint64_t>(os, bank.pools.size());
  for (const auto& pool : bank.pools) {
    write_pod<std::uint64_t>(os, pool.size());
    write_doubles(os, pool.data(), pool.size());
  }
}

ResidualBank read_bank(std::ifstream& is) {
  ResidualBank bank;
  std::uint64_t n = read_pod<std::uint64_t>(is);
  bank.pools.resize(n);
  bank.pool_means.resize(n, 0.0);
  for (auto& pool : bank.pools) {
    std::uint64_t sz = read_pod<std::uint64_t>(is);
    pool.resize(sz);
    read_doubles(is, pool.data(), sz);
  }
  for (std::size_t d = 0; d < bank.pools.size(); ++d) {
    double s = 0.0;
    for (double r : bank.pools[d]) s += r;
    bank.pool_means[d] = bank.pools[d].empty() ? 0.0 : s / static_cast<double>(bank.pools[d].size());
  }
  return bank;
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& path, const std::string& config_hash) {
  std::ofstream os = open_out(path);
  json header;
  header["schema"] = schema_to_json(ds.schema);
  header["stats"] = stats_to_json(ds.stats);
  DatasetMeta meta = ds.meta;
  if (!config_hash.empty()) meta.config_hash = config_hash;
  header["meta"] = meta_to_json(meta);
  header["n_units"] = ds.units.size();
  write_header(os, "GCDS", header);
  for (const auto& u : ds.units) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(u.statics.size()));
    write_doubles(os, u.statics.data(), u.statics.size());
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(u.length()));
    write_doubles(os, u.cov.data(), u.cov.size());
    write_doubles(os, u.treat.data(), u.treat.size());
  }
  if (!os) throw DataError("failed writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is = open_in(path, "GCDS");
  json header = read_header(is);
  Dataset ds;
  ds.schema = schema_from_json(header.at("schema"));
  ds.stats = stats_from_json(header.at("stats"));
  ds.meta = meta_from_json(header.at("meta"));
  std::size_t n = header.at("n_units").get<std::size_t>();
  ds.units.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory u;
    std::uint32_t ns = read_pod<std::uint32_t>(is);
    u.statics.resize(ns);
    read_doubles(is, u.statics.data(), ns);
    std::uint32_t T = read_pod<std::uint32_t>(is);
    u.cov = Tensor({T, ds.schema.n_cov()});
    read_doubles(is, u.cov.data(), u.cov.size());
    u.treat = Tensor({T, ds.schema.n_treat()});
    read_doubles(is, u.treat.data(), u.treat.size());
    ds.units.push_back(std::move(u));
  }
  return ds;
}

void export_dataset_csv(const Dataset& ds, const std::string& prefix) {
  {
    std::ofstream os(prefix + ".schema.json");
    if (!os) throw DataError("cannot write " + prefix + ".schema.json");
    json j;
    j["schema"] = schema_to_json(ds.schema);
    j["stats"] = stats_to_json(ds.stats);
    j["meta"] = meta_to_json(ds.meta);
    os << j.dump(2) << '\n';
  }
  std::ofstream os(prefix + ".units.csv");
  if (!os) throw DataError("cannot write " + prefix + ".units.csv");
  os.precision(17);
  os << "unit,t";
  for (const auto& c : ds.schema.covariates) os << ',' << c.name;
  for (const auto& t : ds.schema.treatments) os << ",a:" << t.name;
  os << '\n';
  for (std::size_t i = 0; i < ds.units.size(); ++i) {
    const auto& u = ds.units[i];
    for (std::size_t t = 0; t < u.length(); ++t) {
      os << i << ',' << t;
      for (std::size_t j = 0; j < ds.schema.n_cov(); ++j) os << ',' << u.cov.at(t, j);
      for (std::size_t j = 0; j < ds.schema.n_treat(); ++j) os << ',' << u.treat.at(t, j);
      os << '\n';
    }
  }
}

const ConditionalDensityEstimator& Checkpoint::estimator() const {
  if (transformer) return *transformer;
  if (linear) return *linear;
  throw DataError("checkpoint does not hold a density estimator");
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os = open_out(path);
  json header;
  header["kind"] = ck.kind;
  header["seed"] = ck.seed;
  header["config_hash"] = ck.config_hash;
  header["train_digest"] = ck.train_digest;
  if (ck.kind == "transformer") {
    header["schema"] = schema_to_json(ck.transformer->schema());
    header["stats"] = stats_to_json(ck.transformer->stats());
    header["hyperparams"] = hp_to_json(ck.transformer->hyperparams());
  } else if (ck.kind == "linear") {
    header["schema"] = schema_to_json(ck.linear->schema());
    header["stats"] = stats_to_json(ck.linear->stats());
    header["lag_window"] = ck.linear->config().lag_window;
    header["ridge_used"] = ck.linear->ridge_used();
  } else if (ck.kind == "policy") {
    header["schema"] = schema_to_json(ck.policy->schema());
    header["stats"] = stats_to_json(ck.policy->stats());
    header["hyperparams"] = hp_to_json(ck.policy->hyperparams());
  } else {
    throw DataError("save_checkpoint: unknown kind " + ck.kind);
  }
  write_header(os, "GCCK", header);
  if (ck.kind == "transformer") {
    write_pod<std::uint8_t>(os, ck.transformer->has_cat() ? 1 : 0);
    if (ck.transformer->has_cat()) write_param_set(os, ck.transformer->cat_encoder()->params());
    write_pod<std::uint8_t>(os, ck.transformer->has_cont() ? 1 : 0);
    if (ck.transformer->has_cont()) write_param_set(os, ck.transformer->cont_encoder()->params());
  } else if (ck.kind == "linear") {
    ck.linear->serialize_weights(os);
  } else {
    write_param_set(os, ck.policy->encoder().params());
    write_pod<std::uint64_t>(os, ck.policy->dose_residuals().size());
    for (const auto& pool : ck.policy->dose_residuals()) {
      write_pod<std::uint64_t>(os, pool.size());
      write_doubles(os, pool.data(), pool.size());
    }
  }
  write_bank(os, ck.bank);
  if (!os) throw DataError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path, "GCCK");
  json header = read_header(is);
  Checkpoint ck;
  ck.kind = header.at("kind").get<std::string>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.train_digest = header.at("train_digest").get<std::uint64_t>();
  Schema schema = schema_from_json(header.at("schema"));
  NormStats stats = stats_from_json(header.at("stats"));
  if (ck.kind == "transformer") {
    TransformerHyperparams hp = hp_from_json(header.at("hyperparams"));
    ck.transformer = std::make_unique<TransformerEstimator>(schema, stats, hp, ck.seed);
    if (read_pod<std::uint8_t>(is) != (ck.transformer->has_cat() ? 1 : 0))
      throw DataError("checkpoint: categorical encoder presence mismatch");
    if (ck.transformer->has_cat()) read_param_set(is, ck.transformer->cat_encoder()->params());
    if (read_pod<std::uint8_t>(is) != (ck.transformer->has_cont() ? 1 : 0))
      throw DataError("checkpoint: continuous encoder presence mismatch");
    if (ck.transformer->has_cont()) read_param_set(is, ck.transformer->cont_encoder()->params());
  } else if (ck.kind == "linear") {
    LinearConfig lc;
    lc.lag_window = header.at("lag_window").get<std::size_t>();
    ck.linear = std::make_unique<LinearEstimator>(schema, stats, lc);
    ck.linear->deserialize_weights(is);
  } else if (ck.kind == "policy") {
    TransformerHyperparams hp = hp_from_json(header.at("hyperparams"));
    ck.policy = std::make_shared<PolicyModel>(schema, stats, hp, ck.seed);
    read_param_set(is, ck.policy->encoder().params());
    std::uint64_t n = read_pod<std::uint64_t>(is);
    if (n != ck.policy->dose_residuals().size())
      throw DataError("checkpoint: dose pool count mismatch");
    for (auto& pool : ck.policy->dose_residuals()) {
      std::uint64_t sz = read_pod<std::uint64_t>(is);
      pool.resize(sz);
      read_doubles(is, pool.data(), sz);
    }
  } else {
    throw DataError("load_checkpoint: unknown kind " + ck.kind);
  }
  ck.bank = read_bank(is);
  return ck;
}

void save_results(const ResultsFile& rf, const std::string& path) {
  std::ofstream os = open_out(path);
  json header;
  header["schema"] = schema_to_json(rf.schema);
  header["stats"] = stats_to_json(rf.stats);
  header["regime_id"] = rf.regime_id;
  header["config_hash"] = rf.config_hash;
  header["seed"] = rf.seed;
  header["start"] = rf.start;
  header["horizon"] = rf.horizon;
  header["n_draws"] = rf.n_draws;
  header["n_units"] = rf.units.size();
  bool has_draws = !rf.units.empty() && !rf.units[0].draws.empty();
  header["has_draws"] = has_draws;
  write_header(os, "GCSR", header);
  for (const auto& u : rf.units) {
    write_tensor(os, u.mean);
    write_tensor(os, u.q05);
    write_tensor(os, u.q95);
    write_tensor(os, u.treatments);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(u.draws.size()));
    for (const auto& d : u.draws) write_tensor(os, d);
  }
  if (!os) throw DataError("failed writing " + path);
}

ResultsFile load_results(const std::string& path) {
  std::ifstream is = open_in(path, "GCSR");
  json header = read_header(is);
  ResultsFile rf;
  rf.schema = schema_from_json(header.at("schema"));
  rf.stats = stats_from_json(header.at("stats"));
  rf.regime_id = header.at("regime_id").get<std::string>();
  rf.config_hash = header.at("config_hash").get<std::string>();
  rf.seed = header.at("seed").get<std::uint64_t>();
  rf.start = header.at("start").get<std::size_t>();
  rf.horizon = header.at("horizon").get<std::size_t>();
  rf.n_draws = header.at("n_draws").get<std::size_t>();
  std::size_t n = header.at("n_units").get<std::size_t>();
  rf.units.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SimulationResult r;
    r.regime_id = rf.regime_id;
    r.seed = rf.seed;
    r.start = rf.start;
    r.horizon = rf.horizon;
    r.n_draws = rf.n_draws;
    r.mean = read_tensor(is);
    r.q05 = read_tensor(is);
    r.q95 = read_tensor(is);
    r.treatments = read_tensor(is);
    std::uint32_t nd = read_pod<std::uint32_t>(is);
    r.draws.reserve(nd);
    for (std::uint32_t d = 0; d < nd; ++d) r.draws.push_back(read_tensor(is));
    rf.units.push_back(std::move(r));
  }
  return rf;
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

} // namespace gcsim
