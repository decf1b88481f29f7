#include "conspol/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <utility>

#include "conspol/bench/environment.hpp"
#include "conspol/bench/evaluate.hpp"
#include "conspol/data/csv.hpp"
#include "conspol/io.hpp"
#include "conspol/limits/info_limits.hpp"

namespace conspol::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const TrainingError*>(&e) ||
      dynamic_cast<const EstimationError*>(&e)) {
    return kNumeric;
  }
  return kData;
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"gen-data",  "train-pvae", "train-cpvae", "fit-propensity", "recommend",
                                              "evaluate", "ate",        "limits",      "risk"};
  return names;
}

namespace {

// Runs fn, turning JSON type errors into a ConfigError that names the field.
template <class F>
void section(const std::string& name, F&& fn) {
  try {
    fn();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(name, 0) == 0) throw;
    throw ConfigError(name + ": " + what);
  }
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool is_command(const std::string& name) {
  const auto& all = commands();
  return std::find(all.begin(), all.end(), name) != all.end();
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  const auto& p = c.paths;
  j = {{"command", c.command},
       {"seed", c.seed},
       {"threads", c.threads},
       {"family", c.family},
       {"paths",
        {{"data", p.data},
         {"environment", p.environment},
         {"pvae", p.pvae},
         {"propensity", p.propensity},
         {"cpvae", p.cpvae},
         {"queries", p.queries},
         {"output", p.output},
         {"instances", p.instances}}},
       {"environment", c.environment},
       {"n", c.n},
       {"missingness", c.missingness ? json(*c.missingness) : json(nullptr)},
       {"pvae", c.pvae},
       {"cpvae", c.cpvae},
       {"propensity", c.propensity},
       {"estimator",
        {{"kind", c.estimator.kind},
         {"subsample", c.estimator.subsample},
         {"max_ips_weight", c.estimator.max_ips_weight},
         {"components", c.estimator.components}}},
       {"strategies", c.strategies},
       {"evaluation",
        {{"n_test", c.evaluation.n_test},
         {"seeds", c.evaluation.seeds},
         {"tail_threshold", c.evaluation.tail_threshold}}},
       {"four_bit", c.four_bit},
       {"risk", {{"d_miss", c.risk.d_miss}, {"c", c.risk.c}}}};
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig out;
  section("command", [&] { out.command = j.value("command", out.command); });
  section("seed", [&] { out.seed = j.value("seed", out.seed); });
  section("threads", [&] { out.threads = j.value("threads", out.threads); });
  section("family", [&] { out.family = j.value("family", out.family); });
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    auto get = [&](const char* key, std::string& dst) {
      section(std::string("paths.") + key, [&] { dst = p.value(key, dst); });
    };
    get("data", out.paths.data);
    get("environment", out.paths.environment);
    get("pvae", out.paths.pvae);
    get("propensity", out.paths.propensity);
    get("cpvae", out.paths.cpvae);
    get("queries", out.paths.queries);
    get("output", out.paths.output);
    get("instances", out.paths.instances);
  }
  if (j.contains("environment") && !j.at("environment").is_null()) {
    if (!j.at("environment").is_object()) throw ConfigError("environment: must be an object");
    out.environment = j.at("environment");
  }
  section("n", [&] { out.n = j.value("n", out.n); });
  if (j.contains("missingness") && !j.at("missingness").is_null()) {
    section("missingness", [&] { out.missingness = j.at("missingness").get<MissingnessSpec>(); });
  }
  section("pvae", [&] {
    if (j.contains("pvae")) out.pvae = j.at("pvae").get<PvaeConfig>();
  });
  section("cpvae", [&] {
    if (j.contains("cpvae")) out.cpvae = j.at("cpvae").get<CpvaeConfig>();
  });
  section("propensity", [&] {
    if (j.contains("propensity")) out.propensity = j.at("propensity").get<PropensityConfig>();
  });
  section("estimator", [&] {
    if (!j.contains("estimator")) return;
    const auto& e = j.at("estimator");
    out.estimator.kind = e.value("kind", out.estimator.kind);
    out.estimator.subsample = e.value("subsample", out.estimator.subsample);
    out.estimator.max_ips_weight = e.value("max_ips_weight", out.estimator.max_ips_weight);
    out.estimator.components = e.value("components", out.estimator.components);
  });
  section("strategies", [&] {
    if (j.contains("strategies")) out.strategies = j.at("strategies").get<std::vector<StrategySpec>>();
  });
  section("evaluation", [&] {
    if (!j.contains("evaluation")) return;
    const auto& e = j.at("evaluation");
    out.evaluation.n_test = e.value("n_test", out.evaluation.n_test);
    out.evaluation.seeds = e.value("seeds", out.evaluation.seeds);
    out.evaluation.tail_threshold = e.value("tail_threshold", out.evaluation.tail_threshold);
  });
  section("four_bit", [&] { out.four_bit = j.value("four_bit", out.four_bit); });
  section("risk", [&] {
    if (!j.contains("risk")) return;
    const auto& r = j.at("risk");
    out.risk.d_miss = r.value("d_miss", out.risk.d_miss);
    out.risk.c = r.value("c", out.risk.c);
  });

  const auto& k = out.estimator.kind;
  if (k != "spvae" && k != "spvae-matched" && k != "cpvae") {
    throw ConfigError("estimator.kind: expected spvae, spvae-matched or cpvae, got '" + k + "'");
  }
  if (out.estimator.components == 0) throw ConfigError("estimator.components must be >= 1");
  if (!(out.estimator.max_ips_weight > 1.0)) throw ConfigError("estimator.max_ips_weight must exceed 1");
  if (out.threads == 0) throw ConfigError("threads must be >= 1");
  if (out.n == 0) throw ConfigError("n must be >= 1");
  if (out.evaluation.n_test == 0) throw ConfigError("evaluation.n_test must be >= 1");
  if (out.evaluation.seeds.empty()) throw ConfigError("evaluation.seeds must not be empty");
  if (out.strategies.empty()) throw ConfigError("strategies must not be empty");
  std::set<std::pair<std::string, double>> seen;
  for (const auto& s : out.strategies) {
    const double key = s.kind == StrategyKind::Conservative ? s.c : -1.0;
    if (!seen.emplace(s.name(), key).second) {
      throw ConfigError("strategies: duplicate " + s.name() + " entry");
    }
  }
  for (double cv : out.risk.c) {
    if (!(cv >= 0.0 && cv < 1.0)) throw ConfigError("risk.c values must be in [0, 1)");
  }
  c = std::move(out);
}

json family_defaults(const std::string& family) {
  auto strategies = [](std::size_t u) {
    return json::array({StrategySpec::imputation(), StrategySpec::mer(5), StrategySpec::conservative(0.1, u)});
  };
  auto net = [](std::size_t e, std::size_t k, std::vector<std::size_t> f, std::size_t z, std::vector<std::size_t> g) {
    NetworkDims d;
    d.embedding_dim = e;
    d.set_dim = k;
    d.f_hidden = std::move(f);
    d.latent_dim = z;
    d.decoder_hidden = std::move(g);
    return json(d);
  };
  auto opt = [](std::size_t epochs) { return json{{"epochs", epochs}, {"batch", 8}, {"learning_rate", 1e-3}}; };
  if (family == "digit") {
    const auto dims = net(20, 400, {500, 200}, 20, {200, 500});
    return {{"n", 4000},
            {"pvae", {{"dims", dims}, {"optimizer", opt(20)}}},
            {"cpvae", {{"dims", dims}, {"optimizer", opt(20)}}},
            {"strategies", strategies(50)},
            {"evaluation", {{"tail_threshold", -7.0}}}};
  }
  if (family == "ihdp-b" || family == "binary-table") {
    const auto dims = net(10, 20, {20, 20, 20}, 10, {20, 20});
    return {{"n", family == "ihdp-b" ? 747 : 20000},
            {"pvae", {{"dims", dims}, {"optimizer", opt(25)}}},
            {"cpvae", {{"dims", dims}, {"optimizer", opt(25)}}},
            {"strategies", strategies(100)},
            {"evaluation", {{"tail_threshold", -7.0}}}};
  }
  if (family == "glucose") {
    const auto dims = net(5, 8, {10, 10}, 5, {10, 10});
    return {{"n", 5000},
            {"pvae", {{"dims", dims}, {"optimizer", opt(25)}}},
            {"cpvae", {{"dims", dims}, {"optimizer", opt(25)}}},
            {"strategies", strategies(100)},
            {"evaluation", {{"tail_threshold", -2.0}}}};
  }
  return json::object();
}

std::filesystem::path manifest_path(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

std::filesystem::path environment_path(const fs::path& dataset) {
  auto p = dataset;
  p.replace_filename(dataset.stem().string() + ".env.json");
  return p;
}

namespace {

// The family environment for gen-data and evaluate: the inline object, else
// the environment file, with the missingness rate applied and every field
// filled in by the environment itself.
json resolve_environment(const RunConfig& c) {
  json env = c.environment;
  if (env.is_null()) {
    if (!c.paths.environment.empty()) env = read_json(c.paths.environment);
    else if (!c.family.empty()) env = json{{"family", c.family}};
    else throw ConfigError("family: gen-data and evaluate need a family or an environment");
  }
  if (!env.contains("family")) env["family"] = c.family;
  if (!env.contains("seed") && c.command == "gen-data") env["seed"] = c.seed;
  if (c.missingness) {
    if (c.missingness->kind == MissingKind::Mar) {
      if (c.command != "gen-data") throw ConfigError("missingness.kind: MAR is only supported by gen-data");
      env["erase_rate"] = 0.0;
    } else {
      env["erase_rate"] = c.missingness->rate;
    }
  }
  return make_environment(env)->config();
}

}  // namespace

RunConfig resolve_config(const std::string& command, const json& file, const json& overrides) {
  if (!is_command(command)) throw ConfigError("command: unknown subcommand '" + command + "'");
  json user = file.is_null() ? json::object() : file;
  if (user.is_object() && user.contains("run_id") && user.contains("config")) user = user.at("config");
  if (!user.is_object()) throw ConfigError("config file must hold a JSON object");
  if (!overrides.is_null()) user.merge_patch(overrides);
  user["command"] = command;

  std::string family = user.value("family", std::string{});
  if (family.empty() && user.contains("environment") && user["environment"].is_object()) {
    family = user["environment"].value("family", std::string{});
  }
  if (family.empty() && user.contains("/paths/environment"_json_pointer) && command != "limits") {
    const auto path = user["paths"]["environment"].get<std::string>();
    if (!path.empty()) family = read_json(path).value("family", std::string{});
  }
  if (family.empty() && user.contains("/paths/data"_json_pointer) && command != "gen-data") {
    const auto sidecar = environment_path(user["paths"]["data"].get<std::string>());
    if (fs::exists(sidecar)) family = read_json(sidecar).value("family", std::string{});
  }

  json full = RunConfig{};
  full["family"] = family;
  full.merge_patch(family_defaults(family));
  if (command == "ate") full["strategies"] = json::array({StrategySpec::mer(5)});
  full.merge_patch(user);
  const json seed = full["seed"];
  for (const auto* ptr : {"/pvae/optimizer/seed", "/cpvae/optimizer/seed", "/propensity/seed"}) {
    const json::json_pointer p(ptr);
    if (!user.contains(p)) full[p] = seed;
  }
  full["propensity"]["threads"] = full["threads"];

  RunConfig c = full.get<RunConfig>();
  if (command == "gen-data" || command == "evaluate") {
    section("environment", [&] { c.environment = resolve_environment(c); });
    if (c.family.empty()) c.family = c.environment.at("family").get<std::string>();
  }
  return c;
}

std::string run_id(const RunConfig& config) {
  json j = config;
  j.erase("threads");
  j["paths"].erase("output");
  j["paths"].erase("instances");
  j["propensity"].erase("threads");
  return fnv1a_hex(j.dump());
}

namespace {

void require(const std::string& value, const std::string& field, const std::string& command) {
  if (value.empty()) throw ConfigError(field + ": required by " + command);
}

template <class T>
T load_model(const std::string& path) {
  const auto j = read_json(path);
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void check_schema(const FeatureSchema& a, const FeatureSchema& b, const std::string& what) {
  if (!(a == b)) throw DataError(what + " was trained on a different feature schema");
}

std::string fmt(double v) { return format_double(v); }

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string c_cell(const StrategySpec& s) { return s.kind == StrategyKind::Conservative ? fmt(s.c) : ""; }

// Estimated reward function together with everything it points into.
struct OracleBundle {
  LoggedDataset data;
  PvaeModel pvae;
  PropensityModel propensity;
  CpvaeModel cpvae;
  std::unique_ptr<PvaeRowDensities> densities;
  std::unique_ptr<SpvaeEstimator> estimator;
  std::unique_ptr<RewardOracle> oracle;
};

std::unique_ptr<OracleBundle> build_oracle(const RunConfig& c) {
  auto b = std::make_unique<OracleBundle>();
  require(c.paths.pvae, "paths.pvae", c.command);
  b->pvae = load_model<PvaeModel>(c.paths.pvae);
  if (c.estimator.kind == "cpvae") {
    require(c.paths.cpvae, "paths.cpvae", c.command);
    b->cpvae = load_model<CpvaeModel>(c.paths.cpvae);
    check_schema(b->cpvae.schema(), b->pvae.schema(), "the CPVAE model");
    b->oracle = std::make_unique<CpvaeOracle>(b->cpvae, b->pvae);
    return b;
  }
  require(c.paths.data, "paths.data", c.command);
  require(c.paths.propensity, "paths.propensity", c.command);
  b->data = load_dataset(c.paths.data);
  check_schema(b->pvae.schema(), b->data.schema, "the PVAE model");
  b->propensity = load_model<PropensityModel>(c.paths.propensity);
  check_schema(b->propensity.schema, b->data.schema, "the propensity model");
  if (b->propensity.num_actions != b->data.num_actions) {
    throw DataError("the propensity model and the dataset disagree on the action count");
  }
  auto lp = logged_propensities(b->propensity, b->pvae, b->data, c.threads);
  b->densities = std::make_unique<PvaeRowDensities>(b->pvae, b->data, c.estimator.components, c.seed, c.threads);
  SpvaeOptions opt;
  opt.subsample = c.estimator.subsample;
  opt.max_ips_weight = c.estimator.max_ips_weight;
  opt.seed = c.seed;
  b->estimator = std::make_unique<SpvaeEstimator>(b->data, *b->densities, std::move(lp), opt);
  b->oracle = std::make_unique<SpvaeOracle>(*b->estimator, b->pvae, c.estimator.kind == "spvae-matched");
  return b;
}

// Applies every strategy to one feature. Conservative entries with the same
// (u, L) share one set of prior samples and scores.
std::vector<Recommendation> recommend_all(const RewardOracle& oracle, const PartialFeature& xt,
                                          const std::vector<StrategySpec>& specs, Rng& rng) {
  std::vector<Recommendation> out;
  std::map<std::pair<std::size_t, std::size_t>, ConservativeCandidates> shared;
  for (const auto& s : specs) {
    if (s.kind != StrategyKind::Conservative) {
      out.push_back(recommend(oracle, xt, s, rng));
      continue;
    }
    const auto key = std::make_pair(s.u, s.density_components);
    auto it = shared.find(key);
    if (it == shared.end()) {
      it = shared.emplace(key, conservative_candidates(oracle, xt, s.u, rng, s.density_components)).first;
    }
    auto r = conservative_from_candidates(it->second, xt, s.c, oracle.generator());
    r.strategy = s;
    out.push_back(std::move(r));
  }
  return out;
}

void write_json(const fs::path& path, const json& j, RunResult& result) {
  write_file_atomic(path, j.dump() + "\n");
  result.outputs.push_back(path);
}

void write_text(const fs::path& path, const std::string& text, RunResult& result) {
  write_file_atomic(path, text);
  result.outputs.push_back(path);
}

const char* kMetricsHeader = "run_id,family,strategy,c,avg_reward,se,tail_fraction,tail_count,n_test,delta_ate\n";

RunResult run_gen_data(const RunConfig& c) {
  require(c.paths.output, "paths.output", c.command);
  const auto env = make_environment(c.environment);
  auto data = env->generate(c.n, c.seed);
  if (c.missingness && c.missingness->kind == MissingKind::Mar) {
    Rng rng(mix_seed(c.seed, 0x6d6172));
    data = inject_missingness(data, *c.missingness, rng);
  }
  RunResult r;
  const fs::path out = c.paths.output;
  save_dataset(out, data);
  r.outputs = {out, schema_path(out)};
  if (data.truth) r.outputs.push_back(truth_path(out));
  write_json(environment_path(out), c.environment, r);
  std::size_t missing = 0;
  for (const auto& xt : data.features) missing += xt.missing_count();
  const double frac = double(missing) / double(data.size() * data.schema.size());
  r.summary = "wrote " + std::to_string(data.size()) + " rows of " + env->family() + " data (" +
              fixed(100.0 * frac, 1) + "% cells missing) to " + out.string();
  return r;
}

RunResult run_train_pvae(const RunConfig& c) {
  require(c.paths.data, "paths.data", c.command);
  require(c.paths.output, "paths.output", c.command);
  const auto data = load_dataset(c.paths.data);
  const auto res = train_pvae(data.schema, data.features, c.pvae);
  RunResult r;
  write_json(c.paths.output, res.model, r);
  r.summary = "trained PVAE for " + std::to_string(c.pvae.optimizer.epochs) + " epochs, mean ELBO " +
              fixed(res.elbo_trace.front()) + " -> " + fixed(res.elbo_trace.back());
  return r;
}

RunResult run_fit_propensity(const RunConfig& c) {
  require(c.paths.data, "paths.data", c.command);
  require(c.paths.pvae, "paths.pvae", c.command);
  require(c.paths.output, "paths.output", c.command);
  const auto data = load_dataset(c.paths.data);
  const auto pvae = load_model<PvaeModel>(c.paths.pvae);
  check_schema(pvae.schema(), data.schema, "the PVAE model");
  const auto model = fit_propensity(data, pvae, c.propensity);
  const auto lp = logged_propensities(model, pvae, data, c.threads);
  double mean = 0.0;
  for (double p : lp) mean += p / double(lp.size());
  RunResult r;
  write_json(c.paths.output, model, r);
  r.summary = "fitted " + std::to_string(model.weights.size()) + " propensity sub-models, mean logged propensity " +
              fixed(mean);
  return r;
}

RunResult run_train_cpvae(const RunConfig& c) {
  require(c.paths.data, "paths.data", c.command);
  require(c.paths.pvae, "paths.pvae", c.command);
  require(c.paths.propensity, "paths.propensity", c.command);
  require(c.paths.output, "paths.output", c.command);
  const auto data = load_dataset(c.paths.data);
  const auto pvae = load_model<PvaeModel>(c.paths.pvae);
  check_schema(pvae.schema(), data.schema, "the PVAE model");
  const auto prop = load_model<PropensityModel>(c.paths.propensity);
  check_schema(prop.schema, data.schema, "the propensity model");
  const auto res = train_cpvae(data, prop, pvae, c.cpvae, c.threads);
  RunResult r;
  write_json(c.paths.output, res.model, r);
  r.summary = "trained CPVAE for " + std::to_string(c.cpvae.optimizer.epochs) + " epochs, weighted loss " +
              fixed(res.loss_trace.front()) + " -> " + fixed(res.loss_trace.back());
  return r;
}

RunResult run_recommend(const RunConfig& c) {
  require(c.paths.output, "paths.output", c.command);
  const auto bundle = build_oracle(c);
  const std::string qpath = c.paths.queries.empty() ? c.paths.data : c.paths.queries;
  require(qpath, "paths.queries", c.command);
  const auto queries = parse_feature_csv(read_file(qpath), bundle->pvae.schema());
  std::vector<std::vector<Recommendation>> recs(queries.size());
  parallel_for(queries.size(), c.threads, [&](std::size_t i) {
    Rng rng(mix_seed(c.seed, i));
    recs[i] = recommend_all(*bundle->oracle, queries[i], c.strategies, rng);
  });
  std::string csv = "row,strategy,c,t,action,survivors,risk\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t k = 0; k < recs[i].size(); ++k) {
      const auto& spec = c.strategies[k];
      const auto& rec = recs[i][k];
      const bool cons = spec.kind == StrategyKind::Conservative;
      csv += std::to_string(i) + "," + spec.name() + "," + c_cell(spec) + "," +
             (spec.kind == StrategyKind::Mer ? std::to_string(spec.t) : "") + "," + std::to_string(rec.action) +
             "," + (cons ? std::to_string(rec.diagnostics.survivors) : "") + "," +
             (cons && rec.diagnostics.risk.defined ? fmt(rec.diagnostics.risk.value) : "") + "\n";
    }
  }
  RunResult r;
  write_text(c.paths.output, csv, r);
  r.summary = "wrote " + std::to_string(queries.size() * c.strategies.size()) + " recommendations to " +
              c.paths.output;
  return r;
}

RunResult run_evaluate(const RunConfig& c) {
  require(c.paths.output, "paths.output", c.command);
  const auto env = make_environment(c.environment);
  const auto bundle = build_oracle(c);
  check_schema(bundle->pvae.schema(), env->schema(), "the PVAE model");
  if (bundle->oracle->num_actions() != env->num_actions()) {
    throw DataError("the estimator and the environment disagree on the action count");
  }
  std::vector<std::string> names;
  for (const auto& s : c.strategies) names.push_back(s.name() + (s.kind == StrategyKind::Conservative ? "@" + fmt(s.c) : ""));
  EvalOptions opt;
  opt.n_test = c.evaluation.n_test;
  opt.seeds = c.evaluation.seeds;
  opt.tail_threshold = c.evaluation.tail_threshold;
  opt.threads = c.threads;
  opt.keep_instances = !c.paths.instances.empty();
  const auto& oracle = *bundle->oracle;
  const auto reports = evaluate_policies(
      *env, names,
      [&](const PartialFeature& xt, Rng& rng) {
        std::vector<std::size_t> actions;
        for (const auto& rec : recommend_all(oracle, xt, c.strategies, rng)) actions.push_back(rec.action);
        return actions;
      },
      opt);

  const std::string id = run_id(c);
  std::string csv = kMetricsHeader;
  std::ostringstream summary;
  summary << "strategy        c        avg_reward  se        tail_fraction\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& s = c.strategies[k];
    const auto& rep = reports[k];
    csv += id + "," + c.family + "," + s.name() + "," + c_cell(s) + "," + fmt(rep.avg_reward) + "," + fmt(rep.se) +
           "," + fmt(rep.tail_fraction) + "," + fmt(rep.tail_count) + "," + std::to_string(rep.n_test) + ",\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-15s %-8s %-11.4f %-9.4f %.4f\n", s.name().c_str(), c_cell(s).c_str(),
                  rep.avg_reward, rep.se, rep.tail_fraction);
    summary << line;
  }
  RunResult r;
  write_text(c.paths.output, csv, r);
  if (!c.paths.instances.empty()) {
    std::string inst = "strategy,c,seed,index,label,action,expected_reward,reward\n";
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const auto& s = c.strategies[k];
      for (const auto& o : reports[k].instances) {
        inst += s.name() + "," + c_cell(s) + "," + std::to_string(o.seed) + "," + std::to_string(o.index) + "," +
                std::to_string(o.label) + "," + std::to_string(o.action) + "," + fmt(o.expected_reward) + "," +
                fmt(o.reward) + "\n";
      }
    }
    write_text(c.paths.instances, inst, r);
  }
  r.summary = summary.str();
  if (!r.summary.empty() && r.summary.back() == '\n') r.summary.pop_back();
  return r;
}

RunResult run_ate(const RunConfig& c) {
  require(c.paths.output, "paths.output", c.command);
  require(c.paths.data, "paths.data", c.command);
  const auto bundle = build_oracle(c);
  const LoggedDataset data = c.estimator.kind == "cpvae" ? load_dataset(c.paths.data) : bundle->data;
  check_schema(bundle->pvae.schema(), data.schema, "the PVAE model");
  const auto& oracle = *bundle->oracle;
  const std::string id = run_id(c);
  std::string csv = kMetricsHeader;
  std::ostringstream summary;
  for (const auto& s : c.strategies) {
    if (s.kind == StrategyKind::Conservative) throw ConfigError("strategies: ate supports imputation and mer only");
    const ThetaFunction theta = [&](std::size_t i, const PartialFeature& xt, std::size_t a) {
      Rng rng(mix_seed(c.seed, i));
      if (s.kind == StrategyKind::Mer) return oracle.score_mer(xt, s.t, rng).values[a];
      return oracle.score_imputation(xt, oracle.generator().impute(xt, ImputeMode::Mean, rng)).values[a];
    };
    const auto res = estimate_ate(data, theta, c.threads);
    csv += id + "," + c.family + "," + s.name() + ",,,,,," + std::to_string(data.size()) + "," + fmt(res.delta) + "\n";
    summary << s.name() << ": tau_hat=" << fixed(res.tau_hat) << " tau=" << fixed(res.tau_true)
            << " delta=" << fixed(res.delta) << "\n";
  }
  RunResult r;
  write_text(c.paths.output, csv, r);
  r.summary = summary.str();
  r.summary.pop_back();
  return r;
}

RunResult run_limits(const RunConfig& c) {
  DiscreteEnv env;
  if (c.four_bit) {
    env = DiscreteEnv::four_bit();
  } else if (!c.environment.is_null()) {
    section("environment", [&] { env = c.environment.get<DiscreteEnv>(); });
  } else if (!c.paths.environment.empty()) {
    const auto j = read_json(c.paths.environment);
    section("environment", [&] { env = j.get<DiscreteEnv>(); });
  } else {
    throw ConfigError("environment: limits needs --four-bit or an environment description");
  }
  const auto d = decomposition(env);
  const double heuristic = heuristic_accuracy(d);
  const double bayes = bayes_accuracy(env);
  RunResult r;
  if (!c.paths.output.empty()) {
    write_json(c.paths.output,
               {{"h_a", d.h_a},
                {"i_xxt", d.i_xxt},
                {"i_cond", d.i_cond},
                {"h_cond_direct", d.h_cond_direct},
                {"h_cond_prop1", d.h_cond_prop1},
                {"i_a_xt", d.i_a_xt},
                {"heuristic_accuracy", heuristic},
                {"bayes_accuracy", bayes}},
               r);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "H_a=%.4f I=%.4f H_cond=%.4f heuristic=%.4f bayes=%.4f |direct-decomposed|=%.1e",
                d.h_a, d.i_xxt, d.h_cond_direct, heuristic, bayes, std::abs(d.h_cond_direct - d.h_cond_prop1));
  r.summary = buf;
  return r;
}

RunResult run_risk(const RunConfig& c) {
  std::string csv;
  std::ostringstream summary;
  if (!c.paths.pvae.empty()) {
    const auto pvae = load_model<PvaeModel>(c.paths.pvae);
    const std::string qpath = c.paths.queries.empty() ? c.paths.data : c.paths.queries;
    require(qpath, "paths.queries", c.command);
    const auto queries = parse_feature_csv(read_file(qpath), pvae.schema());
    csv = "row,d_miss,c,risk\n";
    for (std::size_t i = 0; i < queries.size(); ++i) {
      for (double cv : c.risk.c) {
        const auto est = estimate_risk(pvae, queries[i], cv);
        csv += std::to_string(i) + "," + std::to_string(est.missing_continuous) + "," + fmt(cv) + "," +
               (est.defined ? fmt(est.value) : "") + "\n";
      }
    }
    summary << "risk for " << queries.size() << " rows at " << c.risk.c.size() << " thresholds";
  } else {
    csv = "d_miss,c,risk\n";
    summary << "d_miss  c         risk";
    for (std::size_t d : c.risk.d_miss) {
      for (double cv : c.risk.c) {
        const double v = conservative_risk(d, cv);
        csv += std::to_string(d) + "," + fmt(cv) + "," + fmt(v) + "\n";
        char line[96];
        std::snprintf(line, sizeof line, "\n%-7zu %-9.6g %.6f", d, cv, v);
        summary << line;
      }
    }
  }
  RunResult r;
  if (!c.paths.output.empty()) write_text(c.paths.output, csv, r);
  r.summary = summary.str();
  return r;
}

}  // namespace

RunResult run(const RunConfig& config) {
  RunResult r;
  const auto& cmd = config.command;
  if (cmd == "gen-data") r = run_gen_data(config);
  else if (cmd == "train-pvae") r = run_train_pvae(config);
  else if (cmd == "fit-propensity") r = run_fit_propensity(config);
  else if (cmd == "train-cpvae") r = run_train_cpvae(config);
  else if (cmd == "recommend") r = run_recommend(config);
  else if (cmd == "evaluate") r = run_evaluate(config);
  else if (cmd == "ate") r = run_ate(config);
  else if (cmd == "limits") r = run_limits(config);
  else if (cmd == "risk") r = run_risk(config);
  else throw ConfigError("command: unknown subcommand '" + cmd + "'");
  if (!config.paths.output.empty()) {
    const json manifest = {{"run_id", run_id(config)}, {"command", cmd}, {"config", config}};
    write_json(manifest_path(config.paths.output), manifest, r);
  }
  return r;
}

RunResult replay(const fs::path& manifest, const std::string& output, const std::string& instances) {
  const auto m = read_json(manifest);
  if (!m.is_object() || !m.contains("command") || !m.contains("config")) {
    throw ConfigError(manifest.string() + ": not a run manifest");
  }
  json overrides = json::object();
  if (!output.empty()) overrides["paths"]["output"] = output;
  if (!instances.empty()) overrides["paths"]["instances"] = instances;
  return run(resolve_config(m.at("command").get<std::string>(), m, overrides));
}

}  // namespace conspol::cli
