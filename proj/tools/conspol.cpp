#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "conspol/cli.hpp"
#include "conspol/io.hpp"

namespace {

using json = nlohmann::json;
using namespace conspol;

// Collects flags that were actually given into a JSON patch over the config.
class Overrides {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    apply_.push_back([this, opt, value, pointer] {
      if (opt->count()) patch_[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& pointer, bool set_to,
                    const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    apply_.push_back([this, opt, pointer, set_to] {
      if (opt->count()) patch_[json::json_pointer(pointer)] = set_to;
    });
    return opt;
  }

  void add(std::function<void(json&)> fn) { custom_.push_back(std::move(fn)); }

  json build() {
    for (auto& fn : apply_) fn();
    for (auto& fn : custom_) fn(patch_);
    return patch_;
  }

 private:
  json patch_ = json::object();
  std::vector<std::function<void()>> apply_;
  std::vector<std::function<void(json&)>> custom_;
};

struct Command {
  CLI::App* app = nullptr;
  Overrides overrides;
  std::string config_path;
};

void add_common(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "JSON config or run manifest; flags override it")
      ->check(CLI::ExistingFile);
  cmd.overrides.option<std::uint64_t>(cmd.app, "--seed", "/seed", "Run seed");
  cmd.overrides.option<std::size_t>(cmd.app, "--threads", "/threads", "Worker cap (results do not depend on it)");
  cmd.overrides.option<std::string>(cmd.app, "--family", "/family",
                                    "Hyperparameter preset: digit, ihdp-b, glucose, binary-table");
  cmd.overrides.option<std::string>(cmd.app, "-o,--output", "/paths/output", "Output file");
}

void add_network(Command& cmd, const std::string& prefix) {
  auto& o = cmd.overrides;
  o.option<std::size_t>(cmd.app, "--epochs", prefix + "/optimizer/epochs", "Training epochs");
  o.option<std::size_t>(cmd.app, "--batch", prefix + "/optimizer/batch", "Minibatch size");
  o.option<double>(cmd.app, "--lr", prefix + "/optimizer/learning_rate", "Adam learning rate");
  o.option<std::size_t>(cmd.app, "--mc-samples", prefix + "/optimizer/mc_samples", "Latent draws per ELBO estimate");
  o.option<std::size_t>(cmd.app, "--embedding-dim", prefix + "/dims/embedding_dim", "Attribute embedding size d_e");
  o.option<std::size_t>(cmd.app, "--set-dim", prefix + "/dims/set_dim", "Output width K of h");
  o.option<std::size_t>(cmd.app, "--latent-dim", prefix + "/dims/latent_dim", "Latent size d_z");
  o.option<std::vector<std::size_t>>(cmd.app, "--encoder-hidden", prefix + "/dims/f_hidden", "Hidden widths of f")
      ->delimiter(',');
  o.option<std::vector<std::size_t>>(cmd.app, "--decoder-hidden", prefix + "/dims/decoder_hidden",
                                     "Hidden widths of the decoder")
      ->delimiter(',');
}

void add_estimator(Command& cmd) {
  auto& o = cmd.overrides;
  o.option<std::string>(cmd.app, "--data", "/paths/data", "Logged dataset CSV");
  o.option<std::string>(cmd.app, "--pvae", "/paths/pvae", "PVAE model JSON");
  o.option<std::string>(cmd.app, "--propensity", "/paths/propensity", "Propensity model JSON");
  o.option<std::string>(cmd.app, "--cpvae", "/paths/cpvae", "CPVAE model JSON");
  o.option<std::string>(cmd.app, "--estimator", "/estimator/kind", "spvae, spvae-matched or cpvae")
      ->check(CLI::IsMember({"spvae", "spvae-matched", "cpvae"}));
  o.option<std::size_t>(cmd.app, "--subsample", "/estimator/subsample", "Rows M per SPVAE query (0 = all)");
  o.option<double>(cmd.app, "--max-ips-weight", "/estimator/max_ips_weight", "Cap on 1 / propensity");
  o.option<std::size_t>(cmd.app, "--components", "/estimator/components", "Latent draws per row density");

  auto kinds = std::make_shared<std::vector<std::string>>();
  auto t = std::make_shared<std::size_t>(5);
  auto cs = std::make_shared<std::vector<double>>();
  auto u = std::make_shared<std::size_t>(100);
  auto l = std::make_shared<std::size_t>(1);
  auto* strategy = cmd.app->add_option("--strategy", *kinds, "imputation, mer or conservative (repeatable)")
                       ->delimiter(',')
                       ->check(CLI::IsMember({"imputation", "mer", "conservative"}));
  cmd.app->add_option("--t", *t, "MER posterior samples")->needs(strategy);
  cmd.app->add_option("--c", *cs, "Conservative thresholds (repeatable)")->delimiter(',')->needs(strategy);
  cmd.app->add_option("--u", *u, "Conservative prior samples")->needs(strategy);
  cmd.app->add_option("--L", *l, "Latent draws in the conservative threshold density")->needs(strategy);
  cmd.overrides.add([=](json& patch) {
    if (kinds->empty()) return;
    json list = json::array();
    for (const auto& k : *kinds) {
      if (k == "imputation") {
        list.push_back({{"kind", k}});
      } else if (k == "mer") {
        list.push_back({{"kind", k}, {"t", *t}});
      } else {
        const std::vector<double> values = cs->empty() ? std::vector<double>{0.1} : *cs;
        for (double c : values) list.push_back({{"kind", k}, {"c", c}, {"u", *u}, {"density_components", *l}});
      }
    }
    patch["strategies"] = list;
  });
}

void add_missing(Command& cmd) {
  cmd.overrides.option<double>(cmd.app, "--missing", "/missingness/rate", "Missingness rate");
}

int fail(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized recommendations from logged bandit data with missing features"};
  app.require_subcommand(1);
  std::map<std::string, std::unique_ptr<Command>> cmds;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    add_common(*c);
    auto& ref = *c;
    cmds[name] = std::move(c);
    return ref;
  };

  {
    auto& c = make("gen-data", "Generate a synthetic logged dataset");
    c.overrides.option<std::size_t>(c.app, "--n", "/n", "Rows");
    c.overrides.option<std::string>(c.app, "--environment", "/paths/environment", "Environment JSON");
    add_missing(c);
    c.overrides.option<std::string>(c.app, "--missing-kind", "/missingness/kind", "mcar or mar")
        ->check(CLI::IsMember({"mcar", "mar"}));
    c.overrides.option<std::size_t>(c.app, "--anchor", "/missingness/anchor", "MAR anchor attribute");
    c.overrides.option<double>(c.app, "--slope", "/missingness/slope", "MAR logit slope");
  }
  {
    auto& c = make("train-pvae", "Train the partial VAE on logged features");
    c.overrides.option<std::string>(c.app, "--data", "/paths/data", "Logged dataset CSV");
    add_network(c, "/pvae");
  }
  {
    auto& c = make("fit-propensity", "Fit the logging policy on imputed features");
    c.overrides.option<std::string>(c.app, "--data", "/paths/data", "Logged dataset CSV");
    c.overrides.option<std::string>(c.app, "--pvae", "/paths/pvae", "PVAE model JSON");
    c.overrides.option<std::size_t>(c.app, "--imputations", "/propensity/imputations", "Imputed copies m");
    c.overrides.option<std::size_t>(c.app, "--epochs", "/propensity/epochs", "Adam steps per regression");
    c.overrides.option<double>(c.app, "--lr", "/propensity/learning_rate", "Adam learning rate");
    c.overrides.option<double>(c.app, "--clip", "/propensity/clip", "Probability floor");
  }
  {
    auto& c = make("train-cpvae", "Train the conditional partial VAE with IPS weights");
    c.overrides.option<std::string>(c.app, "--data", "/paths/data", "Logged dataset CSV");
    c.overrides.option<std::string>(c.app, "--pvae", "/paths/pvae", "PVAE model JSON");
    c.overrides.option<std::string>(c.app, "--propensity", "/paths/propensity", "Propensity model JSON");
    add_network(c, "/cpvae");
    c.overrides.option<double>(c.app, "--reward-dropout", "/cpvae/reward_dropout",
                               "Probability of hiding the reward from the encoder");
    c.overrides.option<double>(c.app, "--max-ips-weight", "/cpvae/max_ips_weight", "Cap on 1 / propensity");
    c.overrides.flag(c.app, "--no-ips", "/cpvae/use_ips", false, "Train without IPS weights");
  }
  {
    auto& c = make("recommend", "Recommend actions for partially observed features");
    add_estimator(c);
    c.overrides.option<std::string>(c.app, "--queries", "/paths/queries", "Feature CSV (defaults to --data)");
  }
  {
    auto& c = make("evaluate", "Score strategies on fresh instances from an environment");
    add_estimator(c);
    c.overrides.option<std::string>(c.app, "--environment", "/paths/environment", "Environment JSON");
    add_missing(c);
    c.overrides.option<std::size_t>(c.app, "--n-test", "/evaluation/n_test", "Test instances per seed");
    c.overrides.option<std::vector<std::uint64_t>>(c.app, "--eval-seed", "/evaluation/seeds", "Test seeds")
        ->delimiter(',');
    c.overrides.option<double>(c.app, "--tail-threshold", "/evaluation/tail_threshold", "Tail reward threshold");
    c.overrides.option<std::string>(c.app, "--instances", "/paths/instances", "Per-instance reward CSV");
  }
  {
    auto& c = make("ate", "Average treatment effect error on a two-action dataset");
    add_estimator(c);
  }
  {
    auto& c = make("limits", "Exact uncertainty decomposition of a discrete environment");
    c.overrides.flag(c.app, "--four-bit", "/four_bit", true, "Four erased bits, two actions");
    c.overrides.option<std::string>(c.app, "--environment", "/paths/environment", "Discrete environment JSON");
  }
  {
    auto& c = make("risk", "Posterior mass excluded by the conservative threshold");
    c.overrides.option<std::vector<std::size_t>>(c.app, "--d-miss", "/risk/d_miss", "Missing continuous attributes")
        ->delimiter(',');
    c.overrides.option<std::vector<double>>(c.app, "--c", "/risk/c", "Thresholds")->delimiter(',');
    c.overrides.option<std::string>(c.app, "--pvae", "/paths/pvae", "PVAE model JSON (per-row mode)");
    c.overrides.option<std::string>(c.app, "--queries", "/paths/queries", "Feature CSV (per-row mode)");
  }
  std::string manifest, replay_output, replay_instances;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", manifest, "Run manifest JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("-o,--output", replay_output, "Write outputs here instead");
  replay->add_option("--instances", replay_instances, "Per-instance CSV path (evaluate)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kConfig;
  }

  try {
    cli::RunResult result;
    if (replay->parsed()) {
      result = cli::replay(manifest, replay_output, replay_instances);
    } else {
      for (auto& [name, cmd] : cmds) {
        if (!cmd->app->parsed()) continue;
        json file;
        if (!cmd->config_path.empty()) {
          try {
            file = json::parse(read_file(cmd->config_path));
          } catch (const nlohmann::json::exception& e) {
            return fail(ConfigError(cmd->config_path + ": " + e.what()), cli::kConfig);
          }
        }
        result = cli::run(cli::resolve_config(name, file, cmd->overrides.build()));
      }
    }
    if (!result.summary.empty()) std::cout << result.summary << "\n";
    return cli::kOk;
  } catch (const Error& e) {
    return fail(e, cli::exit_code_for(e));
  } catch (const nlohmann::json::exception& e) {
    return fail(e, cli::kData);
  } catch (const std::exception& e) {
    return fail(e, cli::kData);
  }
}
