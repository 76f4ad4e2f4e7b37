#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mdopt/runner.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::string threads;
  // subcommand-specific raw overrides, applied as config keys
  std::vector<std::pair<std::string, std::string>> keys;
};

mdopt::ExperimentConfig build_config(const CliOverrides& cli, bool seed_gen) {
  mdopt::KvConfig kv;
  std::string raw;
  if (!cli.config_path.empty()) {
    kv = mdopt::KvConfig::parse_file(cli.config_path);
    std::ifstream f(cli.config_path);
    raw.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  if (!cli.out_dir.empty()) kv.set("out.dir", cli.out_dir);
  if (!cli.seed.empty()) {
    kv.set("train.seed", cli.seed);
    if (seed_gen) kv.set("synthetic.seed", cli.seed);
  }
  if (!cli.threads.empty()) kv.set("threads", cli.threads);
  // Environment beats the flag, so schedulers can cap a whole job tree.
  if (const char* env = std::getenv("MDOPT_THREADS"); env && *env)
    kv.set("threads", env);
  for (const auto& [key, value] : cli.keys) kv.set(key, value);
  return mdopt::ExperimentConfig::from_kv(kv, std::move(raw));
}

// Lets the global flags (--config, --seed, --out, --threads) appear after
// the subcommand name as well as before it.
CLI::App* add_subcommand(CLI::App& app, const std::string& name,
                         const std::string& help) {
  auto* cmd = app.add_subcommand(name, help);
  cmd->fallthrough();
  return cmd;
}

void add_key_option(CLI::App* cmd, CliOverrides& cli, const std::string& flag,
                    const std::string& key, const std::string& help) {
  const auto setter = [&cli, key](const std::string& value) {
    cli.keys.emplace_back(key, value);
  };
  cmd->add_option_function<std::string>(flag, setter, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain training framework"};
  app.require_subcommand(1);

  CliOverrides cli;
  app.add_option("--config", cli.config_path, "key=value config file");
  app.add_option("--seed", cli.seed, "training seed override");
  app.add_option("--out", cli.out_dir, "output directory");
  app.add_option("--threads", cli.threads,
                 "worker threads (MDOPT_THREADS overrides)");

  auto* gen = add_subcommand(app, "gen", "generate a synthetic dataset");
  add_key_option(gen, cli, "--domains", "synthetic.n_domains", "domain count");
  add_key_option(gen, cli, "--conflict", "synthetic.conflict_strength",
                 "conflict strength in [0,1]");
  add_key_option(gen, cli, "--positives", "synthetic.positives_per_domain",
                 "positives per domain");

  auto* train = add_subcommand(app, "train", "train a model");
  add_key_option(train, cli, "--strategy", "train.strategy",
                 "dn|alternate|mamdr|joint|finetune|weighted|pcgrad|reptile|"
                 "fomaml|mldg");
  add_key_option(train, cli, "--epochs", "train.epochs", "epoch count");
  add_key_option(train, cli, "--alpha", "train.alpha", "inner learning rate");
  add_key_option(train, cli, "--beta", "train.beta", "outer learning rate");
  add_key_option(train, cli, "--gamma", "train.gamma", "regularization rate");
  add_key_option(train, cli, "--k", "train.k", "sampled domains per target");
  add_key_option(train, cli, "--batch-size", "train.batch_size", "batch size");
  add_key_option(train, cli, "--data", "data.path", "dataset CSV path");

  auto* eval = add_subcommand(app, "eval", "evaluate a checkpoint");
  add_key_option(eval, cli, "--checkpoint", "eval.checkpoint", "checkpoint path");
  add_key_option(eval, cli, "--split", "eval.split", "train|val|test");
  add_key_option(eval, cli, "--data", "data.path", "dataset CSV path");

  auto* sweep = add_subcommand(app, "sweep", "hyperparameter grid");
  add_key_option(sweep, cli, "--alphas", "sweep.alpha", "comma list of alpha");
  add_key_option(sweep, cli, "--betas", "sweep.beta", "comma list of beta");
  add_key_option(sweep, cli, "--gammas", "sweep.gamma", "comma list of gamma");
  add_key_option(sweep, cli, "--ks", "sweep.k", "comma list of k");
  add_key_option(sweep, cli, "--seeds", "sweep.seeds", "comma list of seeds");
  add_key_option(sweep, cli, "--strategy", "train.strategy", "strategy id");
  add_key_option(sweep, cli, "--epochs", "train.epochs", "epoch count");

  auto* diagnose = add_subcommand(app, "diagnose", "conflict and Taylor checks");
  bool quad = false;
  diagnose->add_flag("--quad", quad, "run the quadratic-oracle self-test");
  add_key_option(diagnose, cli, "--checkpoint", "eval.checkpoint",
                 "model checkpoint to analyze");
  add_key_option(diagnose, cli, "--epochs", "diagnose.epochs",
                 "tracked training epochs");
  add_key_option(diagnose, cli, "--strategy", "train.strategy", "strategy id");

  auto* pssim = add_subcommand(app, "pssim", "parameter-server simulation");
  add_key_option(pssim, cli, "-m,--workers", "pssim.workers", "worker count");
  add_key_option(pssim, cli, "--rounds", "pssim.rounds", "synchronous rounds");
  add_key_option(pssim, cli, "--data", "data.path", "dataset CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (quad) cli.keys.emplace_back("diagnose.mode", "quad");
    const auto cfg = build_config(cli, gen->parsed());
    if (gen->parsed()) return mdopt::cmd_gen(cfg);
    if (train->parsed()) return mdopt::cmd_train(cfg);
    if (eval->parsed()) return mdopt::cmd_eval(cfg);
    if (sweep->parsed()) return mdopt::cmd_sweep(cfg);
    if (diagnose->parsed()) return mdopt::cmd_diagnose(cfg);
    if (pssim->parsed()) return mdopt::cmd_pssim(cfg);
  } catch (const mdopt::DivergenceError& e) {
    std::cerr << "error: " << e.what();
    if (e.domain_id >= 0) std::cerr << " (domain " << e.domain_id << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
