#include "mdopt/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <json.hpp>

#include "mdopt/checkpoint.hpp"
#include "mdopt/diagnostics.hpp"
#include "mdopt/metrics.hpp"
#include "mdopt/parallel.hpp"
#include "mdopt/pssim.hpp"

namespace mdopt {

namespace {

const char* kSyntheticKeys[] = {
    "synthetic.preset",         "synthetic.n_domains",
    "synthetic.users_per_domain", "synthetic.items_per_domain",
    "synthetic.overlap_fraction", "synthetic.conflict_strength",
    "synthetic.ctr_lo",         "synthetic.ctr_hi",
    "synthetic.positives_per_domain", "synthetic.latent_dim",
    "synthetic.negative_sampling", "synthetic.seed",
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv,
                                           std::string raw_text) {
  ExperimentConfig cfg;
  cfg.kv = kv;
  cfg.raw_text = std::move(raw_text);

  bool any_synth = false;
  for (const char* key : kSyntheticKeys) any_synth |= kv.has(key);
  if (kv.has("data.path")) {
    if (any_synth)
      throw ConfigError(
          "config: data.path and synthetic.* are mutually exclusive");
    cfg.dataset_path = kv.get_string("data.path", "");
    cfg.use_synthetic = false;
  } else {
    const auto preset = kv.get_string("synthetic.preset", "conflict6");
    if (preset != "conflict6")
      throw ConfigError("config: unknown synthetic.preset: " + preset);
    cfg.synthetic = conflict6_spec();
    cfg.synthetic.n_domains =
        static_cast<int>(kv.get_int("synthetic.n_domains", cfg.synthetic.n_domains));
    cfg.synthetic.users_per_domain =
        kv.get_int("synthetic.users_per_domain", cfg.synthetic.users_per_domain);
    cfg.synthetic.items_per_domain =
        kv.get_int("synthetic.items_per_domain", cfg.synthetic.items_per_domain);
    cfg.synthetic.overlap_fraction =
        kv.get_double("synthetic.overlap_fraction", cfg.synthetic.overlap_fraction);
    cfg.synthetic.conflict_strength = kv.get_double(
        "synthetic.conflict_strength", cfg.synthetic.conflict_strength);
    cfg.synthetic.ctr_lo = kv.get_double("synthetic.ctr_lo", cfg.synthetic.ctr_lo);
    cfg.synthetic.ctr_hi = kv.get_double("synthetic.ctr_hi", cfg.synthetic.ctr_hi);
    cfg.synthetic.positives_per_domain = kv.get_int(
        "synthetic.positives_per_domain", cfg.synthetic.positives_per_domain);
    cfg.synthetic.latent_dim =
        static_cast<int>(kv.get_int("synthetic.latent_dim", cfg.synthetic.latent_dim));
    const auto sampling = kv.get_string("synthetic.negative_sampling", "per_user");
    if (sampling == "per_user")
      cfg.synthetic.negative_sampling = NegativeSampling::PerUser;
    else if (sampling == "global")
      cfg.synthetic.negative_sampling = NegativeSampling::Global;
    else
      throw ConfigError("config: unknown negative_sampling: " + sampling);
    cfg.synthetic.seed = kv.get_int("synthetic.seed", cfg.synthetic.seed);
  }

  cfg.fractions[0] = kv.get_double("split.train", cfg.fractions[0]);
  cfg.fractions[1] = kv.get_double("split.val", cfg.fractions[1]);
  cfg.fractions[2] = kv.get_double("split.test", cfg.fractions[2]);
  cfg.split_seed = kv.get_int("split.seed", cfg.split_seed);

  cfg.model.embed_dim = kv.get_int("model.embed_dim", cfg.model.embed_dim);
  if (kv.has("model.hidden")) {
    cfg.model.hidden = kv.get_ints("model.hidden");
  }
  cfg.model.activation = activation_from_string(
      kv.get_string("model.activation", to_string(cfg.model.activation)));
  cfg.model.seed = kv.get_int("model.seed", cfg.model.seed);

  cfg.train.alpha = kv.get_double("train.alpha", cfg.train.alpha);
  cfg.train.beta = kv.get_double("train.beta", cfg.train.beta);
  cfg.train.gamma = kv.get_double("train.gamma", cfg.train.gamma);
  cfg.train.k = static_cast<int>(kv.get_int("train.k", cfg.train.k));
  cfg.train.epochs = static_cast<int>(kv.get_int("train.epochs", cfg.train.epochs));
  cfg.train.batch_size = static_cast<std::size_t>(
      kv.get_int("train.batch_size", static_cast<std::int64_t>(cfg.train.batch_size)));
  cfg.train.inner_steps_per_domain = static_cast<int>(
      kv.get_int("train.inner_steps", cfg.train.inner_steps_per_domain));
  cfg.train.seed = kv.get_int("train.seed", cfg.train.seed);
  cfg.train.strategy = strategy_from_string(
      kv.get_string("train.strategy", to_string(cfg.train.strategy)));
  cfg.train.optimizer = optimizer_from_string(
      kv.get_string("train.optimizer", to_string(cfg.train.optimizer)));
  cfg.train.mldg_beta = kv.get_double("train.mldg_beta", cfg.train.mldg_beta);
  cfg.train.train_loss_weights =
      kv.get_bool("train.train_loss_weights", cfg.train.train_loss_weights);

  cfg.out_dir = kv.get_string("out.dir", cfg.out_dir);
  cfg.threads = static_cast<int>(kv.get_int("threads", cfg.threads));
  cfg.workers = static_cast<int>(kv.get_int("pssim.workers", cfg.workers));
  cfg.rounds = static_cast<int>(kv.get_int("pssim.rounds", cfg.rounds));
  cfg.checkpoint = kv.get_string("eval.checkpoint", cfg.checkpoint);
  cfg.eval_split = kv.get_string("eval.split", cfg.eval_split);
  cfg.diag_mode = kv.get_string("diagnose.mode", cfg.diag_mode);
  cfg.diag_epochs = static_cast<int>(kv.get_int("diagnose.epochs", cfg.diag_epochs));
  cfg.probe_seed = kv.get_int("diagnose.probe_seed", cfg.probe_seed);
  return cfg;
}

MultiDomainDataset load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.use_synthetic) return load(cfg.dataset_path);
  return split(generate(cfg.synthetic), cfg.fractions, cfg.split_seed);
}

ModelSpec model_spec_for(const ExperimentConfig& cfg,
                         const MultiDomainDataset& data) {
  ModelSpec spec = cfg.model;
  spec.num_users = data.num_users;
  spec.num_items = data.num_items;
  spec.validate();
  return spec;
}

namespace {

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

// Reproducibility contract: the run's inputs land next to its outputs.
void echo_config(const ExperimentConfig& cfg) {
  std::ofstream raw(out_path(cfg, "config.txt"), std::ios::binary);
  raw << cfg.raw_text;
  std::ofstream eff(out_path(cfg, "effective_config.txt"), std::ios::binary);
  eff << cfg.kv.to_text();
}

double val_macro_or_nan(const MdrState& state, const MultiDomainDataset& data,
                        int threads) {
  try {
    return evaluate(state.shared, state.specific, data, Split::Val, threads)
        .macro_auc;
  } catch (const EvalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrainOutcome run_training(const ModelSpec& spec, const MultiDomainDataset& data,
                          const TrainConfig& cfg, int threads, bool log_epochs,
                          TrainStats* stats) {
  TrainView view(data, Split::Train);
  cfg.validate(view.n_domains());
  TrainOutcome out;
  out.state = init_mdr_state(spec, view.n_domains(),
                             static_cast<std::uint64_t>(spec.seed));
  auto log_val = [&] {
    if (log_epochs)
      out.val_macro.push_back(val_macro_or_nan(out.state, data, threads));
  };

  AdamState adam(out.state.shared.layout(), cfg.alpha);
  std::vector<double> log_vars(view.n_domains(), 0.0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = epoch_rng(static_cast<std::uint64_t>(cfg.seed), epoch);
    switch (cfg.strategy) {
      case Strategy::Mamdr:
        out.state = mamdr_epoch(out.state, view, cfg, rng, stats);
        break;
      case Strategy::Dn:
        out.state.shared = dn_epoch(out.state.shared, view, cfg, rng, stats);
        break;
      case Strategy::Alternate:
        out.state.shared =
            alternate_epoch(out.state.shared, view, cfg, rng, stats);
        break;
      case Strategy::Joint:
      case Strategy::Finetune:  // joint pretraining phase
        out.state.shared =
            joint_epoch(out.state.shared, view, cfg, rng, &adam, stats);
        break;
      case Strategy::Weighted: {
        auto [theta, s] = weighted_loss_epoch(out.state.shared,
                                              std::move(log_vars), view, cfg,
                                              rng, stats);
        out.state.shared = std::move(theta);
        log_vars = std::move(s);
        break;
      }
      case Strategy::Pcgrad:
        out.state.shared = pcgrad_step(out.state.shared, view, cfg, rng, stats);
        break;
      case Strategy::Reptile:
        out.state.shared =
            reptile_epoch(out.state.shared, view, cfg, rng, stats);
        break;
      case Strategy::Fomaml:
        out.state.shared = fomaml_epoch(out.state.shared, view, cfg, rng, stats);
        break;
      case Strategy::Mldg:
        out.state.shared = mldg_epoch(out.state.shared, view, cfg, rng, stats);
        break;
    }
    log_val();
  }

  if (cfg.strategy == Strategy::Finetune) {
    // Per-domain copies of the pretrained model, stored as additive
    // specifics so evaluation and checkpointing stay uniform.
    const auto tuned = finetune(out.state.shared, view, cfg, stats);
    for (std::size_t d = 0; d < tuned.size(); ++d)
      out.state.specific[d] = sub(tuned[d], out.state.shared);
    log_val();
  }
  return out;
}

int cmd_gen(const ExperimentConfig& cfg) {
  if (!cfg.use_synthetic)
    throw ConfigError("gen: needs a synthetic source, not data.path");
  ensure_out_dir(cfg);
  echo_config(cfg);
  const auto data = load_or_generate(cfg);
  save(data, out_path(cfg, "dataset.csv"));
  save_metadata(data, out_path(cfg, "metadata.csv"));
  const auto total = static_cast<double>(data.total_rows());
  std::cout << "domain_id,samples,percent,ctr_ratio\n";
  for (const auto& dom : data.domains) {
    const auto rows = static_cast<double>(dom.interactions.size());
    std::cout << dom.domain_id << ',' << dom.interactions.size() << ','
              << format_double(100.0 * rows / total) << ','
              << format_double(ctr_ratio(dom)) << "\n";
  }
  std::cout << "total rows: " << data.total_rows() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  echo_config(cfg);
  const auto data = load_or_generate(cfg);
  const auto spec = model_spec_for(cfg, data);
  const auto outcome = run_training(spec, data, cfg.train, cfg.threads);

  std::ofstream vm(out_path(cfg, "val_metrics.csv"), std::ios::binary);
  vm << "epoch,macro_auc\n";
  for (std::size_t e = 0; e < outcome.val_macro.size(); ++e)
    vm << e << ',' << format_double(outcome.val_macro[e]) << '\n';
  vm.close();

  save_checkpoint(outcome.state, out_path(cfg, "checkpoint.bin"));
  const auto report = evaluate(outcome.state.shared, outcome.state.specific,
                               data, Split::Test, cfg.threads);
  write_report_csv(report, out_path(cfg, "test_report.csv"));
  std::cout << "strategy " << to_string(cfg.train.strategy)
            << " test macro_auc " << format_double(report.macro_auc) << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty())
    throw ConfigError("eval: eval.checkpoint is required");
  ensure_out_dir(cfg);
  echo_config(cfg);
  const auto data = load_or_generate(cfg);
  const auto state = load_checkpoint(cfg.checkpoint);
  const auto report = evaluate(state.shared, state.specific, data,
                               split_from_string(cfg.eval_split), cfg.threads);
  write_report_csv(report, out_path(cfg, "eval_report.csv"));
  std::cout << "macro_auc " << format_double(report.macro_auc) << "\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const bool any = cfg.kv.has("sweep.alpha") || cfg.kv.has("sweep.beta") ||
                   cfg.kv.has("sweep.gamma") || cfg.kv.has("sweep.k") ||
                   cfg.kv.has("sweep.seeds");
  if (!any)
    throw ConfigError("sweep: empty grid (set sweep.alpha/beta/gamma/k/seeds)");
  auto alphas = cfg.kv.get_doubles("sweep.alpha");
  auto betas = cfg.kv.get_doubles("sweep.beta");
  auto gammas = cfg.kv.get_doubles("sweep.gamma");
  auto ks = cfg.kv.get_ints("sweep.k");
  auto seeds = cfg.kv.get_ints("sweep.seeds");
  if (alphas.empty()) alphas = {cfg.train.alpha};
  if (betas.empty()) betas = {cfg.train.beta};
  if (gammas.empty()) gammas = {cfg.train.gamma};
  if (ks.empty()) ks = {cfg.train.k};
  if (seeds.empty()) seeds = {cfg.train.seed};

  ensure_out_dir(cfg);
  echo_config(cfg);
  const auto data = load_or_generate(cfg);
  const auto spec = model_spec_for(cfg, data);

  struct Cell {
    double alpha, beta, gamma;
    std::int64_t k, seed;
    double macro_auc = 0.0;
  };
  std::vector<Cell> cells;
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas)
        for (auto k : ks)
          for (auto s : seeds)
            cells.push_back({a, b, g, k, s, 0.0});

  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    auto& cell = cells[i];
    TrainConfig tc = cfg.train;
    tc.alpha = cell.alpha;
    tc.beta = cell.beta;
    tc.gamma = cell.gamma;
    tc.k = static_cast<int>(cell.k);
    tc.seed = cell.seed;
    const auto outcome = run_training(spec, data, tc, 1, false);
    cell.macro_auc = evaluate(outcome.state.shared, outcome.state.specific,
                              data, Split::Test, 1)
                         .macro_auc;
  });

  std::ofstream f(out_path(cfg, "sweep.csv"), std::ios::binary);
  f << "alpha,beta,gamma,k,seed,macro_auc\n";
  for (const auto& cell : cells) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%g,%g,%g,%lld,%lld,%.6f", cell.alpha,
                  cell.beta, cell.gamma, static_cast<long long>(cell.k),
                  static_cast<long long>(cell.seed), cell.macro_auc);
    f << buf << '\n';
  }
  f.close();
  std::cout << "sweep rows: " << cells.size() << "\n";
  return 0;
}

int cmd_diagnose(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  echo_config(cfg);
  nlohmann::json summary;

  if (cfg.diag_mode == "quad") {
    Rng rng(mix_seed(static_cast<std::uint64_t>(cfg.probe_seed), 808));
    const std::size_t dim = 8;
    std::vector<double> theta0(dim);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : theta0) v = dist(rng);
    double worst_dn = 0.0, worst_inner = 0.0, worst_dr = 0.0;
    for (std::size_t n : {2u, 3u}) {
      std::vector<QuadDomain> domains;
      for (std::size_t i = 0; i < n; ++i)
        domains.push_back(random_spd_domain(dim, rng));
      for (double alpha : {1e-2, 1e-3}) {
        worst_dn = std::max(worst_dn,
                            dn_taylor_residual(domains, theta0, alpha).exact_rel);
        worst_dr = std::max(
            worst_dr, dr_identity_check(domains[0], domains[1], theta0, alpha));
      }
      worst_inner = std::max(
          worst_inner, innergrad_expectation_check(domains[0], domains[1], theta0));
    }
    summary["taylor_residual"] = worst_dn;
    summary["innergrad_gap"] = worst_inner;
    summary["dr_residual"] = worst_dr;
    std::ofstream(out_path(cfg, "diagnostics.json")) << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    const bool ok = worst_dn <= 1e-10 && worst_inner <= 1e-12 && worst_dr <= 1e-10;
    if (!ok) std::cerr << "quadratic self-test failed\n";
    return ok ? 0 : 1;
  }

  if (cfg.diag_mode != "model")
    throw ConfigError("diagnose: unknown mode " + cfg.diag_mode);
  const auto data = load_or_generate(cfg);
  const auto spec = model_spec_for(cfg, data);
  ParamVector params;
  ConflictSeries series;
  if (!cfg.checkpoint.empty()) {
    params = load_checkpoint(cfg.checkpoint).shared;
  } else {
    const int epochs = cfg.diag_epochs >= 0 ? cfg.diag_epochs : cfg.train.epochs;
    series = track_inner_products(cfg.train.strategy, spec, data, cfg.train,
                                  epochs, cfg.probe_seed);
    params = init_params(spec, static_cast<std::uint64_t>(spec.seed));
  }
  std::ofstream sc(out_path(cfg, "cosine_series.csv"), std::ios::binary);
  sc << "epoch,pair_i,pair_j,inner,cosine\n";
  for (const auto& row : series.rows)
    sc << row.epoch << ',' << row.i << ',' << row.j << ','
       << format_double(row.inner) << ',' << format_double(row.cosine) << '\n';
  sc.close();

  const auto report =
      measure_conflict(params, data, cfg.probe_seed, cfg.train.batch_size);
  double mean_cosine = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < report.n; ++i)
    for (std::size_t j = i + 1; j < report.n; ++j) {
      mean_cosine += report.cosine[i * report.n + j];
      ++pairs;
    }
  summary["conflict_rate"] = report.conflict_rate;
  summary["mean_cosine"] = mean_cosine / static_cast<double>(pairs);
  summary["taylor_residual"] = dn_taylor_residual_neural(
      params, data, cfg.train.alpha, cfg.probe_seed, cfg.train.batch_size, 1e-5);
  std::ofstream(out_path(cfg, "diagnostics.json")) << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_pssim(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  echo_config(cfg);
  const auto data = load_or_generate(cfg);
  const auto spec = model_spec_for(cfg, data);
  const int rounds = cfg.rounds >= 0 ? cfg.rounds : cfg.train.epochs;

  const auto shards = partition(data, cfg.workers, cfg.train.seed);
  ServerState server;
  server.global = init_mdr_state(spec, data.domains.size(),
                                 static_cast<std::uint64_t>(spec.seed));
  const auto score = [&](const MdrState& state) {
    return val_macro_or_nan(state, data, cfg.threads);
  };
  const auto logs =
      run_rounds(server, shards, cfg.train, rounds, cfg.threads, score);

  std::ofstream f(out_path(cfg, "round_log.csv"), std::ios::binary);
  f << "round,worker_count,mean_delta_norm,macro_auc\n";
  for (const auto& log : logs)
    f << log.round << ',' << log.worker_count << ','
      << format_double(log.mean_delta_norm) << ','
      << format_double(log.macro_auc) << '\n';
  f.close();

  save_checkpoint(server.global, out_path(cfg, "checkpoint.bin"));
  const auto report = evaluate(server.global.shared, server.global.specific,
                               data, Split::Test, cfg.threads);
  write_report_csv(report, out_path(cfg, "test_report.csv"));
  std::cout << "pssim workers " << cfg.workers << " rounds " << rounds
            << " test macro_auc " << format_double(report.macro_auc) << "\n";
  return 0;
}

}  // namespace mdopt
