#pragma once

#include <array>
#include <string>
#include <vector>

#include "mdopt/dataset.hpp"
#include "mdopt/kvconfig.hpp"
#include "mdopt/strategies.hpp"

namespace mdopt {

// Everything a command needs, assembled from the key=value config plus CLI
// overrides. Exactly one data source: an on-disk dataset or a synthetic
// spec (the conflict6 preset when neither is given).
struct ExperimentConfig {
  std::string dataset_path;
  bool use_synthetic = true;
  SyntheticSpec synthetic = conflict6_spec();
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::int64_t split_seed = 1;

  ModelSpec model;
  TrainConfig train;

  std::string out_dir = "out";
  int threads = 1;
  int workers = 1;           // pssim
  int rounds = -1;           // pssim; -1 means train.epochs
  std::string checkpoint;    // eval/diagnose input
  std::string eval_split = "test";
  std::string diag_mode = "model";  // or "quad"
  int diag_epochs = -1;      // -1 means train.epochs
  std::int64_t probe_seed = 99;

  std::string raw_text;  // original config file contents, echoed verbatim
  KvConfig kv;           // effective keys (config + overrides)

  static ExperimentConfig from_kv(const KvConfig& kv, std::string raw_text = "");
};

// Dataset from the configured source; synthetic data is split with the
// configured fractions.
MultiDomainDataset load_or_generate(const ExperimentConfig& cfg);

// cfg.model with the table sizes taken from the dataset.
ModelSpec model_spec_for(const ExperimentConfig& cfg,
                         const MultiDomainDataset& data);

struct TrainOutcome {
  MdrState state;
  std::vector<double> val_macro;  // one entry per logged epoch
};

// Full training run for any strategy; per-epoch validation macro-AUC is
// recorded when log_epochs is set.
TrainOutcome run_training(const ModelSpec& spec, const MultiDomainDataset& data,
                          const TrainConfig& cfg, int threads,
                          bool log_epochs = true, TrainStats* stats = nullptr);

// Subcommand entry points; each writes its outputs under cfg.out_dir and
// returns a process exit code.
int cmd_gen(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);
int cmd_diagnose(const ExperimentConfig& cfg);
int cmd_pssim(const ExperimentConfig& cfg);

}  // namespace mdopt
