#pragma once

#include <functional>
#include <vector>

#include "mdopt/strategies.hpp"

namespace mdopt {

// One worker's slice of the training rows. The domain-id space (and the
// user/item id space) stays global so every worker shares one parameter
// layout; a domain with too few rows is simply empty on some workers.
struct WorkerShard {
  int worker_id = 0;
  MultiDomainDataset local_data;
};

struct ServerState {
  MdrState global;
  int round = 0;
};

// Random row partition of the train split, stratified by domain, dealt
// round-robin after a seeded shuffle. Within each shard, rows keep their
// original dataset order, so the m=1 shard is the training set verbatim.
std::vector<WorkerShard> partition(const MultiDomainDataset& data, int m,
                                   std::int64_t seed);

struct RoundLog {
  int round = 0;
  int worker_count = 0;
  double mean_delta_norm = 0.0;  // mean over workers of |local - snapshot|
  double macro_auc = 0.0;
};

// One synchronous round: every worker copies the global state, runs one
// local MAMDR epoch seeded by (cfg.seed, round, worker_id), and emits its
// parameter delta; the server applies the mean delta and advances the
// round. Worker order never affects the result.
RoundLog run_round(ServerState& server, const std::vector<WorkerShard>& shards,
                   const TrainConfig& cfg, int threads = 1,
                   TrainStats* stats = nullptr);

// `rounds` rounds; `score`, when set, is called on the post-round global
// state to fill RoundLog.macro_auc.
std::vector<RoundLog> run_rounds(
    ServerState& server, const std::vector<WorkerShard>& shards,
    const TrainConfig& cfg, int rounds, int threads = 1,
    const std::function<double(const MdrState&)>& score = nullptr,
    TrainStats* stats = nullptr);

}  // namespace mdopt
