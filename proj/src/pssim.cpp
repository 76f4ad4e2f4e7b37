#include "mdopt/pssim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdopt/parallel.hpp"

namespace mdopt {

namespace {

double state_norm(const MdrState& s) {
  double sq = dot(s.shared, s.shared);
  for (const auto& v : s.specific) sq += dot(v, v);
  return std::sqrt(sq);
}

MdrState state_sub(const MdrState& a, const MdrState& b) {
  MdrState out = a;
  out.shared.sub_(b.shared);
  for (std::size_t i = 0; i < out.specific.size(); ++i)
    out.specific[i].sub_(b.specific[i]);
  return out;
}

}  // namespace

std::vector<WorkerShard> partition(const MultiDomainDataset& data, int m,
                                   std::int64_t seed) {
  if (m < 1) throw ConfigError("partition: m must be >= 1");
  data.validate();
  std::vector<WorkerShard> shards(static_cast<std::size_t>(m));
  for (int w = 0; w < m; ++w) {
    shards[w].worker_id = w;
    auto& local = shards[w].local_data;
    local.num_users = data.num_users;
    local.num_items = data.num_items;
    local.domains.resize(data.domains.size());
    for (std::size_t d = 0; d < data.domains.size(); ++d)
      local.domains[d].domain_id = data.domains[d].domain_id;
  }
  for (std::size_t d = 0; d < data.domains.size(); ++d) {
    const auto& dom = data.domains[d];
    auto rows = dom.train;  // already sorted ascending
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 707,
                     static_cast<std::uint64_t>(d)));
    std::shuffle(rows.begin(), rows.end(), rng);
    // Deal round-robin, then restore original row order within each worker
    // so the m=1 shard matches the training set exactly.
    std::vector<std::vector<std::size_t>> per_worker(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < rows.size(); ++i)
      per_worker[i % static_cast<std::size_t>(m)].push_back(rows[i]);
    for (int w = 0; w < m; ++w) {
      auto& mine = per_worker[static_cast<std::size_t>(w)];
      std::sort(mine.begin(), mine.end());
      auto& local_dom = shards[w].local_data.domains[d];
      local_dom.interactions.reserve(mine.size());
      for (auto row : mine) {
        local_dom.train.push_back(local_dom.interactions.size());
        local_dom.interactions.push_back(dom.interactions[row]);
      }
    }
  }
  return shards;
}

RoundLog run_round(ServerState& server, const std::vector<WorkerShard>& shards,
                   const TrainConfig& cfg, int threads, TrainStats* stats) {
  if (shards.empty()) throw ConfigError("run_round: no shards");
  if (!server.global.shared.layout())
    throw LayoutError("run_round: server state is empty");
  TrainConfig worker_cfg = cfg;
  worker_cfg.allow_empty_domains = true;

  const std::size_t m = shards.size();
  std::vector<MdrState> locals(m);
  std::vector<TrainStats> worker_stats(m);
  // Every worker trains from the same snapshot; results are only combined
  // after all workers finish, so execution order cannot matter.
  const MdrState snapshot = server.global;
  parallel_for(m, threads, [&](std::size_t w) {
    const auto& shard = shards[w];
    if (shard.local_data.domains.size() != snapshot.n_domains())
      throw LayoutError("run_round: shard domain count differs from server");
    try {
      TrainView view(shard.local_data, Split::Train);
      Rng rng = epoch_rng(static_cast<std::uint64_t>(worker_cfg.seed),
                          server.round, shard.worker_id);
      MdrState local = mamdr_epoch(snapshot, view, worker_cfg, rng,
                                   stats ? &worker_stats[w] : nullptr);
      if (!local.shared.all_finite())
        throw DivergenceError("non-finite parameters");
      locals[w] = std::move(local);
    } catch (const DivergenceError& e) {
      throw DivergenceError("worker " + std::to_string(shard.worker_id) +
                                " diverged: " + e.what(),
                            e.domain_id);
    }
  });

  RoundLog log;
  log.round = server.round;
  log.worker_count = static_cast<int>(m);
  if (m == 1) {
    // snapshot + (local - snapshot) is exactly the local endpoint; adopt it
    // directly so the one-worker round stays bitwise equal to a
    // single-machine epoch.
    log.mean_delta_norm = state_norm(state_sub(locals[0], snapshot));
    server.global = std::move(locals[0]);
  } else {
    // Reduce deltas in worker-id order for a deterministic sum.
    MdrState mean = state_sub(locals[0], snapshot);
    double norm_sum = state_norm(mean);
    for (std::size_t w = 1; w < m; ++w) {
      const MdrState delta = state_sub(locals[w], snapshot);
      norm_sum += state_norm(delta);
      mean.shared.add_(delta.shared);
      for (std::size_t i = 0; i < mean.specific.size(); ++i)
        mean.specific[i].add_(delta.specific[i]);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    mean.shared.scale_(inv_m);
    for (auto& v : mean.specific) v.scale_(inv_m);
    log.mean_delta_norm = norm_sum * inv_m;
    server.global.shared.add_(mean.shared);
    for (std::size_t i = 0; i < server.global.specific.size(); ++i)
      server.global.specific[i].add_(mean.specific[i]);
  }
  ++server.round;
  if (stats)
    for (const auto& ws : worker_stats) stats->grad_evals += ws.grad_evals;
  return log;
}

std::vector<RoundLog> run_rounds(
    ServerState& server, const std::vector<WorkerShard>& shards,
    const TrainConfig& cfg, int rounds, int threads,
    const std::function<double(const MdrState&)>& score, TrainStats* stats) {
  if (rounds < 0) throw ConfigError("run_rounds: rounds must be >= 0");
  std::vector<RoundLog> logs;
  logs.reserve(static_cast<std::size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    RoundLog log = run_round(server, shards, cfg, threads, stats);
    log.macro_auc = score ? score(server.global) : 0.0;
    logs.push_back(log);
  }
  return logs;
}

}  // namespace mdopt
