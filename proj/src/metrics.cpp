#include "mdopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mdopt/parallel.hpp"
#include "mdopt/sampler.hpp"

namespace mdopt {

double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size())
    throw EvalError("auc: score/label length mismatch");
  std::size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw EvalError("auc: labels must be 0 or 1");
    pos += y == 1.0;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw EvalError("auc: needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Sum of positive midranks; tied scores share the average rank.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1.0) rank_sum += midrank;
    i = j;
  }
  const auto p = static_cast<double>(pos);
  const auto n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

MetricReport evaluate(const ParamVector& shared,
                      std::span<const ParamVector> specific,
                      const MultiDomainDataset& data, Split split,
                      int threads) {
  if (!specific.empty() && specific.size() != data.domains.size())
    throw EvalError("evaluate: one specific vector per domain expected");
  TrainView view(data, split);
  MetricReport report;
  report.per_domain.resize(data.domains.size());

  parallel_for(data.domains.size(), threads, [&](std::size_t d) {
    auto& m = report.per_domain[d];
    m.domain_id = data.domains[d].domain_id;
    if (view.rows(d) == 0) {
      m.skipped = true;
      m.loss = std::numeric_limits<double>::quiet_NaN();
      m.auc = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const Batch batch = view.full_batch(d);
    for (double y : batch.labels) m.n_pos += y == 1.0;
    m.n_neg = batch.size() - m.n_pos;
    const ParamVector params =
        specific.empty() ? shared : combine(shared, specific[d]);
    m.loss = loss_only(params, batch);
    if (m.n_pos == 0 || m.n_neg == 0) {
      m.skipped = true;
      m.auc = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    m.auc = auc(forward(params, batch), batch.labels);
  });

  double sum = 0.0;
  std::size_t kept = 0;
  for (const auto& m : report.per_domain) {
    if (m.skipped) {
      report.skipped_domains.push_back(m.domain_id);
    } else {
      sum += m.auc;
      ++kept;
    }
  }
  if (kept == 0) throw EvalError("evaluate: every domain was skipped");
  report.macro_auc = sum / static_cast<double>(kept);
  return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open for writing: " + path);
  f << "domain_id,n_pos,n_neg,auc,loss\n";
  char buf[64];
  for (const auto& m : report.per_domain) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", m.auc, m.loss);
    f << m.domain_id << ',' << m.n_pos << ',' << m.n_neg << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.macro_auc);
  f << "macro_auc," << buf << "\n";
  if (!f) throw EvalError("write failed: " + path);
}

}  // namespace mdopt
