#pragma once

#include <span>
#include <string>
#include <vector>

#include "mdopt/dataset.hpp"
#include "mdopt/model.hpp"

namespace mdopt {

// Rank-based AUC, ties contribute 1/2; O(m log m).
double auc(const std::vector<double>& scores, const std::vector<double>& labels);

struct DomainMetrics {
  int domain_id = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double auc = 0.0;
  double loss = 0.0;
  bool skipped = false;  // single-class or empty split; excluded from macro
};

struct MetricReport {
  std::vector<DomainMetrics> per_domain;
  double macro_auc = 0.0;  // unweighted mean over non-skipped domains
  std::vector<int> skipped_domains;
};

// Per-domain scores come from shared + specific[d]; pass an empty specific
// span to evaluate the shared model alone.
MetricReport evaluate(const ParamVector& shared,
                      std::span<const ParamVector> specific,
                      const MultiDomainDataset& data, Split split,
                      int threads = 1);

void write_report_csv(const MetricReport& report, const std::string& path);

}  // namespace mdopt
