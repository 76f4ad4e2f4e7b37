#include "mdopt/sampler.hpp"

#include <algorithm>
#include <random>

namespace mdopt {

TrainView::TrainView(const MultiDomainDataset& data, Split split)
    : data_(&data), split_(split) {}

std::size_t TrainView::rows(std::size_t domain) const {
  if (domain >= data_->domains.size())
    throw IndexError("sampler: domain index out of range");
  return data_->domains[domain].indices(split_).size();
}

std::size_t TrainView::total_rows() const {
  std::size_t c = 0;
  for (std::size_t d = 0; d < n_domains(); ++d) c += rows(d);
  return c;
}

namespace {

void push_row(Batch& batch, const DomainData& dom, std::size_t row) {
  const auto& it = dom.interactions[row];
  batch.user_ids.push_back(it.user_id);
  batch.item_ids.push_back(it.item_id);
  batch.labels.push_back(static_cast<double>(it.label));
}

}  // namespace

Batch TrainView::sample_batch(std::size_t domain, std::size_t batch_size,
                              Rng& rng) const {
  const auto& dom = data_->domains.at(domain);
  const auto& idx = dom.indices(split_);
  if (idx.empty())
    throw DataError("sampler: domain " + std::to_string(dom.domain_id) +
                    " has no " + to_string(split_) + " rows");
  if (batch_size == 0) throw ConfigError("sampler: batch_size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
  Batch batch;
  batch.user_ids.reserve(batch_size);
  batch.item_ids.reserve(batch_size);
  batch.labels.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b)
    push_row(batch, dom, idx[pick(rng)]);
  return batch;
}

Batch TrainView::full_batch(std::size_t domain) const {
  const auto& dom = data_->domains.at(domain);
  const auto& idx = dom.indices(split_);
  if (idx.empty())
    throw DataError("sampler: domain " + std::to_string(dom.domain_id) +
                    " has no " + to_string(split_) + " rows");
  Batch batch;
  for (auto row : idx) push_row(batch, dom, row);
  return batch;
}

std::vector<TaggedBatch> TrainView::union_epoch_batches(std::size_t batch_size,
                                                        Rng& rng) const {
  if (batch_size == 0) throw ConfigError("sampler: batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> all;  // (domain, row)
  for (std::size_t d = 0; d < n_domains(); ++d)
    for (auto row : data_->domains[d].indices(split_)) all.emplace_back(d, row);
  if (all.empty()) throw DataError("sampler: split has no rows");
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<TaggedBatch> out;
  out.reserve(all.size() / batch_size + 1);
  for (std::size_t start = 0; start < all.size(); start += batch_size) {
    TaggedBatch tb;
    const std::size_t stop = std::min(all.size(), start + batch_size);
    for (std::size_t i = start; i < stop; ++i) {
      push_row(tb.batch, data_->domains[all[i].first], all[i].second);
      tb.domains.push_back(static_cast<int>(all[i].first));
    }
    out.push_back(std::move(tb));
  }
  return out;
}

std::vector<Batch> TrainView::domain_epoch_batches(std::size_t domain,
                                                   std::size_t batch_size,
                                                   Rng& rng) const {
  if (batch_size == 0) throw ConfigError("sampler: batch_size must be >= 1");
  const auto& dom = data_->domains.at(domain);
  auto idx = dom.indices(split_);
  if (idx.empty())
    throw DataError("sampler: domain " + std::to_string(dom.domain_id) +
                    " has no " + to_string(split_) + " rows");
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    Batch batch;
    const std::size_t stop = std::min(idx.size(), start + batch_size);
    for (std::size_t i = start; i < stop; ++i) push_row(batch, dom, idx[i]);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace mdopt
