#pragma once

#include <vector>

#include "mdopt/dataset.hpp"
#include "mdopt/model.hpp"
#include "mdopt/rng.hpp"

namespace mdopt {

// A minibatch plus the domain id of each sample, for consumers that weight
// or group by domain.
struct TaggedBatch {
  Batch batch;
  std::vector<int> domains;
};

// Read-only view over one split of a dataset, the thing strategies sample
// batches from. Holds a pointer; the dataset must outlive the view.
class TrainView {
 public:
  explicit TrainView(const MultiDomainDataset& data, Split split = Split::Train);

  const MultiDomainDataset& data() const { return *data_; }
  Split split() const { return split_; }
  std::size_t n_domains() const { return data_->domains.size(); }
  std::size_t rows(std::size_t domain) const;
  std::size_t total_rows() const;

  // batch_size indices drawn uniformly with replacement from the domain's
  // split rows. Empty domain -> DataError.
  Batch sample_batch(std::size_t domain, std::size_t batch_size, Rng& rng) const;

  // Every split row of the domain, in index order.
  Batch full_batch(std::size_t domain) const;

  // One shuffled pass over the union of all domains' split rows, chunked
  // into batches of batch_size (last one may be short).
  std::vector<TaggedBatch> union_epoch_batches(std::size_t batch_size,
                                               Rng& rng) const;

  // Shuffled pass over a single domain.
  std::vector<Batch> domain_epoch_batches(std::size_t domain,
                                          std::size_t batch_size,
                                          Rng& rng) const;

 private:
  const MultiDomainDataset* data_;
  Split split_;
};

}  // namespace mdopt
