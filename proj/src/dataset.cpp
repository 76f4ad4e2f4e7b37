#include "mdopt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "mdopt/rng.hpp"

namespace mdopt {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split name: " + s);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

const std::vector<std::size_t>& DomainData::indices(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    default: return test;
  }
}

std::vector<std::size_t>& DomainData::indices(Split s) {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    default: return test;
  }
}

std::size_t DomainData::n_pos() const {
  std::size_t c = 0;
  for (const auto& it : interactions) c += it.label == 1;
  return c;
}

std::size_t DomainData::n_neg() const { return interactions.size() - n_pos(); }

void DomainData::validate() const {
  const std::size_t m = interactions.size();
  std::vector<char> seen(m, 0);
  for (const auto* set : {&train, &val, &test}) {
    for (std::size_t prev = 0, k = 0; k < set->size(); ++k) {
      const std::size_t idx = (*set)[k];
      if (idx >= m)
        throw DataError("domain " + std::to_string(domain_id) +
                        ": split index out of range");
      if (seen[idx])
        throw DataError("domain " + std::to_string(domain_id) +
                        ": split sets overlap");
      if (k > 0 && idx <= prev)
        throw DataError("domain " + std::to_string(domain_id) +
                        ": split indices not sorted");
      seen[idx] = 1;
      prev = idx;
    }
  }
  if (train.size() + val.size() + test.size() != m)
    throw DataError("domain " + std::to_string(domain_id) +
                    ": splits do not cover all interactions");
  for (const auto& it : interactions)
    if (it.label != 0 && it.label != 1)
      throw DataError("domain " + std::to_string(domain_id) +
                      ": label outside {0,1}");
  if (m > 0 && n_neg() == 0)
    throw DataError("domain " + std::to_string(domain_id) + ": no negatives");
}

double ctr_ratio(const DomainData& domain) {
  const auto neg = domain.n_neg();
  if (neg == 0)
    throw DataError("ctr_ratio: domain " + std::to_string(domain.domain_id) +
                    " has no negatives");
  return static_cast<double>(domain.n_pos()) / static_cast<double>(neg);
}

std::size_t MultiDomainDataset::total_rows() const {
  std::size_t c = 0;
  for (const auto& d : domains) c += d.interactions.size();
  return c;
}

void MultiDomainDataset::validate() const {
  if (domains.empty()) throw DataError("dataset has no domains");
  for (std::size_t d = 0; d < domains.size(); ++d) {
    if (domains[d].domain_id != static_cast<int>(d))
      throw DataError("domain ids not dense 0..n-1");
    domains[d].validate();
    for (const auto& it : domains[d].interactions) {
      if (it.user_id < 0 || it.user_id >= num_users)
        throw DataError("user id out of range in domain " + std::to_string(d));
      if (it.item_id < 0 || it.item_id >= num_items)
        throw DataError("item id out of range in domain " + std::to_string(d));
    }
  }
}

void SyntheticSpec::validate() const {
  if (n_domains < 1) throw ConfigError("synthetic: n_domains must be >= 1");
  if (users_per_domain < 1 || items_per_domain < 1)
    throw ConfigError("synthetic: users/items per domain must be >= 1");
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
    throw ConfigError("synthetic: overlap_fraction must be in [0,1]");
  if (conflict_strength < 0.0 || conflict_strength > 1.0)
    throw ConfigError("synthetic: conflict_strength must be in [0,1]");
  if (!(ctr_lo > 0.0) || ctr_lo > ctr_hi)
    throw ConfigError("synthetic: need 0 < ctr_lo <= ctr_hi");
  if (positives_per_domain < 1)
    throw ConfigError("synthetic: positives_per_domain must be >= 1");
  if (latent_dim < 1) throw ConfigError("synthetic: latent_dim must be >= 1");
}

SyntheticSpec conflict6_spec() {
  SyntheticSpec s;
  s.n_domains = 6;
  s.users_per_domain = 400;
  s.items_per_domain = 300;
  s.overlap_fraction = 0.5;
  s.conflict_strength = 0.8;
  s.positives_per_domain = 2500;
  s.latent_dim = 8;
  s.seed = 6;
  return s;
}

namespace {

std::vector<double> draw_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  std::vector<double> m(rows * cols);
  for (auto& v : m) v = dist(rng);
  return m;
}

}  // namespace

MultiDomainDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.n_domains);
  const auto U = static_cast<std::size_t>(spec.users_per_domain);
  const auto V = static_cast<std::size_t>(spec.items_per_domain);
  const auto L = static_cast<std::size_t>(spec.latent_dim);

  const auto shared_users =
      static_cast<std::size_t>(std::llround(spec.overlap_fraction * static_cast<double>(U)));
  const auto shared_items =
      static_cast<std::size_t>(std::llround(spec.overlap_fraction * static_cast<double>(V)));
  const std::size_t own_users = U - shared_users;
  const std::size_t own_items = V - shared_items;
  const std::size_t raw_users = shared_users + n * own_users;
  const std::size_t raw_items = shared_items + n * own_items;

  const auto seed = static_cast<std::uint64_t>(spec.seed);
  Rng shared_rng(mix_seed(seed, 101));
  const auto x = draw_matrix(raw_users, L, shared_rng);        // user latents
  const auto z = draw_matrix(raw_items, L, shared_rng);        // item latents
  const auto m_shared = draw_matrix(L, L, shared_rng);

  MultiDomainDataset out;
  out.domains.resize(n);

  for (std::size_t d = 0; d < n; ++d) {
    Rng rng(mix_seed(seed, 202, d));
    auto m_d = draw_matrix(L, L, rng);
    for (std::size_t i = 0; i < L * L; ++i)
      m_d[i] = (1.0 - spec.conflict_strength) * m_shared[i] +
               spec.conflict_strength * m_d[i];

    std::vector<std::int64_t> users(U), items(V);
    for (std::size_t i = 0; i < shared_users; ++i) users[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < own_users; ++i)
      users[shared_users + i] =
          static_cast<std::int64_t>(shared_users + d * own_users + i);
    for (std::size_t i = 0; i < shared_items; ++i) items[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < own_items; ++i)
      items[shared_items + i] =
          static_cast<std::int64_t>(shared_items + d * own_items + i);

    // score(u, v) = x_u . (M_d z_v); monotone in the sigmoid so ranking by
    // the bilinear form picks the same positives.
    std::vector<double> mz(V * L);
    for (std::size_t vi = 0; vi < V; ++vi) {
      const double* zv = z.data() + static_cast<std::size_t>(items[vi]) * L;
      for (std::size_t r = 0; r < L; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < L; ++c) acc += m_d[r * L + c] * zv[c];
        mz[vi * L + r] = acc;
      }
    }
    const std::size_t grid = U * V;
    const auto n_pos = static_cast<std::size_t>(spec.positives_per_domain);
    if (n_pos > grid)
      throw InfeasibleError("synthetic: domain " + std::to_string(d) +
                            " requests more positives than user-item pairs");
    std::vector<double> scores(grid);
    for (std::size_t ui = 0; ui < U; ++ui) {
      const double* xu = x.data() + static_cast<std::size_t>(users[ui]) * L;
      for (std::size_t vi = 0; vi < V; ++vi) {
        double acc = 0.0;
        for (std::size_t r = 0; r < L; ++r) acc += xu[r] * mz[vi * L + r];
        scores[ui * V + vi] = acc;
      }
    }
    std::vector<std::size_t> order(grid);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_pos),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return a < b;
                      });

    const double ctr =
        std::uniform_real_distribution<double>(spec.ctr_lo, spec.ctr_hi)(rng);
    auto n_neg = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_pos) / ctr));
    // Rounding can push the realized ratio just outside the range; nudge.
    auto ratio = [&](std::size_t neg) {
      return static_cast<double>(n_pos) / static_cast<double>(neg);
    };
    while (ratio(n_neg) > spec.ctr_hi) ++n_neg;
    while (n_neg > 1 && ratio(n_neg) < spec.ctr_lo) --n_neg;
    if (ratio(n_neg) < spec.ctr_lo || ratio(n_neg) > spec.ctr_hi)
      throw InfeasibleError("synthetic: domain " + std::to_string(d) +
                            " cannot meet the CTR range with integer counts");
    if (n_pos + n_neg > grid)
      throw InfeasibleError("synthetic: domain " + std::to_string(d) +
                            " needs more pairs than the grid holds");

    std::vector<char> used(grid, 0);
    std::vector<std::size_t> row_used(U, 0);
    auto& dom = out.domains[d];
    dom.domain_id = static_cast<int>(d);
    dom.interactions.reserve(n_pos + n_neg);
    for (std::size_t p = 0; p < n_pos; ++p) {
      const std::size_t cell = order[p];
      used[cell] = 1;
      ++row_used[cell / V];
      dom.interactions.push_back(
          {users[cell / V], items[cell % V], 1});
    }

    std::uniform_int_distribution<std::size_t> pick_user(0, U - 1);
    std::uniform_int_distribution<std::size_t> pick_cell(0, grid - 1);
    for (std::size_t t = 0; t < n_neg; ++t) {
      std::size_t cell;
      if (spec.negative_sampling == NegativeSampling::PerUser) {
        std::size_t ui = pick_user(rng);
        while (row_used[ui] == V) ui = pick_user(rng);
        // Uniform over that user's unused items via a skip walk.
        std::uniform_int_distribution<std::size_t> pick_free(0, V - row_used[ui] - 1);
        std::size_t r = pick_free(rng);
        std::size_t vi = 0;
        while (used[ui * V + vi] || r > 0) {
          if (!used[ui * V + vi]) --r;
          ++vi;
        }
        cell = ui * V + vi;
      } else {
        do {
          cell = pick_cell(rng);
        } while (used[cell]);
      }
      used[cell] = 1;
      ++row_used[cell / V];
      dom.interactions.push_back({users[cell / V], items[cell % V], 0});
    }
    std::shuffle(dom.interactions.begin(), dom.interactions.end(), rng);
    dom.train.resize(dom.interactions.size());
    std::iota(dom.train.begin(), dom.train.end(), 0);
  }

  // Compact ids so every id in [0, num_users) actually occurs: keeps the
  // saved file self-describing (load infers counts as max id + 1).
  auto compact = [](auto field) {
    return [field](MultiDomainDataset& ds) -> std::int64_t {
      std::vector<std::int64_t> ids;
      for (const auto& dom : ds.domains)
        for (const auto& it : dom.interactions) ids.push_back(it.*field);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      std::unordered_map<std::int64_t, std::int64_t> remap;
      remap.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i)
        remap[ids[i]] = static_cast<std::int64_t>(i);
      for (auto& dom : ds.domains)
        for (auto& it : dom.interactions) it.*field = remap[it.*field];
      return static_cast<std::int64_t>(ids.size());
    };
  };
  out.num_users = compact(&Interaction::user_id)(out);
  out.num_items = compact(&Interaction::item_id)(out);
  out.validate();
  return out;
}

MultiDomainDataset split(const MultiDomainDataset& dataset,
                         const std::array<double, 3>& fractions,
                         std::int64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");

  MultiDomainDataset out = dataset;
  for (auto& dom : out.domains) {
    if (dom.interactions.size() < 3)
      throw DataError("split: domain " + std::to_string(dom.domain_id) +
                      " has fewer than 3 samples");
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 303,
                     static_cast<std::uint64_t>(dom.domain_id)));
    dom.train.clear();
    dom.val.clear();
    dom.test.clear();
    // Stratify: shuffle each label group, cut it by the fractions.
    for (int label : {1, 0}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < dom.interactions.size(); ++i)
        if (dom.interactions[i].label == label) idx.push_back(i);
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto g = static_cast<double>(idx.size());
      const auto n_tr = static_cast<std::size_t>(std::llround(fractions[0] * g));
      const auto n_trval = static_cast<std::size_t>(
          std::llround((fractions[0] + fractions[1]) * g));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i < n_tr) dom.train.push_back(idx[i]);
        else if (i < n_trval) dom.val.push_back(idx[i]);
        else dom.test.push_back(idx[i]);
      }
    }
    std::sort(dom.train.begin(), dom.train.end());
    std::sort(dom.val.begin(), dom.val.end());
    std::sort(dom.test.begin(), dom.test.end());
  }
  out.validate();
  return out;
}

void save(const MultiDomainDataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "domain_id,user_id,item_id,label,split\n";
  for (const auto& dom : dataset.domains) {
    std::vector<Split> row_split(dom.interactions.size(), Split::Train);
    for (auto i : dom.val) row_split[i] = Split::Val;
    for (auto i : dom.test) row_split[i] = Split::Test;
    for (std::size_t i = 0; i < dom.interactions.size(); ++i) {
      const auto& it = dom.interactions[i];
      f << dom.domain_id << ',' << it.user_id << ',' << it.item_id << ','
        << it.label << ',' << to_string(row_split[i]) << '\n';
    }
  }
  if (!f) throw DataError("write failed: " + path);
}

namespace {

std::int64_t parse_int(const std::string& field, long line) {
  std::int64_t value = 0;
  const auto* begin = field.data();
  const auto* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError("bad integer field '" + field + "'", line);
  return value;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

MultiDomainDataset load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "domain_id,user_id,item_id,label,split")
    throw DataError("unexpected header: " + line, 1);

  std::unordered_map<int, std::size_t> slot;
  MultiDomainDataset out;
  std::int64_t max_user = -1, max_item = -1;
  long line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5) throw DataError("expected 5 fields", line_no);
    const auto domain_id = parse_int(fields[0], line_no);
    const auto user_id = parse_int(fields[1], line_no);
    const auto item_id = parse_int(fields[2], line_no);
    const auto label = parse_int(fields[3], line_no);
    if (domain_id < 0) throw DataError("negative domain id", line_no);
    if (user_id < 0 || item_id < 0)
      throw DataError("negative user/item id", line_no);
    if (label != 0 && label != 1)
      throw DataError("label must be 0 or 1", line_no);
    Split sp;
    try {
      sp = split_from_string(fields[4]);
    } catch (const DataError&) {
      throw DataError("unknown split name: " + fields[4], line_no);
    }
    auto [it, inserted] = slot.try_emplace(static_cast<int>(domain_id),
                                           out.domains.size());
    if (inserted) {
      out.domains.emplace_back();
      out.domains.back().domain_id = static_cast<int>(domain_id);
    }
    auto& dom = out.domains[it->second];
    dom.indices(sp).push_back(dom.interactions.size());
    dom.interactions.push_back({user_id, item_id, static_cast<int>(label)});
    max_user = std::max(max_user, user_id);
    max_item = std::max(max_item, item_id);
  }
  if (out.domains.empty()) throw DataError("no data rows in " + path);
  std::sort(out.domains.begin(), out.domains.end(),
            [](const DomainData& a, const DomainData& b) {
              return a.domain_id < b.domain_id;
            });
  out.num_users = max_user + 1;
  out.num_items = max_item + 1;
  out.validate();
  return out;
}

void save_metadata(const MultiDomainDataset& dataset, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "domain_id,n_pos,n_neg,ctr_ratio\n";
  char buf[32];
  for (const auto& dom : dataset.domains) {
    std::snprintf(buf, sizeof(buf), "%.6f", ctr_ratio(dom));
    f << dom.domain_id << ',' << dom.n_pos() << ',' << dom.n_neg() << ','
      << buf << '\n';
  }
  if (!f) throw DataError("write failed: " + path);
}

std::vector<DomainMeta> load_metadata(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty file: " + path);
  std::vector<DomainMeta> rows;
  long line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 4) throw DataError("expected 4 fields", line_no);
    DomainMeta m;
    m.domain_id = static_cast<int>(parse_int(fields[0], line_no));
    m.n_pos = parse_int(fields[1], line_no);
    m.n_neg = parse_int(fields[2], line_no);
    try {
      m.ctr_ratio = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw DataError("bad ratio field '" + fields[3] + "'", line_no);
    }
    rows.push_back(m);
  }
  return rows;
}

}  // namespace mdopt
