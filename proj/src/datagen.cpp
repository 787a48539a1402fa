#include "femam/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "femam/error.hpp"
#include "femam/rng.hpp"

namespace femam {

void DatasetSpec::validate() const {
  if (num_classes == 0) throw ConfigError("dataset.num_classes must be positive");
  if (samples_per_class == 0) throw ConfigError("dataset.samples_per_class must be positive");
  if (input_dim == 0) throw ConfigError("dataset.input_dim must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("dataset.noise_std must be nonnegative");
}

Matrix class_means(const DatasetSpec& spec) {
  Rng rng = make_rng(spec.seed, Stream::dataset, {0});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(spec.num_classes, spec.input_dim);
  for (double& v : means.data) v = normal(rng);
  return means;
}

Batch generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const Matrix means = class_means(spec);
  Rng rng = make_rng(spec.seed, Stream::dataset, {1});
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch table;
  table.features = Matrix(spec.num_classes * spec.samples_per_class, spec.input_dim);
  table.labels.reserve(table.features.rows);
  std::size_t r = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++r) {
      auto row = table.features.row(r);
      for (std::size_t d = 0; d < spec.input_dim; ++d) {
        row[d] = means(c, d);
        if (spec.noise_std > 0.0) row[d] += spec.noise_std * normal(rng);
      }
      table.labels.push_back(static_cast<int>(c));
    }
  }
  return table;
}

PartitionKind parse_partition_kind(const std::string& name) {
  if (name == "cluster-wise") return PartitionKind::cluster_wise;
  if (name == "client-wise-dirichlet" || name == "dirichlet") return PartitionKind::dirichlet;
  if (name == "multi-level") return PartitionKind::multi_level;
  if (name == "iid") return PartitionKind::iid;
  throw ConfigError("partition.kind: unknown partition kind '" + name + "'");
}

std::string to_string(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::cluster_wise:
      return "cluster-wise";
    case PartitionKind::dirichlet:
      return "client-wise-dirichlet";
    case PartitionKind::multi_level:
      return "multi-level";
    case PartitionKind::iid:
      return "iid";
  }
  return "?";
}

void PartitionSpec::validate() const {
  if (num_clients == 0) throw ConfigError("partition.num_clients must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("partition.val_fraction must be in (0, 1)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("partition.test_fraction must be in (0, 1)");
  if (!(val_fraction + test_fraction < 1.0))
    throw ConfigError("partition.val_fraction + partition.test_fraction must be < 1");
  switch (kind) {
    case PartitionKind::cluster_wise:
      if (classes_per_cluster == 0) throw ConfigError("partition.classes_per_cluster must be positive");
      if (num_clusters == 0) throw ConfigError("partition.num_clusters must be positive");
      if (num_clusters > num_clients)
        throw ConfigError("partition.num_clusters must not exceed partition.num_clients");
      break;
    case PartitionKind::dirichlet:
      if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("partition.alpha must be > 0");
      break;
    case PartitionKind::multi_level:
      if (levels.size() < 2) throw ConfigError("partition.levels needs at least two levels");
      for (const auto& l : levels) {
        if (l.classes_per_cluster == 0 || l.num_clusters == 0)
          throw ConfigError("partition.levels entries must be positive");
        if (l.num_clusters > num_clients)
          throw ConfigError("partition.levels cluster count exceeds partition.num_clients");
      }
      if (!level_weights.empty()) {
        if (level_weights.size() != levels.size())
          throw ConfigError("partition.level_weights must have one entry per level");
        for (double w : level_weights)
          if (!(w > 0.0)) throw ConfigError("partition.level_weights must be positive");
      }
      break;
    case PartitionKind::iid:
      break;
  }
}

namespace {

// Largest-remainder apportionment of `total` units proportional to `weights`,
// never exceeding `caps` (when given). Ties go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights,
                                   std::span<const std::size_t> caps = {}) {
  const std::size_t k = weights.size();
  std::vector<std::size_t> out(k, 0);
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (k == 0 || total == 0 || !(wsum > 0.0)) return out;
  auto cap = [&](std::size_t i) { return caps.empty() ? total : caps[i]; };
  std::vector<double> frac(k);
  std::size_t used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = std::min(static_cast<std::size_t>(std::floor(exact)), cap(i));
    frac[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  while (used < total) {
    bool placed = false;
    for (std::size_t i : order) {
      if (used == total) break;
      if (out[i] < cap(i)) {
        ++out[i];
        ++used;
        placed = true;
      }
    }
    if (!placed) break;
  }
  return out;
}

std::vector<std::vector<std::size_t>> rows_by_class(std::span<const int> labels,
                                                    std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> out(num_classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int c = labels[r];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw Error("label out of range");
    out[static_cast<std::size_t>(c)].push_back(r);
  }
  return out;
}

// Contiguous client blocks per cluster; the first (m mod k) clusters get one extra client.
std::vector<std::vector<std::size_t>> cluster_blocks(std::size_t num_clients, std::size_t num_clusters) {
  std::vector<std::vector<std::size_t>> blocks(num_clusters);
  const std::size_t base = num_clients / num_clusters;
  const std::size_t extra = num_clients % num_clusters;
  std::size_t next = 0;
  for (std::size_t j = 0; j < num_clusters; ++j) {
    const std::size_t size = base + (j < extra ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t) blocks[j].push_back(next++);
  }
  return blocks;
}

// Splits `rows` into `parts` nearly equal consecutive chunks; chunk i gets an
// extra row when ((i + rotate) mod parts) < remainder.
std::vector<std::span<const std::size_t>> even_chunks(std::span<const std::size_t> rows,
                                                      std::size_t parts, std::size_t rotate) {
  std::vector<std::span<const std::size_t>> out;
  const std::size_t base = rows.size() / parts;
  const std::size_t extra = rows.size() % parts;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t size = base + (((i + rotate) % parts) < extra ? 1 : 0);
    out.push_back(rows.subspan(pos, size));
    pos += size;
  }
  return out;
}

// Deals the rows of each class in `class_rows` across the clients of the
// clusters that claim the class. `claims[c]` lists clusters owning class c.
void deal_clusters(const std::vector<std::vector<std::size_t>>& class_rows,
                   const std::vector<std::vector<std::size_t>>& claims,
                   const std::vector<std::vector<std::size_t>>& blocks, Rng& rng,
                   Partition& out) {
  for (std::size_t c = 0; c < class_rows.size(); ++c) {
    std::vector<std::size_t> rows = class_rows[c];
    if (rows.empty()) continue;
    if (claims[c].empty()) {
      out.unassigned.insert(out.unassigned.end(), rows.begin(), rows.end());
      continue;
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    auto per_cluster = even_chunks(rows, claims[c].size(), c);
    for (std::size_t t = 0; t < claims[c].size(); ++t) {
      const auto& clients = blocks[claims[c][t]];
      auto per_client = even_chunks(per_cluster[t], clients.size(), c);
      for (std::size_t q = 0; q < clients.size(); ++q) {
        auto& dst = out.client_rows[clients[q]];
        dst.insert(dst.end(), per_client[q].begin(), per_client[q].end());
      }
    }
  }
}

void finalize(Partition& p) {
  for (std::size_t i = 0; i < p.client_rows.size(); ++i) {
    if (p.client_rows[i].empty())
      throw ConfigError("partition leaves client " + std::to_string(i) + " without samples");
    std::sort(p.client_rows[i].begin(), p.client_rows[i].end());
  }
  std::sort(p.unassigned.begin(), p.unassigned.end());
}

}  // namespace

Partition partition_cluster_wise(std::span<const int> labels, std::size_t num_classes,
                                 std::size_t classes_per_cluster, std::size_t num_clusters,
                                 std::size_t num_clients, std::uint64_t seed) {
  if (classes_per_cluster > num_classes)
    throw ConfigError("partition.classes_per_cluster exceeds the number of classes");
  if (classes_per_cluster == 0 || num_clusters == 0)
    throw ConfigError("partition.classes_per_cluster and partition.num_clusters must be positive");
  if (num_clusters > num_clients)
    throw ConfigError("partition.num_clusters must not exceed partition.num_clients");

  Rng rng = make_rng(seed, Stream::partition, {0});
  std::vector<std::size_t> perm(num_classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  // Cluster j owns a window of classes_per_cluster consecutive entries of the
  // permutation. Windows are disjoint when they fit; otherwise they wrap and
  // overlap, which also guarantees every class is claimed.
  std::vector<std::vector<std::size_t>> claims(num_classes);
  for (std::size_t j = 0; j < num_clusters; ++j)
    for (std::size_t t = 0; t < classes_per_cluster; ++t)
      claims[perm[(j * classes_per_cluster + t) % num_classes]].push_back(j);

  Partition out;
  out.client_rows.resize(num_clients);
  const auto blocks = cluster_blocks(num_clients, num_clusters);
  out.truth.levels.emplace_back(num_clients);
  for (std::size_t j = 0; j < num_clusters; ++j)
    for (std::size_t i : blocks[j]) out.truth.levels[0][i] = static_cast<int>(j);
  deal_clusters(rows_by_class(labels, num_classes), claims, blocks, rng, out);
  finalize(out);
  return out;
}

Partition partition_dirichlet(std::span<const int> labels, std::size_t num_classes, double alpha,
                              std::size_t num_clients, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ConfigError("partition.alpha must be > 0");
  if (num_clients == 0) throw ConfigError("partition.num_clients must be positive");
  Rng rng = make_rng(seed, Stream::partition, {1});
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Partition out;
  out.client_rows.resize(num_clients);
  auto class_rows = rows_by_class(labels, num_classes);
  for (auto& rows : class_rows) {
    std::vector<double> p(num_clients);
    for (double& v : p) v = gamma(rng);
    if (std::accumulate(p.begin(), p.end(), 0.0) <= 0.0) {
      // Every gamma draw underflowed: put the class on one random client.
      std::uniform_int_distribution<std::size_t> pick(0, num_clients - 1);
      p[pick(rng)] = 1.0;
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto counts = apportion(rows.size(), p);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < num_clients; ++i) {
      out.client_rows[i].insert(out.client_rows[i].end(), rows.begin() + pos,
                                rows.begin() + pos + counts[i]);
      pos += counts[i];
    }
  }
  // Repair empty clients by moving one sample from the currently largest client.
  for (std::size_t i = 0; i < num_clients; ++i) {
    if (!out.client_rows[i].empty()) continue;
    auto largest = std::max_element(
        out.client_rows.begin(), out.client_rows.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() < 2) throw ConfigError("not enough samples to give every client one");
    out.client_rows[i].push_back(largest->back());
    largest->pop_back();
  }
  finalize(out);
  return out;
}

std::vector<double> default_level_weights(std::span<const ClusterLevelSpec> level_specs) {
  std::vector<double> w;
  double sum = 0.0;
  for (const auto& l : level_specs) {
    w.push_back(1.0 / static_cast<double>(l.num_clusters));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return w;
}

Partition partition_multi_level(std::span<const int> labels, std::size_t num_classes,
                                std::span<const ClusterLevelSpec> level_specs,
                                std::span<const double> level_weights, std::size_t num_clients,
                                std::uint64_t seed) {
  if (level_specs.size() < 2) throw ConfigError("partition.levels needs at least two levels");
  std::size_t needed = 0;
  for (const auto& l : level_specs) {
    if (l.classes_per_cluster == 0 || l.num_clusters == 0)
      throw ConfigError("partition.levels entries must be positive");
    if (l.num_clusters > num_clients)
      throw ConfigError("partition.levels cluster count exceeds partition.num_clients");
    needed += l.classes_per_cluster * l.num_clusters;
  }
  if (needed > num_classes)
    throw ConfigError("partition.levels needs " + std::to_string(needed) + " classes but only " +
                      std::to_string(num_classes) + " exist");
  std::vector<double> weights(level_weights.begin(), level_weights.end());
  if (weights.empty()) weights = default_level_weights(level_specs);
  if (weights.size() != level_specs.size())
    throw ConfigError("partition.level_weights must have one entry per level");

  Rng rng = make_rng(seed, Stream::partition, {2});
  std::vector<std::size_t> perm(num_classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  auto class_rows = rows_by_class(labels, num_classes);
  const std::size_t L = level_specs.size();

  // Disjoint class blocks per level; inside a level, disjoint class blocks per cluster.
  std::vector<std::vector<std::size_t>> level_classes(L);
  std::size_t next = 0;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t t = 0; t < level_specs[l].classes_per_cluster * level_specs[l].num_clusters; ++t)
      level_classes[l].push_back(perm[next++]);

  Partition out;
  out.client_rows.resize(num_clients);
  for (std::size_t c = next; c < num_classes; ++c) {
    const auto& rows = class_rows[perm[c]];
    out.unassigned.insert(out.unassigned.end(), rows.begin(), rows.end());
  }

  // Trim per-level mass so level sample shares follow the weights.
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  double scale = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> available(L, 0);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t c : level_classes[l]) available[l] += class_rows[c].size();
    scale = std::min(scale, static_cast<double>(available[l]) / (weights[l] / wsum));
  }

  for (std::size_t l = 0; l < L; ++l) {
    const auto keep_total = std::min(
        available[l], static_cast<std::size_t>(std::floor(scale * weights[l] / wsum + 1e-9)));
    std::vector<double> class_sizes;
    std::vector<std::size_t> caps;
    for (std::size_t c : level_classes[l]) {
      class_sizes.push_back(static_cast<double>(class_rows[c].size()));
      caps.push_back(class_rows[c].size());
    }
    const auto keep = apportion(keep_total, class_sizes, caps);

    std::vector<std::vector<std::size_t>> level_rows(num_classes);
    std::vector<std::vector<std::size_t>> claims(num_classes);
    const std::size_t kc = level_specs[l].classes_per_cluster;
    for (std::size_t t = 0; t < level_classes[l].size(); ++t) {
      const std::size_t c = level_classes[l][t];
      std::vector<std::size_t> rows = class_rows[c];
      std::shuffle(rows.begin(), rows.end(), rng);
      level_rows[c].assign(rows.begin(), rows.begin() + keep[t]);
      out.unassigned.insert(out.unassigned.end(), rows.begin() + keep[t], rows.end());
      claims[c].push_back(t / kc);
    }
    const auto blocks = cluster_blocks(num_clients, level_specs[l].num_clusters);
    std::vector<int> truth(num_clients);
    for (std::size_t j = 0; j < blocks.size(); ++j)
      for (std::size_t i : blocks[j]) truth[i] = static_cast<int>(j);
    out.truth.levels.push_back(std::move(truth));
    deal_clusters(level_rows, claims, blocks, rng, out);
  }
  finalize(out);
  return out;
}

Partition partition_iid(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients == 0) throw ConfigError("partition.num_clients must be positive");
  if (labels.size() < num_clients) throw ConfigError("fewer samples than clients");
  Rng rng = make_rng(seed, Stream::partition, {3});
  std::vector<std::size_t> rows(labels.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  Partition out;
  out.client_rows.resize(num_clients);
  auto chunks = even_chunks(rows, num_clients, 0);
  for (std::size_t i = 0; i < num_clients; ++i)
    out.client_rows[i].assign(chunks[i].begin(), chunks[i].end());
  finalize(out);
  return out;
}

Partition make_partition(const Batch& table, std::size_t num_classes, const PartitionSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PartitionKind::cluster_wise:
      return partition_cluster_wise(table.labels, num_classes, spec.classes_per_cluster,
                                    spec.num_clusters, spec.num_clients, spec.seed);
    case PartitionKind::dirichlet:
      return partition_dirichlet(table.labels, num_classes, spec.alpha, spec.num_clients, spec.seed);
    case PartitionKind::multi_level:
      return partition_multi_level(table.labels, num_classes, spec.levels, spec.level_weights,
                                   spec.num_clients, spec.seed);
    case PartitionKind::iid:
      return partition_iid(table.labels, spec.num_clients, spec.seed);
  }
  throw Error("unreachable partition kind");
}

SplitIndices split_train_val_test(std::span<const int> labels, double val_fraction,
                                  double test_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0 && test_fraction > 0.0 && test_fraction < 1.0 &&
        val_fraction + test_fraction < 1.0))
    throw ConfigError("split fractions must lie in (0, 1) and sum below 1");
  const std::size_t n = labels.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n)
    throw ConfigError("shard of " + std::to_string(n) +
                      " samples is too small for a train/validation/test split");

  // Group shard positions by label, in first-seen label order.
  std::vector<int> classes;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < n; ++r) {
    auto it = std::find(classes.begin(), classes.end(), labels[r]);
    if (it == classes.end()) {
      classes.push_back(labels[r]);
      groups.emplace_back();
      it = classes.end() - 1;
    }
    groups[static_cast<std::size_t>(it - classes.begin())].push_back(r);
  }
  std::vector<std::size_t> order(classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return classes[a] < classes[b]; });

  std::vector<double> sizes;
  std::vector<std::size_t> caps;
  for (std::size_t g : order) {
    sizes.push_back(static_cast<double>(groups[g].size()));
    caps.push_back(groups[g].size());
  }
  const auto val_counts = apportion(n_val, sizes, caps);
  for (std::size_t k = 0; k < caps.size(); ++k) caps[k] -= val_counts[k];
  const auto test_counts = apportion(n_test, sizes, caps);

  Rng rng = make_rng(seed, Stream::split);
  SplitIndices out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::vector<std::size_t> rows = groups[order[k]];
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t v = val_counts[k];
    const std::size_t t = test_counts[k];
    out.validation.insert(out.validation.end(), rows.begin(), rows.begin() + v);
    out.test.insert(out.test.end(), rows.begin() + v, rows.begin() + v + t);
    out.train.insert(out.train.end(), rows.begin() + v + t, rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<ClientShard> make_client_shards(const Batch& table, const Partition& partition,
                                            double val_fraction, double test_fraction,
                                            std::uint64_t seed) {
  std::vector<ClientShard> shards;
  shards.reserve(partition.client_rows.size());
  for (std::size_t i = 0; i < partition.client_rows.size(); ++i) {
    const auto& rows = partition.client_rows[i];
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (std::size_t r : rows) labels.push_back(table.labels[r]);
    const auto split =
        split_train_val_test(labels, val_fraction, test_fraction, derive_seed(seed, Stream::split, {i}));
    auto pick = [&](const std::vector<std::size_t>& local) {
      std::vector<std::size_t> global;
      global.reserve(local.size());
      for (std::size_t p : local) global.push_back(rows[p]);
      return gather(table, global);
    };
    ClientShard shard;
    shard.client_id = i;
    shard.train = pick(split.train);
    shard.validation = pick(split.validation);
    shard.test = pick(split.test);
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace femam
