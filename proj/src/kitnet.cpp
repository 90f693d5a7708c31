#include "pcapmorph/kitnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcapmorph/model_io.hpp"

namespace pcapmorph {

namespace {

size_t hidden_width(size_t inputs, double ratio) {
  return std::max<size_t>(1, size_t(std::llround(double(inputs) * ratio)));
}

struct DendroNode {
  int left = -1, right = -1;
  std::vector<uint32_t> members;
};

void split_node(const std::vector<DendroNode>& nodes, int at, size_t max_size,
                std::vector<std::vector<uint32_t>>& out) {
  const DendroNode& n = nodes[at];
  if (n.members.size() <= max_size || n.left < 0) {
    out.push_back(n.members);
    return;
  }
  split_node(nodes, n.left, max_size, out);
  split_node(nodes, n.right, max_size, out);
}

}  // namespace

std::vector<std::vector<uint32_t>> correlation_clusters(const Matrix& benign,
                                                        size_t max_size) {
  const size_t d = benign.cols;
  if (benign.rows < 2)
    throw Error(ErrorCode::State, "clustering needs at least two rows");

  // Pearson correlation between columns; constant columns correlate with
  // nothing (distance 1 everywhere).
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (size_t r = 0; r < benign.rows; ++r)
    for (size_t c = 0; c < d; ++c) mean[c] += benign.at(r, c);
  for (auto& m : mean) m /= double(benign.rows);
  for (size_t r = 0; r < benign.rows; ++r)
    for (size_t c = 0; c < d; ++c) {
      double v = benign.at(r, c) - mean[c];
      sd[c] += v * v;
    }
  for (auto& s : sd) s = std::sqrt(s / double(benign.rows));

  std::vector<double> dist(d * d, 1.0);
  for (size_t a = 0; a < d; ++a) {
    dist[a * d + a] = 0.0;
    for (size_t b = a + 1; b < d; ++b) {
      double corr = 0.0;
      if (sd[a] > 0 && sd[b] > 0) {
        double acc = 0.0;
        for (size_t r = 0; r < benign.rows; ++r)
          acc += (benign.at(r, a) - mean[a]) * (benign.at(r, b) - mean[b]);
        corr = acc / double(benign.rows) / (sd[a] * sd[b]);
      }
      double dd = 1.0 - std::abs(corr);
      dist[a * d + b] = dd;
      dist[b * d + a] = dd;
    }
  }

  // Complete-linkage agglomeration down to a single root.
  std::vector<DendroNode> nodes(d);
  std::vector<int> active;
  for (size_t c = 0; c < d; ++c) {
    nodes[c].members = {uint32_t(c)};
    active.push_back(int(c));
  }
  auto linkage = [&](int x, int y) {
    double worst = 0.0;
    for (uint32_t a : nodes[x].members)
      for (uint32_t b : nodes[y].members)
        worst = std::max(worst, dist[a * d + b]);
    return worst;
  };
  while (active.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    size_t bi = 0, bj = 1;
    for (size_t i = 0; i < active.size(); ++i)
      for (size_t j = i + 1; j < active.size(); ++j) {
        double l = linkage(active[i], active[j]);
        if (l < best) {
          best = l;
          bi = i;
          bj = j;
        }
      }
    DendroNode merged;
    merged.left = active[bi];
    merged.right = active[bj];
    merged.members = nodes[active[bi]].members;
    merged.members.insert(merged.members.end(),
                          nodes[active[bj]].members.begin(),
                          nodes[active[bj]].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    nodes.push_back(std::move(merged));
    active.erase(active.begin() + bj);
    active.erase(active.begin() + bi);
    active.push_back(int(nodes.size() - 1));
  }

  std::vector<std::vector<uint32_t>> out;
  split_node(nodes, active.front(), max_size, out);
  std::sort(out.begin(), out.end());
  return out;
}

void KitNetDetector::fit(const Matrix& benign_raw, uint64_t seed) {
  if (benign_raw.rows == 0)
    throw Error(ErrorCode::State, "cannot fit on an empty benign matrix");
  norm_.fit(benign_raw);
  Matrix z(benign_raw.rows, benign_raw.cols);
  for (size_t r = 0; r < benign_raw.rows; ++r) {
    auto zr = norm_.transform(benign_raw.row(r));
    std::copy(zr.begin(), zr.end(), z.row(r).begin());
  }

  clusters_ = correlation_clusters(benign_raw, max_cluster_);

  members_.clear();
  for (size_t ci = 0; ci < clusters_.size(); ++ci) {
    size_t width = clusters_[ci].size();
    members_.emplace_back(
        std::vector<size_t>{width, hidden_width(width, hidden_ratio_), width},
        Activation::Sigmoid, Activation::Sigmoid, seed + 17 * (ci + 1));
    Matrix sub(z.rows, width);
    for (size_t r = 0; r < z.rows; ++r)
      for (size_t j = 0; j < width; ++j)
        sub.at(r, j) = z.at(r, clusters_[ci][j]);
    members_[ci].train_epoch(sub);
  }
  fitted_ = true;

  Matrix errs(0, clusters_.size());
  for (size_t r = 0; r < z.rows; ++r) errs.push_row(cluster_errors(z.row(r)));
  error_norm_.fit(errs);
  Matrix errs_z(errs.rows, errs.cols);
  for (size_t r = 0; r < errs.rows; ++r) {
    auto er = error_norm_.transform(errs.row(r));
    std::copy(er.begin(), er.end(), errs_z.row(r).begin());
  }
  size_t k = clusters_.size();
  output_ = MultilayerAutoencoder(
      std::vector<size_t>{k, hidden_width(k, hidden_ratio_), k},
      Activation::Sigmoid, Activation::Sigmoid, seed + 7919);
  output_.train_epoch(errs_z);

  benign_scores_.resize(z.rows);
  for (size_t r = 0; r < z.rows; ++r)
    benign_scores_[r] = score_normalized(z.row(r));
  calibrate_threshold(*this, benign_scores_, ThresholdRule::Percentile, q_);
}

std::vector<double> KitNetDetector::cluster_errors(
    std::span<const double> z) const {
  std::vector<double> errs(clusters_.size());
  std::vector<double> sub;
  for (size_t ci = 0; ci < clusters_.size(); ++ci) {
    sub.resize(clusters_[ci].size());
    for (size_t j = 0; j < sub.size(); ++j) sub[j] = z[clusters_[ci][j]];
    errs[ci] = members_[ci].rmse(sub);
  }
  return errs;
}

double KitNetDetector::score_normalized(std::span<const double> z) const {
  require_fitted();
  std::vector<double> errs = cluster_errors(z);
  error_norm_.transform_inplace(errs);
  return output_.rmse(errs);
}

void KitNetDetector::save_payload(BinWriter& w) const {
  w.u64(max_cluster_);
  w.f64(hidden_ratio_);
  w.f64(q_);
  w.u64(clusters_.size());
  for (const auto& c : clusters_) {
    w.u64(c.size());
    for (uint32_t i : c) w.u32(i);
  }
  for (const auto& m : members_) m.save(w);
  output_.save(w);
  error_norm_.save(w);
  w.u64(benign_scores_.size());
  w.f64_span(benign_scores_);
}

void KitNetDetector::load_payload(BinReader& r) {
  max_cluster_ = r.u64();
  hidden_ratio_ = r.f64();
  q_ = r.f64();
  clusters_.resize(r.u64());
  for (auto& c : clusters_) {
    c.resize(r.u64());
    for (auto& i : c) i = r.u32();
  }
  members_.assign(clusters_.size(), MultilayerAutoencoder());
  for (auto& m : members_) m.load(r);
  output_.load(r);
  error_norm_.load(r);
  benign_scores_ = r.f64_vec(r.u64());
}

}  // namespace pcapmorph
