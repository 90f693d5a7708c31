#include "pcapmorph/rrcf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "pcapmorph/model_io.hpp"
#include "pcapmorph/util.hpp"

namespace pcapmorph {

namespace {

uint64_t point_hash(std::span<const double> p) {
  return fnv1a64(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(p.data()), p.size() * sizeof(double)));
}

// Random cut over a bounding box: dimension chosen with probability
// proportional to its span, cut uniform inside it.
std::pair<int, double> random_cut(std::span<const double> lo,
                                  std::span<const double> hi,
                                  std::mt19937_64& rng) {
  double total = 0.0;
  for (size_t d = 0; d < lo.size(); ++d) total += hi[d] - lo[d];
  if (total <= 0) return {0, lo[0]};  // degenerate box
  double r = std::uniform_real_distribution<double>(0.0, total)(rng);
  double cum = 0.0;
  int last_spanned = 0;
  for (size_t d = 0; d < lo.size(); ++d) {
    double span = hi[d] - lo[d];
    if (span <= 0) continue;
    last_spanned = int(d);
    cum += span;
    if (cum > r) return {int(d), lo[d] + (cum - r)};
  }
  return {last_spanned, hi[last_spanned]};
}

}  // namespace

void RrcfDetector::fit(const Matrix& benign_raw, uint64_t seed) {
  if (benign_raw.rows == 0)
    throw Error(ErrorCode::State, "cannot fit on an empty benign matrix");
  norm_.fit(benign_raw);
  dim_ = benign_raw.cols;
  seed_ = seed;

  Matrix z(benign_raw.rows, benign_raw.cols);
  for (size_t r = 0; r < benign_raw.rows; ++r) {
    auto zr = norm_.transform(benign_raw.row(r));
    std::copy(zr.begin(), zr.end(), z.row(r).begin());
  }

  samples_.clear();
  for (size_t t = 0; t < n_trees_; ++t) {
    std::mt19937_64 rng(mix_seed(seed_, 1000 + t));
    size_t take = std::min(tree_size_, z.rows);
    // reservoir sampling over the benign rows
    std::vector<uint32_t> keep(take);
    for (size_t i = 0; i < take; ++i) keep[i] = uint32_t(i);
    for (size_t i = take; i < z.rows; ++i) {
      size_t j = rng() % (i + 1);
      if (j < take) keep[j] = uint32_t(i);
    }
    Matrix sample(take, dim_);
    for (size_t i = 0; i < take; ++i) {
      auto src = z.row(keep[i]);
      std::copy(src.begin(), src.end(), sample.row(i).begin());
    }
    samples_.push_back(std::move(sample));
  }
  build_trees();
  fitted_ = true;

  benign_scores_.resize(z.rows);
  for (size_t r = 0; r < z.rows; ++r)
    benign_scores_[r] = score_normalized(z.row(r));
  calibrate_threshold(*this, benign_scores_, ThresholdRule::Percentile, q_);
}

void RrcfDetector::build_trees() {
  trees_.clear();
  for (size_t t = 0; t < samples_.size(); ++t) {
    const Matrix& sample = samples_[t];
    // collapse duplicate rows into weighted points
    std::map<std::vector<double>, uint32_t> uniq;
    for (size_t r = 0; r < sample.rows; ++r) {
      auto row = sample.row(r);
      uniq[std::vector<double>(row.begin(), row.end())] += 1;
    }
    std::vector<std::vector<double>> pts;
    std::vector<uint32_t> counts;
    for (auto& [p, c] : uniq) {
      pts.push_back(p);
      counts.push_back(c);
    }
    std::vector<uint32_t> idx(pts.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = uint32_t(i);
    Tree tree;
    tree.nodes.reserve(2 * pts.size());
    std::mt19937_64 rng(mix_seed(seed_, 2000 + t));
    tree.root = build_subtree(tree, pts, counts, std::move(idx), rng);
    trees_.push_back(std::move(tree));
  }
}

int RrcfDetector::build_subtree(Tree& t,
                                const std::vector<std::vector<double>>& pts,
                                const std::vector<uint32_t>& counts,
                                std::vector<uint32_t> idx,
                                std::mt19937_64& rng) const {
  if (idx.size() == 1) {
    Node leaf;
    leaf.count = counts[idx[0]];
    leaf.bb_lo = pts[idx[0]];
    leaf.bb_hi = pts[idx[0]];
    t.nodes.push_back(std::move(leaf));
    return int(t.nodes.size() - 1);
  }
  std::vector<double> lo = pts[idx[0]], hi = pts[idx[0]];
  for (size_t i = 1; i < idx.size(); ++i) {
    const auto& p = pts[idx[i]];
    for (size_t d = 0; d < dim_; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  auto [cut_dim, cut] = random_cut(lo, hi, rng);
  // A cut on the upper face would leave the right side empty; pull it
  // inside the span (cut == lo still separates min from max).
  if (cut >= hi[cut_dim]) {
    cut = lo[cut_dim] + (hi[cut_dim] - lo[cut_dim]) / 2;
    if (cut >= hi[cut_dim]) cut = lo[cut_dim];
  }
  std::vector<uint32_t> left_idx, right_idx;
  for (uint32_t i : idx) {
    (pts[i][cut_dim] <= cut ? left_idx : right_idx).push_back(i);
  }
  // The cut lies strictly below the occupied span's top, so both sides
  // hold at least the extreme point of that side.
  int left = build_subtree(t, pts, counts, std::move(left_idx), rng);
  int right = build_subtree(t, pts, counts, std::move(right_idx), rng);
  Node branch;
  branch.left = left;
  branch.right = right;
  branch.cut_dim = cut_dim;
  branch.cut = cut;
  branch.count = t.nodes[left].count + t.nodes[right].count;
  branch.bb_lo = std::move(lo);
  branch.bb_hi = std::move(hi);
  t.nodes.push_back(std::move(branch));
  int id = int(t.nodes.size() - 1);
  t.nodes[left].parent = id;
  t.nodes[right].parent = id;
  return id;
}

int RrcfDetector::insert_query(Tree& t, std::span<const double> q,
                               std::mt19937_64& rng) const {
  int cur = t.root;
  int cut_dim = 0;
  double cut = 0.0;
  bool leaf_goes_left = true;
  while (true) {
    Node& node = t.nodes[cur];
    std::vector<double> lo(dim_), hi(dim_);
    for (size_t d = 0; d < dim_; ++d) {
      lo[d] = std::min(node.bb_lo[d], q[d]);
      hi[d] = std::max(node.bb_hi[d], q[d]);
    }
    auto [cd, c] = random_cut(lo, hi, rng);
    if (c <= node.bb_lo[cd]) {
      cut_dim = cd;
      cut = c;
      leaf_goes_left = true;
      break;
    }
    if (c >= node.bb_hi[cd]) {
      cut_dim = cd;
      cut = c;
      leaf_goes_left = false;
      break;
    }
    cur = q[node.cut_dim] <= node.cut ? node.left : node.right;
  }

  Node& at = t.nodes[cur];
  int old_parent = at.parent;

  Node branch;
  branch.cut_dim = cut_dim;
  branch.cut = cut;
  branch.count = at.count + 1;
  branch.bb_lo.resize(dim_);
  branch.bb_hi.resize(dim_);
  for (size_t d = 0; d < dim_; ++d) {
    branch.bb_lo[d] = std::min(at.bb_lo[d], q[d]);
    branch.bb_hi[d] = std::max(at.bb_hi[d], q[d]);
  }
  branch.parent = old_parent;
  t.nodes.push_back(std::move(branch));
  int branch_id = int(t.nodes.size() - 1);

  Node leaf;
  leaf.count = 1;
  leaf.bb_lo.assign(q.begin(), q.end());
  leaf.bb_hi.assign(q.begin(), q.end());
  leaf.parent = branch_id;
  t.nodes.push_back(std::move(leaf));
  int leaf_id = int(t.nodes.size() - 1);

  Node& b = t.nodes[branch_id];
  b.left = leaf_goes_left ? leaf_id : cur;
  b.right = leaf_goes_left ? cur : leaf_id;
  t.nodes[cur].parent = branch_id;

  if (old_parent < 0) {
    t.root = branch_id;
  } else {
    Node& p = t.nodes[old_parent];
    (p.left == cur ? p.left : p.right) = branch_id;
  }
  for (int a = old_parent; a >= 0; a = t.nodes[a].parent) {
    Node& anc = t.nodes[a];
    anc.count += 1;
    for (size_t d = 0; d < dim_; ++d) {
      anc.bb_lo[d] = std::min(anc.bb_lo[d], q[d]);
      anc.bb_hi[d] = std::max(anc.bb_hi[d], q[d]);
    }
  }
  return leaf_id;
}

double RrcfDetector::codisp(const Tree& t, int leaf) const {
  double best = 0.0;
  int node = leaf;
  while (t.nodes[node].parent >= 0) {
    const Node& parent = t.nodes[t.nodes[node].parent];
    int sibling = parent.left == node ? parent.right : parent.left;
    best = std::max(best, double(t.nodes[sibling].count) /
                              double(t.nodes[node].count));
    node = t.nodes[node].parent;
  }
  return best;
}

void RrcfDetector::remove_query(Tree& t, int leaf) const {
  int branch = t.nodes[leaf].parent;
  Node& b = t.nodes[branch];
  int sibling = b.left == leaf ? b.right : b.left;
  int grand = b.parent;
  t.nodes[sibling].parent = grand;
  if (grand < 0) {
    t.root = sibling;
  } else {
    Node& g = t.nodes[grand];
    (g.left == branch ? g.left : g.right) = sibling;
  }
  for (int a = grand; a >= 0; a = t.nodes[a].parent) {
    Node& anc = t.nodes[a];
    anc.count -= 1;
    const Node& l = t.nodes[anc.left];
    const Node& r = t.nodes[anc.right];
    for (size_t d = 0; d < dim_; ++d) {
      anc.bb_lo[d] = std::min(l.bb_lo[d], r.bb_lo[d]);
      anc.bb_hi[d] = std::max(l.bb_hi[d], r.bb_hi[d]);
    }
  }
  // insert_query appended exactly these two nodes last
  t.nodes.pop_back();
  t.nodes.pop_back();
}

double RrcfDetector::score_normalized(std::span<const double> z) const {
  require_fitted();
  double acc = 0.0;
  uint64_t qh = point_hash(z);
  for (size_t ti = 0; ti < trees_.size(); ++ti) {
    Tree& tree = trees_[ti];
    std::mt19937_64 rng(mix_seed(mix_seed(seed_, 3000 + ti), qh));
    int leaf = insert_query(tree, z, rng);
    acc += codisp(tree, leaf);
    remove_query(tree, leaf);
  }
  return acc / double(trees_.size());
}

uint64_t RrcfDetector::forest_fingerprint() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, size_t n) {
    h = fnv1a64(
        std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(p), n), h);
  };
  for (const Tree& t : trees_) {
    mix(&t.root, sizeof(t.root));
    for (const Node& n : t.nodes) {
      mix(&n.parent, sizeof(n.parent));
      mix(&n.left, sizeof(n.left));
      mix(&n.right, sizeof(n.right));
      mix(&n.count, sizeof(n.count));
      mix(&n.cut_dim, sizeof(n.cut_dim));
      mix(&n.cut, sizeof(n.cut));
      mix(n.bb_lo.data(), n.bb_lo.size() * sizeof(double));
      mix(n.bb_hi.data(), n.bb_hi.size() * sizeof(double));
    }
  }
  return h;
}

void RrcfDetector::save_payload(BinWriter& w) const {
  w.u64(n_trees_);
  w.u64(tree_size_);
  w.f64(q_);
  w.u64(dim_);
  w.u64(seed_);
  w.u64(samples_.size());
  for (const Matrix& m : samples_) {
    w.u64(m.rows);
    w.f64_span(m.data);
  }
  w.u64(benign_scores_.size());
  w.f64_span(benign_scores_);
}

void RrcfDetector::load_payload(BinReader& r) {
  n_trees_ = r.u64();
  tree_size_ = r.u64();
  q_ = r.f64();
  dim_ = r.u64();
  seed_ = r.u64();
  size_t ns = r.u64();
  samples_.clear();
  for (size_t i = 0; i < ns; ++i) {
    size_t rows = r.u64();
    Matrix m(rows, dim_);
    m.data = r.f64_vec(rows * dim_);
    samples_.push_back(std::move(m));
  }
  benign_scores_ = r.f64_vec(r.u64());
  build_trees();
}

}  // namespace pcapmorph
