#pragma once

// Robust random cut forest: trees built over reservoir samples of benign
// points; a query is scored by inserting it into each tree, taking the
// collusive displacement of its leaf, and removing it again (each tree is
// restored exactly). Scoring mutates trees transiently, so concurrent
// scoring needs external synchronisation or per-thread copies.

#include <random>

#include "pcapmorph/detector.hpp"

namespace pcapmorph {

class RrcfDetector : public Detector {
 public:
  RrcfDetector() = default;
  RrcfDetector(size_t n_trees, size_t tree_size, double percentile_q = 0.999)
      : n_trees_(n_trees), tree_size_(tree_size), q_(percentile_q) {}

  void fit(const Matrix& benign_raw, uint64_t seed) override;
  double score_normalized(std::span<const double> z) const override;
  DetectorKind kind() const override { return DetectorKind::Rrcf; }
  const char* name() const override { return "rrcf"; }

  const std::vector<double>& benign_scores() const { return benign_scores_; }
  // Structure digest over every tree; insert/remove symmetry audits.
  uint64_t forest_fingerprint() const;

 protected:
  void save_payload(BinWriter& w) const override;
  void load_payload(BinReader& r) override;

 private:
  struct Node {
    int parent = -1, left = -1, right = -1;
    uint32_t count = 0;
    int cut_dim = -1;  // -1 marks a leaf
    double cut = 0.0;
    std::vector<double> bb_lo, bb_hi;  // leaves: the point itself
    bool leaf() const { return cut_dim < 0; }
  };
  struct Tree {
    std::vector<Node> nodes;
    int root = -1;
  };

  void build_trees();
  int build_subtree(Tree& t, const std::vector<std::vector<double>>& pts,
                    const std::vector<uint32_t>& counts,
                    std::vector<uint32_t> idx, std::mt19937_64& rng) const;
  int insert_query(Tree& t, std::span<const double> q,
                   std::mt19937_64& rng) const;
  double codisp(const Tree& t, int leaf) const;
  void remove_query(Tree& t, int leaf) const;

  size_t n_trees_ = 40;
  size_t tree_size_ = 256;
  double q_ = 0.999;
  size_t dim_ = 0;
  uint64_t seed_ = 0;
  std::vector<Matrix> samples_;  // per-tree reservoir sample (normalized)
  mutable std::vector<Tree> trees_;
  std::vector<double> benign_scores_;
};

}  // namespace pcapmorph
