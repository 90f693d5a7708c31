#pragma once

// Local outlier factor in novelty mode: benign points are stored with their
// precomputed k-distances and local reachability densities; a query's score
// is its LOF against those points (~1 inside a uniform cluster).

#include "pcapmorph/detector.hpp"

namespace pcapmorph {

class LofDetector : public Detector {
 public:
  LofDetector() = default;
  explicit LofDetector(size_t k, double percentile_q = 0.999)
      : k_(k), q_(percentile_q) {}

  void fit(const Matrix& benign_raw, uint64_t seed) override;
  double score_normalized(std::span<const double> z) const override;
  DetectorKind kind() const override { return DetectorKind::Lof; }
  const char* name() const override { return "lof"; }

  const std::vector<double>& benign_scores() const { return benign_scores_; }
  size_t neighbours() const { return k_; }

 protected:
  void save_payload(BinWriter& w) const override;
  void load_payload(BinReader& r) override;

 private:
  void precompute();

  size_t k_ = 20;
  double q_ = 0.999;
  Matrix points_;              // normalized benign rows
  std::vector<double> kdist_;  // distance to the k-th neighbour
  std::vector<double> lrd_;    // local reachability density
  std::vector<double> benign_scores_;
};

}  // namespace pcapmorph
