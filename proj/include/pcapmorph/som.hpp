#pragma once

// Self-organising map detector: k x k grid of codebook vectors trained with
// a Gaussian neighbourhood over one pass; score = Euclidean distance to the
// best-matching unit.

#include "pcapmorph/detector.hpp"

namespace pcapmorph {

class SomDetector : public Detector {
 public:
  SomDetector() = default;
  SomDetector(size_t grid, double learning_rate, double sigma0,
              double percentile_q = 0.999)
      : grid_(grid), lr0_(learning_rate), sigma0_(sigma0), q_(percentile_q) {}

  void fit(const Matrix& benign_raw, uint64_t seed) override;
  double score_normalized(std::span<const double> z) const override;
  DetectorKind kind() const override { return DetectorKind::Som; }
  const char* name() const override { return "som"; }

  const std::vector<double>& benign_scores() const { return benign_scores_; }
  std::span<const double> codebook(size_t unit) const;

 protected:
  void save_payload(BinWriter& w) const override;
  void load_payload(BinReader& r) override;

 private:
  size_t grid_ = 10;
  double lr0_ = 0.5;
  double sigma0_ = 1.0;
  double q_ = 0.999;
  size_t dim_ = 0;
  std::vector<double> codebook_;  // grid*grid rows of dim
  std::vector<double> benign_scores_;
};

}  // namespace pcapmorph
