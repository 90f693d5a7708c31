#pragma once

// Autoencoder-ensemble detector: the feature space is partitioned into
// correlation clusters (complete-linkage agglomerative clustering, cluster
// size capped), one small autoencoder per cluster, and an output
// autoencoder over the normalized per-cluster reconstruction errors.

#include "pcapmorph/autoencoder.hpp"
#include "pcapmorph/detector.hpp"

namespace pcapmorph {

// Complete-linkage clustering of feature columns on distance 1 - |corr|,
// recursively split so no cluster exceeds max_size. Clusters partition
// 0..cols-1 exactly; deterministic for a given matrix.
std::vector<std::vector<uint32_t>> correlation_clusters(const Matrix& benign,
                                                        size_t max_size);

class KitNetDetector : public Detector {
 public:
  KitNetDetector() = default;
  KitNetDetector(size_t max_cluster, double hidden_ratio,
                 double percentile_q = 0.999)
      : max_cluster_(max_cluster), hidden_ratio_(hidden_ratio), q_(percentile_q) {}

  void fit(const Matrix& benign_raw, uint64_t seed) override;
  double score_normalized(std::span<const double> z) const override;
  DetectorKind kind() const override { return DetectorKind::KitNet; }
  const char* name() const override { return "kitnet"; }

  const std::vector<std::vector<uint32_t>>& clusters() const {
    return clusters_;
  }
  const std::vector<double>& benign_scores() const { return benign_scores_; }

 protected:
  void save_payload(BinWriter& w) const override;
  void load_payload(BinReader& r) override;

 private:
  std::vector<double> cluster_errors(std::span<const double> z) const;

  size_t max_cluster_ = 10;
  double hidden_ratio_ = 0.75;
  double q_ = 0.999;
  std::vector<std::vector<uint32_t>> clusters_;
  std::vector<MultilayerAutoencoder> members_;
  MultilayerAutoencoder output_;
  Normalizer error_norm_;  // min-max over benign per-cluster errors
  std::vector<double> benign_scores_;
};

}  // namespace pcapmorph
