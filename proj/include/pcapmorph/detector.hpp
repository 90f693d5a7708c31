#pragma once

// The anomaly-scoring contract: fit on benign traffic, score feature
// vectors, classify against a calibrated threshold. All detectors normalize
// inputs with benign min-max bounds; scoring is deterministic for a fixed
// fit-time seed.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pcapmorph/error.hpp"
#include "pcapmorph/matrix.hpp"

namespace pcapmorph {

class BinWriter;
class BinReader;

// Per-feature min-max learned from benign data; transform clips to [0,1].
// Features with max == min map to 0.
class Normalizer {
 public:
  void fit(const Matrix& benign);
  std::vector<double> transform(std::span<const double> x) const;
  void transform_inplace(std::span<double> x) const;
  size_t dimension() const { return min_.size(); }
  bool fitted() const { return !min_.empty(); }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::vector<double> min_, max_;
};

enum class ThresholdRule : uint8_t { MeanPlus3Sigma, Percentile };

// Linear-interpolation quantile of an unsorted sample, q in [0,1].
double quantile_linear(std::vector<double> values, double q);

enum class DetectorKind : uint8_t {
  Autoencoder = 1,
  KitNet = 2,
  Som = 3,
  Lof = 4,
  Rrcf = 5,
};

class Detector {
 public:
  virtual ~Detector() = default;

  // Trains on raw (unnormalized) benign rows. Deterministic given the seed.
  virtual void fit(const Matrix& benign_raw, uint64_t seed) = 0;

  // Anomaly score of a raw feature vector (normalized internally).
  double score(std::span<const double> raw) const;
  // Score in the normalized [0,1]^d space (used by the defences).
  virtual double score_normalized(std::span<const double> z) const = 0;

  double threshold() const;
  void set_threshold(double t) {
    threshold_ = t;
    has_threshold_ = true;
  }
  bool classify(std::span<const double> raw) const {
    return score(raw) > threshold();
  }

  const Normalizer& normalizer() const { return norm_; }
  bool fitted() const { return fitted_; }

  virtual DetectorKind kind() const = 0;
  virtual const char* name() const = 0;

  void save(BinWriter& w) const;
  void load(BinReader& r);

 protected:
  void require_fitted() const;
  virtual void save_payload(BinWriter& w) const = 0;
  virtual void load_payload(BinReader& r) = 0;

  Normalizer norm_;
  double threshold_ = 0.0;
  bool has_threshold_ = false;
  bool fitted_ = false;
};

// Stores the calibrated threshold on the detector and returns it.
double calibrate_threshold(Detector& det, std::span<const double> benign_scores,
                           ThresholdRule rule, double q = 0.999);

std::unique_ptr<Detector> make_detector(DetectorKind kind);

void write_scores_csv(const std::string& path,
                      std::span<const double> scores);

}  // namespace pcapmorph
