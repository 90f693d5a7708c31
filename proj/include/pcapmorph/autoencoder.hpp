#pragma once

// Small dense autoencoders trained to reconstruct their input under an RMSE
// loss, with per-parameter adaptive gradient steps. Used for the surrogate
// detector, the ensemble detector's members and the defence models.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "pcapmorph/detector.hpp"
#include "pcapmorph/matrix.hpp"

namespace pcapmorph {

enum class Activation : uint8_t { Relu, Sigmoid, Identity };

class MultilayerAutoencoder {
 public:
  MultilayerAutoencoder() = default;
  // layer_sizes runs input..output, e.g. {100,32,8,2,8,32,100}. Hidden
  // layers use `hidden`, the final layer uses `output`. Weights start
  // uniform in +-sqrt(6/(fan_in+fan_out)), seeded.
  MultilayerAutoencoder(std::vector<size_t> layer_sizes, Activation hidden,
                        Activation output, uint64_t seed);

  size_t input_dim() const { return sizes_.empty() ? 0 : sizes_.front(); }

  std::vector<double> reconstruct(std::span<const double> x) const;
  // Per-sample RMSE between x and its reconstruction.
  double rmse(std::span<const double> x) const;

  // One pass over the rows in order, mini-batches of `batch`, Adam steps
  // with learning rate `lr`.
  void train_epoch(const Matrix& rows, size_t batch = 32, double lr = 1e-3);
  void train(const Matrix& rows, size_t epochs, size_t batch = 32,
             double lr = 1e-3);

  // Flat parameter access for gradient checks.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> p);
  // Analytic gradient of the per-sample RMSE loss at the current parameters.
  std::vector<double> flat_gradient(std::span<const double> x) const;

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  struct Layer {
    size_t in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
    Activation act = Activation::Relu;
  };

  struct Tape {  // forward pass intermediates
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> post;  // post-activation per layer
  };

  std::vector<double> forward(std::span<const double> x, Tape* tape) const;
  // Accumulates dL/dparams for one sample into grads (same layout as
  // flat_parameters) scaled by `scale`. Returns the sample loss.
  double backward(std::span<const double> x, double scale,
                  std::vector<double>& grads) const;

  std::vector<size_t> sizes_;
  std::vector<Layer> layers_;

  // Adam state, lazily sized on first training step.
  std::vector<double> adam_m_, adam_v_;
  uint64_t adam_t_ = 0;
};

// Dense autoencoder behind the Detector contract; score = reconstruction
// RMSE in normalized space.
class AutoencoderDetector : public Detector {
 public:
  AutoencoderDetector() = default;
  explicit AutoencoderDetector(std::vector<size_t> layer_sizes,
                               ThresholdRule rule = ThresholdRule::MeanPlus3Sigma,
                               double percentile_q = 0.999, size_t epochs = 1);

  void fit(const Matrix& benign_raw, uint64_t seed) override;
  double score_normalized(std::span<const double> z) const override;
  DetectorKind kind() const override { return DetectorKind::Autoencoder; }
  const char* name() const override { return "autoencoder"; }

  // Benign scores measured with the final weights, in training order.
  const std::vector<double>& benign_scores() const { return benign_scores_; }
  const MultilayerAutoencoder& net() const { return net_; }

 protected:
  void save_payload(BinWriter& w) const override;
  void load_payload(BinReader& r) override;

 private:
  std::vector<size_t> layer_sizes_{100, 32, 8, 2, 8, 32, 100};
  ThresholdRule rule_ = ThresholdRule::MeanPlus3Sigma;
  double percentile_q_ = 0.999;
  size_t epochs_ = 1;
  MultilayerAutoencoder net_;
  std::vector<double> benign_scores_;
};

struct SurrogateBundle {
  std::unique_ptr<AutoencoderDetector> detector;
  double threshold = 0.0;
};

// Trains the surrogate: encoder 100-32-8-2, decoder 2-8-32-100, one epoch
// over the benign rows in file order, threshold = mean + 3*std of the
// post-training benign scores.
SurrogateBundle fit_surrogate(const Matrix& benign_raw, uint64_t seed);

}  // namespace pcapmorph
