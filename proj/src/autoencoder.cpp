#include "pcapmorph/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pcapmorph/model_io.hpp"

namespace pcapmorph {

namespace {

double activate(double z, Activation a) {
  switch (a) {
    case Activation::Relu: return z > 0 ? z : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity: return z;
  }
  return z;
}

double activate_grad(double z, double fz, Activation a) {
  switch (a) {
    case Activation::Relu: return z > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return fz * (1.0 - fz);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

MultilayerAutoencoder::MultilayerAutoencoder(std::vector<size_t> layer_sizes,
                                             Activation hidden,
                                             Activation output, uint64_t seed)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2)
    throw Error(ErrorCode::Config, "autoencoder needs at least two layers");
  if (sizes_.front() != sizes_.back())
    throw Error(ErrorCode::Config,
                "autoencoder output width must match its input");
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i + 1 < sizes_.size(); ++i) {
    Layer layer;
    layer.in = sizes_[i];
    layer.out = sizes_[i + 1];
    layer.act = i + 2 == sizes_.size() ? output : hidden;
    double bound = std::sqrt(6.0 / double(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.w.resize(layer.out * layer.in);
    for (auto& w : layer.w) w = dist(rng);
    layer.b.assign(layer.out, 0.0);
    layers_.push_back(std::move(layer));
  }
}

std::vector<double> MultilayerAutoencoder::forward(std::span<const double> x,
                                                   Tape* tape) const {
  if (x.size() != input_dim())
    throw Error(ErrorCode::State, "autoencoder input width mismatch");
  std::vector<double> cur(x.begin(), x.end());
  if (tape) {
    tape->pre.clear();
    tape->post.clear();
    tape->post.push_back(cur);
  }
  for (const Layer& layer : layers_) {
    std::vector<double> next(layer.out);
    for (size_t o = 0; o < layer.out; ++o) {
      double z = layer.b[o];
      const double* wrow = layer.w.data() + o * layer.in;
      for (size_t i = 0; i < layer.in; ++i) z += wrow[i] * cur[i];
      next[o] = z;
    }
    if (tape) tape->pre.push_back(next);
    for (size_t o = 0; o < layer.out; ++o)
      next[o] = activate(next[o], layer.act);
    if (tape) tape->post.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> MultilayerAutoencoder::reconstruct(
    std::span<const double> x) const {
  return forward(x, nullptr);
}

double MultilayerAutoencoder::rmse(std::span<const double> x) const {
  std::vector<double> y = forward(x, nullptr);
  double acc = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - x[i];
    acc += d * d;
  }
  return std::sqrt(acc / double(y.size()));
}

double MultilayerAutoencoder::backward(std::span<const double> x, double scale,
                                       std::vector<double>& grads) const {
  Tape tape;
  std::vector<double> y = forward(x, &tape);
  size_t d = y.size();
  double acc = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double diff = y[i] - x[i];
    acc += diff * diff;
  }
  double loss = std::sqrt(acc / double(d));

  // dL/dy for L = sqrt(mean((y-x)^2)); zero at a perfect reconstruction.
  std::vector<double> delta(d, 0.0);
  if (loss > 0) {
    for (size_t i = 0; i < d; ++i)
      delta[i] = (y[i] - x[i]) / (double(d) * loss);
  }

  std::vector<size_t> offsets(layers_.size());
  {
    size_t off = 0;
    for (size_t li = 0; li < layers_.size(); ++li) {
      offsets[li] = off;
      off += layers_[li].out * layers_[li].in + layers_[li].out;
    }
  }

  for (size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const auto& pre = tape.pre[li];
    const auto& post = tape.post[li + 1];
    const auto& input = tape.post[li];
    // delta currently holds dL/d(post-activation of layer li)
    std::vector<double> dz(layer.out);
    for (size_t o = 0; o < layer.out; ++o)
      dz[o] = delta[o] * activate_grad(pre[o], post[o], layer.act);
    double* gw = grads.data() + offsets[li];
    double* gb = gw + layer.out * layer.in;
    for (size_t o = 0; o < layer.out; ++o) {
      for (size_t i = 0; i < layer.in; ++i)
        gw[o * layer.in + i] += scale * dz[o] * input[i];
      gb[o] += scale * dz[o];
    }
    if (li > 0) {
      std::vector<double> prev(layer.in, 0.0);
      for (size_t o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + o * layer.in;
        for (size_t i = 0; i < layer.in; ++i) prev[i] += wrow[i] * dz[o];
      }
      delta = std::move(prev);
    }
  }
  return loss;
}

std::vector<double> MultilayerAutoencoder::flat_parameters() const {
  std::vector<double> out;
  for (const Layer& layer : layers_) {
    out.insert(out.end(), layer.w.begin(), layer.w.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
  return out;
}

void MultilayerAutoencoder::set_flat_parameters(std::span<const double> p) {
  size_t pos = 0;
  for (Layer& layer : layers_) {
    std::copy_n(p.begin() + pos, layer.w.size(), layer.w.begin());
    pos += layer.w.size();
    std::copy_n(p.begin() + pos, layer.b.size(), layer.b.begin());
    pos += layer.b.size();
  }
  if (pos != p.size())
    throw Error(ErrorCode::State, "flat parameter size mismatch");
}

std::vector<double> MultilayerAutoencoder::flat_gradient(
    std::span<const double> x) const {
  std::vector<double> grads(flat_parameters().size(), 0.0);
  backward(x, 1.0, grads);
  return grads;
}

void MultilayerAutoencoder::train_epoch(const Matrix& rows, size_t batch,
                                        double lr) {
  if (rows.cols != input_dim())
    throw Error(ErrorCode::State, "training rows do not match the input width");
  size_t nparams = flat_parameters().size();
  if (adam_m_.size() != nparams) {
    adam_m_.assign(nparams, 0.0);
    adam_v_.assign(nparams, 0.0);
    adam_t_ = 0;
  }
  std::vector<double> grads(nparams);
  for (size_t start = 0; start < rows.rows; start += batch) {
    size_t end = std::min(start + batch, rows.rows);
    std::fill(grads.begin(), grads.end(), 0.0);
    double scale = 1.0 / double(end - start);
    for (size_t r = start; r < end; ++r) backward(rows.row(r), scale, grads);

    ++adam_t_;
    double bc1 = 1.0 - std::pow(kAdamBeta1, double(adam_t_));
    double bc2 = 1.0 - std::pow(kAdamBeta2, double(adam_t_));
    std::vector<double> params = flat_parameters();
    for (size_t i = 0; i < nparams; ++i) {
      adam_m_[i] = kAdamBeta1 * adam_m_[i] + (1.0 - kAdamBeta1) * grads[i];
      adam_v_[i] =
          kAdamBeta2 * adam_v_[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
      double mhat = adam_m_[i] / bc1;
      double vhat = adam_v_[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
    set_flat_parameters(params);
  }
}

void MultilayerAutoencoder::train(const Matrix& rows, size_t epochs,
                                  size_t batch, double lr) {
  for (size_t e = 0; e < epochs; ++e) train_epoch(rows, batch, lr);
}

void MultilayerAutoencoder::save(BinWriter& w) const {
  w.u64(sizes_.size());
  for (size_t s : sizes_) w.u64(s);
  for (const Layer& layer : layers_) {
    w.u8(uint8_t(layer.act));
    w.f64_span(layer.w);
    w.f64_span(layer.b);
  }
}

void MultilayerAutoencoder::load(BinReader& r) {
  size_t n = r.u64();
  sizes_.resize(n);
  for (auto& s : sizes_) s = r.u64();
  layers_.clear();
  for (size_t i = 0; i + 1 < sizes_.size(); ++i) {
    Layer layer;
    layer.in = sizes_[i];
    layer.out = sizes_[i + 1];
    layer.act = Activation(r.u8());
    layer.w = r.f64_vec(layer.out * layer.in);
    layer.b = r.f64_vec(layer.out);
    layers_.push_back(std::move(layer));
  }
  adam_m_.clear();
  adam_v_.clear();
  adam_t_ = 0;
}

AutoencoderDetector::AutoencoderDetector(std::vector<size_t> layer_sizes,
                                         ThresholdRule rule,
                                         double percentile_q, size_t epochs)
    : layer_sizes_(std::move(layer_sizes)),
      rule_(rule),
      percentile_q_(percentile_q),
      epochs_(epochs) {}

void AutoencoderDetector::fit(const Matrix& benign_raw, uint64_t seed) {
  if (benign_raw.rows == 0)
    throw Error(ErrorCode::State, "cannot fit on an empty benign matrix");
  if (benign_raw.cols != layer_sizes_.front())
    throw Error(ErrorCode::State,
                "benign matrix width " + std::to_string(benign_raw.cols) +
                    " does not match the input layer of " +
                    std::to_string(layer_sizes_.front()));
  norm_.fit(benign_raw);
  Matrix z(benign_raw.rows, benign_raw.cols);
  for (size_t r = 0; r < benign_raw.rows; ++r) {
    auto zr = norm_.transform(benign_raw.row(r));
    std::copy(zr.begin(), zr.end(), z.row(r).begin());
  }
  net_ = MultilayerAutoencoder(layer_sizes_, Activation::Relu,
                               Activation::Sigmoid, seed);
  net_.train(z, epochs_);
  benign_scores_.resize(z.rows);
  for (size_t r = 0; r < z.rows; ++r) benign_scores_[r] = net_.rmse(z.row(r));
  fitted_ = true;
  calibrate_threshold(*this, benign_scores_, rule_, percentile_q_);
}

double AutoencoderDetector::score_normalized(std::span<const double> z) const {
  require_fitted();
  return net_.rmse(z);
}

void AutoencoderDetector::save_payload(BinWriter& w) const {
  w.u8(uint8_t(rule_));
  w.f64(percentile_q_);
  w.u64(epochs_);
  net_.save(w);
  w.u64(benign_scores_.size());
  w.f64_span(benign_scores_);
}

void AutoencoderDetector::load_payload(BinReader& r) {
  rule_ = ThresholdRule(r.u8());
  percentile_q_ = r.f64();
  epochs_ = r.u64();
  net_.load(r);
  benign_scores_ = r.f64_vec(r.u64());
}

SurrogateBundle fit_surrogate(const Matrix& benign_raw, uint64_t seed) {
  auto det = std::make_unique<AutoencoderDetector>(
      std::vector<size_t>{100, 32, 8, 2, 8, 32, 100},
      ThresholdRule::MeanPlus3Sigma);
  det->fit(benign_raw, seed);
  SurrogateBundle bundle;
  bundle.threshold = det->threshold();
  bundle.detector = std::move(det);
  return bundle;
}

}  // namespace pcapmorph
