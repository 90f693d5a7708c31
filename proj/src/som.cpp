#include "pcapmorph/som.hpp"

#include <cmath>
#include <random>

#include "pcapmorph/model_io.hpp"

namespace pcapmorph {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

void SomDetector::fit(const Matrix& benign_raw, uint64_t seed) {
  if (benign_raw.rows == 0)
    throw Error(ErrorCode::State, "cannot fit on an empty benign matrix");
  norm_.fit(benign_raw);
  dim_ = benign_raw.cols;
  size_t units = grid_ * grid_;
  codebook_.resize(units * dim_);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(0.0, 1.0);
  for (auto& c : codebook_) c = init(rng);

  Matrix z(benign_raw.rows, benign_raw.cols);
  for (size_t r = 0; r < benign_raw.rows; ++r) {
    auto zr = norm_.transform(benign_raw.row(r));
    std::copy(zr.begin(), zr.end(), z.row(r).begin());
  }

  // One pass, learning rate and neighbourhood radius decay linearly.
  size_t n = z.rows;
  for (size_t it = 0; it < n; ++it) {
    double frac = 1.0 - double(it) / double(n);
    double lr = lr0_ * frac;
    double sigma = std::max(sigma0_ * frac, 0.01);
    auto x = z.row(it);

    size_t best = 0;
    double best_d = sq_dist(x, {codebook_.data(), dim_});
    for (size_t u = 1; u < units; ++u) {
      double d = sq_dist(x, {codebook_.data() + u * dim_, dim_});
      if (d < best_d) {
        best_d = d;
        best = u;
      }
    }
    size_t br = best / grid_, bc = best % grid_;
    double twosig2 = 2.0 * sigma * sigma;
    for (size_t u = 0; u < units; ++u) {
      double dr = double(u / grid_) - double(br);
      double dc = double(u % grid_) - double(bc);
      double h = std::exp(-(dr * dr + dc * dc) / twosig2);
      if (h < 1e-12) continue;
      double* unit = codebook_.data() + u * dim_;
      double step = lr * h;
      for (size_t i = 0; i < dim_; ++i) unit[i] += step * (x[i] - unit[i]);
    }
  }

  fitted_ = true;
  benign_scores_.resize(n);
  for (size_t r = 0; r < n; ++r) benign_scores_[r] = score_normalized(z.row(r));
  calibrate_threshold(*this, benign_scores_, ThresholdRule::Percentile, q_);
}

double SomDetector::score_normalized(std::span<const double> z) const {
  require_fitted();
  size_t units = grid_ * grid_;
  double best = sq_dist(z, {codebook_.data(), dim_});
  for (size_t u = 1; u < units; ++u)
    best = std::min(best, sq_dist(z, {codebook_.data() + u * dim_, dim_}));
  return std::sqrt(best);
}

std::span<const double> SomDetector::codebook(size_t unit) const {
  return {codebook_.data() + unit * dim_, dim_};
}

void SomDetector::save_payload(BinWriter& w) const {
  w.u64(grid_);
  w.f64(lr0_);
  w.f64(sigma0_);
  w.f64(q_);
  w.u64(dim_);
  w.f64_span(codebook_);
  w.u64(benign_scores_.size());
  w.f64_span(benign_scores_);
}

void SomDetector::load_payload(BinReader& r) {
  grid_ = r.u64();
  lr0_ = r.f64();
  sigma0_ = r.f64();
  q_ = r.f64();
  dim_ = r.u64();
  codebook_ = r.f64_vec(grid_ * grid_ * dim_);
  benign_scores_ = r.f64_vec(r.u64());
}

}  // namespace pcapmorph
