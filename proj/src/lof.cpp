#include "pcapmorph/lof.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcapmorph/model_io.hpp"

namespace pcapmorph {

namespace {

constexpr double kLrdEps = 1e-10;  // guards duplicate-point divisions

double dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// k smallest (distance, index) pairs, ties broken by index.
std::vector<std::pair<double, uint32_t>> k_nearest(
    const Matrix& pts, std::span<const double> q, size_t k,
    int64_t exclude = -1) {
  std::vector<std::pair<double, uint32_t>> all;
  all.reserve(pts.rows);
  for (size_t r = 0; r < pts.rows; ++r) {
    if (int64_t(r) == exclude) continue;
    all.emplace_back(dist(pts.row(r), q), uint32_t(r));
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + k, all.end());
  all.resize(k);
  return all;
}

}  // namespace

void LofDetector::fit(const Matrix& benign_raw, uint64_t /*seed*/) {
  if (benign_raw.rows < 2)
    throw Error(ErrorCode::State, "LOF needs at least two benign rows");
  norm_.fit(benign_raw);
  points_ = Matrix(benign_raw.rows, benign_raw.cols);
  for (size_t r = 0; r < benign_raw.rows; ++r) {
    auto zr = norm_.transform(benign_raw.row(r));
    std::copy(zr.begin(), zr.end(), points_.row(r).begin());
  }
  precompute();
  fitted_ = true;
  calibrate_threshold(*this, benign_scores_, ThresholdRule::Percentile, q_);
}

void LofDetector::precompute() {
  size_t n = points_.rows;
  size_t k = std::min(k_, n - 1);
  std::vector<std::vector<std::pair<double, uint32_t>>> knn(n);
  kdist_.resize(n);
  for (size_t i = 0; i < n; ++i) {
    knn[i] = k_nearest(points_, points_.row(i), k, int64_t(i));
    kdist_[i] = knn[i].back().first;
  }
  lrd_.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (auto& [d, o] : knn[i]) reach += std::max(kdist_[o], d);
    lrd_[i] = 1.0 / (reach / double(knn[i].size()) + kLrdEps);
  }
  benign_scores_.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (auto& [d, o] : knn[i]) acc += lrd_[o];
    benign_scores_[i] = acc / double(knn[i].size()) / lrd_[i];
  }
}

double LofDetector::score_normalized(std::span<const double> z) const {
  require_fitted();
  size_t k = std::min(k_, points_.rows - 1);
  auto nn = k_nearest(points_, z, k);
  double reach = 0.0, lrd_sum = 0.0;
  for (auto& [d, o] : nn) {
    reach += std::max(kdist_[o], d);
    lrd_sum += lrd_[o];
  }
  double lrd_q = 1.0 / (reach / double(nn.size()) + kLrdEps);
  return lrd_sum / double(nn.size()) / lrd_q;
}

void LofDetector::save_payload(BinWriter& w) const {
  w.u64(k_);
  w.f64(q_);
  w.u64(points_.rows);
  w.u64(points_.cols);
  w.f64_span(points_.data);
  w.f64_span(kdist_);
  w.f64_span(lrd_);
  w.u64(benign_scores_.size());
  w.f64_span(benign_scores_);
}

void LofDetector::load_payload(BinReader& r) {
  k_ = r.u64();
  q_ = r.f64();
  size_t rows = r.u64(), cols = r.u64();
  points_ = Matrix(rows, cols);
  points_.data = r.f64_vec(rows * cols);
  kdist_ = r.f64_vec(rows);
  lrd_ = r.f64_vec(rows);
  benign_scores_ = r.f64_vec(r.u64());
}

}  // namespace pcapmorph
