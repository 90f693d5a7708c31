#include "pcapmorph/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcapmorph/model_io.hpp"
#include "pcapmorph/util.hpp"

namespace pcapmorph {

void Normalizer::fit(const Matrix& benign) {
  if (benign.rows == 0)
    throw Error(ErrorCode::State, "cannot fit a normalizer on no rows");
  min_.assign(benign.cols, 0.0);
  max_.assign(benign.cols, 0.0);
  for (size_t c = 0; c < benign.cols; ++c) {
    double lo = benign.at(0, c), hi = benign.at(0, c);
    for (size_t r = 1; r < benign.rows; ++r) {
      lo = std::min(lo, benign.at(r, c));
      hi = std::max(hi, benign.at(r, c));
    }
    min_[c] = lo;
    max_[c] = hi;
  }
}

std::vector<double> Normalizer::transform(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  transform_inplace(out);
  return out;
}

void Normalizer::transform_inplace(std::span<double> x) const {
  if (!fitted()) throw Error(ErrorCode::State, "normalizer is not fitted");
  if (x.size() != min_.size())
    throw Error(ErrorCode::State,
                "feature dimension " + std::to_string(x.size()) +
                    " does not match normalizer dimension " +
                    std::to_string(min_.size()));
  for (size_t i = 0; i < x.size(); ++i) {
    double range = max_[i] - min_[i];
    x[i] = range > 0 ? std::clamp((x[i] - min_[i]) / range, 0.0, 1.0) : 0.0;
  }
}

void Normalizer::save(BinWriter& w) const {
  w.u64(min_.size());
  w.f64_span(min_);
  w.f64_span(max_);
}

void Normalizer::load(BinReader& r) {
  size_t n = r.u64();
  min_ = r.f64_vec(n);
  max_ = r.f64_vec(n);
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty())
    throw Error(ErrorCode::State, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values.front();
  double h = q * double(values.size() - 1);
  size_t lo = size_t(std::floor(h));
  size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = h - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double Detector::score(std::span<const double> raw) const {
  require_fitted();
  std::vector<double> z = norm_.transform(raw);
  return score_normalized(z);
}

double Detector::threshold() const {
  if (!has_threshold_)
    throw Error(ErrorCode::State,
                std::string(name()) + " has no calibrated threshold");
  return threshold_;
}

void Detector::require_fitted() const {
  if (!fitted_)
    throw Error(ErrorCode::State, std::string(name()) + " is not fitted");
}

double calibrate_threshold(Detector& det, std::span<const double> benign_scores,
                           ThresholdRule rule, double q) {
  if (benign_scores.empty())
    throw Error(ErrorCode::State, "threshold calibration needs scores");
  double t = 0.0;
  if (rule == ThresholdRule::MeanPlus3Sigma) {
    double mean = 0.0;
    for (double s : benign_scores) mean += s;
    mean /= double(benign_scores.size());
    double var = 0.0;
    for (double s : benign_scores) var += (s - mean) * (s - mean);
    var /= double(benign_scores.size());
    t = mean + 3.0 * std::sqrt(var);
  } else {
    t = quantile_linear({benign_scores.begin(), benign_scores.end()}, q);
  }
  det.set_threshold(t);
  return t;
}

void Detector::save(BinWriter& w) const {
  w.u8(uint8_t(kind()));
  w.u8(fitted_ ? 1 : 0);
  w.u8(has_threshold_ ? 1 : 0);
  w.f64(threshold_);
  norm_.save(w);
  save_payload(w);
}

void Detector::load(BinReader& r) {
  fitted_ = r.u8() != 0;
  has_threshold_ = r.u8() != 0;
  threshold_ = r.f64();
  norm_.load(r);
  load_payload(r);
}

void write_scores_csv(const std::string& path, std::span<const double> scores) {
  std::ostringstream out;
  out << "index,score\n";
  for (size_t i = 0; i < scores.size(); ++i)
    out << i << "," << format_double(scores[i]) << "\n";
  write_text_file(path, out.str());
}

}  // namespace pcapmorph
