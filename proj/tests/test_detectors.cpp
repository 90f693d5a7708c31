#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pcapmorph/autoencoder.hpp"
#include "pcapmorph/kitnet.hpp"
#include "pcapmorph/lof.hpp"
#include "pcapmorph/model_io.hpp"
#include "pcapmorph/rrcf.hpp"
#include "pcapmorph/som.hpp"

using namespace pcapmorph;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Matrix random_matrix(size_t rows, size_t cols, uint64_t seed,
                     double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = dist(rng);
  return m;
}

// Mildly structured benign data: a few latent factors plus noise, so the
// autoencoder has something to learn in one epoch.
Matrix structured_benign(size_t rows, size_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> base(cols), dir1(cols), dir2(cols);
  for (size_t c = 0; c < cols; ++c) {
    base[c] = unit(rng);
    dir1[c] = unit(rng) - 0.5;
    dir2[c] = unit(rng) - 0.5;
  }
  Matrix m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    double a = unit(rng), b = unit(rng);
    for (size_t c = 0; c < cols; ++c)
      m.at(r, c) = base[c] + a * dir1[c] + b * dir2[c] + noise(rng);
  }
  return m;
}

// Textbook LOF, written independently with naive loops.
double brute_lof(const std::vector<std::vector<double>>& pts,
                 const std::vector<double>& q, size_t k) {
  auto d = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
  };
  size_t n = pts.size();
  auto knn_of = [&](const std::vector<double>& x, int64_t skip) {
    std::vector<std::pair<double, size_t>> ds;
    for (size_t i = 0; i < n; ++i) {
      if (int64_t(i) == skip) continue;
      ds.emplace_back(d(x, pts[i]), i);
    }
    std::sort(ds.begin(), ds.end());
    ds.resize(std::min(k, ds.size()));
    return ds;
  };
  std::vector<double> kdist(n);
  for (size_t i = 0; i < n; ++i) kdist[i] = knn_of(pts[i], int64_t(i)).back().first;
  auto lrd = [&](const std::vector<double>& x, int64_t skip) {
    auto nn = knn_of(x, skip);
    double reach = 0;
    for (auto& [dist, o] : nn) reach += std::max(kdist[o], dist);
    return 1.0 / (reach / double(nn.size()) + 1e-10);
  };
  auto nnq = knn_of(q, -1);
  double acc = 0;
  for (auto& [dist, o] : nnq) acc += lrd(pts[o], int64_t(o));
  return acc / double(nnq.size()) / lrd(q, -1);
}

}  // namespace

TEST_CASE("normalizer maps benign to [0,1], clips, zeroes flat features") {
  Matrix m(3, 3);
  double rows[3][3] = {{0, 10, 5}, {1, 20, 5}, {2, 30, 5}};
  for (size_t r = 0; r < 3; ++r)
    for (size_t c = 0; c < 3; ++c) m.at(r, c) = rows[r][c];
  Normalizer norm;
  norm.fit(m);
  for (size_t r = 0; r < 3; ++r) {
    auto z = norm.transform(m.row(r));
    for (double v : z) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(z[2] == 0.0);  // constant feature
  }
  auto z = norm.transform(std::vector<double>{-5.0, 100.0, 7.0});
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 1.0);
}

TEST_CASE("threshold calibration") {
  AutoencoderDetector dummy({4, 2, 4});

  SUBCASE("constant scores give t = mean under mean+3sigma") {
    std::vector<double> s(50, 0.5);
    CHECK(calibrate_threshold(dummy, s, ThresholdRule::MeanPlus3Sigma) ==
          doctest::Approx(0.5));
  }

  SUBCASE("mean+3sigma matches hand arithmetic on a skewed multiset") {
    std::vector<double> s(99, 0.1);
    s.push_back(0.2);
    double mean = (99 * 0.1 + 0.2) / 100.0;
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= 100.0;
    double expect = mean + 3.0 * std::sqrt(var);
    CHECK(calibrate_threshold(dummy, s, ThresholdRule::MeanPlus3Sigma) ==
          doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("linear-interpolation percentile on 1..1000") {
    std::vector<double> s;
    for (int i = 1; i <= 1000; ++i) s.push_back(double(i));
    CHECK(calibrate_threshold(dummy, s, ThresholdRule::Percentile, 0.999) ==
          doctest::Approx(999.001).epsilon(1e-12));
  }

  SUBCASE("percentile of a single sample is that sample") {
    std::vector<double> s{0.42};
    CHECK(calibrate_threshold(dummy, s, ThresholdRule::Percentile, 0.999) ==
          doctest::Approx(0.42));
  }

  SUBCASE("adding a larger score never lowers a percentile threshold") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> s;
    for (int i = 0; i < 200; ++i) s.push_back(dist(rng));
    for (int trial = 0; trial < 20; ++trial) {
      double before = quantile_linear(s, 0.999);
      double top = *std::max_element(s.begin(), s.end());
      s.push_back(top + dist(rng));
      CHECK(quantile_linear(s, 0.999) >= before - 1e-12);
    }
  }

  SUBCASE("empty score list is an error") {
    CHECK_THROWS_AS(
        calibrate_threshold(dummy, {}, ThresholdRule::MeanPlus3Sigma), Error);
  }
}

TEST_CASE("autoencoder gradients match central finite differences") {
  for (auto hidden : {Activation::Sigmoid, Activation::Relu}) {
    MultilayerAutoencoder net({6, 4, 2, 4, 6}, hidden, Activation::Sigmoid,
                              1234);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    std::vector<double> x(6);
    for (auto& v : x) v = dist(rng);

    auto params = net.flat_parameters();
    auto analytic = net.flat_gradient(x);
    const double h = 1e-6;
    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
      auto p = params;
      p[i] += h;
      net.set_flat_parameters(p);
      double up = 0.0;
      {
        auto y = net.reconstruct(x);
        for (size_t j = 0; j < y.size(); ++j)
          up += (y[j] - x[j]) * (y[j] - x[j]);
        up = std::sqrt(up / double(y.size()));
      }
      p[i] -= 2 * h;
      net.set_flat_parameters(p);
      double down = 0.0;
      {
        auto y = net.reconstruct(x);
        for (size_t j = 0; j < y.size(); ++j)
          down += (y[j] - x[j]) * (y[j] - x[j]);
        down = std::sqrt(down / double(y.size()));
      }
      net.set_flat_parameters(params);
      double numeric = (up - down) / (2 * h);
      double denom = std::max({1e-6, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("identity network reconstructs perfectly, score ~ 0") {
  MultilayerAutoencoder net({3, 3}, Activation::Identity, Activation::Identity,
                            1);
  std::vector<double> p(3 * 3 + 3, 0.0);
  p[0] = p[4] = p[8] = 1.0;  // identity weight matrix, zero bias
  net.set_flat_parameters(p);
  std::vector<double> x{0.2, 0.8, 0.5};
  CHECK(net.rmse(x) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("surrogate fit on constant benign rows") {
  Matrix m(40, 100);
  for (size_t r = 0; r < m.rows; ++r)
    for (size_t c = 0; c < m.cols; ++c) m.at(r, c) = 0.3 + 0.001 * double(c);
  auto bundle = fit_surrogate(m, 42);
  const auto& scores = bundle.detector->benign_scores();
  for (double s : scores) CHECK(s == doctest::Approx(scores.front()));
  // std = 0, so the threshold collapses to the mean score
  CHECK(bundle.threshold == doctest::Approx(scores.front()).epsilon(1e-9));
}

TEST_CASE("surrogate TNR on its own benign traffic >= 0.99") {
  Matrix benign = structured_benign(3000, 100, 7);
  auto bundle = fit_surrogate(benign, 11);
  size_t over = 0;
  for (double s : bundle.detector->benign_scores())
    if (s > bundle.threshold) ++over;
  double tnr = 1.0 - double(over) / double(benign.rows);
  CHECK(tnr >= 0.99);
}

TEST_CASE("score determinism across refits with the same seed") {
  Matrix benign = structured_benign(300, 100, 21);
  auto probe = random_matrix(5, 100, 1, -0.2, 1.4);

  auto check_detector = [&](Detector& a, Detector& b) {
    a.fit(benign, 77);
    b.fit(benign, 77);
    for (size_t r = 0; r < probe.rows; ++r) {
      double s1 = a.score(probe.row(r));
      double s2 = b.score(probe.row(r));
      CHECK(s1 == s2);
      CHECK(s1 >= 0.0);
      CHECK(a.score(probe.row(r)) == s1);  // scoring twice is identical
    }
    CHECK(a.threshold() == b.threshold());
  };

  SUBCASE("autoencoder") {
    AutoencoderDetector a({100, 32, 8, 2, 8, 32, 100}),
        b({100, 32, 8, 2, 8, 32, 100});
    check_detector(a, b);
  }
  SUBCASE("som") {
    SomDetector a(10, 0.5, 1.0), b(10, 0.5, 1.0);
    check_detector(a, b);
  }
  SUBCASE("lof") {
    LofDetector a(20), b(20);
    check_detector(a, b);
  }
  SUBCASE("rrcf") {
    RrcfDetector a(10, 64), b(10, 64);
    check_detector(a, b);
  }
  SUBCASE("kitnet") {
    KitNetDetector a(10, 0.75), b(10, 0.75);
    check_detector(a, b);
  }
}

TEST_CASE("som scores one of its own codebook vectors as zero") {
  Matrix benign = structured_benign(400, 20, 3);
  SomDetector som(6, 0.5, 1.0);
  som.fit(benign, 5);
  std::vector<double> unit(som.codebook(17).begin(), som.codebook(17).end());
  CHECK(som.score_normalized(unit) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lof") {
  SUBCASE("a point duplicated k+1 times scores ~ 1") {
    size_t k = 5;
    Matrix benign(0, 4);
    std::vector<double> dup{0.5, 0.5, 0.5, 0.5};
    for (size_t i = 0; i < k + 1; ++i) benign.push_row(dup);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
      std::vector<double> row(4);
      for (auto& v : row) v = dist(rng);
      benign.push_row(row);
    }
    LofDetector lof(k);
    lof.fit(benign, 0);
    CHECK(lof.score(dup) == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("matches a brute-force implementation on small samples") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    size_t n = 40, dims = 3, k = 7;
    std::vector<std::vector<double>> pts;
    Matrix benign(0, dims);
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> row(dims);
      for (auto& v : row) v = dist(rng);
      pts.push_back(row);
      benign.push_row(row);
    }
    LofDetector lof(k);
    lof.fit(benign, 0);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> q(dims);
      for (auto& v : q) v = dist(rng);
      // query in normalized space: normalizer is identity up to min-max;
      // apply the same transform the detector applies internally
      double got = lof.score(q);
      auto z = lof.normalizer().transform(q);
      std::vector<std::vector<double>> zpts;
      for (auto& p : pts)
        zpts.push_back(lof.normalizer().transform(p));
      double want = brute_lof(zpts, z, k);
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
  }

  SUBCASE("outliers score well above inliers") {
    Matrix benign = structured_benign(300, 10, 13);
    LofDetector lof(20);
    lof.fit(benign, 0);
    std::vector<double> far(10, 25.0);
    CHECK(lof.score(far) > 1.5);
  }
}

TEST_CASE("rrcf insert/remove symmetry and sane scores") {
  Matrix benign = structured_benign(500, 8, 17);
  RrcfDetector rrcf(15, 128);
  rrcf.fit(benign, 23);

  uint64_t before = rrcf.forest_fingerprint();
  auto probe = random_matrix(20, 8, 3, -0.5, 1.5);
  for (size_t r = 0; r < probe.rows; ++r) {
    double s = rrcf.score(probe.row(r));
    CHECK(s >= 0.0);
  }
  CHECK(rrcf.forest_fingerprint() == before);

  // scoring a training row (duplicate of a tree point) also restores trees
  double s = rrcf.score(benign.row(0));
  CHECK(s >= 0.0);
  CHECK(rrcf.forest_fingerprint() == before);

  // far outliers displace more than benign points
  double benign_mean = 0.0;
  for (size_t r = 0; r < 50; ++r) benign_mean += rrcf.score(benign.row(r));
  benign_mean /= 50;
  std::vector<double> far(8, 30.0);
  CHECK(rrcf.score(far) > benign_mean);
}

TEST_CASE("kitnet partitions features and scores deterministically") {
  Matrix benign = structured_benign(400, 100, 29);
  KitNetDetector kit(10, 0.75);
  kit.fit(benign, 31);

  std::vector<bool> covered(100, false);
  for (const auto& cluster : kit.clusters()) {
    CHECK(cluster.size() <= 10);
    CHECK(cluster.size() >= 1);
    for (uint32_t i : cluster) {
      CHECK_FALSE(covered[i]);
      covered[i] = true;
    }
  }
  for (bool c : covered) CHECK(c);

  auto probe = random_matrix(3, 100, 77);
  for (size_t r = 0; r < probe.rows; ++r) {
    double s = kit.score(probe.row(r));
    CHECK(s >= 0.0);
    CHECK(kit.score(probe.row(r)) == s);
  }
}

TEST_CASE("model save/load round trip preserves behaviour") {
  Matrix benign = structured_benign(250, 100, 41);
  auto probe = random_matrix(6, 100, 5, -0.3, 1.3);

  auto roundtrip = [&](Detector& det, const std::string& file) {
    det.fit(benign, 91);
    auto path = temp_path(file);
    save_detector(det, path);
    auto back = load_detector(path);
    CHECK(back->kind() == det.kind());
    CHECK(back->threshold() == det.threshold());
    for (size_t r = 0; r < probe.rows; ++r)
      CHECK(back->score(probe.row(r)) == det.score(probe.row(r)));
  };

  SUBCASE("autoencoder") {
    AutoencoderDetector d({100, 32, 8, 2, 8, 32, 100});
    roundtrip(d, "pm_ae.model");
  }
  SUBCASE("som") {
    SomDetector d(10, 0.5, 1.0);
    roundtrip(d, "pm_som.model");
  }
  SUBCASE("lof") {
    LofDetector d(20);
    roundtrip(d, "pm_lof.model");
  }
  SUBCASE("rrcf") {
    RrcfDetector d(10, 64);
    roundtrip(d, "pm_rrcf.model");
  }
  SUBCASE("kitnet") {
    KitNetDetector d(10, 0.75);
    roundtrip(d, "pm_kitnet.model");
  }
}

TEST_CASE("unfitted detectors refuse to score") {
  AutoencoderDetector d({100, 32, 8, 2, 8, 32, 100});
  std::vector<double> x(100, 0.5);
  CHECK_THROWS_AS(d.score(x), Error);
  CHECK_THROWS_AS(d.threshold(), Error);
}
