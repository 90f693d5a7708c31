#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "pcapmorph/attack.hpp"
#include "pcapmorph/autoencoder.hpp"
#include "pcapmorph/util.hpp"
#include "synthetic.hpp"

using namespace pcapmorph;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Matrix extract_matrix(FeatureExtractor& ex,
                      const std::vector<PacketRecord>& packets) {
  Matrix m(0, ex.dimension());
  for (const auto& p : packets) m.push_row(ex.extract(p).values);
  return m;
}

std::vector<double> score_stream(const Detector& det, FeatureExtractor& ex,
                                 const std::vector<PacketRecord>& packets) {
  std::vector<double> out;
  out.reserve(packets.size());
  for (const auto& p : packets) out.push_back(det.score(ex.extract(p).values));
  return out;
}

// Small corpus + trained surrogate shared by the attack tests.
struct Rig {
  synthetic::Config cfg;
  std::vector<PacketRecord> benign, burst;
  FeatureExtractor warm;
  SurrogateBundle surrogate;

  Rig() {
    cfg.flows = 4;
    cfg.duration_s = 240.0;
    cfg.burst_packets = 60;
    benign = synthetic::benign(cfg);
    burst = synthetic::malicious(cfg);
    Matrix m = extract_matrix(warm, benign);
    surrogate = fit_surrogate(m, 1337);
  }

  AttackConfig attack_cfg() const {
    AttackConfig a;
    a.seed = 99;
    a.search.n_particles = 10;
    a.search.iterations = 12;
    a.search.seed = 99;
    return a;
  }
};

Rig& rig() {
  static Rig r;
  return r;
}

std::multiset<std::vector<uint8_t>> payload_multiset(
    const std::vector<PacketRecord>& pkts) {
  std::multiset<std::vector<uint8_t>> out;
  for (const auto& p : pkts) out.insert(p.raw);
  return out;
}

}  // namespace

TEST_CASE("a file the surrogate never flags passes through unchanged") {
  auto& r = rig();
  // A short continuation of ordinary traffic after the training capture.
  synthetic::Config follow = r.cfg;
  follow.seed = r.cfg.seed + 50;
  follow.base_time = r.cfg.base_time + r.cfg.duration_s + 2.0;
  follow.duration_s = 30.0;
  auto quiet = synthetic::benign(follow);

  // confirm the premise: nothing in it is flagged
  {
    FeatureExtractor probe = r.warm;
    auto scores = score_stream(*r.surrogate.detector, probe, quiet);
    size_t flagged = 0;
    for (double s : scores)
      if (s > r.surrogate.threshold) ++flagged;
    REQUIRE(flagged == 0);
  }

  FeatureExtractor ex = r.warm;
  auto outcome = run_attack(quiet, *r.surrogate.detector, ex, r.attack_cfg());
  CHECK(outcome.report.final_totals().flagged == 0);
  CHECK(outcome.report.final_totals().modified == 0);
  CHECK(outcome.report.final_totals().emitted == quiet.size());

  auto in_path = temp_path("pm_quiet_in.pcap");
  auto out_path = temp_path("pm_quiet_out.pcap");
  write_pcap(quiet, in_path);
  write_pcap(outcome.packets, out_path);
  CHECK(read_file_bytes(in_path) == read_file_bytes(out_path));
}

TEST_CASE("burst attack drives the surrogate detection rate down") {
  auto& r = rig();

  // MDR on the raw burst
  double mdr;
  {
    FeatureExtractor probe = r.warm;
    auto scores = score_stream(*r.surrogate.detector, probe, r.burst);
    size_t flagged = 0;
    for (double s : scores)
      if (s > r.surrogate.threshold) ++flagged;
    mdr = double(flagged) / double(scores.size());
  }
  REQUIRE(mdr >= 0.8);

  FeatureExtractor ex = r.warm;
  auto outcome = run_attack(r.burst, *r.surrogate.detector, ex, r.attack_cfg());
  const auto& totals = outcome.report.final_totals();

  SUBCASE("report bookkeeping adds up") {
    CHECK(totals.packets == r.burst.size());
    CHECK(totals.emitted ==
          totals.pass_through + totals.flagged + totals.injected);
    CHECK(totals.emitted == outcome.packets.size());
    CHECK(outcome.origin.size() == outcome.packets.size());
  }

  SUBCASE("payload bytes of the originals survive as a multiset") {
    auto in_payloads = payload_multiset(r.burst);
    // keep only packets that are re-timed originals: drop injected ones
    std::multiset<std::vector<uint8_t>> out_payloads;
    size_t pos = 0;
    for (const auto& log : outcome.report.passes.back().log) {
      pos += log.injected;
      out_payloads.insert(outcome.packets[pos].raw);
      ++pos;
    }
    CHECK(in_payloads == out_payloads);
  }

  SUBCASE("ordering, delay cap and inflation bound hold") {
    for (size_t i = 1; i < outcome.packets.size(); ++i)
      CHECK(outcome.packets[i].time_us >= outcome.packets[i - 1].time_us);
    CHECK(outcome.packets.size() <= r.burst.size() * (1 + 5));
    const auto& log = outcome.report.passes.back().log;
    for (const auto& entry : log) {
      CHECK(entry.emitted_time - entry.original_time <= 1.0 + 1e-9);
      CHECK(entry.injected <= 5);
    }
  }

  SUBCASE("rescoring the output reproduces the committed scores") {
    FeatureExtractor probe = r.warm;
    auto rescored = score_stream(*r.surrogate.detector, probe, outcome.packets);
    // max score per anchor must match the logged post score
    std::map<uint64_t, double> worst;
    for (size_t i = 0; i < rescored.size(); ++i) {
      uint64_t anchor = outcome.origin[i];
      auto it = worst.find(anchor);
      if (it == worst.end() || rescored[i] > it->second)
        worst[anchor] = rescored[i];
    }
    for (const auto& entry : outcome.report.passes.back().log) {
      REQUIRE(worst.count(entry.index) == 1);
      CHECK(worst[entry.index] ==
            doctest::Approx(entry.post_score).epsilon(1e-9));
    }
  }

  SUBCASE("adversarial detection rate drops and evasion is positive") {
    FeatureExtractor probe = r.warm;
    auto rescored = score_stream(*r.surrogate.detector, probe, outcome.packets);
    size_t flagged = 0;
    for (double s : rescored)
      if (s > r.surrogate.threshold) ++flagged;
    double adr = double(flagged) / double(rescored.size());
    CHECK(adr < mdr);
  }
}

TEST_CASE("recursion drives residuals down monotonically") {
  auto& r = rig();
  AttackConfig cfg = r.attack_cfg();
  cfg.recursion_limit = 3;
  auto outcome = recurse_attack(r.burst, *r.surrogate.detector, r.warm, cfg);
  REQUIRE(outcome.report.passes.size() >= 1);
  uint64_t prev = UINT64_MAX;
  for (const auto& pass : outcome.report.passes) {
    CHECK(pass.totals.residual <= prev);
    prev = pass.totals.residual;
  }

  SUBCASE("recursion limit 1 equals a single pass") {
    AttackConfig one = cfg;
    one.recursion_limit = 1;
    auto single = recurse_attack(r.burst, *r.surrogate.detector, r.warm, one);
    CHECK(single.report.passes.size() == 1);
    FeatureExtractor ex = r.warm;
    auto direct = run_attack(r.burst, *r.surrogate.detector, ex, cfg);
    REQUIRE(single.packets.size() == direct.packets.size());
    for (size_t i = 0; i < single.packets.size(); ++i)
      CHECK(single.packets[i].raw == direct.packets[i].raw);
  }

  SUBCASE("input already below threshold makes one clean pass") {
    synthetic::Config follow = r.cfg;
    follow.seed = r.cfg.seed + 50;
    follow.base_time = r.cfg.base_time + r.cfg.duration_s + 2.0;
    follow.duration_s = 20.0;
    auto quiet = synthetic::benign(follow);
    auto res = recurse_attack(quiet, *r.surrogate.detector, r.warm, cfg);
    CHECK(res.report.passes.size() == 1);
    CHECK(res.report.final_totals().modified == 0);
  }
}

TEST_CASE("same seed, same adversarial bytes and report") {
  auto& r = rig();
  AttackConfig cfg = r.attack_cfg();
  auto o1 = recurse_attack(r.burst, *r.surrogate.detector, r.warm, cfg);
  auto o2 = recurse_attack(r.burst, *r.surrogate.detector, r.warm, cfg);
  REQUIRE(o1.packets.size() == o2.packets.size());
  for (size_t i = 0; i < o1.packets.size(); ++i) {
    CHECK(o1.packets[i].raw == o2.packets[i].raw);
    CHECK(o1.packets[i].time_us == o2.packets[i].time_us);
  }
  CHECK(attack_report_to_json(o1.report) == attack_report_to_json(o2.report));
}

TEST_CASE("delay-only optimum: flagged packet emitted without injections") {
  // A surrogate that punishes recent stream weight: injecting packets can
  // only raise the cost, while delaying decays it.
  class WeightDetector : public Detector {
   public:
    void fit(const Matrix& benign_raw, uint64_t) override {
      norm_.fit(benign_raw);
      fitted_ = true;
    }
    double score_normalized(std::span<const double> z) const override {
      return z[13];  // socket weight, fastest decay horizon
    }
    DetectorKind kind() const override { return DetectorKind::Autoencoder; }
    const char* name() const override { return "weight-stub"; }

   protected:
    void save_payload(BinWriter&) const override {}
    void load_payload(BinReader&) override {}
  };

  auto& r = rig();
  WeightDetector det;
  Matrix bounds(2, r.warm.dimension());
  for (size_t c = 0; c < bounds.cols; ++c) bounds.at(1, c) = 50.0;
  det.fit(bounds, 0);

  // Burst so the weight builds up, then a threshold between the quiet and
  // bursty regimes: only the tail packet is flagged.
  auto tail = synthetic::malicious(r.cfg);
  tail.resize(10);
  FeatureExtractor ex = r.warm;
  for (size_t i = 0; i + 1 < tail.size(); ++i) ex.extract(tail[i]);
  double running = det.score(ex.extract(tail.back()).values);
  FeatureExtractor ex2 = r.warm;
  for (size_t i = 0; i + 1 < tail.size(); ++i) ex2.extract(tail[i]);
  det.set_threshold(running * 0.7);

  AttackConfig cfg = r.attack_cfg();
  cfg.seed = 5;
  std::vector<PacketRecord> one{tail.back()};
  auto outcome = run_attack(one, det, ex2, cfg);
  const auto& totals = outcome.report.final_totals();
  CHECK(totals.flagged == 1);
  CHECK(totals.injected == 0);
  REQUIRE(outcome.packets.size() == 1);
  CHECK(outcome.packets[0].raw == tail.back().raw);
  CHECK(outcome.report.passes.back().log.back().post_score <
        outcome.report.passes.back().log.back().pre_score);
}
