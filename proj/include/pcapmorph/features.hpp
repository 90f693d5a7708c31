#pragma once

// Streaming per-packet feature extraction: exponentially damped statistics
// kept per stream key (source link+net, source-net jitter, channel, socket)
// over several decay horizons. Emits a fixed 20-per-lambda layout:
//
//   [ src   w, mean, std                                   ]  3
//   [ jit   w, mean, std                                   ]  3
//   [ chan  w, mean, std, magnitude, radius, cov, pcc      ]  7
//   [ sock  w, mean, std, magnitude, radius, cov, pcc      ]  7
//
// Snapshot/restore brackets let a caller stream candidate packets through
// the extractor and roll the touched streams back bitwise-exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pcapmorph/error.hpp"
#include "pcapmorph/pcap.hpp"

namespace pcapmorph {

inline const std::vector<double> kDefaultLambdas{5.0, 3.0, 1.0, 0.1, 0.01};
inline constexpr size_t kFeaturesPerLambda = 20;

// Correlation features read as zero unless both directions still carry
// deviation above this fraction of their mean. Below it the remaining
// variance mass is decayed-out rounding noise and the ratio cov/(sd*sd) is
// meaningless; genuine variation of integer-sized frames sits well above.
inline constexpr double kPccRelativeFloor = 1e-4;

inline bool pcc_defined(double sd, double mean) {
  return sd > kPccRelativeFloor * (1.0 + std::abs(mean));
}

// One damped incremental statistic. Keeps the decayed sums (w, LS, SS) plus
// a damped Welford pair (mean, m2) used for the emitted mean/variance: the
// sums formulation cancels catastrophically for near-constant streams, the
// Welford one is exact there (a constant stream reports exactly zero
// variance). Accumulators are extended precision so long traces stay within
// 1e-9 of a full-history recomputation.
struct DampedStat {
  long double weight = 0.0L;
  long double lin_sum = 0.0L;
  long double sq_sum = 0.0L;
  long double mean_acc = 0.0L;
  long double m2_acc = 0.0L;
  double last_t = 0.0;
  bool seen = false;

  static long double decay(double lambda, double dt) {
    return exp2l(-static_cast<long double>(lambda) *
                 static_cast<long double>(dt));
  }

  void update(double lambda, double value, double t) {
    if (seen && t < last_t)
      throw Error(ErrorCode::TimeRegression,
                  "statistic updated with an earlier timestamp");
    long double w_old = weight;
    if (seen) {
      long double g = decay(lambda, t - last_t);
      weight *= g;
      lin_sum *= g;
      sq_sum *= g;
      m2_acc *= g;
      w_old = weight;
    }
    weight += 1.0L;
    lin_sum += value;
    sq_sum += static_cast<long double>(value) * value;
    long double delta = value - mean_acc;
    m2_acc += (w_old / weight) * delta * delta;
    mean_acc += delta / weight;
    last_t = t;
    seen = true;
  }

  double weight_d() const { return double(weight); }
  double mean() const { return seen ? double(mean_acc) : 0.0; }
  long double mean_l() const { return seen ? mean_acc : 0.0L; }
  double variance() const {
    if (weight <= 0) return 0.0;
    long double v = m2_acc / weight;
    return v > 0 ? double(v) : 0.0;
  }
  double std_dev() const { return std::sqrt(variance()); }
  // Raw sums view of the variance (subject to cancellation; kept for
  // invariant audits).
  double variance_from_sums() const {
    if (weight <= 0) return 0.0;
    long double m = lin_sum / weight;
    return double(sq_sum / weight - m * m);
  }
  // Decayed view of the weight at a later time, without observing anything.
  double weight_at(double lambda, double t) const {
    if (!seen) return 0.0;
    return double(weight * decay(lambda, t - last_t));
  }

  bool operator==(const DampedStat&) const = default;
};

// Damped residual-product accumulator linking the two directions of a pair
// stream; covariance = sum_prod / weight.
struct DampedCov {
  long double sum_prod = 0.0L;
  long double weight = 0.0L;
  std::array<long double, 2> last_res{0.0L, 0.0L};
  double last_t = 0.0;
  bool seen = false;

  void update(double lambda, int dir, long double residual, double t) {
    if (seen) {
      long double g = DampedStat::decay(lambda, t - last_t);
      sum_prod *= g;
      weight *= g;
    }
    sum_prod += residual * last_res[1 - dir];
    weight += 1.0L;
    last_res[dir] = residual;
    last_t = t;
    seen = true;
  }

  double covariance() const {
    return weight > 0 ? double(sum_prod / weight) : 0.0;
  }

  bool operator==(const DampedCov&) const = default;
};

struct SrcKey {
  LinkAddr mac{};
  uint32_t ip = 0;
  bool has_ip = false;
  bool operator==(const SrcKey&) const = default;
};

struct ChannelKey {  // unordered pair of IPv4 addresses, lo <= hi
  uint32_t lo = 0, hi = 0;
  bool operator==(const ChannelKey&) const = default;
};

struct SocketKey {  // unordered pair of (ip, port) endpoints
  uint32_t ip_a = 0, ip_b = 0;
  uint16_t port_a = 0, port_b = 0;
  bool operator==(const SocketKey&) const = default;
};

using JitterKey = uint32_t;  // source IPv4 address

using StreamKey = std::variant<SrcKey, JitterKey, ChannelKey, SocketKey>;

bool stream_key_equal(const StreamKey& a, const StreamKey& b);

struct FeatureVector {
  std::vector<double> values;
  uint64_t packet_index = 0;
};

class FeatureExtractor;

// Opaque rollback token. Valid until released; restoring does not consume it.
class Snapshot {
 public:
  Snapshot() = default;

 private:
  friend class FeatureExtractor;
  struct SavedEntry;
  uint64_t id_ = 0;
  double last_t_ = 0.0;
  bool last_seen_ = false;
  size_t log_pos_ = 0;
  std::vector<SavedEntry> saved_;
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::vector<double> lambdas = kDefaultLambdas);

  size_t dimension() const { return lambdas_.size() * kFeaturesPerLambda; }
  const std::vector<double>& lambdas() const { return lambdas_; }

  // Updates every stream the packet belongs to and emits the feature layout.
  // Commits the packet: state advances.
  FeatureVector extract(const PacketRecord& p);

  // Stream keys a packet (and any packet sharing its 5-tuple) can touch.
  static std::vector<StreamKey> stream_keys(const PacketRecord& p);

  // Begins a rollback bracket over the given keys. Only one bracket can be
  // outstanding; extract() calls made inside it must stay within the key set
  // or restore() refuses with a staleness error.
  Snapshot snapshot(std::span<const StreamKey> keys);
  void restore(const Snapshot& snap);
  void release(const Snapshot& snap);

  double last_timestamp() const { return last_t_; }
  bool empty() const { return !last_seen_; }

  // Statistical-state equality (ignores bracket bookkeeping). Used by
  // rollback soundness checks and determinism audits.
  bool state_equal(const FeatureExtractor& other) const;

 private:
  struct SrcEntry {
    std::vector<DampedStat> size;
    bool operator==(const SrcEntry&) const = default;
  };
  struct JitterEntry {
    std::vector<DampedStat> jitter;
    double prev_t = 0.0;
    bool has_prev = false;
    bool operator==(const JitterEntry&) const = default;
  };
  struct PairLambda {
    std::array<DampedStat, 2> dir;
    DampedCov cov;
    bool operator==(const PairLambda&) const = default;
  };
  struct PairEntry {
    std::vector<PairLambda> per_lambda;
    bool operator==(const PairEntry&) const = default;
  };

  friend class Snapshot;

  template <class Map, class Key>
  auto& touch(Map& map, const Key& key);
  void log_touch(const StreamKey& key);
  void write_pair_features(const PairEntry& e, int dir, size_t base,
                           std::vector<double>& out) const;

  struct KeyHash {
    size_t operator()(const SrcKey& k) const;
    size_t operator()(const ChannelKey& k) const;
    size_t operator()(const SocketKey& k) const;
    size_t operator()(const JitterKey& k) const { return k * 0x9E3779B97F4A7C15ull >> 32; }
  };

  std::vector<double> lambdas_;
  std::unordered_map<SrcKey, SrcEntry, KeyHash> src_;
  std::unordered_map<JitterKey, JitterEntry, KeyHash> jitter_;
  std::unordered_map<ChannelKey, PairEntry, KeyHash> channel_;
  std::unordered_map<SocketKey, PairEntry, KeyHash> socket_;
  double last_t_ = 0.0;
  bool last_seen_ = false;

  // Rollback bracket bookkeeping.
  uint64_t snapshot_counter_ = 0;
  uint64_t active_snapshot_ = 0;  // 0 = none
  std::vector<StreamKey> dirty_log_;
};

struct Snapshot::SavedEntry {
  StreamKey key;
  // One optional per kind; exactly the matching one is engaged.
  std::optional<FeatureExtractor::SrcEntry> src;
  std::optional<FeatureExtractor::JitterEntry> jitter;
  std::optional<FeatureExtractor::PairEntry> pair;
  bool existed = false;
};

void write_features_csv(const std::string& path,
                        std::span<const FeatureVector> rows);

}  // namespace pcapmorph
