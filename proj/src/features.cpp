#include "pcapmorph/features.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "pcapmorph/util.hpp"

namespace pcapmorph {

namespace {

template <class T>
size_t hash_pod(const T& v) {
  std::array<uint8_t, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  return size_t(fnv1a64(bytes));
}

}  // namespace

size_t FeatureExtractor::KeyHash::operator()(const SrcKey& k) const {
  uint64_t h = fnv1a64(std::span<const uint8_t>(k.mac.data(), k.mac.size()));
  return size_t(mix_seed(h, (uint64_t(k.ip) << 1) | (k.has_ip ? 1 : 0)));
}

size_t FeatureExtractor::KeyHash::operator()(const ChannelKey& k) const {
  return size_t(mix_seed(k.lo, k.hi));
}

size_t FeatureExtractor::KeyHash::operator()(const SocketKey& k) const {
  return size_t(mix_seed(mix_seed(k.ip_a, k.ip_b),
                         (uint64_t(k.port_a) << 16) | k.port_b));
}

bool stream_key_equal(const StreamKey& a, const StreamKey& b) { return a == b; }

FeatureExtractor::FeatureExtractor(std::vector<double> lambdas)
    : lambdas_(std::move(lambdas)) {
  if (lambdas_.empty())
    throw Error(ErrorCode::Config, "extractor needs at least one decay factor");
}

void FeatureExtractor::log_touch(const StreamKey& key) {
  if (active_snapshot_) dirty_log_.push_back(key);
}

std::vector<StreamKey> FeatureExtractor::stream_keys(const PacketRecord& p) {
  std::vector<StreamKey> keys;
  SrcKey sk{p.src_link, p.src_net.value_or(0), p.src_net.has_value()};
  keys.emplace_back(sk);
  if (p.src_net) keys.emplace_back(JitterKey(*p.src_net));
  if (p.src_net && p.dst_net) {
    ChannelKey ck{std::min(*p.src_net, *p.dst_net),
                  std::max(*p.src_net, *p.dst_net)};
    keys.emplace_back(ck);
    if (p.src_port && p.dst_port) {
      SocketKey so;
      if (std::pair(*p.src_net, *p.src_port) <=
          std::pair(*p.dst_net, *p.dst_port)) {
        so = SocketKey{*p.src_net, *p.dst_net, *p.src_port, *p.dst_port};
      } else {
        so = SocketKey{*p.dst_net, *p.src_net, *p.dst_port, *p.src_port};
      }
      keys.emplace_back(so);
    }
  }
  return keys;
}

void FeatureExtractor::write_pair_features(const PairEntry& e, int dir,
                                           size_t base,
                                           std::vector<double>& out) const {
  for (size_t li = 0; li < lambdas_.size(); ++li) {
    const PairLambda& pl = e.per_lambda[li];
    const DampedStat& mine = pl.dir[dir];
    const DampedStat& other = pl.dir[1 - dir];
    size_t at = li * kFeaturesPerLambda + base;
    double mu_a = mine.mean(), mu_b = other.mean();
    double var_a = mine.variance(), var_b = other.variance();
    double sd_a = std::sqrt(var_a), sd_b = std::sqrt(var_b);
    out[at + 0] = mine.weight_d();
    out[at + 1] = mu_a;
    out[at + 2] = sd_a;
    out[at + 3] = std::sqrt(mu_a * mu_a + mu_b * mu_b);
    out[at + 4] = std::sqrt(var_a * var_a + var_b * var_b);
    double cov = pl.cov.covariance();
    out[at + 5] = cov;
    out[at + 6] = pcc_defined(sd_a, mu_a) && pcc_defined(sd_b, mu_b)
                      ? std::clamp(cov / (sd_a * sd_b), -1.0, 1.0)
                      : 0.0;
  }
}

FeatureVector FeatureExtractor::extract(const PacketRecord& p) {
  double t = p.seconds();
  if (last_seen_ && t < last_t_)
    throw Error(ErrorCode::TimeRegression,
                "packet " + std::to_string(p.index) +
                    " arrives before the previously processed packet");

  FeatureVector out;
  out.packet_index = p.index;
  out.values.assign(dimension(), 0.0);
  const double size = double(p.frame_len);
  const size_t nl = lambdas_.size();

  SrcKey sk{p.src_link, p.src_net.value_or(0), p.src_net.has_value()};
  log_touch(StreamKey(sk));
  SrcEntry& se = src_[sk];
  if (se.size.empty()) se.size.resize(nl);
  for (size_t li = 0; li < nl; ++li) {
    se.size[li].update(lambdas_[li], size, t);
    size_t at = li * kFeaturesPerLambda;
    out.values[at + 0] = se.size[li].weight_d();
    out.values[at + 1] = se.size[li].mean();
    out.values[at + 2] = se.size[li].std_dev();
  }

  if (p.src_net) {
    JitterKey jk = *p.src_net;
    log_touch(StreamKey(jk));
    JitterEntry& je = jitter_[jk];
    if (je.jitter.empty()) je.jitter.resize(nl);
    double delta = je.has_prev ? t - je.prev_t : 0.0;
    for (size_t li = 0; li < nl; ++li) {
      je.jitter[li].update(lambdas_[li], delta, t);
      size_t at = li * kFeaturesPerLambda + 3;
      out.values[at + 0] = je.jitter[li].weight_d();
      out.values[at + 1] = je.jitter[li].mean();
      out.values[at + 2] = je.jitter[li].std_dev();
    }
    je.prev_t = t;
    je.has_prev = true;
  }

  if (p.src_net && p.dst_net) {
    ChannelKey ck{std::min(*p.src_net, *p.dst_net),
                  std::max(*p.src_net, *p.dst_net)};
    int dir = *p.src_net == ck.lo ? 0 : 1;
    log_touch(StreamKey(ck));
    PairEntry& ce = channel_[ck];
    if (ce.per_lambda.empty()) ce.per_lambda.resize(nl);
    for (size_t li = 0; li < nl; ++li) {
      PairLambda& pl = ce.per_lambda[li];
      pl.dir[dir].update(lambdas_[li], size, t);
      pl.cov.update(lambdas_[li], dir, (long double)size - pl.dir[dir].mean_l(), t);
    }
    write_pair_features(ce, dir, 6, out.values);

    if (p.src_port && p.dst_port) {
      auto a = std::pair(*p.src_net, *p.src_port);
      auto b = std::pair(*p.dst_net, *p.dst_port);
      SocketKey so = a <= b ? SocketKey{a.first, b.first, a.second, b.second}
                            : SocketKey{b.first, a.first, b.second, a.second};
      int sdir = a <= b ? 0 : 1;
      log_touch(StreamKey(so));
      PairEntry& soe = socket_[so];
      if (soe.per_lambda.empty()) soe.per_lambda.resize(nl);
      for (size_t li = 0; li < nl; ++li) {
        PairLambda& pl = soe.per_lambda[li];
        pl.dir[sdir].update(lambdas_[li], size, t);
        pl.cov.update(lambdas_[li], sdir, (long double)size - pl.dir[sdir].mean_l(), t);
      }
      write_pair_features(soe, sdir, 13, out.values);
    }
  }

  last_t_ = t;
  last_seen_ = true;
  return out;
}

Snapshot FeatureExtractor::snapshot(std::span<const StreamKey> keys) {
  if (active_snapshot_)
    throw Error(ErrorCode::State, "a rollback bracket is already open");
  Snapshot snap;
  snap.id_ = ++snapshot_counter_;
  snap.last_t_ = last_t_;
  snap.last_seen_ = last_seen_;
  dirty_log_.clear();
  snap.log_pos_ = 0;
  for (const StreamKey& key : keys) {
    Snapshot::SavedEntry saved;
    saved.key = key;
    if (const auto* sk = std::get_if<SrcKey>(&key)) {
      auto it = src_.find(*sk);
      if (it != src_.end()) {
        saved.existed = true;
        saved.src = it->second;
      }
    } else if (const auto* jk = std::get_if<JitterKey>(&key)) {
      auto it = jitter_.find(*jk);
      if (it != jitter_.end()) {
        saved.existed = true;
        saved.jitter = it->second;
      }
    } else if (const auto* ck = std::get_if<ChannelKey>(&key)) {
      auto it = channel_.find(*ck);
      if (it != channel_.end()) {
        saved.existed = true;
        saved.pair = it->second;
      }
    } else if (const auto* ok = std::get_if<SocketKey>(&key)) {
      auto it = socket_.find(*ok);
      if (it != socket_.end()) {
        saved.existed = true;
        saved.pair = it->second;
      }
    }
    snap.saved_.push_back(std::move(saved));
  }
  active_snapshot_ = snap.id_;
  return snap;
}

void FeatureExtractor::restore(const Snapshot& snap) {
  if (active_snapshot_ != snap.id_ || snap.id_ == 0)
    throw Error(ErrorCode::Staleness,
                "snapshot is not the active rollback bracket");
  // Every stream touched since the snapshot must be covered by it.
  for (size_t i = snap.log_pos_; i < dirty_log_.size(); ++i) {
    const StreamKey& touched = dirty_log_[i];
    bool covered = false;
    for (const auto& saved : snap.saved_) {
      if (saved.key == touched) {
        covered = true;
        break;
      }
    }
    if (!covered)
      throw Error(ErrorCode::Staleness,
                  "a stream outside the snapshot's key set was modified");
  }
  for (const auto& saved : snap.saved_) {
    if (const auto* sk = std::get_if<SrcKey>(&saved.key)) {
      if (saved.existed)
        src_[*sk] = *saved.src;
      else
        src_.erase(*sk);
    } else if (const auto* jk = std::get_if<JitterKey>(&saved.key)) {
      if (saved.existed)
        jitter_[*jk] = *saved.jitter;
      else
        jitter_.erase(*jk);
    } else if (const auto* ck = std::get_if<ChannelKey>(&saved.key)) {
      if (saved.existed)
        channel_[*ck] = *saved.pair;
      else
        channel_.erase(*ck);
    } else if (const auto* ok = std::get_if<SocketKey>(&saved.key)) {
      if (saved.existed)
        socket_[*ok] = *saved.pair;
      else
        socket_.erase(*ok);
    }
  }
  dirty_log_.resize(snap.log_pos_);
  last_t_ = snap.last_t_;
  last_seen_ = snap.last_seen_;
}

void FeatureExtractor::release(const Snapshot& snap) {
  if (active_snapshot_ != snap.id_ || snap.id_ == 0)
    throw Error(ErrorCode::Staleness,
                "snapshot is not the active rollback bracket");
  active_snapshot_ = 0;
  dirty_log_.clear();
}

bool FeatureExtractor::state_equal(const FeatureExtractor& other) const {
  return lambdas_ == other.lambdas_ && last_t_ == other.last_t_ &&
         last_seen_ == other.last_seen_ && src_ == other.src_ &&
         jitter_ == other.jitter_ && channel_ == other.channel_ &&
         socket_ == other.socket_;
}

void write_features_csv(const std::string& path,
                        std::span<const FeatureVector> rows) {
  std::ostringstream out;
  out << "packet_index";
  size_t dim = rows.empty() ? 0 : rows.front().values.size();
  for (size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << "\n";
  for (const auto& row : rows) {
    out << row.packet_index;
    for (double v : row.values) out << "," << format_double(v);
    out << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace pcapmorph
