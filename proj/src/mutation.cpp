#include "pcapmorph/mutation.hpp"

#include <algorithm>
#include <cmath>

#include "pcapmorph/util.hpp"

namespace pcapmorph {

const char* strategy_name(PayloadStrategy s) {
  switch (s) {
    case PayloadStrategy::Random: return "ra";
    case PayloadStrategy::Seeded: return "sa";
    case PayloadStrategy::Uniform: return "ua";
  }
  return "ua";
}

PayloadStrategy strategy_from_name(const std::string& name) {
  if (name == "ra" || name == "random") return PayloadStrategy::Random;
  if (name == "sa" || name == "seeded") return PayloadStrategy::Seeded;
  if (name == "ua" || name == "uniform") return PayloadStrategy::Uniform;
  throw Error(ErrorCode::Config,
              "unknown payload strategy '" + name + "' (ra, sa or ua)");
}

void MutationBounds::validate() const {
  if (max_time_window <= 0 || max_craft_pkt < 0 || max_packet_size == 0)
    throw Error(ErrorCode::Config, "mutation bounds must be positive");
}

uint32_t payload_capacity(const PacketRecord& tmpl,
                          const MutationBounds& bounds) {
  if (tmpl.protocol != Protocol::Tcp && tmpl.protocol != Protocol::Udp &&
      tmpl.protocol != Protocol::Icmp)
    return 0;
  uint32_t hdr = tmpl.header_len();
  return bounds.max_packet_size > hdr ? bounds.max_packet_size - hdr : 0;
}

AdversarialPacketSet materialize(const MutationVector& v,
                                 const PacketRecord& anchor, double t_prev,
                                 PayloadStrategy strategy,
                                 const MutationBounds& bounds,
                                 std::mt19937_64& rng) {
  if (v.t_m < t_prev)
    throw Error(ErrorCode::InfeasibleMutation,
                "modified arrival " + format_double(v.t_m) +
                    " precedes the previously emitted packet at " +
                    format_double(t_prev));
  if (v.t_m < anchor.seconds())
    throw Error(ErrorCode::InfeasibleMutation,
                "modified arrival precedes the packet's own capture time");

  long long k = std::llround(v.n_c);
  if (k < 0) k = 0;
  if (k > bounds.max_craft_pkt)
    throw Error(ErrorCode::Bounds,
                "redundant packet count " + std::to_string(k) +
                    " exceeds the cap of " +
                    std::to_string(bounds.max_craft_pkt));

  int64_t t_prev_us = std::llround(t_prev * 1e6);
  int64_t t_m_us = std::llround(v.t_m * 1e6);
  bool can_craft = anchor.protocol == Protocol::Tcp ||
                   anchor.protocol == Protocol::Udp ||
                   anchor.protocol == Protocol::Icmp;
  if (t_m_us <= t_prev_us || !can_craft) k = 0;

  uint32_t cap = payload_capacity(anchor, bounds);

  // Payload sizes per strategy.
  std::vector<uint32_t> sizes(size_t(k), 0);
  if (k > 0) {
    switch (strategy) {
      case PayloadStrategy::Random: {
        std::uniform_int_distribution<uint32_t> dist(0, cap);
        for (auto& s : sizes) s = dist(rng);
        break;
      }
      case PayloadStrategy::Seeded: {
        // the size stream depends only on round(n_c)
        std::mt19937_64 seeded{uint64_t(k)};
        std::uniform_int_distribution<uint32_t> dist(0, cap);
        for (auto& s : sizes) s = dist(seeded);
        break;
      }
      case PayloadStrategy::Uniform: {
        long long sc = std::llround(v.s_c);
        if (sc < 0 || uint32_t(sc) > cap)
          throw Error(ErrorCode::Bounds,
                      "uniform payload size " + std::to_string(sc) +
                          " outside [0, " + std::to_string(cap) + "]");
        std::fill(sizes.begin(), sizes.end(), uint32_t(sc));
        break;
      }
    }
  }

  AdversarialPacketSet out;
  int64_t last_us = t_prev_us;
  for (long long j = 1; j <= k; ++j) {
    double tj =
        t_prev + double(j) * (v.t_m - t_prev) / double(k + 1);
    int64_t tj_us = std::llround(tj * 1e6);
    // keep arrivals strictly increasing and strictly before the anchor
    // at microsecond resolution; drop packets that cannot fit
    if (tj_us <= last_us) tj_us = last_us + 1;
    if (tj_us >= t_m_us) continue;
    PacketRecord red =
        synthesize_packet(anchor, double(tj_us) / 1e6, sizes[size_t(j - 1)], rng);
    red.index = anchor.index;
    out.packets.push_back(std::move(red));
    last_us = tj_us;
  }
  out.redundant_count = out.packets.size();

  PacketRecord moved = anchor;
  moved.time_us = t_m_us;
  out.packets.push_back(std::move(moved));
  return out;
}

double mutation_cost(const MutationVector& v, const PacketRecord& anchor,
                     double t_prev, PayloadStrategy strategy,
                     const MutationBounds& bounds, FeatureExtractor& extractor,
                     const Snapshot& snap, const Detector& surrogate,
                     std::mt19937_64& rng) {
  AdversarialPacketSet set =
      materialize(v, anchor, t_prev, strategy, bounds, rng);
  double worst = 0.0;
  for (const PacketRecord& p : set.packets) {
    FeatureVector x = extractor.extract(p);
    worst = std::max(worst, surrogate.score(x.values));
  }
  extractor.restore(snap);
  return worst;
}

}  // namespace pcapmorph
