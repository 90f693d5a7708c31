#pragma once

// The bounded mutation space: delay a packet and inject redundant packets
// before it. A mutation vector (t_m, n_c[, s_c]) materializes into the
// redundant packets followed by the re-timed original; the cost of a vector
// is the maximum surrogate score over that set, evaluated through a
// restored extractor snapshot.

#include <cstdint>
#include <random>
#include <vector>

#include "pcapmorph/detector.hpp"
#include "pcapmorph/features.hpp"
#include "pcapmorph/pcap.hpp"

namespace pcapmorph {

// Payload-size assignment for redundant packets. Random draws fresh sizes
// every evaluation (cost is non-deterministic by design); Seeded reseeds the
// size generator with round(n_c), making cost piecewise-deterministic in
// n_c; Uniform gives every redundant packet the size s_c.
enum class PayloadStrategy : uint8_t { Random, Seeded, Uniform };

const char* strategy_name(PayloadStrategy s);
PayloadStrategy strategy_from_name(const std::string& name);

struct MutationBounds {
  double max_time_window = 1.0;   // seconds of delay available per packet
  int max_craft_pkt = 5;          // redundant packets per anchor
  uint32_t max_packet_size = 1514;  // frame-size cap for crafted packets

  void validate() const;
};

struct MutationVector {
  double t_m = 0.0;  // absolute modified arrival time, seconds
  double n_c = 0.0;  // redundant packet count (relaxed; rounded at use)
  double s_c = 0.0;  // uniform payload size, bytes (Uniform strategy only)
};

struct AdversarialPacketSet {
  // round(n_c) redundant packets followed by the re-timed original.
  std::vector<PacketRecord> packets;
  size_t redundant_count = 0;
};

// Largest payload a redundant packet cloned from this template can carry.
uint32_t payload_capacity(const PacketRecord& tmpl,
                          const MutationBounds& bounds);

// Builds the adversarial set. t_prev is the arrival time of the previously
// emitted packet; redundant arrivals are evenly spaced on (t_prev, t_m).
// When the window is empty, or the template cannot carry crafted packets
// (non-IPv4), the redundant count collapses to zero.
AdversarialPacketSet materialize(const MutationVector& v,
                                 const PacketRecord& anchor, double t_prev,
                                 PayloadStrategy strategy,
                                 const MutationBounds& bounds,
                                 std::mt19937_64& rng);

// max { surrogate score over the materialized set }, streamed through the
// extractor and rolled back afterwards. The extractor must currently sit at
// the snapshot point.
double mutation_cost(const MutationVector& v, const PacketRecord& anchor,
                     double t_prev, PayloadStrategy strategy,
                     const MutationBounds& bounds, FeatureExtractor& extractor,
                     const Snapshot& snap, const Detector& surrogate,
                     std::mt19937_64& rng);

}  // namespace pcapmorph
