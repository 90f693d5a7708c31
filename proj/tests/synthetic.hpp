#pragma once

// Synthetic traffic shared by the integration and acceptance tests: a
// handful of request/response flows with Poisson arrivals around one packet
// per second per flow, and a tight burst from a new host as the attack.

#include <algorithm>
#include <random>
#include <vector>

#include "pcapmorph/pcap.hpp"

namespace synthetic {

using pcapmorph::LinkAddr;
using pcapmorph::PacketRecord;
using pcapmorph::Protocol;

struct Config {
  uint64_t seed = 20240;
  int flows = 5;
  double duration_s = 600.0;
  double rate_per_flow = 1.0;  // packets per second (requests)
  double base_time = 200000.0;
  int burst_packets = 150;
  double burst_gap_s = 0.001;
  uint32_t burst_payload = 600;
};

inline LinkAddr mac_of(uint8_t last) { return LinkAddr{0x02, 0, 0, 0, 0, last}; }

inline const uint32_t kVictimIp = 0x0A000002;   // 10.0.0.2
inline const uint32_t kAttackerIp = 0x0A000042; // 10.0.0.66

inline std::vector<PacketRecord> benign(const Config& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<PacketRecord> out;
  for (int f = 0; f < cfg.flows; ++f) {
    uint32_t peer = 0x0A000010u + uint32_t(f);
    Protocol proto = f % 2 == 0 ? Protocol::Tcp : Protocol::Udp;
    uint16_t peer_port = uint16_t(40000 + f);
    uint16_t victim_port = f % 2 == 0 ? 80 : 8080;
    uint32_t req_size = 80 + 30u * uint32_t(f);
    uint32_t rsp_size = 200 + 50u * uint32_t(f);
    std::exponential_distribution<double> gap(cfg.rate_per_flow);
    std::uniform_int_distribution<int> jitter(-10, 10);
    std::uniform_real_distribution<double> rsp_delay(0.002, 0.012);
    double t = cfg.base_time + gap(rng);
    while (t < cfg.base_time + cfg.duration_s) {
      uint32_t rq = uint32_t(int(req_size) + jitter(rng));
      auto req = make_ipv4_packet(proto, mac_of(uint8_t(16 + f)), mac_of(2),
                                  peer, kVictimIp, peer_port, victim_port, t,
                                  std::vector<uint8_t>(rq, uint8_t(f)));
      out.push_back(std::move(req));
      uint32_t rs = uint32_t(int(rsp_size) + jitter(rng));
      auto rsp = make_ipv4_packet(proto, mac_of(2), mac_of(uint8_t(16 + f)),
                                  kVictimIp, peer, victim_port, peer_port,
                                  t + rsp_delay(rng),
                                  std::vector<uint8_t>(rs, uint8_t(0x80 + f)));
      out.push_back(std::move(rsp));
      t += gap(rng);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PacketRecord& a, const PacketRecord& b) {
                     return a.time_us < b.time_us;
                   });
  for (size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

// Burst starting one second after the benign capture ends.
inline std::vector<PacketRecord> malicious(const Config& cfg) {
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_int_distribution<int> jitter(-20, 20);
  std::vector<PacketRecord> out;
  double t0 = cfg.base_time + cfg.duration_s + 1.0;
  for (int j = 0; j < cfg.burst_packets; ++j) {
    uint32_t size = uint32_t(int(cfg.burst_payload) + jitter(rng));
    auto p = make_ipv4_packet(Protocol::Tcp, mac_of(0x66), mac_of(2),
                              kAttackerIp, kVictimIp, 31337, 80,
                              t0 + cfg.burst_gap_s * double(j),
                              std::vector<uint8_t>(size, 0xAA));
    p.index = uint64_t(j);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace synthetic
