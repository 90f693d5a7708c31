#pragma once

// Classic pcap capture files (read both endiannesses and the nanosecond
// variant, write native little-endian microseconds) plus Ethernet/IPv4
// header decoding into PacketRecord values.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pcapmorph/error.hpp"

namespace pcapmorph {

enum class Protocol : uint8_t { Tcp, Udp, Icmp, Arp, Other };

const char* protocol_name(Protocol p);

// Label attached to a whole capture file, not to individual packets.
enum class TrafficClass : uint8_t { Benign, Malicious, Adversarial };

using LinkAddr = std::array<uint8_t, 6>;

struct PacketRecord {
  uint64_t index = 0;        // 0-based position in the capture
  int64_t time_us = 0;       // microseconds since epoch
  uint32_t frame_len = 0;    // captured length, == raw.size()
  uint32_t orig_len = 0;     // on-wire length (>= frame_len if snapped)
  LinkAddr src_link{};
  LinkAddr dst_link{};
  std::optional<uint32_t> src_net;  // IPv4 address, host byte order
  std::optional<uint32_t> dst_net;
  Protocol protocol = Protocol::Other;
  std::optional<uint16_t> src_port;
  std::optional<uint16_t> dst_port;
  uint32_t payload_len = 0;  // bytes after the deepest decoded header
  std::vector<uint8_t> raw;

  double seconds() const { return static_cast<double>(time_us) / 1e6; }
  void set_seconds(double s) { time_us = std::llround(s * 1e6); }
  // Ethernet + IP + transport headers, in bytes.
  uint32_t header_len() const { return frame_len - payload_len; }
};

// Decodes one Ethernet frame. Total: malformed or non-IP frames come back
// with protocol Arp/Other and empty network fields instead of failing.
PacketRecord decode_frame(std::vector<uint8_t> raw, int64_t time_us,
                          uint64_t index, uint32_t orig_len);

std::vector<PacketRecord> read_pcap(const std::string& path);
void write_pcap(std::span<const PacketRecord> records, const std::string& path);

// Builds a redundant packet from a template: same addresses, ports and
// protocol, random payload bytes, length fields and checksums rewritten.
// The template must carry an IPv4 stack (TCP/UDP/ICMP).
PacketRecord synthesize_packet(const PacketRecord& tmpl, double timestamp_s,
                               uint32_t payload_len, std::mt19937_64& rng);

// Packet crafting used by generators and tests.
PacketRecord make_ipv4_packet(Protocol proto, const LinkAddr& src_mac,
                              const LinkAddr& dst_mac, uint32_t src_ip,
                              uint32_t dst_ip, uint16_t src_port,
                              uint16_t dst_port, double t_s,
                              std::span<const uint8_t> payload);

uint32_t ipv4_from_string(const std::string& dotted);
std::string ipv4_to_string(uint32_t addr);

// One's-complement checksum over a byte range (pad odd length with zero).
uint16_t inet_checksum(std::span<const uint8_t> bytes, uint32_t initial = 0);

}  // namespace pcapmorph
