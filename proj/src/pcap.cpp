#include "pcapmorph/pcap.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "pcapmorph/util.hpp"

namespace pcapmorph {

namespace {

constexpr uint32_t kMagicUsec = 0xA1B2C3D4;
constexpr uint32_t kMagicUsecSwapped = 0xD4C3B2A1;
constexpr uint32_t kMagicNsec = 0xA1B23C4D;
constexpr uint32_t kMagicNsecSwapped = 0x4D3CB2A1;
constexpr uint32_t kLinkTypeEthernet = 1;
constexpr size_t kGlobalHeaderLen = 24;
constexpr size_t kRecordHeaderLen = 16;

uint32_t load_u32(const uint8_t* p, bool swapped) {
  uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
               uint32_t(p[3]) << 24;
  if (swapped) v = __builtin_bswap32(v);
  return v;
}

uint16_t load_be16(const uint8_t* p) {
  return uint16_t(uint16_t(p[0]) << 8 | p[1]);
}

uint32_t load_be32(const uint8_t* p) {
  return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 |
         uint32_t(p[3]);
}

void store_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

void store_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

void store_be16(uint8_t* p, uint16_t v) {
  p[0] = uint8_t(v >> 8);
  p[1] = uint8_t(v);
}

constexpr size_t kEthHeader = 14;
constexpr uint16_t kEtherTypeIpv4 = 0x0800;
constexpr uint16_t kEtherTypeArp = 0x0806;

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return "tcp";
    case Protocol::Udp: return "udp";
    case Protocol::Icmp: return "icmp";
    case Protocol::Arp: return "arp";
    case Protocol::Other: return "other";
  }
  return "other";
}

PacketRecord decode_frame(std::vector<uint8_t> raw, int64_t time_us,
                          uint64_t index, uint32_t orig_len) {
  PacketRecord rec;
  rec.index = index;
  rec.time_us = time_us;
  rec.frame_len = static_cast<uint32_t>(raw.size());
  rec.orig_len = orig_len ? orig_len : rec.frame_len;
  rec.raw = std::move(raw);
  const auto& b = rec.raw;

  if (b.size() >= 12) {
    std::copy_n(b.begin(), 6, rec.dst_link.begin());
    std::copy_n(b.begin() + 6, 6, rec.src_link.begin());
  }
  if (b.size() < kEthHeader) {
    rec.payload_len = 0;
    return rec;
  }
  uint16_t ethertype = load_be16(&b[12]);
  // Default for frames we cannot decode past Ethernet.
  rec.protocol = ethertype == kEtherTypeArp ? Protocol::Arp : Protocol::Other;
  rec.payload_len = static_cast<uint32_t>(b.size() - kEthHeader);
  if (ethertype != kEtherTypeIpv4) return rec;

  if (b.size() < kEthHeader + 20) return rec;
  const uint8_t* ip = &b[kEthHeader];
  if ((ip[0] >> 4) != 4) return rec;
  size_t ihl = size_t(ip[0] & 0x0F) * 4;
  if (ihl < 20 || b.size() < kEthHeader + ihl) return rec;

  rec.src_net = load_be32(ip + 12);
  rec.dst_net = load_be32(ip + 16);
  rec.protocol = Protocol::Other;
  size_t l4 = kEthHeader + ihl;
  rec.payload_len = static_cast<uint32_t>(b.size() - l4);

  switch (ip[9]) {
    case 6: {  // TCP
      if (b.size() < l4 + 20) return rec;
      size_t data_off = size_t(b[l4 + 12] >> 4) * 4;
      if (data_off < 20 || b.size() < l4 + data_off) return rec;
      rec.protocol = Protocol::Tcp;
      rec.src_port = load_be16(&b[l4]);
      rec.dst_port = load_be16(&b[l4 + 2]);
      rec.payload_len = static_cast<uint32_t>(b.size() - l4 - data_off);
      break;
    }
    case 17: {  // UDP
      if (b.size() < l4 + 8) return rec;
      rec.protocol = Protocol::Udp;
      rec.src_port = load_be16(&b[l4]);
      rec.dst_port = load_be16(&b[l4 + 2]);
      rec.payload_len = static_cast<uint32_t>(b.size() - l4 - 8);
      break;
    }
    case 1: {  // ICMP
      if (b.size() < l4 + 8) return rec;
      rec.protocol = Protocol::Icmp;
      rec.payload_len = static_cast<uint32_t>(b.size() - l4 - 8);
      break;
    }
    default:
      break;
  }
  return rec;
}

std::vector<PacketRecord> read_pcap(const std::string& path) {
  std::vector<uint8_t> buf = read_file_bytes(path);
  if (buf.size() < kGlobalHeaderLen)
    throw ParseError("truncated pcap global header", buf.size());

  uint32_t magic = load_u32(&buf[0], false);
  bool swapped = false;
  bool nanos = false;
  switch (magic) {
    case kMagicUsec: break;
    case kMagicUsecSwapped: swapped = true; break;
    case kMagicNsec: nanos = true; break;
    case kMagicNsecSwapped: swapped = true; nanos = true; break;
    default:
      throw Error(ErrorCode::UnsupportedFormat,
                  "not a classic pcap file (bad magic)");
  }
  uint32_t linktype = load_u32(&buf[20], swapped);
  if (linktype != kLinkTypeEthernet)
    throw Error(ErrorCode::UnsupportedFormat,
                "unsupported link type " + std::to_string(linktype) +
                    " (only Ethernet is handled)");

  std::vector<PacketRecord> records;
  size_t off = kGlobalHeaderLen;
  uint64_t index = 0;
  while (off < buf.size()) {
    if (buf.size() - off < kRecordHeaderLen)
      throw ParseError("truncated pcap record header", off);
    uint32_t ts_sec = load_u32(&buf[off], swapped);
    uint32_t ts_frac = load_u32(&buf[off + 4], swapped);
    uint32_t incl_len = load_u32(&buf[off + 8], swapped);
    uint32_t orig_len = load_u32(&buf[off + 12], swapped);
    off += kRecordHeaderLen;
    if (buf.size() - off < incl_len)
      throw ParseError("truncated pcap record body", off);
    int64_t us = nanos ? int64_t(ts_frac) / 1000 : int64_t(ts_frac);
    int64_t time_us = int64_t(ts_sec) * 1000000 + us;
    std::vector<uint8_t> frame(buf.begin() + off, buf.begin() + off + incl_len);
    records.push_back(decode_frame(std::move(frame), time_us, index, orig_len));
    off += incl_len;
    ++index;
  }
  return records;
}

void write_pcap(std::span<const PacketRecord> records, const std::string& path) {
  for (size_t i = 1; i < records.size(); ++i) {
    if (records[i].time_us < records[i - 1].time_us)
      throw Error(ErrorCode::Ordering,
                  "timestamps decrease between records " +
                      std::to_string(i - 1) + " and " + std::to_string(i));
  }
  std::vector<uint8_t> out;
  out.reserve(kGlobalHeaderLen + records.size() * 80);
  store_u32(out, kMagicUsec);
  store_u16(out, 2);      // version major
  store_u16(out, 4);      // version minor
  store_u32(out, 0);      // thiszone
  store_u32(out, 0);      // sigfigs
  store_u32(out, 65535);  // snaplen
  store_u32(out, kLinkTypeEthernet);
  for (const auto& r : records) {
    int64_t sec = r.time_us / 1000000;
    int64_t usec = r.time_us % 1000000;
    if (usec < 0) {
      usec += 1000000;
      sec -= 1;
    }
    store_u32(out, uint32_t(sec));
    store_u32(out, uint32_t(usec));
    store_u32(out, uint32_t(r.raw.size()));
    store_u32(out, r.orig_len ? r.orig_len : uint32_t(r.raw.size()));
    out.insert(out.end(), r.raw.begin(), r.raw.end());
  }
  write_file_bytes(path, out);
}

uint16_t inet_checksum(std::span<const uint8_t> bytes, uint32_t initial) {
  uint32_t sum = initial;
  size_t i = 0;
  for (; i + 1 < bytes.size(); i += 2)
    sum += uint32_t(bytes[i]) << 8 | bytes[i + 1];
  if (i < bytes.size()) sum += uint32_t(bytes[i]) << 8;
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return uint16_t(~sum & 0xFFFF);
}

namespace {

// Rewrites IPv4 total length, transport length and checksums in place.
// `frame` must hold a well-formed Ethernet/IPv4 stack.
void fix_lengths_and_checksums(std::vector<uint8_t>& frame) {
  size_t ihl = size_t(frame[kEthHeader] & 0x0F) * 4;
  uint8_t ip_proto = frame[kEthHeader + 9];
  size_t l4 = kEthHeader + ihl;
  uint16_t ip_total = uint16_t(frame.size() - kEthHeader);
  store_be16(&frame[kEthHeader + 2], ip_total);

  // IPv4 header checksum
  frame[kEthHeader + 10] = 0;
  frame[kEthHeader + 11] = 0;
  uint16_t ip_ck = inet_checksum({&frame[kEthHeader], ihl});
  store_be16(&frame[kEthHeader + 10], ip_ck);

  size_t l4_len = frame.size() - l4;
  if (ip_proto == 6 || ip_proto == 17) {
    size_t ck_off = ip_proto == 6 ? l4 + 16 : l4 + 6;
    if (ip_proto == 17) store_be16(&frame[l4 + 4], uint16_t(l4_len));
    frame[ck_off] = 0;
    frame[ck_off + 1] = 0;
    // pseudo-header: src, dst, zero, proto, length
    std::array<uint8_t, 12> pseudo{};
    std::copy_n(&frame[kEthHeader + 12], 8, pseudo.begin());
    pseudo[9] = ip_proto;
    store_be16(&pseudo[10], uint16_t(l4_len));
    uint32_t partial = 0;
    for (size_t i = 0; i + 1 < pseudo.size(); i += 2)
      partial += uint32_t(pseudo[i]) << 8 | pseudo[i + 1];
    uint16_t ck = inet_checksum({&frame[l4], l4_len}, partial);
    if (ip_proto == 17 && ck == 0) ck = 0xFFFF;  // RFC 768
    store_be16(&frame[ck_off], ck);
  } else if (ip_proto == 1) {
    frame[l4 + 2] = 0;
    frame[l4 + 3] = 0;
    uint16_t ck = inet_checksum({&frame[l4], l4_len});
    store_be16(&frame[l4 + 2], ck);
  }
}

}  // namespace

PacketRecord synthesize_packet(const PacketRecord& tmpl, double timestamp_s,
                               uint32_t payload_len, std::mt19937_64& rng) {
  if (tmpl.protocol != Protocol::Tcp && tmpl.protocol != Protocol::Udp &&
      tmpl.protocol != Protocol::Icmp)
    throw Error(ErrorCode::UnsupportedFormat,
                "cannot synthesize packets for a non-IPv4 template");
  uint32_t hdr = tmpl.header_len();
  if (hdr + payload_len > 1514)
    throw Error(ErrorCode::Bounds,
                "payload of " + std::to_string(payload_len) +
                    " bytes exceeds the 1514-byte frame cap (headers " +
                    std::to_string(hdr) + " bytes)");
  if (tmpl.raw.size() < hdr)
    throw Error(ErrorCode::State, "template frame shorter than its headers");

  std::vector<uint8_t> frame(tmpl.raw.begin(), tmpl.raw.begin() + hdr);
  frame.reserve(hdr + payload_len);
  for (uint32_t i = 0; i < payload_len; ++i)
    frame.push_back(uint8_t(rng() & 0xFF));
  fix_lengths_and_checksums(frame);

  PacketRecord rec = decode_frame(std::move(frame), 0, tmpl.index, 0);
  rec.set_seconds(timestamp_s);
  return rec;
}

PacketRecord make_ipv4_packet(Protocol proto, const LinkAddr& src_mac,
                              const LinkAddr& dst_mac, uint32_t src_ip,
                              uint32_t dst_ip, uint16_t src_port,
                              uint16_t dst_port, double t_s,
                              std::span<const uint8_t> payload) {
  std::vector<uint8_t> f;
  f.reserve(kEthHeader + 20 + 20 + payload.size());
  f.insert(f.end(), dst_mac.begin(), dst_mac.end());
  f.insert(f.end(), src_mac.begin(), src_mac.end());
  f.push_back(0x08);
  f.push_back(0x00);

  // IPv4 header, no options
  f.push_back(0x45);
  f.push_back(0);
  f.push_back(0);
  f.push_back(0);  // total length, fixed later
  f.push_back(0);
  f.push_back(0);  // identification
  f.push_back(0x40);
  f.push_back(0);  // DF, no fragment offset
  f.push_back(64);  // TTL
  uint8_t ipp = proto == Protocol::Tcp ? 6 : proto == Protocol::Udp ? 17 : 1;
  f.push_back(ipp);
  f.push_back(0);
  f.push_back(0);  // header checksum, fixed later
  for (int s = 24; s >= 0; s -= 8) f.push_back(uint8_t(src_ip >> s));
  for (int s = 24; s >= 0; s -= 8) f.push_back(uint8_t(dst_ip >> s));

  if (proto == Protocol::Tcp) {
    size_t tcp = f.size();
    f.resize(f.size() + 20, 0);
    store_be16(&f[tcp], src_port);
    store_be16(&f[tcp + 2], dst_port);
    f[tcp + 12] = 5 << 4;   // data offset
    f[tcp + 13] = 0x18;     // PSH|ACK
    store_be16(&f[tcp + 14], 16384);  // window
  } else if (proto == Protocol::Udp) {
    size_t udp = f.size();
    f.resize(f.size() + 8, 0);
    store_be16(&f[udp], src_port);
    store_be16(&f[udp + 2], dst_port);
  } else {
    size_t icmp = f.size();
    f.resize(f.size() + 8, 0);
    f[icmp] = 8;  // echo request
  }
  f.insert(f.end(), payload.begin(), payload.end());
  fix_lengths_and_checksums(f);

  PacketRecord rec = decode_frame(std::move(f), 0, 0, 0);
  rec.set_seconds(t_s);
  return rec;
}

uint32_t ipv4_from_string(const std::string& dotted) {
  uint32_t parts[4];
  if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u", &parts[0], &parts[1],
                  &parts[2], &parts[3]) != 4 ||
      parts[0] > 255 || parts[1] > 255 || parts[2] > 255 || parts[3] > 255)
    throw Error(ErrorCode::Config, "bad IPv4 address '" + dotted + "'");
  return parts[0] << 24 | parts[1] << 16 | parts[2] << 8 | parts[3];
}

std::string ipv4_to_string(uint32_t addr) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", addr >> 24,
                (addr >> 16) & 0xFF, (addr >> 8) & 0xFF, addr & 0xFF);
  return buf;
}

}  // namespace pcapmorph
