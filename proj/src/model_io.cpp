#include "pcapmorph/model_io.hpp"

#include <cstring>

#include "pcapmorph/autoencoder.hpp"
#include "pcapmorph/kitnet.hpp"
#include "pcapmorph/lof.hpp"
#include "pcapmorph/rrcf.hpp"
#include "pcapmorph/som.hpp"
#include "pcapmorph/util.hpp"

namespace pcapmorph {

namespace {
constexpr uint32_t kModelMagic = 0x4C444D50;  // "PMDL"
constexpr uint32_t kModelVersion = 1;
}  // namespace

void BinWriter::u32(uint32_t v) {
  for (int s = 0; s < 32; s += 8) buf_.push_back(uint8_t(v >> s));
}

void BinWriter::u64(uint64_t v) {
  for (int s = 0; s < 64; s += 8) buf_.push_back(uint8_t(v >> s));
}

void BinWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}

void BinWriter::f64_span(std::span<const double> v) {
  for (double x : v) f64(x);
}

void BinWriter::str(const std::string& s) {
  u64(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void BinReader::need(size_t n) {
  if (buf_.size() - pos_ < n)
    throw ParseError("model file truncated", pos_);
}

uint8_t BinReader::u8() {
  need(1);
  return buf_[pos_++];
}

uint32_t BinReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) v |= uint32_t(buf_[pos_++]) << s;
  return v;
}

uint64_t BinReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int s = 0; s < 64; s += 8) v |= uint64_t(buf_[pos_++]) << s;
  return v;
}

double BinReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::vector<double> BinReader::f64_vec(size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

std::string BinReader::str() {
  size_t n = u64();
  need(n);
  std::string s(buf_.begin() + pos_, buf_.begin() + pos_ + n);
  pos_ += n;
  return s;
}

std::unique_ptr<Detector> make_detector(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Autoencoder:
      return std::make_unique<AutoencoderDetector>();
    case DetectorKind::KitNet: return std::make_unique<KitNetDetector>();
    case DetectorKind::Som: return std::make_unique<SomDetector>();
    case DetectorKind::Lof: return std::make_unique<LofDetector>();
    case DetectorKind::Rrcf: return std::make_unique<RrcfDetector>();
  }
  throw Error(ErrorCode::UnsupportedFormat, "unknown detector kind");
}

void save_detector(const Detector& det, const std::string& path) {
  BinWriter w;
  w.u32(kModelMagic);
  w.u32(kModelVersion);
  det.save(w);
  write_file_bytes(path, w.bytes());
}

std::unique_ptr<Detector> load_detector(const std::string& path) {
  BinReader r(read_file_bytes(path));
  if (r.u32() != kModelMagic)
    throw Error(ErrorCode::UnsupportedFormat,
                "'" + path + "' is not a model file");
  uint32_t version = r.u32();
  if (version != kModelVersion)
    throw Error(ErrorCode::UnsupportedFormat,
                "model version " + std::to_string(version) + " unsupported");
  auto det = make_detector(DetectorKind(r.u8()));
  det->load(r);
  return det;
}

}  // namespace pcapmorph
