#pragma once

// Self-describing binary model container: magic, version, detector kind,
// then the detector payload (shapes followed by raw little-endian doubles).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pcapmorph/detector.hpp"
#include "pcapmorph/error.hpp"

namespace pcapmorph {

class BinWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f64(double v);
  void f64_span(std::span<const double> v);
  void str(const std::string& s);
  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class BinReader {
 public:
  explicit BinReader(std::vector<uint8_t> bytes) : buf_(std::move(bytes)) {}
  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  double f64();
  std::vector<double> f64_vec(size_t n);
  std::string str();
  size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n);
  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

void save_detector(const Detector& det, const std::string& path);
std::unique_ptr<Detector> load_detector(const std::string& path);

}  // namespace pcapmorph
