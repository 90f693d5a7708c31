#include "pcapmorph/util.hpp"

#include <fstream>

#include "pcapmorph/error.hpp"

namespace pcapmorph {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Bounds: return "bounds error";
    case ErrorCode::Ordering: return "ordering error";
    case ErrorCode::TimeRegression: return "time regression";
    case ErrorCode::Staleness: return "stale snapshot";
    case ErrorCode::State: return "state error";
    case ErrorCode::Config: return "config error";
    case ErrorCode::UndefinedMetric: return "undefined metric";
    case ErrorCode::DegenerateNormalization: return "degenerate normalization";
    case ErrorCode::InfeasibleMutation: return "infeasible mutation";
  }
  return "error";
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read failed for '" + path + "'");
  return buf;
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::span<const uint8_t>(
                             reinterpret_cast<const uint8_t*>(text.data()),
                             text.size()));
}

}  // namespace pcapmorph
