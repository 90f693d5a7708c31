#pragma once

// The attack driver: stream packets through the live extractor, pass benign
// scored packets through unchanged, and for each packet the surrogate flags
// run the hybrid search over the mutation space, materialize the best
// mutation and commit the adversarial set in place. Optionally recurse on
// the output until nothing scores above the surrogate threshold.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcapmorph/detector.hpp"
#include "pcapmorph/features.hpp"
#include "pcapmorph/mutation.hpp"
#include "pcapmorph/pcap.hpp"
#include "pcapmorph/search.hpp"

namespace pcapmorph {

struct AttackConfig {
  MutationBounds bounds;
  PayloadStrategy strategy = PayloadStrategy::Uniform;
  SearchConfig search;
  int recursion_limit = 3;
  uint64_t seed = 0;
  std::string trace_dir;  // per-packet search traces when non-empty
  int max_traces = 50;

  void validate() const;
};

struct PacketLog {
  uint64_t index = 0;          // position in this pass's input
  double original_time = 0.0;  // seconds, as captured
  double emitted_time = 0.0;   // seconds, as written
  bool flagged = false;
  bool modified = false;  // emitted form differs from the input packet
  bool residual = false;  // still above threshold after mutation
  double pre_score = 0.0;
  double post_score = 0.0;  // max score over the committed set
  uint32_t injected = 0;
  std::optional<MutationVector> mutation;
};

struct PassTotals {
  uint64_t packets = 0;
  uint64_t pass_through = 0;
  uint64_t flagged = 0;
  uint64_t modified = 0;
  uint64_t injected = 0;
  uint64_t residual = 0;
  uint64_t emitted = 0;
};

struct PassReport {
  int pass_number = 1;
  std::vector<PacketLog> log;
  PassTotals totals;
};

struct AttackReport {
  double surrogate_threshold = 0.0;
  std::vector<PassReport> passes;
  const PassTotals& final_totals() const { return passes.back().totals; }
};

struct AttackOutcome {
  AttackReport report;
  std::vector<PacketRecord> packets;
  // For each output packet, the index of the input packet it came from
  // (its anchor, for injected packets) in the last pass.
  std::vector<uint64_t> origin;
};

// One pass. The extractor must be warm-started on the traffic the surrogate
// was calibrated against; it advances to the end of the output stream.
AttackOutcome run_attack(const std::vector<PacketRecord>& input,
                         const Detector& surrogate, FeatureExtractor& extractor,
                         const AttackConfig& cfg, int pass_number = 1);

// Re-runs the attack on its own output (rewarming a copy of `warm` each
// pass) until no packet scores above the threshold or the recursion limit
// is reached. The report concatenates all passes.
AttackOutcome recurse_attack(const std::vector<PacketRecord>& malicious,
                             const Detector& surrogate,
                             const FeatureExtractor& warm,
                             const AttackConfig& cfg);

// File-level wrapper: reads the malicious capture, runs the recursive
// attack, writes the adversarial capture.
AttackReport run_attack_files(const std::string& malicious_path,
                              const Detector& surrogate,
                              const FeatureExtractor& warm,
                              const AttackConfig& cfg,
                              const std::string& output_path);

std::string attack_report_to_json(const AttackReport& report);
void write_attack_report(const AttackReport& report, const std::string& path);
// Human-readable per-pass summary table.
std::string attack_report_summary(const AttackReport& report);

}  // namespace pcapmorph
