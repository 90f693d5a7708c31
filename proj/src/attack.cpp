#include "pcapmorph/attack.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "pcapmorph/util.hpp"

namespace pcapmorph {

void AttackConfig::validate() const {
  bounds.validate();
  search.validate();
  if (recursion_limit < 1)
    throw Error(ErrorCode::Config, "recursion limit must be at least 1");
}

AttackOutcome run_attack(const std::vector<PacketRecord>& input,
                         const Detector& surrogate, FeatureExtractor& extractor,
                         const AttackConfig& cfg, int pass_number) {
  cfg.validate();
  if (!surrogate.fitted())
    throw Error(ErrorCode::State, "surrogate must be fitted before attacking");
  if (surrogate.normalizer().dimension() != extractor.dimension())
    throw Error(ErrorCode::State,
                "surrogate dimension " +
                    std::to_string(surrogate.normalizer().dimension()) +
                    " does not match extractor dimension " +
                    std::to_string(extractor.dimension()));
  const double threshold = surrogate.threshold();

  AttackOutcome out;
  out.report.surrogate_threshold = threshold;
  PassReport pass;
  pass.pass_number = pass_number;
  pass.totals.packets = input.size();
  int traces_written = 0;

  // Arrival time of the previously emitted packet; the first packet of a
  // cold stream gets a zero-width injection window.
  bool have_prev = !extractor.empty();
  double t_prev = have_prev ? extractor.last_timestamp() : 0.0;

  for (size_t i = 0; i < input.size(); ++i) {
    const PacketRecord& p = input[i];
    if (!have_prev) {
      t_prev = p.seconds();
      have_prev = true;
    }

    // Evaluate at emission time: earlier packets may already have been
    // delayed past this packet's capture time.
    PacketRecord p_eval = p;
    p_eval.time_us = std::max(p.time_us, int64_t(std::llround(t_prev * 1e6)));
    p_eval.index = i;

    PacketLog log;
    log.index = i;
    log.original_time = p.seconds();

    auto keys = FeatureExtractor::stream_keys(p_eval);
    Snapshot snap = extractor.snapshot(keys);
    FeatureVector x = extractor.extract(p_eval);
    log.pre_score = surrogate.score(x.values);

    if (log.pre_score <= threshold) {
      extractor.release(snap);
      log.emitted_time = p_eval.seconds();
      log.post_score = log.pre_score;
      log.modified = p_eval.time_us != p.time_us;
      out.packets.push_back(std::move(p_eval));
      out.origin.push_back(i);
      pass.totals.pass_through += 1;
      pass.totals.emitted += 1;
      t_prev = out.packets.back().seconds();
      pass.log.push_back(log);
      continue;
    }

    // Flagged: roll the evaluation back and search the mutation space.
    extractor.restore(snap);
    log.flagged = true;
    pass.totals.flagged += 1;

    SearchBox box;
    box.lo = {p_eval.seconds(), 0.0};
    box.hi = {p.seconds() + cfg.bounds.max_time_window,
              double(cfg.bounds.max_craft_pkt)};
    if (cfg.strategy == PayloadStrategy::Uniform) {
      box.lo.push_back(0.0);
      box.hi.push_back(double(payload_capacity(p, cfg.bounds)));
    }

    std::mt19937_64 packet_rng(
        mix_seed(mix_seed(cfg.seed, uint64_t(pass_number)), i));
    auto vec_of = [&](std::span<const double> pos) {
      MutationVector v;
      v.t_m = pos[0];
      v.n_c = pos[1];
      v.s_c = pos.size() > 2 ? pos[2] : 0.0;
      return v;
    };

    SearchConfig scfg = cfg.search;
    scfg.seed = mix_seed(mix_seed(cfg.seed, 0x5ea9c4u + uint64_t(pass_number)), i);
    scfg.record_trace = !cfg.trace_dir.empty() && traces_written < cfg.max_traces;

    SearchResult found = optimize(
        [&](std::span<const double> pos) {
          return mutation_cost(vec_of(pos), p, t_prev, cfg.strategy,
                               cfg.bounds, extractor, snap, surrogate,
                               packet_rng);
        },
        box, scfg);

    if (scfg.record_trace) {
      std::filesystem::create_directories(cfg.trace_dir);
      write_trace_csv(found, cfg.trace_dir + "/pass" +
                                 std::to_string(pass_number) + "_packet" +
                                 std::to_string(i) + "_trace.csv");
      ++traces_written;
    }

    MutationVector best = vec_of(found.best_position);
    log.mutation = best;
    AdversarialPacketSet set = materialize(best, p, t_prev, cfg.strategy,
                                           cfg.bounds, packet_rng);

    // Commit the set through the live extractor; the committed scores are
    // what a cold rescoring of the output will reproduce.
    double post = 0.0;
    for (PacketRecord& pkt : set.packets) {
      pkt.index = i;
      FeatureVector fx = extractor.extract(pkt);
      post = std::max(post, surrogate.score(fx.values));
    }
    extractor.release(snap);

    log.post_score = post;
    log.residual = post > threshold;
    log.injected = uint32_t(set.redundant_count);
    log.modified = set.redundant_count > 0 ||
                   set.packets.back().time_us != p.time_us;
    log.emitted_time = set.packets.back().seconds();

    pass.totals.injected += set.redundant_count;
    pass.totals.emitted += set.packets.size();
    pass.totals.residual += log.residual ? 1 : 0;
    pass.totals.modified += log.modified ? 1 : 0;
    t_prev = set.packets.back().seconds();
    for (PacketRecord& pkt : set.packets) {
      out.packets.push_back(std::move(pkt));
      out.origin.push_back(i);
    }
    pass.log.push_back(log);
  }

  for (size_t i = 0; i < out.packets.size(); ++i) out.packets[i].index = i;
  out.report.passes.push_back(std::move(pass));
  return out;
}

AttackOutcome recurse_attack(const std::vector<PacketRecord>& malicious,
                             const Detector& surrogate,
                             const FeatureExtractor& warm,
                             const AttackConfig& cfg) {
  cfg.validate();
  AttackOutcome all;
  const std::vector<PacketRecord>* current = &malicious;
  std::vector<PacketRecord> buffer;
  for (int pass = 1; pass <= cfg.recursion_limit; ++pass) {
    FeatureExtractor extractor = warm;
    AttackOutcome one = run_attack(*current, surrogate, extractor, cfg, pass);
    all.report.surrogate_threshold = one.report.surrogate_threshold;
    all.report.passes.push_back(std::move(one.report.passes.front()));
    buffer = std::move(one.packets);
    all.origin = std::move(one.origin);
    current = &buffer;
    if (all.report.passes.back().totals.residual == 0) break;
  }
  all.packets = std::move(buffer);
  return all;
}

AttackReport run_attack_files(const std::string& malicious_path,
                              const Detector& surrogate,
                              const FeatureExtractor& warm,
                              const AttackConfig& cfg,
                              const std::string& output_path) {
  std::vector<PacketRecord> malicious = read_pcap(malicious_path);
  AttackOutcome outcome = recurse_attack(malicious, surrogate, warm, cfg);
  write_pcap(outcome.packets, output_path);
  return std::move(outcome.report);
}

namespace {

nlohmann::ordered_json totals_json(const PassTotals& t) {
  return nlohmann::ordered_json{
      {"packets", t.packets},   {"pass_through", t.pass_through},
      {"flagged", t.flagged},   {"modified", t.modified},
      {"injected", t.injected}, {"residual", t.residual},
      {"emitted", t.emitted}};
}

}  // namespace

std::string attack_report_to_json(const AttackReport& report) {
  nlohmann::ordered_json j;
  j["surrogate_threshold"] = report.surrogate_threshold;
  j["passes"] = nlohmann::ordered_json::array();
  for (const PassReport& pass : report.passes) {
    nlohmann::ordered_json pj;
    pj["pass"] = pass.pass_number;
    pj["totals"] = totals_json(pass.totals);
    pj["packets"] = nlohmann::ordered_json::array();
    for (const PacketLog& log : pass.log) {
      nlohmann::ordered_json lj{{"index", log.index},
                                {"time", log.original_time},
                                {"emitted_time", log.emitted_time},
                                {"flagged", log.flagged},
                                {"pre_score", log.pre_score},
                                {"post_score", log.post_score},
                                {"modified", log.modified},
                                {"residual", log.residual},
                                {"injected", log.injected}};
      if (log.mutation) {
        lj["mutation"] = {{"t_m", log.mutation->t_m},
                          {"n_c", log.mutation->n_c},
                          {"s_c", log.mutation->s_c}};
      } else {
        lj["mutation"] = nullptr;
      }
      pj["packets"].push_back(std::move(lj));
    }
    j["passes"].push_back(std::move(pj));
  }
  j["totals"] = totals_json(report.final_totals());
  return j.dump(2) + "\n";
}

void write_attack_report(const AttackReport& report, const std::string& path) {
  write_text_file(path, attack_report_to_json(report));
}

std::string attack_report_summary(const AttackReport& report) {
  std::ostringstream out;
  out << "pass  packets  flagged  modified  injected  residual  emitted\n";
  for (const PassReport& pass : report.passes) {
    char line[160];
    std::snprintf(line, sizeof(line), "%4d  %7llu  %7llu  %8llu  %8llu  %8llu  %7llu\n",
                  pass.pass_number,
                  (unsigned long long)pass.totals.packets,
                  (unsigned long long)pass.totals.flagged,
                  (unsigned long long)pass.totals.modified,
                  (unsigned long long)pass.totals.injected,
                  (unsigned long long)pass.totals.residual,
                  (unsigned long long)pass.totals.emitted);
    out << line;
  }
  return out.str();
}

}  // namespace pcapmorph
