#pragma once

// Hybrid PSO/DE minimizer over a bounded box. Each iteration flips one coin
// for the whole population: PSO moves every particle along inertia +
// cognitive + social velocities; DE builds a mutant x_a + alpha*(x_b - x_c)
// per particle, crosses it over and keeps it only if it improves. Every
// evaluated position stays inside the box; randoms are drawn in a fixed
// order so runs are reproducible for a seed.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pcapmorph/error.hpp"

namespace pcapmorph {

struct SearchConfig {
  int n_particles = 20;
  int iterations = 30;
  double mutation_factor = 0.8;  // DE alpha
  double cross_p = 0.7;          // DE crossover probability
  double mutate_prob = 0.5;      // probability of a PSO step (1.0 = pure PSO)
  double inertia = 0.729;
  double cognitive = 1.49445;
  double social = 1.49445;
  uint64_t seed = 0;
  bool record_trace = false;

  void validate() const;
};

struct SearchBox {
  std::vector<double> lo, hi;
  size_t dims() const { return lo.size(); }
  double diagonal() const;
};

struct TraceRow {
  int iteration = 0;
  int particle = 0;
  double pos[3] = {0, 0, 0};  // first three dimensions
  double cost = 0.0;
  bool is_global_best = false;
};

struct SearchResult {
  std::vector<double> best_position;
  double best_cost = 0.0;
  size_t evaluations = 0;
  std::vector<TraceRow> trace;
};

using CostFn = std::function<double(std::span<const double>)>;

// DE mutant: a + alpha * (b - c), dimension-wise.
std::vector<double> de_mutant(std::span<const double> a,
                              std::span<const double> b,
                              std::span<const double> c, double alpha);

SearchResult optimize(const CostFn& cost, const SearchBox& box,
                      const SearchConfig& cfg);

// CSV: iteration,particle,t_m,n_c,s_c,cost,is_global_best
void write_trace_csv(const SearchResult& result, const std::string& path);

// Benchmark landscapes over mutation-space-shaped boxes: a convex bowl, a
// smooth multimodal surface, and piecewise-constant variants that mimic the
// plateaus of rounded packet counts / uniform payload sizes.
struct Benchmark {
  std::string name;
  SearchBox box;
  CostFn cost;
};

std::vector<Benchmark> optimizer_benchmarks();

}  // namespace pcapmorph
