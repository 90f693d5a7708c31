#include "pcapmorph/search.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pcapmorph/util.hpp"

namespace pcapmorph {

void SearchConfig::validate() const {
  if (n_particles < 1 || iterations < 1)
    throw Error(ErrorCode::Config, "population and iteration counts must be positive");
  for (double p : {cross_p, mutate_prob})
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::Config, "probabilities must lie in [0,1]");
  if (mutate_prob < 1.0 && n_particles < 4)
    throw Error(ErrorCode::Config,
                "differential evolution needs at least 4 particles "
                "(3 distinct partners per particle)");
}

double SearchBox::diagonal() const {
  double acc = 0.0;
  for (size_t d = 0; d < lo.size(); ++d)
    acc += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  return std::sqrt(acc);
}

namespace {

struct Particle {
  std::vector<double> x, v;
  std::vector<double> pbest;
  double cost = 0.0;
  double pbest_cost = 0.0;
};

}  // namespace

std::vector<double> de_mutant(std::span<const double> a,
                              std::span<const double> b,
                              std::span<const double> c, double alpha) {
  std::vector<double> m(a.size());
  for (size_t d = 0; d < a.size(); ++d) m[d] = a[d] + alpha * (b[d] - c[d]);
  return m;
}

SearchResult optimize(const CostFn& cost, const SearchBox& box,
                      const SearchConfig& cfg) {
  cfg.validate();
  const size_t dims = box.dims();
  if (dims == 0 || box.hi.size() != dims)
    throw Error(ErrorCode::Config, "search box is empty or inconsistent");
  for (size_t d = 0; d < dims; ++d)
    if (box.hi[d] < box.lo[d])
      throw Error(ErrorCode::Config, "search box has hi < lo");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const size_t n = size_t(cfg.n_particles);
  std::vector<Particle> swarm(n);
  SearchResult result;
  result.best_cost = std::numeric_limits<double>::infinity();

  auto clamp_dim = [&](double x, size_t d) {
    return std::clamp(x, box.lo[d], box.hi[d]);
  };
  auto evaluate = [&](std::span<const double> x) {
    ++result.evaluations;
    return cost(x);
  };
  auto note_best = [&](const std::vector<double>& x, double c) {
    if (c < result.best_cost) {
      result.best_cost = c;
      result.best_position = x;
    }
  };

  for (Particle& p : swarm) {
    p.x.resize(dims);
    p.v.resize(dims);
    for (size_t d = 0; d < dims; ++d) {
      double range = box.hi[d] - box.lo[d];
      p.x[d] = box.lo[d] + unit(rng) * range;
      p.v[d] = (unit(rng) - 0.5) * range;
    }
    p.pbest = p.x;
    p.pbest_cost = std::numeric_limits<double>::infinity();
  }

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    for (Particle& p : swarm) {
      p.cost = evaluate(p.x);
      if (p.cost < p.pbest_cost) {
        p.pbest_cost = p.cost;
        p.pbest = p.x;
      }
      note_best(p.x, p.cost);
    }
    if (cfg.record_trace) {
      for (size_t i = 0; i < n; ++i) {
        TraceRow row;
        row.iteration = iter;
        row.particle = int(i);
        for (size_t d = 0; d < std::min<size_t>(3, dims); ++d)
          row.pos[d] = swarm[i].x[d];
        row.cost = swarm[i].cost;
        row.is_global_best = swarm[i].cost == result.best_cost;
        result.trace.push_back(row);
      }
    }

    bool pso_step = unit(rng) < cfg.mutate_prob;
    if (pso_step) {
      // global best is the neighbourhood best (star topology)
      for (Particle& p : swarm) {
        double r1 = unit(rng), r2 = unit(rng);
        for (size_t d = 0; d < dims; ++d) {
          p.v[d] = cfg.inertia * p.v[d] +
                   cfg.cognitive * r1 * (p.pbest[d] - p.x[d]) +
                   cfg.social * r2 * (result.best_position[d] - p.x[d]);
          p.x[d] += p.v[d];
          if (p.x[d] < box.lo[d] || p.x[d] > box.hi[d]) {
            p.x[d] = clamp_dim(p.x[d], d);
            p.v[d] = 0.0;  // velocity dies on the face it hit
          }
        }
      }
    } else {
      for (size_t i = 0; i < n; ++i) {
        // three distinct partners, none equal to i
        size_t a, b, c;
        do a = rng() % n; while (a == i);
        do b = rng() % n; while (b == i || b == a);
        do c = rng() % n; while (c == i || c == b || c == a);
        std::vector<double> mutant =
            de_mutant(swarm[a].x, swarm[b].x, swarm[c].x, cfg.mutation_factor);
        std::vector<double> cand(dims);
        size_t forced = rng() % dims;  // at least one mutant dimension
        for (size_t d = 0; d < dims; ++d) {
          bool take = unit(rng) < cfg.cross_p || d == forced;
          cand[d] = clamp_dim(take ? mutant[d] : swarm[i].x[d], d);
        }
        double cand_cost = evaluate(cand);
        note_best(cand, cand_cost);
        Particle& p = swarm[i];
        if (cand_cost < p.cost) {  // greedy replacement
          p.x = std::move(cand);
          p.cost = cand_cost;
          if (cand_cost < p.pbest_cost) {
            p.pbest_cost = cand_cost;
            p.pbest = p.x;
          }
        }
      }
    }
  }
  return result;
}

std::vector<Benchmark> optimizer_benchmarks() {
  SearchBox plane{{0.0, 0.0}, {1.0, 5.0}};
  std::vector<Benchmark> out;

  out.push_back({"bowl", plane, [](std::span<const double> x) {
                   double d0 = x[0] - 0.6, d1 = x[1] - 2.2;
                   return d0 * d0 + d1 * d1;
                 }});

  out.push_back({"rastrigin", plane, [](std::span<const double> x) {
                   double z0 = (x[0] - 0.55) * 5.12;
                   double z1 = (x[1] / 5.0 - 0.45) * 5.12;
                   double f = 20.0;
                   f += z0 * z0 - 10.0 * std::cos(2 * M_PI * z0);
                   f += z1 * z1 - 10.0 * std::cos(2 * M_PI * z1);
                   return f;
                 }});

  // Single plateau basin: rounded count, coarse payload cells.
  out.push_back({"stepped-bowl", SearchBox{{0.0, 0.0, 0.0}, {1.0, 5.0, 1460.0}},
                 [](std::span<const double> x) {
                   double q0 = x[0] - 0.37;
                   double q1 = std::round(x[1]) - 2.0;
                   double q2 = (std::round(x[2] / 64.0) * 64.0 - 832.0) / 292.0;
                   return q0 * q0 * 25.0 + q1 * q1 + q2 * q2;
                 }});

  // Plateaued multimodal surface: constant inside 0.25-cells with many
  // local basins, the landscape shape that stalls pure PSO.
  out.push_back({"stepped-rastrigin", plane, [](std::span<const double> x) {
                   double z0 = (x[0] - 0.55) * 5.12;
                   double z1 = (x[1] / 5.0 - 0.45) * 5.12;
                   z0 = std::round(z0 / 0.25) * 0.25;
                   z1 = std::round(z1 / 0.25) * 0.25;
                   double f = 20.0;
                   f += z0 * z0 - 10.0 * std::cos(2 * M_PI * z0);
                   f += z1 * z1 - 10.0 * std::cos(2 * M_PI * z1);
                   return f;
                 }});
  return out;
}

void write_trace_csv(const SearchResult& result, const std::string& path) {
  std::ostringstream out;
  out << "iteration,particle,t_m,n_c,s_c,cost,is_global_best\n";
  for (const TraceRow& row : result.trace) {
    out << row.iteration << "," << row.particle << ","
        << format_double(row.pos[0]) << "," << format_double(row.pos[1]) << ","
        << format_double(row.pos[2]) << "," << format_double(row.cost) << ","
        << (row.is_global_best ? 1 : 0) << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace pcapmorph
