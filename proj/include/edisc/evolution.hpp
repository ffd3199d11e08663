#pragma once

// Memetic evolutionary search over equations: random construction,
// term-exchanging crossover, token/term mutation, sparse-regression fitness
// and (quality, complexity) Pareto selection with per-complexity elitism.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "edisc/error.hpp"
#include "edisc/regression.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

struct Objectives {
  double quality = 0.0;  // residual norm, lower is better
  int complexity = 0;    // retained term count, lower is better
  bool operator==(const Objectives&) const = default;
};

/// a dominates b: no worse in both objectives and better in at least one.
inline bool dominates(const Objectives& a, const Objectives& b) {
  return a.quality <= b.quality && a.complexity <= b.complexity &&
         (a.quality < b.quality || a.complexity < b.complexity);
}

struct Individual {
  Equation equation;
  std::optional<FitResult> fit;
  std::optional<Objectives> objectives;

  bool evaluated() const { return objectives.has_value(); }
  bool valid() const { return objectives && std::isfinite(objectives->quality); }
};

struct ParetoFront {
  std::vector<std::vector<Individual>> levels;  // levels[0] is non-dominated
};

struct EvoConfig {
  int population = 64;
  int generations = 100;
  int min_terms = 2;
  int max_terms = 6;
  double crossover_rate = 0.8;
  double mutation_rate = 0.3;
  double p_replace = 0.5, p_add = 0.25, p_remove = 0.25;
  int elites_per_complexity = 4;
  // Fitted equations whose derivative partial comes closer to zero than this
  // (relative, see resolvability_margin) are rejected. Negative disables.
  double resolve_margin = 0.1;
  TokenConfig tokens;
  FitOptions fit;
  std::string target_variable;  // empty: any time derivative may be target
};

/// Fast non-dominated sorting. Returns index sets per level; equal objective
/// vectors share a level.
inline std::vector<std::vector<std::size_t>> pareto_levels(const std::vector<Objectives>& obj) {
  const std::size_t n = obj.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> count(n, 0);
  std::vector<std::vector<std::size_t>> levels;
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(obj[p], obj[q])) dominated[p].push_back(q);
      else if (dominates(obj[q], obj[p])) ++count[p];
    }
    if (count[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    levels.push_back(current);
    std::vector<std::size_t> next;
    for (auto p : current)
      for (auto q : dominated[p])
        if (--count[q] == 0) next.push_back(q);
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return levels;
}

inline ParetoFront pareto_sort(const std::vector<Individual>& population) {
  std::vector<Objectives> obj;
  for (const auto& ind : population) {
    if (!ind.evaluated()) throw ContractError("pareto_sort given an unevaluated individual");
    obj.push_back(*ind.objectives);
  }
  ParetoFront front;
  for (const auto& level : pareto_levels(obj)) {
    std::vector<Individual> l;
    for (auto i : level) l.push_back(population[i]);
    front.levels.push_back(std::move(l));
  }
  return front;
}

/// NSGA-II crowding distance for one level (indices into obj).
inline std::vector<double> crowding_distance(const std::vector<Objectives>& obj,
                                             const std::vector<std::size_t>& level) {
  const std::size_t m = level.size();
  std::vector<double> dist(m, 0.0);
  if (m <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  auto accumulate = [&](auto value) {
    std::vector<std::size_t> ord(m);
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](auto a, auto b) { return value(level[a]) < value(level[b]); });
    const double lo = value(level[ord.front()]), hi = value(level[ord.back()]);
    dist[ord.front()] = dist[ord.back()] = std::numeric_limits<double>::infinity();
    if (!(hi > lo) || !std::isfinite(hi - lo)) return;
    for (std::size_t k = 1; k + 1 < m; ++k)
      dist[ord[k]] += (value(level[ord[k + 1]]) - value(level[ord[k - 1]])) / (hi - lo);
  };
  accumulate([&](std::size_t i) { return obj[i].quality; });
  accumulate([&](std::size_t i) { return static_cast<double>(obj[i].complexity); });
  return dist;
}

namespace detail {

inline std::string support_key(const Equation& eq) {
  std::string s;
  for (const auto& k : eq.support()) s += k + ";";
  return s;
}

inline bool eligible_target(const Term& t, const std::string& var) {
  return var.empty() ? t.has_time_derivative() : t.has_time_derivative_of(var);
}

inline bool within_bounds(const Equation& eq, const EvoConfig& cfg) {
  const auto c = static_cast<int>(eq.complexity());
  return c >= cfg.min_terms && c <= cfg.max_terms;
}

template <class Rng>
double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

/// Random equation with a uniformly drawn term count in [min_terms,
/// max_terms]; its first term carries a time derivative of the target
/// variable and serves as the initial target.
template <class Rng>
Equation random_equation(const EvoConfig& cfg, const DataSet& data, Rng& rng) {
  if (cfg.min_terms < 2 || cfg.min_terms > cfg.max_terms)
    throw ConfigError("need 2 <= min_terms <= max_terms");
  for (const auto& v : cfg.tokens.variables)
    if (!data.has_variable(v)) throw ConfigError("token variable '" + v + "' not in data");
  const auto universe = term_universe(cfg.tokens);
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < universe.size(); ++i)
    if (detail::eligible_target(universe[i], cfg.target_variable)) targets.push_back(i);
  std::uniform_int_distribution<int> count(cfg.min_terms, cfg.max_terms);
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (targets.empty()) break;
    const auto k = static_cast<std::size_t>(count(rng));
    if (k > universe.size()) continue;
    std::vector<std::size_t> chosen{targets[detail::uniform_index(rng, targets.size())]};
    std::set<std::size_t> used(chosen.begin(), chosen.end());
    while (chosen.size() < k) {
      auto i = detail::uniform_index(rng, universe.size());
      if (used.insert(i).second) chosen.push_back(i);
    }
    std::vector<Term> terms;
    for (auto i : chosen) terms.push_back(universe[i]);
    try {
      return Equation(std::move(terms), 0);
    } catch (const ValidationError&) {
    }
  }
  throw InfeasibleError("could not build a valid random equation in 100 attempts");
}

/// Exchanges a random subset of the terms each parent does not share with the
/// other. Shared terms stay put, so identical parents yield clones. A child
/// that would break the term-count bounds or the equation invariants is
/// replaced by a clone of its parent. Fits are cleared.
template <class Rng>
std::pair<Individual, Individual> crossover(const Individual& a, const Individual& b,
                                            const EvoConfig& cfg, Rng& rng) {
  auto unique_terms = [](const Equation& x, const Equation& y) {
    std::vector<std::size_t> u;
    for (std::size_t i = 0; i < x.terms().size(); ++i)
      if (i != x.target_index() && !y.find(canonical_key(x.terms()[i]))) u.push_back(i);
    return u;
  };
  const auto ua = unique_terms(a.equation, b.equation);
  const auto ub = unique_terms(b.equation, a.equation);
  std::vector<std::size_t> sa, sb;
  for (auto i : ua)
    if (detail::uniform01(rng) < 0.5) sa.push_back(i);
  for (auto i : ub)
    if (detail::uniform01(rng) < 0.5) sb.push_back(i);

  auto build = [&](const Equation& self, const std::vector<std::size_t>& give,
                   const Equation& other, const std::vector<std::size_t>& take) {
    std::vector<Term> terms;
    std::size_t target = 0;
    for (std::size_t i = 0; i < self.terms().size(); ++i) {
      if (std::find(give.begin(), give.end(), i) != give.end()) continue;
      if (i == self.target_index()) target = terms.size();
      terms.push_back(self.terms()[i]);
    }
    for (auto j : take) {
      const auto& t = other.terms()[j];
      bool dup = std::any_of(terms.begin(), terms.end(), [&](const Term& x) {
        return canonical_key(x) == canonical_key(t);
      });
      if (!dup) terms.push_back(t);
    }
    Individual child;
    try {
      child.equation = Equation(std::move(terms), target);
      if (!detail::within_bounds(child.equation, cfg)) child.equation = self;
    } catch (const ValidationError&) {
      child.equation = self;
    }
    return child;
  };
  return {build(a.equation, sa, b.equation, sb), build(b.equation, sb, a.equation, sa)};
}

namespace detail {

template <class Rng>
std::optional<Equation> replace_token(const Equation& eq, const EvoConfig& cfg, Rng& rng) {
  const auto pool = token_pool(cfg.tokens);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto ti = uniform_index(rng, eq.terms().size());
    const auto& term = eq.terms()[ti];
    auto factors = term.factors();
    const auto fi = uniform_index(rng, factors.size());
    factors[fi] = pool[uniform_index(rng, pool.size())];
    Term nt(std::move(factors), term.coefficient());
    if (!nt.within(cfg.tokens.limits)) continue;
    if (canonical_key(nt) == canonical_key(term)) continue;
    if (ti == eq.target_index() && !eligible_target(nt, cfg.target_variable)) continue;
    if (eq.find(canonical_key(nt))) continue;
    auto terms = eq.terms();
    terms[ti] = ti == eq.target_index() ? nt.with_coefficient(1.0) : nt;
    try {
      return Equation(std::move(terms), eq.target_index());
    } catch (const ValidationError&) {
    }
  }
  return std::nullopt;
}

template <class Rng>
std::optional<Equation> add_term(const Equation& eq, const EvoConfig& cfg, Rng& rng) {
  const auto universe = term_universe(cfg.tokens);
  std::vector<std::size_t> fresh;
  for (std::size_t i = 0; i < universe.size(); ++i)
    if (!eq.find(canonical_key(universe[i]))) fresh.push_back(i);
  if (fresh.empty()) return std::nullopt;
  auto terms = eq.terms();
  terms.push_back(universe[fresh[uniform_index(rng, fresh.size())]]);
  return Equation(std::move(terms), eq.target_index());
}

template <class Rng>
std::optional<Equation> remove_term(const Equation& eq, Rng& rng) {
  std::vector<std::size_t> removable;
  for (std::size_t i = 0; i < eq.terms().size(); ++i)
    if (i != eq.target_index()) removable.push_back(i);
  if (removable.empty()) return std::nullopt;
  const auto drop = removable[uniform_index(rng, removable.size())];
  std::vector<Term> terms;
  std::size_t target = 0;
  for (std::size_t i = 0; i < eq.terms().size(); ++i) {
    if (i == drop) continue;
    if (i == eq.target_index()) target = terms.size();
    terms.push_back(eq.terms()[i]);
  }
  try {
    return Equation(std::move(terms), target);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Applies exactly one structural edit: replace a token in a random term, add
/// a random term, or remove a random non-target term. Operators that would
/// leave [min_terms, max_terms] are excluded and the remaining probabilities
/// renormalized. Fit is cleared.
template <class Rng>
Individual mutate(const Individual& ind, const EvoConfig& cfg, Rng& rng) {
  const auto size = static_cast<int>(ind.equation.complexity());
  std::vector<std::pair<int, double>> ops{{0, cfg.p_replace}};
  if (size < cfg.max_terms) ops.push_back({1, cfg.p_add});
  if (size > cfg.min_terms) ops.push_back({2, cfg.p_remove});
  Individual out;
  out.equation = ind.equation;
  while (!ops.empty()) {
    double total = 0.0;
    for (const auto& o : ops) total += o.second;
    double r = detail::uniform01(rng) * total;
    std::size_t pick = 0;
    for (; pick + 1 < ops.size(); ++pick) {
      if (r < ops[pick].second) break;
      r -= ops[pick].second;
    }
    std::optional<Equation> res;
    switch (ops[pick].first) {
      case 0: res = detail::replace_token(ind.equation, cfg, rng); break;
      case 1: res = detail::add_term(ind.equation, cfg, rng); break;
      case 2: res = detail::remove_term(ind.equation, rng); break;
    }
    if (res) {
      out.equation = std::move(*res);
      return out;
    }
    ops.erase(ops.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

/// Per-generation record of the best valid quality at each complexity.
struct EvolveTrace {
  std::vector<std::map<int, double>> best_by_complexity;
  std::size_t fits = 0;
};

namespace detail {

class Evaluator {
 public:
  Evaluator(const DataSet& data, const EvoConfig& cfg) : cache_(data), cfg_(cfg) {
    fit_opt_ = cfg.fit;
    if (!cfg.target_variable.empty()) fit_opt_.target_variable = cfg.target_variable;
  }

  template <class Rng>
  void operator()(Individual& ind, Rng& rng) {
    if (ind.evaluated()) return;
    const auto cand = target_candidates(ind.equation, fit_opt_.target_variable);
    if (cand.empty() || ind.equation.complexity() < 2) {
      ind.objectives = Objectives{std::numeric_limits<double>::infinity(),
                                  static_cast<int>(ind.equation.complexity())};
      return;
    }
    const auto target = cand[uniform_index(rng, cand.size())];
    const auto key = support_key(ind.equation) + "|" + canonical_key(ind.equation.terms()[target]);
    auto it = memo_.find(key);
    if (it == memo_.end()) it = memo_.emplace(key, fit(ind.equation, target)).first;
    if (it->second) {
      ind.fit = *it->second;
      ind.equation = ind.fit->equation;
      ind.objectives = Objectives{ind.fit->residual_norm,
                                  static_cast<int>(ind.equation.complexity())};
    } else {
      ind.fit.reset();
      ind.objectives = Objectives{std::numeric_limits<double>::infinity(),
                                  static_cast<int>(ind.equation.complexity())};
    }
  }

  std::size_t fits() const { return memo_.size(); }

 private:
  std::optional<FitResult> fit(const Equation& eq, std::size_t target) {
    try {
      auto r = fit_with_target(eq, target, cache_, fit_opt_);
      if (static_cast<int>(r.equation.complexity()) < cfg_.min_terms) return std::nullopt;
      if (cfg_.resolve_margin >= 0.0) {
        const auto var = r.equation.variable();
        if (resolvability_margin(r.equation, cache_.data(), var) < cfg_.resolve_margin)
          return std::nullopt;
      }
      return r;
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  TermCache cache_;
  const EvoConfig& cfg_;
  FitOptions fit_opt_;
  std::map<std::string, std::optional<FitResult>> memo_;
};

struct Ranking {
  std::vector<std::size_t> rank;
  std::vector<double> crowd;
};

inline Ranking rank_population(const std::vector<Individual>& pop) {
  std::vector<Objectives> obj;
  for (const auto& i : pop) obj.push_back(*i.objectives);
  Ranking r{std::vector<std::size_t>(pop.size()), std::vector<double>(pop.size())};
  auto levels = pareto_levels(obj);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    auto cd = crowding_distance(obj, levels[l]);
    for (std::size_t k = 0; k < levels[l].size(); ++k) {
      r.rank[levels[l][k]] = l;
      r.crowd[levels[l][k]] = cd[k];
    }
  }
  return r;
}

// Parents first in `merged`; keeps per-complexity elites, then fills by rank
// and crowding, preferring distinct supports.
inline std::vector<Individual> select_survivors(const std::vector<Individual>& merged,
                                                const EvoConfig& cfg) {
  const auto target = static_cast<std::size_t>(cfg.population);
  if (merged.size() <= target) return merged;
  std::vector<std::size_t> unique, dup;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (seen.insert(support_key(merged[i].equation)).second) unique.push_back(i);
    else dup.push_back(i);
  }
  std::vector<Individual> upop;
  for (auto i : unique) upop.push_back(merged[i]);
  const auto rk = rank_population(upop);

  std::vector<bool> taken(upop.size(), false);
  std::vector<Individual> out;
  const int span = std::max(1, cfg.max_terms - cfg.min_terms + 1);
  const auto elites = static_cast<std::size_t>(
      std::max(1, std::min(cfg.elites_per_complexity, cfg.population / span)));
  std::map<int, std::vector<std::size_t>> by_complexity;
  for (std::size_t i = 0; i < upop.size(); ++i)
    if (upop[i].valid()) by_complexity[upop[i].objectives->complexity].push_back(i);
  for (auto& [c, idx] : by_complexity) {
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return upop[a].objectives->quality < upop[b].objectives->quality;
    });
    for (std::size_t k = 0; k < idx.size() && k < elites && out.size() < target; ++k) {
      taken[idx[k]] = true;
      out.push_back(upop[idx[k]]);
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < upop.size(); ++i)
    if (!taken[i]) rest.push_back(i);
  std::stable_sort(rest.begin(), rest.end(), [&](auto a, auto b) {
    if (rk.rank[a] != rk.rank[b]) return rk.rank[a] < rk.rank[b];
    return rk.crowd[a] > rk.crowd[b];
  });
  for (auto i : rest) {
    if (out.size() >= target) break;
    out.push_back(upop[i]);
  }
  for (auto i : dup) {
    if (out.size() >= target) break;
    out.push_back(merged[i]);
  }
  return out;
}

template <class Rng>
const Individual& tournament(const std::vector<Individual>& pop, const Ranking& rk, Rng& rng) {
  const auto a = uniform_index(rng, pop.size()), b = uniform_index(rng, pop.size());
  if (rk.rank[a] != rk.rank[b]) return rk.rank[a] < rk.rank[b] ? pop[a] : pop[b];
  if (rk.crowd[a] != rk.crowd[b]) return rk.crowd[a] > rk.crowd[b] ? pop[a] : pop[b];
  return pop[std::min(a, b)];
}

inline std::map<int, double> best_by_complexity(const std::vector<Individual>& pop) {
  std::map<int, double> best;
  for (const auto& i : pop) {
    if (!i.valid()) continue;
    auto [it, fresh] = best.emplace(i.objectives->complexity, i.objectives->quality);
    if (!fresh) it->second = std::min(it->second, i.objectives->quality);
  }
  return best;
}

}  // namespace detail

/// Runs the generational loop from `initial` (random when empty) and returns
/// the Pareto levels of the final population with duplicate supports removed.
template <class Rng>
ParetoFront evolve(const DataSet& data, const EvoConfig& cfg, Rng& rng,
                   EvolveTrace* trace = nullptr, std::vector<Individual> initial = {}) {
  if (cfg.population < 1) throw ConfigError("population must be >= 1");
  if (cfg.generations < 0) throw ConfigError("generations must be >= 0");
  detail::Evaluator evaluate(data, cfg);
  std::vector<Individual> pop = std::move(initial);
  while (pop.size() < static_cast<std::size_t>(cfg.population)) {
    Individual ind;
    ind.equation = random_equation(cfg, data, rng);
    pop.push_back(std::move(ind));
  }
  for (auto& ind : pop) evaluate(ind, rng);
  if (trace) trace->best_by_complexity.push_back(detail::best_by_complexity(pop));

  for (int g = 0; g < cfg.generations; ++g) {
    const auto rk = detail::rank_population(pop);
    std::vector<Individual> offspring;
    while (offspring.size() < pop.size()) {
      const auto& p1 = detail::tournament(pop, rk, rng);
      const auto& p2 = detail::tournament(pop, rk, rng);
      std::pair<Individual, Individual> kids;
      if (detail::uniform01(rng) < cfg.crossover_rate) {
        kids = crossover(p1, p2, cfg, rng);
      } else {
        kids.first.equation = p1.equation;
        kids.second.equation = p2.equation;
      }
      for (auto* kid : {&kids.first, &kids.second}) {
        if (detail::uniform01(rng) < cfg.mutation_rate) *kid = mutate(*kid, cfg, rng);
        evaluate(*kid, rng);
        if (offspring.size() < pop.size()) offspring.push_back(std::move(*kid));
      }
    }
    std::vector<Individual> merged = pop;
    merged.insert(merged.end(), offspring.begin(), offspring.end());
    pop = detail::select_survivors(merged, cfg);
    if (trace) trace->best_by_complexity.push_back(detail::best_by_complexity(pop));
  }
  if (trace) trace->fits = evaluate.fits();

  std::vector<Individual> unique;
  std::set<std::string> seen;
  for (const auto& ind : pop)
    if (seen.insert(detail::support_key(ind.equation)).second) unique.push_back(ind);
  return pareto_sort(unique);
}

/// Level-0 members with finite quality, ordered by complexity.
inline std::vector<Individual> front_members(const ParetoFront& front) {
  std::vector<Individual> out;
  if (front.levels.empty()) return out;
  for (const auto& ind : front.levels[0])
    if (ind.valid()) out.push_back(ind);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.objectives->complexity < b.objectives->complexity;
  });
  return out;
}

}  // namespace edisc
