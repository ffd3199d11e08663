#pragma once

// Aggregation of equations from independent discovery runs into term tables:
// one column per canonical term key, one row per equation, with a coefficient
// matrix and a parallel presence matrix.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "edisc/dataio.hpp"
#include "edisc/error.hpp"
#include "edisc/evolution.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

/// Level-0 members of one evolve run per state variable.
using SystemFront = std::map<std::string, std::vector<Equation>>;

/// Uses the pure first derivative of the equation's variable as target when
/// it is present.
inline Equation normalize_target(const Equation& eq) {
  const auto var = eq.variable();
  for (std::size_t i = 0; i < eq.terms().size(); ++i)
    if (eq.terms()[i].is_pure_first_derivative(var) && eq.terms()[i].coefficient() != 0.0)
      return eq.retargeted(i);
  return eq;
}

/// One evolve per variable, each constrained to target that variable's
/// derivatives and driven by its own generator stream.
inline SystemFront discover_system(const DataSet& data, EvoConfig cfg, std::uint64_t seed,
                                   std::map<std::string, ParetoFront>* fronts = nullptr) {
  SystemFront out;
  const auto vars = cfg.tokens.variables;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    cfg.target_variable = vars[k];
    auto front = evolve(data, cfg, rng);
    auto& eqs = out[vars[k]];
    for (const auto& ind : front_members(front)) eqs.push_back(normalize_target(ind.equation));
    if (fronts) (*fronts)[vars[k]] = std::move(front);
  }
  return out;
}

struct EquationEnsemble {
  std::string variable;
  std::vector<std::vector<Equation>> runs;
  std::size_t skipped = 0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.size();
    return n;
  }
};

struct SystemEnsemble {
  std::vector<std::string> variables;
  std::vector<SystemFront> runs;
  std::vector<std::uint64_t> seeds;  // seed actually used by each stored run
  std::size_t skipped = 0;

  EquationEnsemble for_variable(const std::string& var) const {
    EquationEnsemble e{var, {}, skipped};
    for (const auto& r : runs) {
      auto it = r.find(var);
      e.runs.push_back(it == r.end() ? std::vector<Equation>{} : it->second);
    }
    return e;
  }
};

/// Runs discovery n_runs times with seeds seed+0 .. seed+n_runs-1. A failing
/// run is retried once with seed+n_runs+i and otherwise counted as skipped.
inline SystemEnsemble collect(const DataSet& data, int n_runs, const EvoConfig& cfg,
                              std::uint64_t seed) {
  if (n_runs < 1) throw ConfigError("ensemble needs at least one run");
  SystemEnsemble ens;
  ens.variables = cfg.tokens.variables;
  for (int i = 0; i < n_runs; ++i) {
    for (std::uint64_t s : {seed + static_cast<std::uint64_t>(i),
                            seed + static_cast<std::uint64_t>(n_runs + i)}) {
      try {
        ens.runs.push_back(discover_system(data, cfg, s));
        ens.seeds.push_back(s);
        break;
      } catch (const Error& e) {
        std::cerr << "warning: discovery run with seed " << s << " failed: " << e.what() << "\n";
        if (s != seed + static_cast<std::uint64_t>(i)) ++ens.skipped;
      }
    }
  }
  return ens;
}

struct TermTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> presence;

  std::size_t rows() const { return values.size(); }
  std::size_t cols() const { return columns.size(); }

  std::ptrdiff_t column(std::string_view key) const {
    auto it = std::lower_bound(columns.begin(), columns.end(), key);
    if (it == columns.end() || *it != key) return -1;
    return it - columns.begin();
  }
};

namespace detail {

inline TermTable build_table(const std::vector<std::map<std::string, double>>& rows) {
  TermTable t;
  std::set<std::string> keys;
  for (const auto& r : rows)
    for (const auto& [k, v] : r) keys.insert(k);
  t.columns.assign(keys.begin(), keys.end());
  for (const auto& r : rows) {
    std::vector<double> vals(t.cols(), 0.0);
    std::vector<int> pres(t.cols(), 0);
    for (const auto& [k, v] : r) {
      const auto j = static_cast<std::size_t>(t.column(k));
      vals[j] = v;
      pres[j] = 1;
    }
    t.values.push_back(std::move(vals));
    t.presence.push_back(std::move(pres));
  }
  return t;
}

inline std::map<std::string, double> coefficient_map(const Equation& eq,
                                                     const std::string& suffix = {}) {
  std::map<std::string, double> m;
  for (const auto& t : eq.terms()) m[canonical_key(t) + suffix] = t.coefficient();
  return m;
}

}  // namespace detail

/// One row per stored equation, columns sorted lexicographically.
inline TermTable tabulate(const EquationEnsemble& ens) {
  if (ens.size() == 0) throw ContractError("cannot tabulate an empty ensemble");
  std::vector<std::map<std::string, double>> rows;
  for (const auto& run : ens.runs)
    for (const auto& eq : run) rows.push_back(detail::coefficient_map(eq));
  return detail::build_table(rows);
}

inline std::string pooled_key(const std::string& key, const std::string& var) {
  return key + "_" + var;
}

/// Joint table over all variables with keys suffixed "_<var>". Within each run,
/// every front member of one variable is paired with the member of each other
/// variable whose complexity is closest (the simpler on ties); repeated
/// pairings are kept once.
inline TermTable pooled_table(const SystemEnsemble& ens) {
  std::vector<std::map<std::string, double>> rows;
  for (const auto& run : ens.runs) {
    bool complete = true;
    for (const auto& v : ens.variables) {
      auto it = run.find(v);
      complete = complete && it != run.end() && !it->second.empty();
    }
    if (!complete) continue;
    std::set<std::vector<std::size_t>> combos;
    for (std::size_t a = 0; a < ens.variables.size(); ++a) {
      const auto& own = run.at(ens.variables[a]);
      for (std::size_t i = 0; i < own.size(); ++i) {
        std::vector<std::size_t> pick(ens.variables.size());
        pick[a] = i;
        for (std::size_t b = 0; b < ens.variables.size(); ++b) {
          if (b == a) continue;
          const auto& other = run.at(ens.variables[b]);
          std::size_t best = 0;
          long best_gap = -1;
          for (std::size_t j = 0; j < other.size(); ++j) {
            const long gap = std::labs(static_cast<long>(other[j].complexity()) -
                                       static_cast<long>(own[i].complexity()));
            if (best_gap < 0 || gap < best_gap ||
                (gap == best_gap && other[j].complexity() < other[best].complexity())) {
              best = j;
              best_gap = gap;
            }
          }
          pick[b] = best;
        }
        combos.insert(pick);
      }
    }
    for (const auto& pick : combos) {
      std::map<std::string, double> row;
      for (std::size_t b = 0; b < ens.variables.size(); ++b) {
        auto m = detail::coefficient_map(run.at(ens.variables[b])[pick[b]], "_" + ens.variables[b]);
        row.insert(m.begin(), m.end());
      }
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw ContractError("no run produced equations for every variable");
  return detail::build_table(rows);
}

/// Drops columns present in fewer than min_support rows, except those in
/// `keep`. Returns the dropped keys.
inline std::vector<std::string> drop_rare_columns(TermTable& table, int min_support,
                                                  const std::set<std::string>& keep = {}) {
  std::vector<std::size_t> kept;
  std::vector<std::string> dropped;
  for (std::size_t j = 0; j < table.cols(); ++j) {
    int count = 0;
    for (const auto& r : table.presence) count += r[j];
    if (count >= min_support || keep.count(table.columns[j])) kept.push_back(j);
    else dropped.push_back(table.columns[j]);
  }
  TermTable out;
  for (auto j : kept) out.columns.push_back(table.columns[j]);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    std::vector<double> v;
    std::vector<int> p;
    for (auto j : kept) {
      v.push_back(table.values[i][j]);
      p.push_back(table.presence[i][j]);
    }
    out.values.push_back(std::move(v));
    out.presence.push_back(std::move(p));
  }
  table = std::move(out);
  return dropped;
}

/// Rebuilds the equation for `var` from row cells. In a pooled table pass the
/// suffix "_<var>". The target is the pure first derivative when present,
/// otherwise the first column carrying coefficient 1 and a derivative of var.
inline Equation decode_terms(const std::vector<std::string>& columns,
                             const std::vector<double>& values, const std::vector<int>& presence,
                             const std::string& var, const std::string& suffix = {}) {
  std::vector<Term> terms;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (!presence[j]) continue;
    const auto& c = columns[j];
    if (c.size() < suffix.size() || c.compare(c.size() - suffix.size(), suffix.size(), suffix))
      continue;
    const auto key = c.substr(0, c.size() - suffix.size());
    terms.push_back(parse_term_key(key, values[j]));
  }
  std::optional<std::size_t> target;
  for (std::size_t i = 0; i < terms.size() && !target; ++i)
    if (terms[i].is_pure_first_derivative(var) && terms[i].coefficient() == 1.0) target = i;
  for (std::size_t i = 0; i < terms.size() && !target; ++i)
    if (terms[i].has_time_derivative_of(var) && terms[i].coefficient() == 1.0) target = i;
  if (!target) throw ValidationError("row has no unit-coefficient derivative term for " + var);
  return Equation(std::move(terms), *target);
}

inline Equation decode_row(const TermTable& table, std::size_t row, const std::string& var,
                           const std::string& suffix = {}) {
  return decode_terms(table.columns, table.values.at(row), table.presence.at(row), var, suffix);
}

namespace detail {

template <class T>
void write_matrix(std::ostream& out, const std::vector<std::string>& header,
                  const std::vector<std::vector<T>>& rows) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out << ",";
      if constexpr (std::is_same_v<T, double>) out << format_number(r[j]);
      else out << r[j];
    }
    out << "\n";
  }
}

inline std::vector<std::vector<std::string>> read_cells(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split(line, ','));
  }
  if (rows.empty()) throw LoadError("'" + path + "' is empty");
  return rows;
}

}  // namespace detail

/// Writes `<stem>.csv` (coefficients) and `<stem>.presence.csv`.
inline void write_table(const TermTable& t, const std::string& stem) {
  std::ofstream v(stem + ".csv"), p(stem + ".presence.csv");
  if (!v || !p) throw LoadError("cannot write table '" + stem + "'");
  detail::write_matrix(v, t.columns, t.values);
  detail::write_matrix(p, t.columns, t.presence);
}

inline TermTable read_table(const std::string& stem) {
  const auto vals = detail::read_cells(stem + ".csv");
  const auto pres = detail::read_cells(stem + ".presence.csv");
  if (vals.size() != pres.size() || vals[0] != pres[0])
    throw LoadError("table '" + stem + "' and its presence file disagree");
  TermTable t;
  t.columns = vals[0];
  if (!std::is_sorted(t.columns.begin(), t.columns.end()))
    throw LoadError("table '" + stem + "' columns are not sorted");
  for (std::size_t i = 1; i < vals.size(); ++i) {
    if (vals[i].size() != t.cols() || pres[i].size() != t.cols())
      throw ParseError("row " + std::to_string(i) + ": wrong cell count", i);
    std::vector<double> v;
    std::vector<int> p;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      auto x = parse_number(vals[i][j]);
      auto q = parse_number(pres[i][j]);
      if (!x || !q || (*q != 0.0 && *q != 1.0))
        throw ParseError("row " + std::to_string(i) + ": bad cell in column " + t.columns[j], i);
      v.push_back(*x);
      p.push_back(static_cast<int>(*q));
    }
    t.values.push_back(std::move(v));
    t.presence.push_back(std::move(p));
  }
  return t;
}

}  // namespace edisc
