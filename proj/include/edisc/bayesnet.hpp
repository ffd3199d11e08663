#pragma once

// Bayesian network over term variables. Every node couples a Bernoulli
// presence indicator with a Gaussian coefficient value; both are conditioned
// on the presence pattern of the node's parents. Structure is learned on the
// presence indicators by BIC hill climbing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "edisc/ensemble.hpp"
#include "edisc/error.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

inline constexpr double kVarianceFloor = 1e-12;

/// Parent lists per node, each sorted ascending.
struct Dag {
  std::vector<std::vector<std::size_t>> parents;

  std::size_t size() const { return parents.size(); }
  bool has_edge(std::size_t from, std::size_t to) const {
    const auto& p = parents[to];
    return std::binary_search(p.begin(), p.end(), from);
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& p : parents) n += p.size();
    return n;
  }
  /// True when `to` is reachable from `from` along directed edges.
  bool reachable(std::size_t from, std::size_t to) const {
    std::vector<std::vector<std::size_t>> children(size());
    for (std::size_t j = 0; j < size(); ++j)
      for (auto p : parents[j]) children[p].push_back(j);
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack{from};
    while (!stack.empty()) {
      auto x = stack.back();
      stack.pop_back();
      if (x == to) return true;
      if (seen[x]) continue;
      seen[x] = true;
      for (auto c : children[x]) stack.push_back(c);
    }
    return false;
  }
  /// Kahn's algorithm, smallest index first; throws on a cycle.
  std::vector<std::size_t> topological_order() const {
    std::vector<std::size_t> indeg(size());
    std::vector<std::vector<std::size_t>> children(size());
    for (std::size_t j = 0; j < size(); ++j) {
      indeg[j] = parents[j].size();
      for (auto p : parents[j]) children[p].push_back(j);
    }
    std::set<std::size_t> ready;
    for (std::size_t j = 0; j < size(); ++j)
      if (indeg[j] == 0) ready.insert(j);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
      auto x = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(x);
      for (auto c : children[x])
        if (--indeg[c] == 0) ready.insert(c);
    }
    if (order.size() != size()) throw ValidationError("graph has a cycle");
    return order;
  }
};

namespace detail {

inline std::size_t config_index(const std::vector<int>& presence,
                                const std::vector<std::size_t>& parents) {
  std::size_t c = 0;
  for (std::size_t k = 0; k < parents.size(); ++k)
    if (presence[parents[k]]) c |= std::size_t{1} << k;
  return c;
}

inline double bic_score(const TermTable& t, std::size_t node,
                        const std::vector<std::size_t>& parents) {
  const std::size_t q = std::size_t{1} << parents.size();
  std::vector<double> n(q, 0.0), n1(q, 0.0);
  for (const auto& row : t.presence) {
    auto c = config_index(row, parents);
    n[c] += 1.0;
    n1[c] += row[node];
  }
  double ll = 0.0;
  for (std::size_t c = 0; c < q; ++c) {
    const double n0 = n[c] - n1[c];
    if (n1[c] > 0) ll += n1[c] * std::log(n1[c] / n[c]);
    if (n0 > 0) ll += n0 * std::log(n0 / n[c]);
  }
  return ll - 0.5 * static_cast<double>(q) * std::log(static_cast<double>(t.rows()));
}

}  // namespace detail

/// Greedy hill climbing over single-edge additions, removals and reversals,
/// scored by BIC on presence indicators. Among equal improvements the first
/// move in (from, to, add/remove/reverse) order wins.
inline Dag learn_structure(const TermTable& table, int max_parents = 3) {
  if (table.rows() < 10)
    throw InsufficientDataError("structure learning needs at least 10 rows, got " +
                                std::to_string(table.rows()));
  if (table.cols() < 2)
    throw InsufficientDataError("structure learning needs at least 2 columns");
  if (max_parents < 0) throw ConfigError("max_parents must be >= 0");
  const std::size_t m = table.cols();
  const auto cap = static_cast<std::size_t>(max_parents);
  Dag dag{std::vector<std::vector<std::size_t>>(m)};
  std::map<std::pair<std::size_t, std::vector<std::size_t>>, double> memo;
  auto score = [&](std::size_t node, const std::vector<std::size_t>& pa) {
    auto key = std::make_pair(node, pa);
    auto it = memo.find(key);
    if (it == memo.end()) it = memo.emplace(key, detail::bic_score(table, node, pa)).first;
    return it->second;
  };
  auto with = [](std::vector<std::size_t> pa, std::size_t x) {
    pa.insert(std::lower_bound(pa.begin(), pa.end(), x), x);
    return pa;
  };
  auto without = [](std::vector<std::size_t> pa, std::size_t x) {
    pa.erase(std::find(pa.begin(), pa.end(), x));
    return pa;
  };
  const double eps = 1e-9;
  while (true) {
    double best = eps;
    int best_op = -1;
    std::size_t bf = 0, bt = 0;
    for (std::size_t from = 0; from < m; ++from) {
      for (std::size_t to = 0; to < m; ++to) {
        if (from == to) continue;
        const auto& pt = dag.parents[to];
        const auto& pf = dag.parents[from];
        if (!dag.has_edge(from, to)) {
          if (dag.has_edge(to, from) || pt.size() >= cap || dag.reachable(to, from)) continue;
          const double d = score(to, with(pt, from)) - score(to, pt);
          if (d > best) best = d, best_op = 0, bf = from, bt = to;
        } else {
          const double drem = score(to, without(pt, from)) - score(to, pt);
          if (drem > best) best = drem, best_op = 1, bf = from, bt = to;
          if (pf.size() >= cap) continue;
          Dag trial = dag;
          trial.parents[to] = without(pt, from);
          if (trial.reachable(from, to)) continue;
          const double drev = drem + score(from, with(pf, to)) - score(from, pf);
          if (drev > best) best = drev, best_op = 2, bf = from, bt = to;
        }
      }
    }
    if (best_op < 0) break;
    if (best_op == 0) dag.parents[bt] = with(dag.parents[bt], bf);
    if (best_op >= 1) dag.parents[bt] = without(dag.parents[bt], bf);
    if (best_op == 2) dag.parents[bf] = with(dag.parents[bf], bt);
  }
  return dag;
}

struct NodeModel {
  double p_present = 0.0;
  double mean = 0.0;
  double variance = kVarianceFloor;
  std::size_t rows = 0;     // rows matching the configuration
  std::size_t present = 0;  // of which the node was present
};

struct BayesianNetwork {
  std::vector<std::string> nodes;
  Dag dag;
  std::vector<NodeModel> marginal;
  // per node, per parent configuration (bitmask over its sorted parents)
  std::vector<std::vector<NodeModel>> conditional;

  std::ptrdiff_t index(std::string_view key) const {
    auto it = std::find(nodes.begin(), nodes.end(), key);
    return it == nodes.end() ? -1 : it - nodes.begin();
  }

  /// Model in effect for `node` given parent presence; unseen configurations
  /// fall back to the marginal fit.
  const NodeModel& model(std::size_t node, const std::vector<int>& presence) const {
    const auto& cm = conditional[node][detail::config_index(presence, dag.parents[node])];
    if (cm.rows == 0) return marginal[node];
    return cm;
  }
};

namespace detail {

inline NodeModel fit_node(const TermTable& t, std::size_t node,
                          const std::vector<std::size_t>& rows, const NodeModel* fallback) {
  NodeModel m;
  m.rows = rows.size();
  if (rows.empty()) return fallback ? *fallback : m;
  std::vector<double> vals;
  for (auto r : rows)
    if (t.presence[r][node]) vals.push_back(t.values[r][node]);
  m.present = vals.size();
  m.p_present = static_cast<double>(m.present) / static_cast<double>(m.rows);
  if (vals.empty()) {
    if (fallback) {
      m.mean = fallback->mean;
      m.variance = fallback->variance;
    }
    return m;
  }
  // shifted by the first value so constant columns keep their exact value
  double shift = 0.0;
  for (double v : vals) shift += v - vals[0];
  const double mean = vals[0] + shift / static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vals.size());
  m.mean = mean;
  m.variance = std::max(var, kVarianceFloor);
  return m;
}

}  // namespace detail

/// Maximum-likelihood presence probabilities and Gaussian value parameters
/// per parent-presence configuration. Configurations with rows but no present
/// values borrow the marginal value model.
inline BayesianNetwork fit_parameters(const Dag& dag, const TermTable& table) {
  if (dag.size() != table.cols()) throw ContractError("graph and table sizes differ");
  dag.topological_order();
  BayesianNetwork bn;
  bn.nodes = table.columns;
  bn.dag = dag;
  std::vector<std::size_t> all(table.rows());
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t j = 0; j < table.cols(); ++j) {
    bn.marginal.push_back(detail::fit_node(table, j, all, nullptr));
    const auto& pa = dag.parents[j];
    std::vector<std::vector<std::size_t>> groups(std::size_t{1} << pa.size());
    for (std::size_t r = 0; r < table.rows(); ++r)
      groups[detail::config_index(table.presence[r], pa)].push_back(r);
    std::vector<NodeModel> cms;
    for (const auto& g : groups) {
      auto cm = detail::fit_node(table, j, g, &bn.marginal[j]);
      cm.rows = g.size();
      if (g.empty()) cm.present = 0;
      cms.push_back(cm);
    }
    bn.conditional.push_back(std::move(cms));
  }
  return bn;
}

struct SampledSystem {
  std::map<std::string, Equation> equations;
  std::size_t index = 0;
  std::map<std::string, std::string> anchors;  // variable -> node key
};

/// Anchor node key for `var` in a pooled network: its pure first derivative.
inline std::string default_anchor(const std::string& var) {
  return pooled_key(Token::deriv(var, 1).key(), var);
}

struct Draw {
  std::vector<int> presence;
  std::vector<double> values;
};

/// One ancestral pass with the anchor nodes clamped to presence 1, value 1.
/// Value models at the variance floor return their mean exactly.
template <class Rng>
Draw draw_once(const BayesianNetwork& bn, const std::set<std::size_t>& clamped, Rng& rng) {
  Draw d{std::vector<int>(bn.nodes.size(), 0), std::vector<double>(bn.nodes.size(), 0.0)};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto j : bn.dag.topological_order()) {
    if (clamped.count(j)) {
      d.presence[j] = 1;
      d.values[j] = 1.0;
      continue;
    }
    const auto& m = bn.model(j, d.presence);
    if (unif(rng) < m.p_present) {
      d.presence[j] = 1;
      d.values[j] = m.variance > kVarianceFloor
                        ? std::normal_distribution<double>(m.mean, std::sqrt(m.variance))(rng)
                        : m.mean;
    }
  }
  return d;
}

/// Draws n coherent systems. A draw is rejected when some variable's equation
/// is left with the anchor alone or breaks the equation invariants; the
/// attempt budget is 100*n.
template <class Rng>
std::vector<SampledSystem> sample_systems(const BayesianNetwork& bn,
                                          const std::map<std::string, std::string>& anchors,
                                          int n, Rng& rng) {
  if (n < 1) throw ConfigError("sample count must be >= 1");
  if (anchors.empty()) throw ConfigError("at least one anchor is required");
  std::set<std::size_t> clamped;
  for (const auto& [var, key] : anchors) {
    const auto j = bn.index(key);
    if (j < 0) throw ConfigError("anchor '" + key + "' is not a network node");
    clamped.insert(static_cast<std::size_t>(j));
  }
  std::vector<SampledSystem> out;
  std::map<std::string, std::size_t> reasons;
  const long budget = 100L * n;
  long attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (attempts++ >= budget) {
      std::string diag;
      for (const auto& [r, c] : reasons) diag += " " + r + ": " + std::to_string(c) + ";";
      throw SamplingError("rejection budget of " + std::to_string(budget) +
                          " attempts exhausted after " + std::to_string(out.size()) +
                          " accepted samples;" + diag);
    }
    const auto d = draw_once(bn, clamped, rng);
    SampledSystem s;
    s.index = out.size();
    s.anchors = anchors;
    bool ok = true;
    for (const auto& [var, key] : anchors) {
      const std::string suffix = "_" + var;
      std::vector<Term> terms;
      std::optional<std::size_t> target;
      for (std::size_t j = 0; j < bn.nodes.size(); ++j) {
        const auto& c = bn.nodes[j];
        if (!d.presence[j] || c.size() <= suffix.size() ||
            c.compare(c.size() - suffix.size(), suffix.size(), suffix))
          continue;
        if (c == key) target = terms.size();
        terms.push_back(parse_term_key(c.substr(0, c.size() - suffix.size()), d.values[j]));
      }
      if (terms.size() < 2) {
        ++reasons["only the anchor term for " + var];
        ok = false;
        break;
      }
      try {
        s.equations.emplace(var, Equation(std::move(terms), *target));
      } catch (const ValidationError& e) {
        ++reasons[e.what()];
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(std::move(s));
  }
  return out;
}

struct TermSummary {
  std::string variable;
  std::string key;
  std::size_t present = 0;
  double presence_rate = 0.0;
  std::optional<double> mean;
  std::optional<double> half_width;  // 1.96 * sample sd; needs >= 2 draws
};

/// Per variable and term: presence rate, mean over draws where present and
/// the half-width 1.96 * sample standard deviation.
inline std::vector<TermSummary> summarize(const std::vector<SampledSystem>& samples) {
  if (samples.size() < 2) throw ContractError("summary needs at least 2 samples");
  std::map<std::pair<std::string, std::string>, std::vector<double>> coefs;
  for (const auto& s : samples)
    for (const auto& [var, eq] : s.equations)
      for (const auto& t : eq.terms()) coefs[{var, canonical_key(t)}].push_back(t.coefficient());
  std::vector<TermSummary> out;
  for (const auto& [k, v] : coefs) {
    TermSummary ts{k.first, k.second, v.size(),
                   static_cast<double>(v.size()) / static_cast<double>(samples.size()), {}, {}};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    ts.mean = mean;
    if (v.size() >= 2) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      ts.half_width = 1.96 * std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    out.push_back(ts);
  }
  return out;
}

/// "(0.5598 ± 0.0001)*u + (-0.028 ± 0)*u*v" style right-hand side.
inline std::string render_summary(const std::vector<TermSummary>& terms, const std::string& var,
                                  const std::string& target_key, int precision = 4) {
  auto num = [&](double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, x);
    return std::string(buf);
  };
  std::string lhs = target_key, rhs;
  for (const auto& t : terms) {
    if (t.variable != var || !t.mean) continue;
    if (t.key == target_key) {
      lhs = parse_term_key(t.key).pretty();
      continue;
    }
    if (!rhs.empty()) rhs += " + ";
    rhs += "(" + num(*t.mean) + " ± " + num(t.half_width.value_or(0.0)) + ")";
    const auto term = parse_term_key(t.key);
    if (!term.is_constant()) rhs += "*" + term.pretty();
    if (t.presence_rate < 1.0) rhs += " [p=" + num(t.presence_rate) + "]";
  }
  return lhs + " = " + (rhs.empty() ? "0" : rhs);
}

/// Samples grouped by their per-variable term supports, most frequent first
/// (ties by support order).
struct SupportGroup {
  std::map<std::string, std::vector<std::string>> support;
  std::vector<std::size_t> members;
};

inline std::vector<SupportGroup> group_by_support(const std::vector<SampledSystem>& samples) {
  std::map<std::map<std::string, std::vector<std::string>>, std::vector<std::size_t>> g;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::map<std::string, std::vector<std::string>> sup;
    for (const auto& [var, eq] : samples[i].equations) sup[var] = eq.support();
    g[sup].push_back(i);
  }
  std::vector<SupportGroup> out;
  for (auto& [sup, idx] : g) out.push_back({sup, idx});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.members.size() > b.members.size();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const NodeModel& m) {
  return {{"p_present", m.p_present}, {"mean", m.mean},   {"variance", m.variance},
          {"rows", m.rows},           {"present", m.present}};
}

inline NodeModel node_model_from_json(const nlohmann::json& j) {
  NodeModel m;
  m.p_present = j.at("p_present").get<double>();
  m.mean = j.at("mean").get<double>();
  m.variance = j.at("variance").get<double>();
  m.rows = j.at("rows").get<std::size_t>();
  m.present = j.at("present").get<std::size_t>();
  return m;
}

inline nlohmann::json to_json(const BayesianNetwork& bn) {
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t j = 0; j < bn.nodes.size(); ++j) {
    nlohmann::json pa = nlohmann::json::array();
    for (auto p : bn.dag.parents[j]) {
      edges.push_back({bn.nodes[p], bn.nodes[j]});
      pa.push_back(bn.nodes[p]);
    }
    nlohmann::json cond = nlohmann::json::array();
    for (const auto& cm : bn.conditional[j]) cond.push_back(to_json(cm));
    params[bn.nodes[j]] = {{"parents", pa}, {"marginal", to_json(bn.marginal[j])},
                           {"conditional", cond}};
  }
  return {{"nodes", bn.nodes}, {"edges", edges}, {"parameters", params}};
}

inline BayesianNetwork network_from_json(const nlohmann::json& j) {
  BayesianNetwork bn;
  bn.nodes = j.at("nodes").get<std::vector<std::string>>();
  bn.dag.parents.resize(bn.nodes.size());
  for (std::size_t k = 0; k < bn.nodes.size(); ++k) {
    const auto& p = j.at("parameters").at(bn.nodes[k]);
    for (const auto& name : p.at("parents")) {
      const auto idx = bn.index(name.get<std::string>());
      if (idx < 0) throw LoadError("unknown parent '" + name.get<std::string>() + "'");
      bn.dag.parents[k].push_back(static_cast<std::size_t>(idx));
    }
    std::sort(bn.dag.parents[k].begin(), bn.dag.parents[k].end());
    bn.marginal.push_back(node_model_from_json(p.at("marginal")));
    std::vector<NodeModel> cms;
    for (const auto& c : p.at("conditional")) cms.push_back(node_model_from_json(c));
    if (cms.size() != (std::size_t{1} << bn.dag.parents[k].size()))
      throw LoadError("node '" + bn.nodes[k] + "' has a wrong number of configurations");
    bn.conditional.push_back(std::move(cms));
  }
  bn.dag.topological_order();
  return bn;
}

inline std::string to_dot(const BayesianNetwork& bn) {
  std::string s = "digraph terms {\n  rankdir=LR;\n";
  for (const auto& n : bn.nodes) s += "  \"" + n + "\";\n";
  for (std::size_t j = 0; j < bn.nodes.size(); ++j)
    for (auto p : bn.dag.parents[j]) s += "  \"" + bn.nodes[p] + "\" -> \"" + bn.nodes[j] + "\";\n";
  return s + "}\n";
}

/// Connected components of the skeleton, as node-index lists.
inline std::vector<std::vector<std::size_t>> components(const Dag& dag) {
  std::vector<std::size_t> root(dag.size());
  std::iota(root.begin(), root.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return root[x] == x ? x : root[x] = find(root[x]);
  };
  for (std::size_t j = 0; j < dag.size(); ++j)
    for (auto p : dag.parents[j]) root[find(p)] = find(j);
  std::map<std::size_t, std::vector<std::size_t>> g;
  for (std::size_t j = 0; j < dag.size(); ++j) g[find(j)].push_back(j);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [r, v] : g) out.push_back(v);
  return out;
}

}  // namespace edisc
