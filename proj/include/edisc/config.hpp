#pragma once

// Flat "key = value" run configuration with '#' comments. Every key has a
// default; unknown keys are rejected.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "edisc/dataio.hpp"
#include "edisc/error.hpp"

namespace edisc {

inline const char* const kVersion = "0.1.0";

class Config {
 public:
  Config() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"data.path", ""},
        {"data.time_column", "t"},
        {"data.columns", "u,v"},
        {"data.variables", ""},
        {"data.normalize", "false"},
        {"diff.method", "smoothed"},
        {"diff.window", "5"},
        {"diff.max_order", "2"},
        {"tokens.max_factors", "2"},
        {"tokens.max_power", "2"},
        {"tokens.inverse_coordinate", "false"},
        {"tokens.constant", "true"},
        {"regression.lambda", "auto"},
        {"regression.epsilon", "1e-6"},
        {"regression.max_sweeps", "10000"},
        {"regression.tol", "1e-8"},
        {"evo.population", "64"},
        {"evo.generations", "100"},
        {"evo.min_terms", "2"},
        {"evo.max_terms", "6"},
        {"evo.crossover_rate", "0.8"},
        {"evo.mutation_rate", "0.3"},
        {"evo.seed", "auto"},
        {"evo.resolve_margin", "0.1"},
        {"evo.elites", "4"},
        {"ensemble.runs", "20"},
        {"ensemble.min_support", "2"},
        {"bn.max_parents", "3"},
        {"bn.samples", "30"},
        {"solve.rtol", "1e-7"},
        {"solve.atol", "1e-9"},
        {"solve.report_points", "data"},
        {"solve.t_span", "data"},
        {"baseline.n_boot", "1000"},
        {"baseline.keep_fraction", "0.8"},
        {"baseline.threshold", "0.2"},
        {"baseline.normalize", "true"},
        {"baseline.interpolate", "201"},
        {"baseline.inclusion", "0.5"},
        {"baseline.resample_rows", "true"},
        {"compare.alpha", "0.55"},
        {"compare.beta", "0.028"},
        {"compare.gamma", "0.84"},
        {"compare.delta", "0.026"},
        {"run.seed", "0"},
        {"run.output_dir", "out"},
        {"run.case", "none"},
    };
    return d;
  }

  static bool known(const std::string& key) {
    if (defaults().count(key)) return true;
    return key.rfind("bn.anchor.", 0) == 0 && key.size() > 10;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
    explicit_.insert(key);
  }

  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  /// Parses "key = value" lines; '#' starts a comment.
  void parse(std::istream& in, const std::string& origin = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key(trim(body.substr(0, eq)));
      const std::string value(trim(body.substr(eq + 1)));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      set(key, value);
    }
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Config c;
    c.parse(in, path);
    return c;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    auto v = parse_number(str(key));
    if (!v) throw ConfigError("config key '" + key + "' expects a number, got '" + str(key) + "'");
    return *v;
  }

  long integer(const std::string& key) const {
    const double v = real(key);
    if (v != static_cast<double>(static_cast<long>(v)))
      throw ConfigError("config key '" + key + "' expects an integer, got '" + str(key) + "'");
    return static_cast<long>(v);
  }

  bool boolean(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    if (str(key).empty()) return out;
    for (const auto& p : split(str(key), ',')) out.emplace_back(trim(p));
    return out;
  }

  /// Anchors configured as bn.anchor.<var> = <pooled key>.
  std::map<std::string, std::string> anchors() const {
    std::map<std::string, std::string> a;
    for (const auto& [k, v] : values_)
      if (k.rfind("bn.anchor.", 0) == 0) a[k.substr(10)] = v;
    return a;
  }

  /// Applies run.case and checks cross-key consistency.
  void resolve() {
    const auto& c = str("run.case");
    if (c == "a" || c == "b") {
      const std::string order = c == "a" ? "1" : "2";
      if (is_set("diff.max_order") && integer("diff.max_order") != std::stol(order))
        throw ConfigError("run.case '" + c + "' requires diff.max_order = " + order);
      values_["diff.max_order"] = order;
    } else if (c != "none") {
      throw ConfigError("config key 'run.case' must be a, b or none, got '" + c + "'");
    }
    if (!list("data.variables").empty() && list("data.variables").size() != list("data.columns").size())
      throw ConfigError("config key 'data.variables' must match 'data.columns' in length");
    parse_diff_method(str("diff.method"));
    for (const auto& [k, v] : defaults()) {
      (void)v;
      if (k == "regression.lambda" && str(k) == "auto") continue;
      if (k == "evo.seed" && str(k) == "auto") continue;
      if ((k == "solve.report_points" || k == "solve.t_span") && str(k) == "data") continue;
      const auto& d = defaults().at(k);
      if (parse_number(d) && !parse_number(str(k)))
        throw ConfigError("config key '" + k + "' expects a number, got '" + str(k) + "'");
      if ((d == "true" || d == "false")) boolean(k);
    }
  }

  std::vector<std::string> variables() const {
    auto v = list("data.variables");
    return v.empty() ? list("data.columns") : v;
  }

  /// Fully resolved configuration, one sorted "key = value" line each.
  std::string dump() const {
    std::ostringstream s;
    for (const auto& [k, v] : values_) s << k << " = " << v << "\n";
    return s.str();
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace edisc
