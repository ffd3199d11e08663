#pragma once

// Tokens, terms (token products) and equations (coefficient-weighted term
// sums set to zero), their evaluation on a DataSet and canonical keys.

#include <algorithm>
#include <compare>
#include <cstdio>
#include <functional>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "edisc/dataio.hpp"
#include "edisc/error.hpp"

namespace edisc {

enum class Family { derivative = 0, inverse_coordinate = 1, constant = 2 };

struct Token {
  Family family = Family::constant;
  std::string variable;  // derivative family
  int order = 0;         // 0 = raw field
  std::string axis;      // inverse_coordinate family

  static Token field(std::string v) { return {Family::derivative, std::move(v), 0, {}}; }
  static Token deriv(std::string v, int k) { return {Family::derivative, std::move(v), k, {}}; }
  static Token inverse(std::string axis) { return {Family::inverse_coordinate, {}, 0, std::move(axis)}; }
  static Token constant() { return {Family::constant, {}, 0, {}}; }

  bool is_raw_field() const { return family == Family::derivative && order == 0; }
  bool is_time_derivative() const { return family == Family::derivative && order >= 1; }

  /// "u", "d1_u", "inv_t", "const".
  std::string key() const {
    switch (family) {
      case Family::derivative:
        return order == 0 ? variable : "d" + std::to_string(order) + "_" + variable;
      case Family::inverse_coordinate: return "inv_" + axis;
      case Family::constant: return "const";
    }
    return {};
  }

  std::string pretty() const {
    switch (family) {
      case Family::derivative:
        if (order == 0) return variable;
        if (order == 1) return "d" + variable + "/dt";
        return "d" + std::to_string(order) + variable + "/dt" + std::to_string(order);
      case Family::inverse_coordinate: return "1/" + axis;
      case Family::constant: return "1";
    }
    return {};
  }

  auto operator<=>(const Token&) const = default;
  bool operator==(const Token&) const = default;
};

inline Token parse_token(std::string_view s) {
  if (s == "const") return Token::constant();
  if (s.rfind("inv_", 0) == 0 && s.size() > 4) return Token::inverse(std::string(s.substr(4)));
  if (s.size() > 1 && s[0] == 'd') {
    auto us = s.find('_');
    if (us != std::string_view::npos && us > 1 && us + 1 < s.size()) {
      auto digits = s.substr(1, us - 1);
      if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return Token::deriv(std::string(s.substr(us + 1)), std::stoi(std::string(digits)));
    }
  }
  if (s.empty()) throw ValidationError("empty token key");
  return Token::field(std::string(s));
}

struct TermLimits {
  int max_factors = 2;
  int max_power = 2;
  int max_order = 2;
};

/// A product of tokens with a real coefficient. Factors are kept sorted, so
/// two terms with equal multisets compare and key identically. A constant
/// factor inside a product is absorbed.
class Term {
 public:
  Term() = default;
  explicit Term(std::vector<Token> factors, double coefficient = 1.0)
      : factors_(std::move(factors)), coefficient_(coefficient) {
    if (factors_.empty()) throw ValidationError("term needs at least one token");
    if (factors_.size() > 1)
      std::erase_if(factors_, [](const Token& t) { return t.family == Family::constant; });
    if (factors_.empty()) factors_.push_back(Token::constant());
    std::sort(factors_.begin(), factors_.end());
  }

  const std::vector<Token>& factors() const noexcept { return factors_; }
  double coefficient() const noexcept { return coefficient_; }
  Term with_coefficient(double c) const {
    Term t = *this;
    t.coefficient_ = c;
    return t;
  }

  /// Total polynomial power in raw fields.
  int raw_power() const {
    return static_cast<int>(std::count_if(factors_.begin(), factors_.end(),
                                          [](const Token& t) { return t.is_raw_field(); }));
  }

  int max_order() const {
    int m = 0;
    for (const auto& t : factors_)
      if (t.family == Family::derivative) m = std::max(m, t.order);
    return m;
  }

  bool has_time_derivative() const {
    return std::any_of(factors_.begin(), factors_.end(),
                       [](const Token& t) { return t.is_time_derivative(); });
  }

  bool has_time_derivative_of(std::string_view var) const {
    return std::any_of(factors_.begin(), factors_.end(), [&](const Token& t) {
      return t.is_time_derivative() && t.variable == var;
    });
  }

  bool is_constant() const {
    return factors_.size() == 1 && factors_[0].family == Family::constant;
  }

  /// Term is exactly the first derivative of `var`.
  bool is_pure_first_derivative(std::string_view var) const {
    return factors_.size() == 1 && factors_[0].family == Family::derivative &&
           factors_[0].order == 1 && factors_[0].variable == var;
  }

  bool within(const TermLimits& lim) const {
    if (static_cast<int>(factors_.size()) > lim.max_factors) return false;
    if (raw_power() > lim.max_power) return false;
    if (max_order() > lim.max_order) return false;
    return true;
  }

  std::string pretty() const {
    if (is_constant()) return "1";
    std::string s;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) s += '*';
      s += factors_[i].pretty();
    }
    return s;
  }

 private:
  std::vector<Token> factors_;
  double coefficient_ = 1.0;
};

/// Deterministic, factor-order-independent key: sorted factor keys joined by '*'.
inline std::string canonical_key(const Term& term) {
  std::string k;
  for (std::size_t i = 0; i < term.factors().size(); ++i) {
    if (i) k += '*';
    k += term.factors()[i].key();
  }
  return k;
}

inline Term parse_term_key(std::string_view key, double coefficient = 1.0) {
  std::vector<Token> f;
  for (const auto& part : split(key, '*')) f.push_back(parse_token(part));
  return Term(std::move(f), coefficient);
}

/// Sum of terms set to zero, read as `target = sum of the other terms`: the
/// target term carries coefficient 1 and every other term's coefficient is
/// its right-hand-side weight.
class Equation {
 public:
  Equation() = default;

  Equation(std::vector<Term> terms, std::size_t target_index)
      : terms_(std::move(terms)), target_(target_index) {
    validate();
  }

  const std::vector<Term>& terms() const noexcept { return terms_; }
  std::size_t target_index() const noexcept { return target_; }
  const Term& target() const { return terms_.at(target_); }
  std::size_t complexity() const noexcept { return terms_.size(); }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& t : terms_) k.push_back(canonical_key(t));
    return k;
  }

  /// Sorted key set; equal supports compare equal regardless of term order.
  std::vector<std::string> support() const {
    auto k = keys();
    std::sort(k.begin(), k.end());
    return k;
  }

  std::optional<std::size_t> find(std::string_view key) const {
    for (std::size_t i = 0; i < terms_.size(); ++i)
      if (canonical_key(terms_[i]) == key) return i;
    return std::nullopt;
  }

  /// Variable whose time derivative the target term carries.
  std::string variable() const {
    for (const auto& f : target().factors())
      if (f.is_time_derivative()) return f.variable;
    return {};
  }

  /// Re-expresses the equation with term `index` as target (coefficient 1).
  Equation retargeted(std::size_t index) const {
    if (index == target_) return *this;
    const double pivot = terms_.at(index).coefficient();
    if (pivot == 0.0) throw DegenerateEquationError("cannot retarget on a zero coefficient");
    // target - sum c_j a_j = 0  ->  a_index = (target - sum_{j != index} c_j a_j) / c_index
    std::vector<Term> out;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      double c;
      if (i == index) c = 1.0;
      else if (i == target_) c = 1.0 / pivot;
      else c = -terms_[i].coefficient() / pivot;
      out.push_back(terms_[i].with_coefficient(c));
    }
    return Equation(std::move(out), index);
  }

  bool operator==(const Equation& o) const {
    if (terms_.size() != o.terms_.size()) return false;
    if (canonical_key(target()) != canonical_key(o.target())) return false;
    for (const auto& t : terms_) {
      auto j = o.find(canonical_key(t));
      if (!j || o.terms_[*j].coefficient() != t.coefficient()) return false;
    }
    return true;
  }

 private:
  void validate() const {
    if (terms_.empty()) throw ValidationError("equation has no terms");
    if (target_ >= terms_.size()) throw ValidationError("target index out of range");
    if (terms_[target_].coefficient() != 1.0)
      throw ValidationError("target term coefficient must be exactly 1");
    std::set<std::string> seen;
    bool has_derivative = false;
    for (const auto& t : terms_) {
      if (!seen.insert(canonical_key(t)).second)
        throw ValidationError("duplicate term '" + canonical_key(t) + "'");
      has_derivative = has_derivative || t.has_time_derivative();
    }
    if (!has_derivative)
      throw ValidationError("equation contains no time-derivative token");
  }

  std::vector<Term> terms_;
  std::size_t target_ = 0;
};

/// "du/dt = 0.5598*u - 0.028*u*v + ..."
inline std::string render(const Equation& eq, int precision = 6) {
  auto num = [&](double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    return std::string(buf);
  };
  std::string s = eq.target().pretty() + " =";
  bool first = true;
  for (std::size_t i = 0; i < eq.terms().size(); ++i) {
    if (i == eq.target_index()) continue;
    const auto& t = eq.terms()[i];
    double c = t.coefficient();
    if (first) s += c < 0 ? " -" : " ";
    else s += c < 0 ? " - " : " + ";
    s += num(std::abs(c));
    if (!t.is_constant()) s += "*" + t.pretty();
    first = false;
  }
  if (first) s += " 0";
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation on observational data

inline std::vector<double> evaluate_token(const Token& token, const DataSet& data) {
  switch (token.family) {
    case Family::derivative: {
      if (!data.has_variable(token.variable))
        throw EvaluationError("unknown variable '" + token.variable + "'");
      if (!data.has_derivative(token.variable, token.order))
        throw EvaluationError("missing derivative (" + token.variable + ", " +
                              std::to_string(token.order) + ")");
      return data.derivative(token.variable, token.order);
    }
    case Family::inverse_coordinate: {
      if (token.axis != data.axis())
        throw EvaluationError("unknown coordinate axis '" + token.axis + "'");
      std::vector<double> out(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.grid()[i] == 0.0)
          throw SingularityError("inverse coordinate 1/" + token.axis +
                                 " is singular at grid index " + std::to_string(i));
        out[i] = 1.0 / data.grid()[i];
      }
      return out;
    }
    case Family::constant: return std::vector<double>(data.size(), 1.0);
  }
  return {};
}

/// Element-wise product of factor evaluations; the coefficient is not applied.
inline std::vector<double> evaluate_term(const Term& term, const DataSet& data) {
  std::vector<double> out(data.size(), 1.0);
  for (const auto& f : term.factors()) {
    auto v = evaluate_token(f, data);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= v[i];
  }
  return out;
}

/// Partial derivative of the term's evaluation with respect to the first
/// time derivative of `var`, on the data grid.
inline std::vector<double> evaluate_term_partial(const Term& term, const DataSet& data,
                                                 std::string_view var) {
  std::vector<double> out(data.size(), 0.0);
  const auto& f = term.factors();
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!(f[k].family == Family::derivative && f[k].order == 1 && f[k].variable == var))
      continue;
    std::vector<double> prod(data.size(), 1.0);
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (j == k) continue;
      auto v = evaluate_token(f[j], data);
      for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= v[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += prod[i];
  }
  return out;
}

/// Memoized term evaluations for one DataSet. Not thread-safe; one per run.
class TermCache {
 public:
  explicit TermCache(const DataSet& data) : data_(&data) {}
  const DataSet& data() const noexcept { return *data_; }

  const std::vector<double>& operator()(const Term& t) {
    auto key = canonical_key(t);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(std::move(key), evaluate_term(t, *data_)).first->second;
  }

 private:
  const DataSet* data_;
  std::map<std::string, std::vector<double>> cache_;
};

// ---------------------------------------------------------------------------
// Token pools and the term universe

struct TokenConfig {
  std::vector<std::string> variables;
  TermLimits limits;
  bool inverse_coordinate = false;
  std::string axis = "t";
  bool constant = true;
};

/// Tokens available to the search: every variable at orders 0..max_order,
/// optionally 1/t, and the constant.
inline std::vector<Token> token_pool(const TokenConfig& cfg) {
  std::vector<Token> pool;
  for (const auto& v : cfg.variables)
    for (int k = 0; k <= cfg.limits.max_order; ++k) pool.push_back(Token::deriv(v, k));
  if (cfg.inverse_coordinate) pool.push_back(Token::inverse(cfg.axis));
  if (cfg.constant) pool.push_back(Token::constant());
  return pool;
}

/// Every distinct term buildable from the pool within the limits.
inline std::vector<Term> term_universe(const TokenConfig& cfg) {
  auto pool = token_pool(cfg);
  std::vector<Token> nonconst;
  for (const auto& t : pool)
    if (t.family != Family::constant) nonconst.push_back(t);
  std::map<std::string, Term> out;
  if (cfg.constant) out.emplace("const", Term({Token::constant()}));
  // multisets of size 1..max_factors over non-constant tokens
  std::vector<std::size_t> idx;
  std::function<void(std::size_t, int)> rec = [&](std::size_t start, int remaining) {
    if (!idx.empty()) {
      std::vector<Token> f;
      for (auto i : idx) f.push_back(nonconst[i]);
      Term t(std::move(f));
      if (t.within(cfg.limits)) out.emplace(canonical_key(t), t);
    }
    if (remaining == 0) return;
    for (std::size_t i = start; i < nonconst.size(); ++i) {
      idx.push_back(i);
      rec(i, remaining - 1);
      idx.pop_back();
    }
  };
  rec(0, cfg.limits.max_factors);
  std::vector<Term> terms;
  for (auto& [k, t] : out) terms.push_back(t);
  return terms;
}

}  // namespace edisc
