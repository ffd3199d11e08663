#pragma once

// Observational data on a shared time grid, CSV input/output and numerical
// differentiation (central differences, local quadratic smoothing, cubic
// spline).

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edisc/error.hpp"

namespace edisc {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                        s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(trim(s.substr(start)));
      break;
    }
    out.emplace_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

/// Named observation channels sampled on one strictly increasing time grid,
/// plus derivative fields keyed by (variable, order). Immutable after
/// construction; operations return new DataSets.
class DataSet {
 public:
  using DerivativeKey = std::pair<std::string, int>;

  DataSet(std::vector<double> grid, std::vector<std::string> names,
          std::vector<std::vector<double>> channels, std::string axis = "t")
      : axis_(std::move(axis)), grid_(std::move(grid)), names_(std::move(names)) {
    if (names_.size() != channels.size())
      throw ValidationError("channel names and channel data differ in count");
    if (grid_.size() < 3) throw ValidationError("data grid needs at least 3 points");
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!std::isfinite(grid_[i]))
        throw ValidationError("non-finite grid value at index " + std::to_string(i));
      if (i > 0 && !(grid_[i] > grid_[i - 1]))
        throw ValidationError("grid is not strictly increasing at index " +
                              std::to_string(i));
    }
    for (std::size_t c = 0; c < names_.size(); ++c) {
      check_sequence(channels[c], names_[c]);
      for (std::size_t d = 0; d < c; ++d)
        if (names_[d] == names_[c]) throw ValidationError("duplicate channel " + names_[c]);
      derivatives_[{names_[c], 0}] = std::move(channels[c]);
    }
  }

  const std::string& axis() const noexcept { return axis_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<std::string>& variables() const noexcept { return names_; }
  std::size_t size() const noexcept { return grid_.size(); }

  bool has_variable(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
  }

  const std::vector<double>& channel(std::string_view name) const {
    return derivative(name, 0);
  }

  bool has_derivative(std::string_view name, int order) const {
    return derivatives_.count({std::string(name), order}) > 0;
  }

  /// Order 0 is the channel itself.
  const std::vector<double>& derivative(std::string_view name, int order) const {
    auto it = derivatives_.find({std::string(name), order});
    if (it == derivatives_.end())
      throw EvaluationError("no derivative of order " + std::to_string(order) +
                            " for variable '" + std::string(name) + "'");
    return it->second;
  }

  const std::map<DerivativeKey, std::vector<double>>& fields() const noexcept {
    return derivatives_;
  }

  DataSet with_derivative(std::string_view name, int order,
                          std::vector<double> values) const {
    if (order < 1) throw ValidationError("derivative order must be >= 1");
    if (!has_variable(name))
      throw ValidationError("unknown variable '" + std::string(name) + "'");
    check_sequence(values, std::string(name));
    DataSet copy = *this;
    copy.derivatives_[{std::string(name), order}] = std::move(values);
    return copy;
  }

 private:
  void check_sequence(const std::vector<double>& v, const std::string& name) const {
    if (v.size() != grid_.size())
      throw ValidationError("sequence '" + name + "' has length " + std::to_string(v.size()) +
                            ", grid has " + std::to_string(grid_.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i]))
        throw ValidationError("non-finite value in '" + name + "' at index " +
                              std::to_string(i));
  }

  std::string axis_;
  std::vector<double> grid_;
  std::vector<std::string> names_;
  std::map<DerivativeKey, std::vector<double>> derivatives_;
};

/// Reads `time_column` and `value_columns` from a CSV file with a header row.
/// Channels are named by `variable_names` when given, else by the column names.
inline DataSet load_csv(const std::string& path, const std::string& time_column,
                        const std::vector<std::string>& value_columns,
                        const std::vector<std::string>& variable_names = {}) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open data file '" + path + "'");
  if (!variable_names.empty() && variable_names.size() != value_columns.size())
    throw LoadError("variable name count does not match value column count");

  std::string line;
  if (!std::getline(in, line)) throw LoadError("data file '" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split(line, ',');
  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw LoadError("column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t tcol = column_index(time_column);
  std::vector<std::size_t> vcols;
  for (const auto& c : value_columns) vcols.push_back(column_index(c));

  std::vector<double> grid;
  std::vector<std::vector<double>> channels(vcols.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split(line, ',');
    auto cell = [&](std::size_t col, const std::string& name) {
      if (col >= cells.size())
        throw ParseError("row " + std::to_string(row) + ": missing cell for column '" +
                             name + "'",
                         row);
      auto v = parse_number(cells[col]);
      if (!v)
        throw ParseError("row " + std::to_string(row) + ": non-numeric cell '" +
                             cells[col] + "' in column '" + name + "'",
                         row);
      return *v;
    };
    grid.push_back(cell(tcol, time_column));
    for (std::size_t k = 0; k < vcols.size(); ++k)
      channels[k].push_back(cell(vcols[k], value_columns[k]));
  }
  return DataSet(std::move(grid), variable_names.empty() ? value_columns : variable_names,
                 std::move(channels));
}

/// Writes grid and channels (not derivatives) with shortest round-trip
/// number formatting.
inline void write_csv(const DataSet& data, std::ostream& out,
                      const std::string& time_column = "t",
                      const std::vector<std::string>& column_names = {}) {
  const auto& names = column_names.empty() ? data.variables() : column_names;
  out << time_column;
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_number(data.grid()[i]);
    for (const auto& v : data.variables()) out << ',' << format_number(data.channel(v)[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Differentiation

enum class DiffMethod { central, smoothed, spline };

inline DiffMethod parse_diff_method(std::string_view s) {
  if (s == "central") return DiffMethod::central;
  if (s == "smoothed") return DiffMethod::smoothed;
  if (s == "spline") return DiffMethod::spline;
  throw ConfigError("unknown differentiation method '" + std::string(s) + "'");
}

inline std::string to_string(DiffMethod m) {
  switch (m) {
    case DiffMethod::central: return "central";
    case DiffMethod::smoothed: return "smoothed";
    case DiffMethod::spline: return "spline";
  }
  return "?";
}

struct DiffOptions {
  DiffMethod method = DiffMethod::smoothed;
  int window = 5;     // odd, smoothed method only
  int max_order = 2;  // orders above this are a configuration error
};

/// Interpolating cubic spline with not-a-knot end conditions. Reproduces
/// cubic polynomials exactly.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)), m_(x_.size(), 0.0) {
    const std::size_t n = x_.size();
    if (n != y_.size() || n < 4) throw StencilError("cubic spline needs at least 4 points");
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x_[i + 1] - x_[i];
    // Unknowns M_1..M_{n-2}; M_0 and M_{n-1} eliminated via not-a-knot.
    const std::size_t m = n - 2;
    std::vector<double> a(m, 0.0), b(m, 0.0), c(m, 0.0), r(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = k + 1;
      a[k] = h[i - 1];
      b[k] = 2.0 * (h[i - 1] + h[i]);
      c[k] = h[i];
      r[k] = 6.0 * ((y_[i + 1] - y_[i]) / h[i] - (y_[i] - y_[i - 1]) / h[i - 1]);
    }
    // M_0 = ((h0+h1) M_1 - h0 M_2) / h1
    const double h0 = h[0], h1 = h[1];
    const double hl = h[n - 2], hm = h[n - 3];
    b[0] += a[0] * (h0 + h1) / h1;
    c[0] -= a[0] * h0 / h1;
    b[m - 1] += c[m - 1] * (hl + hm) / hm;
    a[m - 1] -= c[m - 1] * hl / hm;
    a[0] = 0.0;
    c[m - 1] = 0.0;
    // Thomas algorithm.
    for (std::size_t k = 1; k < m; ++k) {
      const double w = a[k] / b[k - 1];
      b[k] -= w * c[k - 1];
      r[k] -= w * r[k - 1];
    }
    std::vector<double> sol(m);
    sol[m - 1] = r[m - 1] / b[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) sol[k] = (r[k] - c[k] * sol[k + 1]) / b[k];
    for (std::size_t k = 0; k < m; ++k) m_[k + 1] = sol[k];
    m_[0] = ((h0 + h1) * m_[1] - h0 * m_[2]) / h1;
    m_[n - 1] = ((hl + hm) * m_[n - 2] - hl * m_[n - 3]) / hm;
  }

  /// Value (order 0) or derivative (order 1..3) at an arbitrary point; points
  /// outside the knot range extrapolate the end pieces.
  double operator()(double t, int order = 0) const {
    const std::size_t n = x_.size();
    std::size_t i = 0;
    if (t >= x_[n - 1]) {
      i = n - 2;
    } else if (t > x_[0]) {
      i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) - 1;
    }
    const double h = x_[i + 1] - x_[i];
    const double A = (x_[i + 1] - t) / h, B = (t - x_[i]) / h;
    const double Mi = m_[i], Mj = m_[i + 1];
    switch (order) {
      case 0:
        return A * y_[i] + B * y_[i + 1] +
               ((A * A * A - A) * Mi + (B * B * B - B) * Mj) * h * h / 6.0;
      case 1:
        return (y_[i + 1] - y_[i]) / h - (3.0 * A * A - 1.0) / 6.0 * h * Mi +
               (3.0 * B * B - 1.0) / 6.0 * h * Mj;
      case 2: return A * Mi + B * Mj;
      case 3: return (Mj - Mi) / h;
      default: return 0.0;
    }
  }

  const std::vector<double>& knots() const noexcept { return x_; }

 private:
  std::vector<double> x_, y_, m_;
};

namespace detail {

// Derivative at x[at] of the quadratic through points i0, i0+1, i0+2.
inline double lagrange3_first(const std::vector<double>& x, const std::vector<double>& y,
                              std::size_t i0, std::size_t at) {
  const double x0 = x[i0], x1 = x[i0 + 1], x2 = x[i0 + 2], t = x[at];
  const double l0 = ((t - x1) + (t - x2)) / ((x0 - x1) * (x0 - x2));
  const double l1 = ((t - x0) + (t - x2)) / ((x1 - x0) * (x1 - x2));
  const double l2 = ((t - x0) + (t - x1)) / ((x2 - x0) * (x2 - x1));
  return l0 * y[i0] + l1 * y[i0 + 1] + l2 * y[i0 + 2];
}

inline std::vector<double> central_first(const std::vector<double>& x,
                                         const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> d(n);
  d[0] = lagrange3_first(x, y, 0, 0);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = lagrange3_first(x, y, i - 1, i);
  d[n - 1] = lagrange3_first(x, y, n - 3, n - 1);
  return d;
}

// Solves a 3x3 system in place by Gaussian elimination with partial pivoting.
inline std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    if (m[col][col] == 0.0) throw NumericError("singular local fit");
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
    }
  }
  std::array<double, 3> s{};
  for (int r = 2; r >= 0; --r) {
    double acc = m[r][3];
    for (int k = r + 1; k < 3; ++k) acc -= m[r][k] * s[k];
    s[r] = acc / m[r][r];
  }
  return s;
}

inline std::vector<double> smoothed(const std::vector<double>& x, const std::vector<double>& y,
                                    int window, int order) {
  const std::size_t n = x.size(), w = static_cast<std::size_t>(window), half = w / 2;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i >= half ? i - half : 0;
    if (lo + w > n) lo = n - w;
    // Fit y ~ c0 + c1 s + c2 s^2 with s = x - x_i.
    double S[5] = {0, 0, 0, 0, 0}, T[3] = {0, 0, 0};
    for (std::size_t k = lo; k < lo + w; ++k) {
      const double s = x[k] - x[i];
      double p = 1.0;
      for (int e = 0; e < 5; ++e) {
        S[e] += p;
        if (e < 3) T[e] += p * y[k];
        p *= s;
      }
    }
    auto c = solve3({{{S[0], S[1], S[2], T[0]}, {S[1], S[2], S[3], T[1]},
                      {S[2], S[3], S[4], T[2]}}});
    d[i] = order == 1 ? c[1] : 2.0 * c[2];
  }
  return d;
}

}  // namespace detail

/// Derivative of `values` sampled on `grid`.
inline std::vector<double> differentiate_values(const std::vector<double>& grid,
                                                const std::vector<double>& values, int order,
                                                const DiffOptions& opt) {
  if (order < 1) throw ConfigError("derivative order must be positive");
  if (order > opt.max_order)
    throw ConfigError("derivative order " + std::to_string(order) +
                      " exceeds configured maximum " + std::to_string(opt.max_order));
  const std::size_t n = grid.size();
  if (n < static_cast<std::size_t>(2 * order + 1))
    throw StencilError("grid of length " + std::to_string(n) + " too short for order " +
                       std::to_string(order) + " stencil");
  switch (opt.method) {
    case DiffMethod::central: {
      std::vector<double> d = values;
      for (int k = 0; k < order; ++k) d = detail::central_first(grid, d);
      return d;
    }
    case DiffMethod::smoothed: {
      if (opt.window < 3 || opt.window % 2 == 0)
        throw ConfigError("smoothing window must be odd and >= 3");
      if (order > 2) throw ConfigError("local quadratic fit supports orders 1 and 2 only");
      if (n < static_cast<std::size_t>(opt.window))
        throw StencilError("grid of length " + std::to_string(n) + " shorter than window " +
                           std::to_string(opt.window));
      return detail::smoothed(grid, values, opt.window, order);
    }
    case DiffMethod::spline: {
      if (order > 2) throw ConfigError("spline differentiation supports orders 1 and 2 only");
      if (n < 4) throw StencilError("spline differentiation needs at least 4 points");
      CubicSpline s(grid, values);
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = s(grid[i], order);
      return d;
    }
  }
  return {};
}

/// Returns a copy of `data` with the (variable, order) derivative added.
inline DataSet differentiate(const DataSet& data, const std::string& variable, int order,
                             const DiffOptions& opt = {}) {
  if (!data.has_variable(variable))
    throw ValidationError("unknown variable '" + variable + "'");
  return data.with_derivative(variable, order,
                              differentiate_values(data.grid(), data.channel(variable), order,
                                                   opt));
}

/// Adds derivatives of orders 1..max_order for every channel.
inline DataSet with_all_derivatives(const DataSet& data, const DiffOptions& opt) {
  DataSet out = data;
  for (const auto& v : data.variables())
    for (int k = 1; k <= opt.max_order; ++k) out = differentiate(out, v, k, opt);
  return out;
}

/// Sample standard deviation (n-1 denominator).
inline double sample_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct Normalized {
  DataSet data;
  std::map<std::string, double> factors;  // channel divided by factor
};

/// Dispersion normalization: every field of a channel divided by the
/// channel's sample standard deviation.
inline Normalized normalize(const DataSet& data) {
  std::map<std::string, double> factors;
  std::vector<std::vector<double>> channels;
  for (const auto& v : data.variables()) {
    double s = sample_std(data.channel(v));
    if (!(s > 0.0)) s = 1.0;
    factors[v] = s;
    auto c = data.channel(v);
    for (auto& x : c) x /= s;
    channels.push_back(std::move(c));
  }
  DataSet out(data.grid(), data.variables(), std::move(channels), data.axis());
  for (const auto& [key, values] : data.fields()) {
    if (key.second == 0) continue;
    auto c = values;
    for (auto& x : c) x /= factors[key.first];
    out = out.with_derivative(key.first, key.second, std::move(c));
  }
  return {std::move(out), std::move(factors)};
}

}  // namespace edisc
