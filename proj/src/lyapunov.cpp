#include "fbcl/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fbcl/errors.hpp"

namespace fbcl {

namespace {

void check_weights(const GridState& s, const Eigen::VectorXd& w) {
  if (w.size() != s.components()) throw DimensionError("weight vector does not match n");
  if (!(w.array() > 0.0).all()) throw DomainError("weights must be positive");
}

double cell_dx(const GridState& s) { return 1.0 / s.cells(); }

}  // namespace

double v_l1(const GridState& s, const Eigen::VectorXd& p, double mu) {
  check_weights(s, p);
  const double dx = cell_dx(s);
  double total = 0.0;
  for (int j = 0; j < s.cells(); ++j) {
    const double wx = std::exp(-mu * (j + 0.5) * dx);
    for (int i = 0; i < s.components(); ++i) total += p(i) * wx * std::abs(s.values(i, j));
  }
  return dx * total;
}

double v_l1_h(const GridState& s, const Eigen::VectorXd& p, double mu,
              std::span<const HTransform> h) {
  check_weights(s, p);
  if (static_cast<int>(h.size()) != s.components()) throw DimensionError("need one h per component");
  const double dx = cell_dx(s);
  double total = 0.0;
  for (int j = 0; j < s.cells(); ++j) {
    const double wx = std::exp(-mu * (j + 0.5) * dx);
    for (int i = 0; i < s.components(); ++i) {
      const double u = s.values(i, j);
      if (u != 0.0) total += p(i) * wx * std::abs(h[static_cast<std::size_t>(i)](u));
    }
  }
  return dx * total;
}

double v_linf(const GridState& s, const Eigen::VectorXd& delta, double nu) {
  check_weights(s, delta);
  const double dx = cell_dx(s);
  double best = 0.0;
  for (int j = 0; j < s.cells(); ++j) {
    const double wx = std::exp(-nu * (j + 0.5) * dx);
    for (int i = 0; i < s.components(); ++i) {
      best = std::max(best, delta(i) * wx * std::abs(s.values(i, j)));
    }
  }
  return best;
}

double v_l2m(const GridState& s, const Eigen::VectorXd& delta, double nu, int m) {
  check_weights(s, delta);
  if (m < 1) throw DomainError("m must be a positive integer");
  const double dx = cell_dx(s);
  const double two_m = 2.0 * m;
  // log of each term is 2m * (ln Delta_i - nu x_j + ln |u_ij|).
  double peak = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < s.cells(); ++j) {
    for (int i = 0; i < s.components(); ++i) {
      const double u = std::abs(s.values(i, j));
      if (u > 0.0) peak = std::max(peak, two_m * (std::log(delta(i) * u) - nu * (j + 0.5) * dx));
    }
  }
  if (peak == -std::numeric_limits<double>::infinity()) return 0.0;
  double sum = 0.0;
  for (int j = 0; j < s.cells(); ++j) {
    for (int i = 0; i < s.components(); ++i) {
      const double u = std::abs(s.values(i, j));
      if (u > 0.0) {
        sum += std::exp(two_m * (std::log(delta(i) * u) - nu * (j + 0.5) * dx) - peak);
      }
    }
  }
  return std::exp((peak + std::log(sum) + std::log(dx)) / two_m);
}

std::string to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::L1Weighted: return "l1";
    case FunctionalKind::L1HWeighted: return "l1_h";
    case FunctionalKind::LinfWeighted: return "linf";
    case FunctionalKind::L2mWeighted: return "l2m";
  }
  return "unknown";
}

double Functional::operator()(const GridState& s) const {
  switch (kind) {
    case FunctionalKind::L1Weighted: return v_l1(s, weights, rate);
    case FunctionalKind::L1HWeighted: return v_l1_h(s, weights, rate, h);
    case FunctionalKind::LinfWeighted: return v_linf(s, weights, rate);
    case FunctionalKind::L2mWeighted: return v_l2m(s, weights, rate, m);
  }
  return 0.0;
}

nlohmann::json Functional::params() const {
  nlohmann::json j;
  j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  const bool l1 = kind == FunctionalKind::L1Weighted || kind == FunctionalKind::L1HWeighted;
  j[l1 ? "mu" : "nu"] = rate;
  if (kind == FunctionalKind::L2mWeighted) j["m"] = m;
  return j;
}

LyapunovSeries evaluate_series(const Functional& V, std::span<const GridState> trajectory) {
  LyapunovSeries out;
  out.kind = V.kind;
  out.label = to_string(V.kind);
  out.times.reserve(trajectory.size());
  out.values.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    out.times.push_back(s.t);
    out.values.push_back(V(s));
  }
  return out;
}

DecayFit fit_decay(std::span<const double> times, std::span<const double> values, double lo,
                   double hi) {
  if (times.size() != values.size()) throw DimensionError("times and values differ in length");
  if (values.empty()) throw PreconditionError("empty series");
  const double floor = 1e-14 * values.front();
  std::vector<double> ts;
  std::vector<double> ls;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < lo || times[k] > hi) continue;
    if (!(values[k] > 0.0) || values[k] < floor) continue;
    ts.push_back(times[k]);
    ls.push_back(std::log(values[k]));
  }
  if (ts.size() < 5) throw PreconditionError("fewer than 5 usable points in the fit window");
  const double n = static_cast<double>(ts.size());
  double mt = 0.0, ml = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    mt += ts[k];
    ml += ls[k];
  }
  mt /= n;
  ml /= n;
  double stt = 0.0, stl = 0.0, sll = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - mt) * (ts[k] - mt);
    stl += (ts[k] - mt) * (ls[k] - ml);
    sll += (ls[k] - ml) * (ls[k] - ml);
  }
  if (!(stt > 0.0)) throw PreconditionError("fit window holds a single time");
  DecayFit fit;
  fit.slope = stl / stt;
  fit.intercept = ml - fit.slope * mt;
  fit.r2 = sll > 0.0 ? stl * stl / (stt * sll) : 1.0;
  fit.points = ts.size();
  return fit;
}

void fit_default_window(LyapunovSeries& series) {
  if (series.times.empty()) throw PreconditionError("empty series");
  const double T = series.times.back();
  series.window_lo = 0.2 * T;
  series.window_hi = 0.9 * T;
  series.fit = fit_decay(series.times, series.values, series.window_lo, series.window_hi);
}

DecayCheck check_decay(std::span<const double> times, std::span<const double> values,
                       double rate, double rel_tol) {
  if (times.size() != values.size()) throw DimensionError("times and values differ in length");
  DecayCheck out;
  double running_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double w = values[k] * std::exp(rate * times[k]);
    if (k > 0) {
      double growth = 0.0;
      if (running_min > 0.0) {
        growth = w / running_min - 1.0;
      } else if (w > 0.0) {
        growth = std::numeric_limits<double>::infinity();
      }
      out.worst_growth = std::max(out.worst_growth, growth);
    }
    running_min = std::min(running_min, w);
  }
  out.passed = out.worst_growth <= rel_tol;
  return out;
}

bool is_nonincreasing(std::span<const double> values, double tol) {
  if (values.empty()) return true;
  const double slack = tol * values.front();
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[k - 1] + slack) return false;
  }
  return true;
}

int empirical_m0(std::span<const GridState> trajectory, const Eigen::VectorXd& delta, double nu,
                 int m_max) {
  if (m_max < 1) throw DomainError("m_max must be positive");
  std::vector<double> vals(trajectory.size());
  for (int m = m_max; m >= 1; --m) {
    for (std::size_t k = 0; k < trajectory.size(); ++k) vals[k] = v_l2m(trajectory[k], delta, nu, m);
    if (!is_nonincreasing(vals)) return m == m_max ? 0 : m + 1;
  }
  return 1;
}

double empirical_constant(std::span<const double> times, std::span<const double> values,
                          double gamma) {
  if (values.empty() || !(values.front() > 0.0)) return 0.0;
  double c = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    c = std::max(c, values[k] * std::exp(gamma * times[k]) / values.front());
  }
  return c;
}

double linf_equivalence_constant(const Eigen::VectorXd& delta, double nu) {
  return delta.maxCoeff() / (delta.minCoeff() * std::exp(-nu));
}

void write_lyapunov_csv(const std::string& path, std::span<const LyapunovSeries> series) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  std::fputs("series,t,V,lnV\n", f);
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      const double v = s.values[k];
      if (v > 0.0) {
        std::fprintf(f, "%s,%.17g,%.17g,%.17g\n", s.label.c_str(), s.times[k], v, std::log(v));
      } else {
        std::fprintf(f, "%s,%.17g,%.17g,-inf\n", s.label.c_str(), s.times[k], v);
      }
    }
  }
  std::fclose(f);
}

}  // namespace fbcl
