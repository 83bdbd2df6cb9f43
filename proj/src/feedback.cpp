#include "fbcl/feedback.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "fbcl/errors.hpp"

namespace fbcl {

// ----------------------------------------------------------------- ScalarMap

ScalarMap ScalarMap::linear(double gain) {
  ScalarMap g;
  g.kind_ = Kind::Linear;
  g.gain_ = gain;
  g.lip_ = std::abs(gain);
  return g;
}

ScalarMap ScalarMap::tanh(double gain) {
  ScalarMap g;
  g.kind_ = Kind::Tanh;
  g.gain_ = gain;
  g.lip_ = std::abs(gain);
  return g;
}

ScalarMap ScalarMap::saturation(double gain, double limit) {
  if (!(limit > 0.0)) throw DomainError("saturation limit must be positive");
  ScalarMap g;
  g.kind_ = Kind::Saturation;
  g.gain_ = gain;
  g.limit_ = limit;
  g.lip_ = std::abs(gain);
  return g;
}

ScalarMap ScalarMap::table(std::vector<double> knots, std::vector<double> values) {
  if (knots.size() != values.size() || knots.size() < 2) {
    throw DimensionError("table map needs matching knots/values with at least 2 entries");
  }
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (!(knots[k] > knots[k - 1])) throw DomainError("table knots must be strictly increasing");
  }
  ScalarMap g;
  g.kind_ = Kind::Table;
  g.knots_ = std::move(knots);
  g.values_ = std::move(values);
  for (std::size_t k = 1; k < g.knots_.size(); ++k) {
    const double slope = (g.values_[k] - g.values_[k - 1]) / (g.knots_[k] - g.knots_[k - 1]);
    g.lip_ = std::max(g.lip_, std::abs(slope));
  }
  return g;
}

double ScalarMap::operator()(double y) const {
  switch (kind_) {
    case Kind::Linear: return gain_ * y;
    case Kind::Tanh: return gain_ * std::tanh(y);
    case Kind::Saturation: return std::clamp(gain_ * y, -limit_, limit_);
    case Kind::Table: {
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), y);
      std::size_t k = static_cast<std::size_t>(it - knots_.begin());
      k = std::clamp<std::size_t>(k, 1, knots_.size() - 1);
      const double x0 = knots_[k - 1];
      const double x1 = knots_[k];
      const double s = (y - x0) / (x1 - x0);
      return values_[k - 1] + s * (values_[k] - values_[k - 1]);
    }
  }
  return 0.0;
}

// -------------------------------------------------------------- FeedbackMap

FeedbackMap FeedbackMap::linear(Eigen::MatrixXd K) {
  if (K.rows() != K.cols() || K.rows() == 0) {
    throw DimensionError("feedback matrix must be square and nonempty");
  }
  if (!K.allFinite()) throw DomainError("feedback matrix must be finite");
  FeedbackMap G;
  G.kind_ = Kind::LinearMatrix;
  G.n_ = static_cast<int>(K.rows());
  G.lip_ = induced_norm(K, Norm::Linf);
  G.matrix_ = std::move(K);
  return G;
}

FeedbackMap FeedbackMap::componentwise(Eigen::MatrixXd mixing, std::vector<ScalarMap> maps) {
  if (mixing.rows() != mixing.cols() || mixing.rows() == 0 ||
      static_cast<std::size_t>(mixing.rows()) != maps.size()) {
    throw DimensionError("componentwise feedback needs a square mixing matrix and n maps");
  }
  FeedbackMap G;
  G.kind_ = Kind::ScaledComponentwise;
  G.n_ = static_cast<int>(mixing.rows());
  double lip = 0.0;
  for (int i = 0; i < G.n_; ++i) {
    lip = std::max(lip, maps[static_cast<std::size_t>(i)].lip_const() *
                            mixing.row(i).cwiseAbs().sum());
  }
  G.lip_ = lip;
  G.matrix_ = std::move(mixing);
  G.maps_ = std::move(maps);
  G.check_origin();
  return G;
}

FeedbackMap FeedbackMap::custom(int n, Callable fn, double lip_const) {
  if (n <= 0) throw DimensionError("custom feedback needs n > 0");
  if (!(lip_const >= 0.0)) throw DomainError("Lipschitz constant must be nonnegative");
  FeedbackMap G;
  G.kind_ = Kind::Custom;
  G.n_ = n;
  G.lip_ = lip_const;
  G.custom_ = std::move(fn);
  G.check_origin();
  return G;
}

void FeedbackMap::check_origin() const {
  const Eigen::VectorXd g0 = (*this)(Eigen::VectorXd::Zero(n_));
  if (g0.lpNorm<Eigen::Infinity>() != 0.0) {
    throw DomainError("feedback map must satisfy G(0) = 0");
  }
}

Eigen::VectorXd FeedbackMap::operator()(const Eigen::VectorXd& y) const {
  if (y.size() != n_) {
    throw DimensionError("feedback input has size " + std::to_string(y.size()) +
                         ", expected " + std::to_string(n_));
  }
  switch (kind_) {
    case Kind::LinearMatrix: return matrix_ * y;
    case Kind::ScaledComponentwise: {
      Eigen::VectorXd z = matrix_ * y;
      for (int i = 0; i < n_; ++i) z(i) = maps_[static_cast<std::size_t>(i)](z(i));
      return z;
    }
    case Kind::Custom: {
      Eigen::VectorXd z = custom_(y);
      if (z.size() != n_) throw DimensionError("custom feedback returned the wrong size");
      return z;
    }
  }
  return y;
}

Eigen::MatrixXd FeedbackMap::jacobian_at_zero() const {
  if (kind_ == Kind::LinearMatrix) return matrix_;
  constexpr double h = 1e-6;
  Eigen::MatrixXd J(n_, n_);
  for (int j = 0; j < n_; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_);
    e(j) = h;
    J.col(j) = ((*this)(e) - (*this)(-e)) / (2.0 * h);
  }
  return J;
}

// ------------------------------------------------------------- certificates

Box Box::symmetric(int n, double radius) {
  return Box{Eigen::VectorXd::Constant(n, -radius), Eigen::VectorXd::Constant(n, radius)};
}

std::string to_string(Condition c) {
  switch (c) {
    case Condition::CondStab: return "condstab";
    case Condition::CondStabL1Weighted: return "condstab_l1";
    case Condition::CondStabLinfWeighted: return "condstab_linf";
  }
  return "unknown";
}

std::string to_string(Verdict v) {
  return v == Verdict::PassSampled ? "PassSampled" : "FailWithWitness";
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double radical_inverse(std::size_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

constexpr std::array<unsigned, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

void validate_box(const Box& box, int n) {
  if (box.lo.size() != n || box.hi.size() != n) {
    throw DimensionError("certification box does not match the feedback dimension");
  }
  bool nonempty = false;
  for (int i = 0; i < n; ++i) {
    if (!(box.lo(i) <= box.hi(i))) throw DomainError("empty certification box");
    nonempty = nonempty || box.lo(i) < box.hi(i);
  }
  if (!nonempty) throw DomainError("empty certification box");
}

void validate_rate(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("rate mu must be positive");
}

void validate_weights(const Eigen::VectorXd& w, int n) {
  if (w.size() != n) throw DimensionError("weight vector does not match the dimension");
  if (!(w.array() > 0.0).all()) throw DomainError("weights must be positive");
}

template <typename MarginFn>
Certificate run_sampled_check(Condition cond, const Box& box, std::size_t samples, double mu,
                              const Eigen::VectorXd& weights, MarginFn&& margin) {
  Certificate cert;
  cert.condition = cond;
  cert.mu = mu;
  cert.weights = weights;
  cert.box = box;
  double worst = std::numeric_limits<double>::infinity();
  Eigen::VectorXd worst_point;
  const auto points = sample_box(box, samples);
  for (const auto& y : points) {
    const double m = margin(y);
    if (m < worst) {
      worst = m;
      worst_point = y;
    }
  }
  cert.samples = points.size();
  cert.min_margin = worst;
  if (worst < -kMarginTolerance) {
    cert.verdict = Verdict::FailWithWitness;
    cert.witness = worst_point;
  }
  return cert;
}

}  // namespace

nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["condition"] = to_string(c.condition);
  j["verdict"] = to_string(c.verdict);
  j["witness"] = c.witness ? nlohmann::json(to_std(*c.witness)) : nlohmann::json(nullptr);
  j["params"] = {{"mu", c.mu}, {"weights", to_std(c.weights)}};
  j["box"] = {{"lo", to_std(c.box.lo)}, {"hi", to_std(c.box.hi)}};
  j["samples"] = c.samples;
  j["min_margin"] = c.min_margin;
  return j;
}

std::vector<Eigen::VectorXd> sample_box(const Box& box, std::size_t samples) {
  const int n = box.size();
  if (n > static_cast<int>(kPrimes.size())) throw DimensionError("box dimension too large for sampling");
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(samples + (std::size_t{1} << std::min(n, 20)) + 2 * static_cast<std::size_t>(n));
  auto push = [&](const Eigen::VectorXd& y) {
    if (y.lpNorm<Eigen::Infinity>() > 0.0) pts.push_back(y);
  };
  const Eigen::VectorXd width = box.hi - box.lo;
  for (std::size_t k = 1; k <= samples; ++k) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      y(i) = box.lo(i) + width(i) * radical_inverse(k, kPrimes[static_cast<std::size_t>(i)]);
    }
    push(y);
  }
  if (n <= 20) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) y(i) = (mask >> i) & 1U ? box.hi(i) : box.lo(i);
      push(y);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (double v : {box.lo(i), box.hi(i)}) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
      y(i) = v;
      push(y);
    }
  }
  return pts;
}

double condstab_margin(std::span<const Flux> fluxes, const FeedbackMap& G,
                       const Eigen::VectorXd& p, double mu, const Eigen::VectorXd& y) {
  const Eigen::VectorXd g = G(y);
  const double decay = std::exp(-mu);
  double total = 0.0;
  for (std::size_t i = 0; i < fluxes.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double f0 = fluxes[i](0.0);
    total += p(ii) * (std::abs(fluxes[i](y(ii)) - f0) * decay - std::abs(fluxes[i](g(ii)) - f0));
  }
  return total;
}

double contraction_margin(const FeedbackMap& G, const Eigen::VectorXd& delta, double mu,
                          Norm norm, const Eigen::VectorXd& z) {
  const Eigen::VectorXd dz = delta.cwiseProduct(z);
  const Eigen::VectorXd dg = delta.cwiseProduct(G(z));
  if (norm == Norm::L1) return std::exp(-mu) * dz.lpNorm<1>() - dg.lpNorm<1>();
  return std::exp(-mu) * dz.lpNorm<Eigen::Infinity>() - dg.lpNorm<Eigen::Infinity>();
}

Certificate check_condstab(std::span<const Flux> fluxes, const FeedbackMap& G,
                           const Eigen::VectorXd& p, double mu, const Box& box,
                           std::size_t samples) {
  const int n = G.size();
  if (static_cast<int>(fluxes.size()) != n) throw DimensionError("flux count does not match G");
  validate_weights(p, n);
  validate_rate(mu);
  validate_box(box, n);
  return run_sampled_check(Condition::CondStab, box, samples, mu, p, [&](const Eigen::VectorXd& y) {
    return condstab_margin(fluxes, G, p, mu, y);
  });
}

Certificate check_weighted_contraction(const FeedbackMap& G, const Eigen::VectorXd& delta,
                                       double mu, Norm norm, const Box& box,
                                       std::size_t samples) {
  const int n = G.size();
  validate_weights(delta, n);
  validate_rate(mu);
  validate_box(box, n);
  const Condition cond =
      norm == Norm::L1 ? Condition::CondStabL1Weighted : Condition::CondStabLinfWeighted;
  return run_sampled_check(cond, box, samples, mu, delta, [&](const Eigen::VectorXd& z) {
    return contraction_margin(G, delta, mu, norm, z);
  });
}

double largest_certified_rate(const std::function<bool(double)>& passes, double tol,
                              double mu_cap) {
  if (!passes(tol)) return 0.0;
  double lo = tol;
  double hi = 1.0;
  while (passes(hi)) {
    lo = hi;
    if (hi >= mu_cap) return mu_cap;
    hi = std::min(2.0 * hi, mu_cap);
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (passes(mid) ? lo : hi) = mid;
  }
  return lo;
}

// ---------------------------------------------------------------------- rho

double induced_norm(const Eigen::MatrixXd& K, Norm p) {
  if (K.size() == 0) return 0.0;
  if (p == Norm::Linf) return K.cwiseAbs().rowwise().sum().maxCoeff();
  return K.cwiseAbs().colwise().sum().maxCoeff();
}

double scaled_norm(const Eigen::MatrixXd& K, const Eigen::VectorXd& delta, Norm p) {
  if (delta.size() != K.rows()) throw DimensionError("scaling does not match matrix size");
  const Eigen::MatrixXd S = delta.asDiagonal() * K * delta.cwiseInverse().asDiagonal();
  return induced_norm(S, p);
}

namespace {

// max over groups of sum_t c_t exp(x_a - x_b), evaluated in log form.
class ScaledNormObjective {
 public:
  ScaledNormObjective(const Eigen::MatrixXd& K, Norm p) : n_(static_cast<int>(K.rows())) {
    groups_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const double c = std::abs(K(i, j));
        if (c == 0.0) continue;
        const int g = p == Norm::Linf ? i : j;
        groups_[static_cast<std::size_t>(g)].push_back({std::log(c), i, j});
      }
    }
    std::erase_if(groups_, [](const auto& g) { return g.empty(); });
  }

  bool trivial() const { return groups_.empty(); }

  // Full log-coordinates x (x[0] == 0).
  std::vector<double> group_logs(const std::vector<double>& x) const {
    std::vector<double> out;
    out.reserve(groups_.size());
    for (const auto& g : groups_) {
      double m = -std::numeric_limits<double>::infinity();
      for (const auto& t : g) m = std::max(m, t.logc + x[static_cast<std::size_t>(t.a)] - x[static_cast<std::size_t>(t.b)]);
      double s = 0.0;
      for (const auto& t : g) s += std::exp(t.logc + x[static_cast<std::size_t>(t.a)] - x[static_cast<std::size_t>(t.b)] - m);
      out.push_back(m + std::log(s));
    }
    return out;
  }

  double log_max(const std::vector<double>& x) const {
    const auto logs = group_logs(x);
    return *std::max_element(logs.begin(), logs.end());
  }

  double log_smooth(const std::vector<double>& x, double temperature) const {
    const auto logs = group_logs(x);
    const double m = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double l : logs) s += std::exp((l - m) / temperature);
    return m + temperature * std::log(s);
  }

  int size() const { return n_; }

 private:
  struct Term {
    double logc;
    int a;
    int b;
  };
  int n_;
  std::vector<std::vector<Term>> groups_;
};

constexpr double kLogBound = 40.0;

template <typename F>
double golden_minimize(F&& f, double a, double b, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Nelder-Mead on the free coordinates x[1..n-1].
void nelder_mead(const ScaledNormObjective& obj, std::vector<double>& x, double step) {
  const int dim = obj.size() - 1;
  auto eval = [&](const Eigen::VectorXd& v) {
    std::vector<double> full(static_cast<std::size_t>(dim + 1), 0.0);
    for (int k = 0; k < dim; ++k) full[static_cast<std::size_t>(k + 1)] = std::clamp(v(k), -kLogBound, kLogBound);
    return obj.log_max(full);
  };
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(dim + 1), Eigen::VectorXd(dim));
  for (int k = 0; k < dim; ++k) simplex[0](k) = x[static_cast<std::size_t>(k + 1)];
  for (int v = 1; v <= dim; ++v) {
    simplex[static_cast<std::size_t>(v)] = simplex[0];
    simplex[static_cast<std::size_t>(v)](v - 1) += step;
  }
  std::vector<double> vals(simplex.size());
  for (std::size_t v = 0; v < simplex.size(); ++v) vals[v] = eval(simplex[v]);

  for (int iter = 0; iter < 20000; ++iter) {
    std::vector<std::size_t> order(simplex.size());
    for (std::size_t v = 0; v < order.size(); ++v) order[v] = v;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& s : simplex) size = std::max(size, (s - simplex[best]).lpNorm<Eigen::Infinity>());
    if (size < 1e-14 || vals[worst] - vals[best] < 1e-16) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t v = 0; v < simplex.size(); ++v) {
      if (v != worst) centroid += simplex[v];
    }
    centroid /= dim;
    const Eigen::VectorXd refl = centroid + (centroid - simplex[worst]);
    const double frefl = eval(refl);
    if (frefl < vals[best]) {
      const Eigen::VectorXd exp = centroid + 2.0 * (centroid - simplex[worst]);
      const double fexp = eval(exp);
      if (fexp < frefl) {
        simplex[worst] = exp;
        vals[worst] = fexp;
      } else {
        simplex[worst] = refl;
        vals[worst] = frefl;
      }
    } else if (frefl < vals[second]) {
      simplex[worst] = refl;
      vals[worst] = frefl;
    } else {
      const Eigen::VectorXd con = centroid + 0.5 * (simplex[worst] - centroid);
      const double fcon = eval(con);
      if (fcon < vals[worst]) {
        simplex[worst] = con;
        vals[worst] = fcon;
      } else {
        for (std::size_t v = 0; v < simplex.size(); ++v) {
          if (v == best) continue;
          simplex[v] = simplex[best] + 0.5 * (simplex[v] - simplex[best]);
          vals[v] = eval(simplex[v]);
        }
      }
    }
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  const auto& best = simplex[static_cast<std::size_t>(best_it - vals.begin())];
  for (int k = 0; k < dim; ++k) x[static_cast<std::size_t>(k + 1)] = std::clamp(best(k), -kLogBound, kLogBound);
}

}  // namespace

RhoResult rho_p(const Eigen::MatrixXd& K, Norm p) {
  if (K.rows() != K.cols()) throw DimensionError("rho_p needs a square matrix");
  const int n = static_cast<int>(K.rows());
  RhoResult result;
  result.scaling = Eigen::VectorXd::Ones(n);
  if (n == 0) return result;
  const ScaledNormObjective obj(K, p);
  if (obj.trivial()) return result;
  if (n == 1) {
    result.value = std::abs(K(0, 0));
    return result;
  }

  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  double best = obj.log_max(x);
  std::vector<double> best_x = x;

  // Coordinate descent on the smoothed objective with a decreasing temperature.
  for (double temperature = 1.0; temperature > 1e-10; temperature *= 0.2) {
    for (int sweep = 0; sweep < 400; ++sweep) {
      const double before = obj.log_smooth(x, temperature);
      for (int k = 1; k < n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        auto line = [&](double v) {
          const double saved = x[kk];
          x[kk] = v;
          const double val = obj.log_smooth(x, temperature);
          x[kk] = saved;
          return val;
        };
        x[kk] = golden_minimize(line, -kLogBound, kLogBound, 1e-13);
      }
      const double after = obj.log_smooth(x, temperature);
      if (before - after < 1e-15) break;
    }
    const double current = obj.log_max(x);
    if (current < best) {
      best = current;
      best_x = x;
    }
  }

  // Polish on the exact objective.
  for (double step : {1e-2, 1e-4, 1e-6}) {
    std::vector<double> trial = best_x;
    nelder_mead(obj, trial, step);
    const double value = obj.log_max(trial);
    if (value < best) {
      best = value;
      best_x = trial;
    }
  }

  for (int k = 0; k < n; ++k) result.scaling(k) = std::exp(best_x[static_cast<std::size_t>(k)]);
  result.value = scaled_norm(K, result.scaling, p);
  return result;
}

double corollary_rate_bound(std::span<const Flux> fluxes, const FeedbackMap& G) {
  if (static_cast<int>(fluxes.size()) != G.size()) throw DimensionError("flux count does not match G");
  double min_speed = std::numeric_limits<double>::infinity();
  for (const auto& f : fluxes) {
    const double d = f.derivative(0.0);
    if (!(d > 0.0)) throw DomainError("corollary rate bound needs f_i'(0) > 0");
    min_speed = std::min(min_speed, d);
  }
  const double rho = rho_p(G.jacobian_at_zero(), Norm::Linf).value;
  if (rho >= 1.0) return 0.0;
  if (rho == 0.0) return std::numeric_limits<double>::infinity();
  return min_speed * (-std::log(rho));
}

}  // namespace fbcl
