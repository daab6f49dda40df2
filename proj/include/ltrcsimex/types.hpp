#ifndef LTRCSIMEX_TYPES_HPP
#define LTRCSIMEX_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltrcsimex {

// Error taxonomy: invalid inputs (caller bugs / bad files), estimation
// failures (data-dependent, e.g. empty risk set), configuration errors.
class InvalidInputError : public std::runtime_error {
public:
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

class EstimationError : public std::runtime_error {
public:
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// One observed left-truncated right-censored subject.
// y = min(failure time, a + censoring), delta = event indicator,
// a = truncation (entry) time, w = error-prone covariates, z = clean ones.
struct SubjectRecord {
  double y = 0.0;
  int delta = 0;
  double a = 0.0;
  std::vector<double> w;
  std::vector<double> z;

  void validate() const {
    if (!std::isfinite(y) || !std::isfinite(a))
      throw InvalidInputError("SubjectRecord: non-finite y or a");
    if (a < 0.0 || a > y)
      throw InvalidInputError("SubjectRecord: requires 0 <= a <= y, got a=" +
                              std::to_string(a) + ", y=" + std::to_string(y));
    if (delta != 0 && delta != 1)
      throw InvalidInputError("SubjectRecord: delta must be 0 or 1");
    for (double v : w)
      if (!std::isfinite(v)) throw InvalidInputError("SubjectRecord: non-finite w");
    for (double v : z)
      if (!std::isfinite(v)) throw InvalidInputError("SubjectRecord: non-finite z");
  }
};

// Regression coefficients split into the error-prone block (beta_x) and the
// precisely observed block (beta_z).
struct Coefficients {
  std::vector<double> beta_x;
  std::vector<double> beta_z;

  Coefficients() = default;
  Coefficients(std::vector<double> bx, std::vector<double> bz)
      : beta_x(std::move(bx)), beta_z(std::move(bz)) {}

  std::size_t size() const { return beta_x.size() + beta_z.size(); }

  std::vector<double> concat() const {
    std::vector<double> out(beta_x);
    out.insert(out.end(), beta_z.begin(), beta_z.end());
    return out;
  }

  static Coefficients split(const std::vector<double>& beta, std::size_t p_x) {
    if (p_x > beta.size())
      throw InvalidInputError("Coefficients::split: p_x exceeds length");
    return Coefficients(std::vector<double>(beta.begin(), beta.begin() + p_x),
                        std::vector<double>(beta.begin() + p_x, beta.end()));
  }
};

// Right-continuous piecewise-constant cumulative function.
// value before the first time is 0; F(t) = values[max{i : times[i] <= t}].
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  StepFunction() = default;
  StepFunction(std::vector<double> t, std::vector<double> v)
      : times(std::move(t)), values(std::move(v)) {
    if (times.size() != values.size())
      throw InvalidInputError("StepFunction: times/values length mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1]))
        throw InvalidInputError("StepFunction: times must be strictly increasing");
  }

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  std::size_t size() const { return times.size(); }

  // Jump mass at each time (values differenced against the previous level).
  std::vector<double> increments() const {
    std::vector<double> inc(values.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      inc[i] = values[i] - prev;
      prev = values[i];
    }
    return inc;
  }

  double total() const { return values.empty() ? 0.0 : values.back(); }

  // Valid (sub-)distribution function check: nondecreasing, within [0,1].
  bool is_cdf(double tol = 0.0) const {
    double prev = 0.0;
    for (double v : values) {
      if (v < prev - tol || v < -tol || v > 1.0 + tol) return false;
      prev = v;
    }
    return true;
  }
};

struct Dataset {
  std::vector<SubjectRecord> subjects;
  std::size_t p_x = 0;
  std::size_t p_z = 0;

  std::size_t n() const { return subjects.size(); }
  std::size_t p() const { return p_x + p_z; }

  void validate() const {
    if (subjects.empty()) throw InvalidInputError("Dataset: n >= 1 required");
    for (const auto& s : subjects) {
      s.validate();
      if (s.w.size() != p_x || s.z.size() != p_z)
        throw InvalidInputError("Dataset: inconsistent covariate dimensions");
    }
  }
};

// Survivor function of the additive hazards model,
// S(t|v) = exp{-Lambda0(t) - eta t} with the total cumulative hazard
// floored at 0 so that S stays in (0, 1].
inline double additive_survivor(double t, double eta, double cum_baseline_at_t) {
  if (!std::isfinite(t) || !std::isfinite(eta) || !std::isfinite(cum_baseline_at_t))
    throw InvalidInputError("additive_survivor: non-finite input");
  if (t < 0.0) throw InvalidInputError("additive_survivor: t < 0");
  double arg = cum_baseline_at_t + eta * t;
  if (arg < 0.0) arg = 0.0;
  return std::exp(-arg);
}

// At-risk indicator adjusted for left truncation: I(a <= t <= y).
inline int at_risk(const SubjectRecord& s, double t) {
  return (s.a <= t && t <= s.y) ? 1 : 0;
}

// Counting process of observed failures: delta * I(y <= t).
inline int counting(const SubjectRecord& s, double t) {
  return (s.delta == 1 && s.y <= t) ? 1 : 0;
}

}  // namespace ltrcsimex

#endif
