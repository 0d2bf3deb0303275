#include "voxnav/trajectory_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace voxnav {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- control values ---------------------------------------------------------
// Per axis a spline piece is determined by its boundary states (p, v, a) at
// the start, (P, V, A) at the end, and its duration T. The control points of
// the value, velocity, and acceleration curves are closed-form in those
// seven scalars, which is what makes a first-order method practical here:
// every constrained quantity has a cheap exact gradient.

enum Kind : int {
  kP0, kP1, kP2, kP3, kP4, kP5,  // position control points, bounded by the box
  kV0, kV1, kV2, kV3, kV4,       // velocity control points, bounded by v_max
  kA0, kA1, kA2, kA3,            // acceleration control points, bounded by a_max
  kKindCount,
  kDurationFloor = kKindCount,   // T itself, bounded below by t_min
};

enum Slot : int { kSlotP, kSlotV, kSlotA, kSlotP1, kSlotV1, kSlotA1, kSlotT, kSlotCount };

struct Partials {
  double d[kSlotCount] = {0, 0, 0, 0, 0, 0, 0};
};

// Which boundary-state slots a control value structurally reads.
unsigned slot_mask(int kind) {
  constexpr unsigned P = 1u << kSlotP, V = 1u << kSlotV, A = 1u << kSlotA,
                     P1 = 1u << kSlotP1, V1 = 1u << kSlotV1, A1 = 1u << kSlotA1,
                     T = 1u << kSlotT;
  switch (kind) {
    case kP0: return P;
    case kP1: return P | V | T;
    case kP2: return P | V | A | T;
    case kP3: return P1 | V1 | A1 | T;
    case kP4: return P1 | V1 | T;
    case kP5: return P1;
    case kV0: return V;
    case kV1: return V | A | T;
    case kV2:
    case kA1:
    case kA2: return P | V | A | P1 | V1 | A1 | T;
    case kV3: return V1 | A1 | T;
    case kV4: return V1;
    case kA0: return A;
    case kA3: return A1;
    default: return 0;
  }
}

double control_value(int kind, double p, double v, double a, double P, double V,
                     double A, double T) {
  switch (kind) {
    case kP0: return p;
    case kP1: return p + T * v / 5.0;
    case kP2: return p + 2.0 * T * v / 5.0 + T * T * a / 20.0;
    case kP3: return P - 2.0 * T * V / 5.0 + T * T * A / 20.0;
    case kP4: return P - T * V / 5.0;
    case kP5: return P;
    case kV0: return v;
    case kV1: return v + T * a / 4.0;
    case kV2: return 5.0 * (P - p) / T - 2.0 * (V + v) + T * (A - a) / 4.0;
    case kV3: return V - T * A / 4.0;
    case kV4: return V;
    case kA0: return a;
    case kA1: return 20.0 * (P - p) / (T * T) - (8.0 * V + 12.0 * v) / T + A - 2.0 * a;
    case kA2: return -20.0 * (P - p) / (T * T) + (12.0 * V + 8.0 * v) / T + a - 2.0 * A;
    case kA3: return A;
    default: return 0.0;
  }
}

Partials control_partials(int kind, double p, double v, double a, double P, double V,
                          double A, double T) {
  Partials g;
  const double T2 = T * T;
  switch (kind) {
    case kP0: g.d[kSlotP] = 1.0; break;
    case kP1:
      g.d[kSlotP] = 1.0; g.d[kSlotV] = T / 5.0; g.d[kSlotT] = v / 5.0;
      break;
    case kP2:
      g.d[kSlotP] = 1.0; g.d[kSlotV] = 2.0 * T / 5.0; g.d[kSlotA] = T2 / 20.0;
      g.d[kSlotT] = 2.0 * v / 5.0 + T * a / 10.0;
      break;
    case kP3:
      g.d[kSlotP1] = 1.0; g.d[kSlotV1] = -2.0 * T / 5.0; g.d[kSlotA1] = T2 / 20.0;
      g.d[kSlotT] = -2.0 * V / 5.0 + T * A / 10.0;
      break;
    case kP4:
      g.d[kSlotP1] = 1.0; g.d[kSlotV1] = -T / 5.0; g.d[kSlotT] = -V / 5.0;
      break;
    case kP5: g.d[kSlotP1] = 1.0; break;
    case kV0: g.d[kSlotV] = 1.0; break;
    case kV1:
      g.d[kSlotV] = 1.0; g.d[kSlotA] = T / 4.0; g.d[kSlotT] = a / 4.0;
      break;
    case kV2:
      g.d[kSlotP] = -5.0 / T; g.d[kSlotP1] = 5.0 / T;
      g.d[kSlotV] = -2.0; g.d[kSlotV1] = -2.0;
      g.d[kSlotA] = -T / 4.0; g.d[kSlotA1] = T / 4.0;
      g.d[kSlotT] = -5.0 * (P - p) / T2 + (A - a) / 4.0;
      break;
    case kV3:
      g.d[kSlotV1] = 1.0; g.d[kSlotA1] = -T / 4.0; g.d[kSlotT] = -A / 4.0;
      break;
    case kV4: g.d[kSlotV1] = 1.0; break;
    case kA0: g.d[kSlotA] = 1.0; break;
    case kA1:
      g.d[kSlotP] = -20.0 / T2; g.d[kSlotP1] = 20.0 / T2;
      g.d[kSlotV] = -12.0 / T; g.d[kSlotV1] = -8.0 / T;
      g.d[kSlotA] = -2.0; g.d[kSlotA1] = 1.0;
      g.d[kSlotT] = -40.0 * (P - p) / (T2 * T) + (8.0 * V + 12.0 * v) / T2;
      break;
    case kA2:
      g.d[kSlotP] = 20.0 / T2; g.d[kSlotP1] = -20.0 / T2;
      g.d[kSlotV] = 8.0 / T; g.d[kSlotV1] = 12.0 / T;
      g.d[kSlotA] = 1.0; g.d[kSlotA1] = -2.0;
      g.d[kSlotT] = 40.0 * (P - p) / (T2 * T) - (12.0 * V + 8.0 * v) / T2;
      break;
    case kA3: g.d[kSlotA1] = 1.0; break;
    default: break;
  }
  return g;
}

struct Constraint {
  int seg = 0;
  int axis = 0;
  int kind = 0;
  double lower = -kInf;
  double upper = kInf;
  bool in_barrier = true;  // constants are validated once and then skipped
};

// --- the box-constrained waypoint problem -----------------------------------
// Decision vector layout: 9 values per interior/goal waypoint
// (px py pz vx vy vz ax ay az), then one duration per segment. The start
// waypoint is problem data. Pinned entries (goal waypoint, degenerate-box
// coordinates) stay in the vector but are masked out of every search
// direction, so the exposed dimension per axis is exactly 3 per waypoint.
class Problem {
 public:
  Problem(std::vector<Aabb> boxes, std::vector<int> corridor_index, Waypoint start,
          Vec3 goal, Limits limits, double t_min)
      : boxes_(std::move(boxes)),
        corridor_index_(std::move(corridor_index)),
        start_(std::move(start)),
        goal_(std::move(goal)),
        limits_(std::move(limits)),
        t_min_(t_min),
        segments_(static_cast<int>(boxes_.size())),
        n_(10 * segments_),
        free_(n_, true),
        pin_value_(Eigen::VectorXd::Zero(n_)) {}

  int segments() const { return segments_; }
  int size() const { return n_; }
  int wp_index(int waypoint, int deriv, int axis) const {
    return (waypoint - 1) * 9 + deriv * 3 + axis;
  }
  int t_index(int seg) const { return 9 * segments_ + seg; }
  bool is_free(int i) const { return free_[i]; }
  double t_min() const { return t_min_; }
  const std::vector<Aabb>& boxes() const { return boxes_; }
  const std::vector<int>& corridor_index() const { return corridor_index_; }
  const Waypoint& start() const { return start_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }

  void pin(int index, double value) {
    free_[index] = false;
    pin_value_[index] = value;
  }

  // Overwrites pinned entries with their pin values.
  void apply_pins(Eigen::VectorXd& x) const {
    for (int i = 0; i < n_; ++i)
      if (!free_[i]) x[i] = pin_value_[i];
  }

  // Boundary-state slot values of one segment at x.
  void slots(const Eigen::VectorXd& x, int seg, int axis, double out[kSlotCount]) const {
    if (seg == 0) {
      out[kSlotP] = start_.position[axis];
      out[kSlotV] = start_.velocity[axis];
      out[kSlotA] = start_.acceleration[axis];
    } else {
      out[kSlotP] = x[wp_index(seg, 0, axis)];
      out[kSlotV] = x[wp_index(seg, 1, axis)];
      out[kSlotA] = x[wp_index(seg, 2, axis)];
    }
    out[kSlotP1] = x[wp_index(seg + 1, 0, axis)];
    out[kSlotV1] = x[wp_index(seg + 1, 1, axis)];
    out[kSlotA1] = x[wp_index(seg + 1, 2, axis)];
    out[kSlotT] = x[t_index(seg)];
  }

  double constraint_value(const Constraint& c, const Eigen::VectorXd& x) const {
    if (c.kind == kDurationFloor) return x[t_index(c.seg)];
    double s[kSlotCount];
    slots(x, c.seg, c.axis, s);
    return control_value(c.kind, s[kSlotP], s[kSlotV], s[kSlotA], s[kSlotP1],
                         s[kSlotV1], s[kSlotA1], s[kSlotT]);
  }

  // grad += scale * d(constraint)/dx, restricted to free entries.
  void add_constraint_gradient(const Constraint& c, const Eigen::VectorXd& x,
                               double scale, Eigen::VectorXd& grad) const {
    if (c.kind == kDurationFloor) {
      const int ti = t_index(c.seg);
      if (free_[ti]) grad[ti] += scale;
      return;
    }
    double s[kSlotCount];
    slots(x, c.seg, c.axis, s);
    const Partials g = control_partials(c.kind, s[kSlotP], s[kSlotV], s[kSlotA],
                                        s[kSlotP1], s[kSlotV1], s[kSlotA1], s[kSlotT]);
    const auto add = [&](int index, double value) {
      if (value != 0.0 && free_[index]) grad[index] += scale * value;
    };
    if (c.seg > 0) {
      add(wp_index(c.seg, 0, c.axis), g.d[kSlotP]);
      add(wp_index(c.seg, 1, c.axis), g.d[kSlotV]);
      add(wp_index(c.seg, 2, c.axis), g.d[kSlotA]);
    }
    add(wp_index(c.seg + 1, 0, c.axis), g.d[kSlotP1]);
    add(wp_index(c.seg + 1, 1, c.axis), g.d[kSlotV1]);
    add(wp_index(c.seg + 1, 2, c.axis), g.d[kSlotA1]);
    add(t_index(c.seg), g.d[kSlotT]);
  }

  // Builds the constraint list. Constraints whose value cannot change (all
  // inputs fixed or pinned, no residual dependence on the duration) are
  // validated against `eps` immediately; the first violated one is reported.
  bool build_constraints(const Eigen::VectorXd& x, double eps, std::string* error) {
    constraints_.clear();
    constraints_.reserve(static_cast<std::size_t>(segments_) * 46);
    for (int s = 0; s < segments_; ++s) {
      for (int axis = 0; axis < 3; ++axis) {
        for (int kind = 0; kind < kKindCount; ++kind) {
          Constraint c;
          c.seg = s;
          c.axis = axis;
          c.kind = kind;
          if (kind <= kP5) {
            c.lower = boxes_[s].lower[axis];
            c.upper = boxes_[s].upper[axis];
          } else if (kind <= kV4) {
            c.lower = -limits_.v_max[axis];
            c.upper = limits_.v_max[axis];
          } else {
            c.lower = -limits_.a_max[axis];
            c.upper = limits_.a_max[axis];
          }
          if (is_constant(c, x)) {
            const double g = constraint_value(c, x);
            if (g < c.lower - eps || g > c.upper + eps) {
              if (error) {
                std::ostringstream os;
                os << "fixed boundary value violates constraints (segment " << s
                   << ", axis " << axis << ", kind " << kind << ", value " << g
                   << ", bounds [" << c.lower << ", " << c.upper << "])";
                *error = os.str();
              }
              return false;
            }
            c.in_barrier = false;
          }
          constraints_.push_back(c);
        }
      }
      Constraint dur;
      dur.seg = s;
      dur.kind = kDurationFloor;
      dur.lower = t_min_;
      constraints_.push_back(dur);
    }
    return true;
  }

  double objective(const Eigen::VectorXd& x) const {
    double total = 0.0;
    for (int s = 0; s < segments_; ++s) total += x[t_index(s)];
    return total;
  }

  // Worst closed-bound violation over optimizable constraints (constants are
  // checked once at build time and cannot change).
  double max_violation(const Eigen::VectorXd& x) const {
    double worst = 0.0;
    for (const Constraint& c : constraints_) {
      if (!c.in_barrier) continue;
      const double g = constraint_value(c, x);
      worst = std::max(worst, c.lower - g);
      if (std::isfinite(c.upper)) worst = std::max(worst, g - c.upper);
    }
    return worst;
  }

  double segment_violation(const Eigen::VectorXd& x, int seg) const {
    double worst = -kInf;
    for (const Constraint& c : constraints_) {
      if (c.seg != seg) continue;
      const double g = constraint_value(c, x);
      worst = std::max(worst, c.lower - g);
      if (std::isfinite(c.upper)) worst = std::max(worst, g - c.upper);
    }
    return worst;
  }

  // Smallest slack over barrier constraints; the barrier needs it positive.
  double min_slack(const Eigen::VectorXd& x) const {
    double slack = kInf;
    for (const Constraint& c : constraints_) {
      if (!c.in_barrier) continue;
      const double g = constraint_value(c, x);
      slack = std::min(slack, g - c.lower);
      if (std::isfinite(c.upper)) slack = std::min(slack, c.upper - g);
    }
    return slack;
  }

  // Barrier function value and gradient; returns +inf outside the domain.
  double barrier(const Eigen::VectorXd& x, double mu, Eigen::VectorXd* grad) const {
    double value = objective(x);
    if (grad) {
      grad->setZero();
      for (int s = 0; s < segments_; ++s) {
        const int ti = t_index(s);
        if (free_[ti]) (*grad)[ti] += 1.0;
      }
    }
    for (const Constraint& c : constraints_) {
      if (!c.in_barrier) continue;
      const double g = constraint_value(c, x);
      const double lo = g - c.lower;
      if (!(lo > 0.0)) return kInf;
      value += -mu * std::log(lo);
      double coef = -mu / lo;
      if (std::isfinite(c.upper)) {
        const double hi = c.upper - g;
        if (!(hi > 0.0)) return kInf;
        value += -mu * std::log(hi);
        coef += mu / hi;
      }
      if (grad) add_constraint_gradient(c, x, coef, *grad);
    }
    return value;
  }

 private:
  // A constraint is constant when every boundary-state slot its control
  // value actually reads is fixed or pinned and the remaining duration
  // dependence vanishes for those inputs (each control value is a
  // polynomial in T, 1/T, 1/T^2 of total degree at most three, so agreement
  // at three distinct durations settles it). Boundary control values read a
  // single slot, so a waypoint coordinate pinned exactly on a shared box
  // face becomes a validated constant row instead of a permanently
  // zero-slack barrier term that would empty the barrier domain.
  bool is_constant(const Constraint& c, const Eigen::VectorXd& x) const {
    if (c.kind == kDurationFloor) return false;
    const unsigned mask = slot_mask(c.kind);
    for (int deriv = 0; deriv < 3; ++deriv) {
      if ((mask & (1u << (kSlotP + deriv))) && c.seg > 0 &&
          free_[wp_index(c.seg, deriv, c.axis)])
        return false;
      if ((mask & (1u << (kSlotP1 + deriv))) &&
          free_[wp_index(c.seg + 1, deriv, c.axis)])
        return false;
    }
    if (!(mask & (1u << kSlotT))) return true;
    double s[kSlotCount];
    slots(x, c.seg, c.axis, s);
    const auto at = [&](double T) {
      return control_value(c.kind, s[kSlotP], s[kSlotV], s[kSlotA], s[kSlotP1],
                           s[kSlotV1], s[kSlotA1], T);
    };
    const double g1 = at(0.7), g2 = at(1.3), g3 = at(2.9);
    const double scale = 1.0 + std::abs(g1);
    return std::abs(g2 - g1) <= 1e-11 * scale && std::abs(g3 - g1) <= 1e-11 * scale;
  }

  std::vector<Aabb> boxes_;
  std::vector<int> corridor_index_;
  Waypoint start_;
  Vec3 goal_;
  Limits limits_;
  double t_min_;
  int segments_;
  int n_;
  std::vector<bool> free_;
  Eigen::VectorXd pin_value_;
  std::vector<Constraint> constraints_;
};

bool cancelled(const SolveOptions& options) {
  return options.cancel && options.cancel->load(std::memory_order_relaxed);
}

// Diagnostic tracing for solver tuning, enabled by VOXNAV_SOLVER_DEBUG.
bool solver_debug() {
  static const bool on = std::getenv("VOXNAV_SOLVER_DEBUG") != nullptr;
  return on;
}

// Scans durations upward until a segment becomes feasible (closed bounds),
// then optionally bisects down to the feasibility boundary. Returns the
// feasible duration or nothing.
std::optional<double> feasible_duration(const Problem& problem, Eigen::VectorXd& x,
                                        int seg, double hint, bool tighten) {
  const int ti = problem.t_index(seg);
  const double saved = x[ti];
  const auto violation_at = [&](double T) {
    x[ti] = T;
    return problem.segment_violation(x, seg);
  };

  double lo = problem.t_min();          // highest known-infeasible (or floor)
  double hi = -1.0;                     // lowest known-feasible
  const double ceiling = std::max(1e5, 1e4 * std::max(hint, 1.0));
  for (double T = problem.t_min(); T <= ceiling; T *= 1.2) {
    const double v = violation_at(T);
    if (v <= 0.0) {
      hi = T;
      break;
    }
    lo = T;
  }
  double best_T = -1.0, best_v = kInf;
  if (hi < 0.0) {
    // Coarse scan failed; a narrow feasible window can hide between grid
    // points when the boundary states are aggressive. Retry on a fine grid,
    // remembering the least-violating grid point.
    lo = problem.t_min();
    for (double T = problem.t_min(); T <= 1e3; T *= 1.02) {
      const double v = violation_at(T);
      if (v <= 0.0) {
        hi = T;
        break;
      }
      if (v < best_v) {
        best_v = v;
        best_T = T;
      }
      lo = T;
    }
  }
  if (hi < 0.0 && best_T > 0.0) {
    // The window can be narrower than the grid spacing. The worst-violation
    // envelope is smooth between neighboring grid points, so a short
    // ternary search around the best one finds any dip below zero.
    double a = std::max(best_T / 1.02, problem.t_min());
    double b = best_T * 1.02;
    for (int it = 0; it < 90 && b - a > 1e-12 * b; ++it) {
      const double m1 = a + (b - a) / 3.0;
      const double m2 = b - (b - a) / 3.0;
      if (violation_at(m1) < violation_at(m2))
        b = m2;
      else
        a = m1;
    }
    const double mid = 0.5 * (a + b);
    if (violation_at(mid) <= 0.0) {
      hi = mid;
      lo = std::max(best_T / 1.02, problem.t_min());
    }
  }
  if (hi < 0.0) {
    x[ti] = saved;
    return std::nullopt;
  }
  if (tighten && hi > lo) {
    for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (violation_at(mid) <= 0.0)
        hi = mid;
      else
        lo = mid;
    }
    hi = std::max(hi, problem.t_min());
  }
  x[ti] = hi;
  return hi;
}

struct Incumbent {
  bool valid = false;
  Eigen::VectorXd x;
  double objective = kInf;
};

void offer(Incumbent& best, const Problem& problem, const Eigen::VectorXd& x) {
  if (problem.max_violation(x) > 0.0) return;
  const double obj = problem.objective(x);
  if (!best.valid || obj < best.objective) {
    best.valid = true;
    best.x = x;
    best.objective = obj;
  }
}

// Limited-memory BFGS with Armijo backtracking on the barrier function.
// Pinned coordinates never enter the gradient, so they never move.
int lbfgs_minimize(const Problem& problem, Eigen::VectorXd& x, double mu,
                   int max_iterations, const SolveOptions& options) {
  const int n = problem.size();
  Eigen::VectorXd grad(n), next_grad(n);
  double f = problem.barrier(x, mu, &grad);
  if (!std::isfinite(f)) return 0;

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)
  Eigen::VectorXd direction(n), q(n);
  int iterations = 0;

  for (; iterations < max_iterations; ++iterations) {
    if (cancelled(options)) break;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + std::abs(f))) break;

    // Two-loop recursion.
    q = grad;
    std::vector<double> alpha(history.size());
    for (int i = static_cast<int>(history.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      alpha[i] = rho * s.dot(q);
      q -= alpha[i] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += (alpha[i] - beta) * s;
    }
    direction = -q;

    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      history.clear();
      direction = -grad;
      slope = grad.dot(direction);
      if (!(slope < 0.0)) break;
    }

    // Without curvature history the raw gradient sets the scale, and near a
    // barrier boundary its magnitude is enormous; cap the first move to a
    // modest trust size so backtracking starts in a sane range.
    double step = 1.0;
    double next_f = kInf;
    Eigen::VectorXd next_x;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      next_x = x + step * direction;
      next_f = problem.barrier(next_x, mu, nullptr);
      if (std::isfinite(next_f) && next_f <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (history.empty()) break;
      history.clear();
      continue;
    }

    problem.barrier(next_x, mu, &next_grad);
    Eigen::VectorXd s = next_x - x;
    Eigen::VectorXd y = next_grad - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      history.emplace_back(std::move(s), std::move(y));
      if (history.size() > 10) history.pop_front();
    }
    x = next_x;
    f = next_f;
    grad.swap(next_grad);
  }
  return iterations;
}

// Largest slowdown factor that brings every velocity/acceleration control
// value inside the limits after the uniform rescale T -> sT, v -> v/s,
// a -> a/s^2 (position control points are invariant under it). Only valid
// from rest boundary conditions, which stay at rest under the rescale.
void time_scaling_polish(const Problem& problem, Eigen::VectorXd& x) {
  double s = 0.0;
  for (const Constraint& c : problem.constraints()) {
    if (c.kind == kDurationFloor) {
      s = std::max(s, problem.t_min() / x[problem.t_index(c.seg)]);
      continue;
    }
    if (c.kind < kV0) continue;
    const double g = problem.constraint_value(c, x);
    const double bound = c.upper;  // symmetric limits
    if (bound <= 0.0) continue;
    if (c.kind <= kV4)
      s = std::max(s, std::abs(g) / bound);
    else
      s = std::max(s, std::sqrt(std::abs(g) / bound));
  }
  if (!(s > 0.0) || s >= 1.0 - 1e-9) return;
  s *= 1.0 + 1e-9;  // keep the binding constraint on the feasible side

  const int S = problem.segments();
  for (int i = 1; i <= S; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      const int vi = problem.wp_index(i, 1, axis);
      const int ai = problem.wp_index(i, 2, axis);
      if (problem.is_free(vi)) x[vi] /= s;
      if (problem.is_free(ai)) x[ai] /= (s * s);
    }
  }
  for (int seg = 0; seg < S; ++seg) x[problem.t_index(seg)] *= s;
}

struct Chain {
  std::vector<Vec3> points;       // start, sub-waypoints, goal
  std::vector<Aabb> boxes;        // per segment
  std::vector<int> corridor_index;
};

Chain build_chain(const Corridor& corridor, const Waypoint& start,
                  const Vec3& goal, const Limits& limits,
                  const SolveOptions& options) {
  Chain chain;
  const int entries = static_cast<int>(corridor.size());
  std::vector<Vec3> anchors;
  std::vector<int> leg_box;  // box index for the leg ending at anchors[k+1]
  anchors.reserve(entries + 2);
  anchors.push_back(start.position);

  // A moving start gets a dedicated first leg along its own velocity out to
  // the stopping point (clamped into the first box): one polynomial piece
  // can brake in a straight line, but aiming it at a waypoint behind the
  // motion asks for a reversal whose position hull leaves the box.
  const double speed = start.velocity.norm();
  if (speed > 1e-6) {
    const Vec3 dir = start.velocity / speed;
    const double brake_rate = 0.5 * limits.a_max.minCoeff();
    double s = speed * speed / (2.0 * brake_rate);
    const Aabb& box0 = corridor.bounds[0];
    for (int axis = 0; axis < 3; ++axis) {
      const double margin = 0.02 * (box0.upper[axis] - box0.lower[axis]);
      if (dir[axis] > 1e-9)
        s = std::min(s, (box0.upper[axis] - margin - start.position[axis]) / dir[axis]);
      else if (dir[axis] < -1e-9)
        s = std::min(s, (start.position[axis] - margin - box0.lower[axis]) / -dir[axis]);
    }
    if (s > 1e-3) {
      anchors.push_back(start.position + s * dir);
      leg_box.push_back(0);
    }
  }

  for (int j = 0; j + 1 < entries; ++j) {
    const Aabb& a = corridor.bounds[j];
    const Aabb& b = corridor.bounds[j + 1];
    Vec3 p;
    for (int axis = 0; axis < 3; ++axis) {
      const double lo = std::max(a.lower[axis], b.lower[axis]);
      const double hi = std::min(a.upper[axis], b.upper[axis]);
      p[axis] = 0.5 * (lo + hi);
    }
    anchors.push_back(p);
    leg_box.push_back(j);
  }
  anchors.push_back(goal);
  leg_box.push_back(entries - 1);

  chain.points.push_back(anchors.front());
  for (std::size_t j = 0; j < leg_box.size(); ++j) {
    const Vec3& from = anchors[j];
    const Vec3& to = anchors[j + 1];
    int pieces = 1;
    if (options.subdivide) {
      const double length = (to - from).norm();
      pieces = std::clamp(
          static_cast<int>(std::ceil(length / std::max(options.target_segment_length, 1e-6))),
          1, std::max(options.max_segments_per_corridor, 1));
    }
    for (int k = 1; k <= pieces; ++k) {
      const double t = static_cast<double>(k) / pieces;
      chain.points.push_back(from + t * (to - from));
      chain.boxes.push_back(corridor.bounds[leg_box[j]]);
      chain.corridor_index.push_back(leg_box[j]);
    }
  }
  return chain;
}

// Velocity seed that carries the start velocity straight ahead while
// ramping it down to rest over the braking distance. When a replan begins
// at speed and the new route turns away, zero or route-tangent waypoint
// velocities often admit no feasible duration at all for the short first
// pieces; physically the vehicle must brake first, and this seed expresses
// exactly that.
std::vector<Vec3> brake_velocities(const Chain& chain, const Waypoint& start,
                                   const Limits& limits) {
  const int count = static_cast<int>(chain.points.size());
  std::vector<Vec3> velocities(count, Vec3::Zero());
  const double speed = start.velocity.norm();
  if (speed < 1e-9) return velocities;
  const double ramp = 0.5 * limits.a_max.minCoeff();
  const double brake_arc = speed * speed / (2.0 * ramp);
  double arc = 0.0;
  for (int i = 1; i + 1 < count; ++i) {
    arc += (chain.points[i] - chain.points[i - 1]).norm();
    const double remaining = 1.0 - arc / brake_arc;
    if (remaining <= 0.0) break;
    velocities[i] = start.velocity * remaining;
  }
  return velocities;
}

// Speed profile along the chain: per-waypoint speed caps (cruise on straight
// runs, sharply reduced at corners -- a quintic piece cannot pick up much
// lateral speed over a piece with no lateral displacement), smoothed by a
// forward and a backward acceleration-limited pass, directed along the
// corner bisector. The ramp rate stays well inside the limit because a
// full-rate ramp puts the piece exactly on the bang-bang boundary, where
// the feasible-duration window degenerates to a point.
std::vector<Vec3> profile_velocities(const Chain& chain, const Waypoint& start,
                                     const Limits& limits) {
  const int count = static_cast<int>(chain.points.size());
  std::vector<Vec3> velocities(count, Vec3::Zero());
  std::vector<double> arc(count, 0.0);
  for (int i = 1; i < count; ++i)
    arc[i] = arc[i - 1] + (chain.points[i] - chain.points[i - 1]).norm();
  const double total = arc.back();
  if (total < 1e-9) return velocities;

  const double cruise = 0.95 * limits.v_max.minCoeff();
  const double ramp = 0.4 * limits.a_max.minCoeff();

  std::vector<double> speed(count, 0.0);
  std::vector<Vec3> direction(count, Vec3::Zero());
  for (int i = 1; i + 1 < count; ++i) {
    Vec3 in = chain.points[i] - chain.points[i - 1];
    Vec3 out = chain.points[i + 1] - chain.points[i];
    const double in_norm = in.norm();
    const double out_norm = out.norm();
    if (in_norm < 1e-12 || out_norm < 1e-12) continue;
    in /= in_norm;
    out /= out_norm;
    Vec3 bisector = in + out;
    const double bis_norm = bisector.norm();
    if (bis_norm < 1e-12) continue;  // full reversal: stop here
    direction[i] = bisector / bis_norm;
    const double align = 0.5 * (1.0 + in.dot(out));  // 1 straight, 0 reversal
    speed[i] = cruise * align * align * align;
  }

  // Acceleration-limited smoothing toward the fixed endpoint speeds.
  speed.front() = std::min(start.velocity.norm(), cruise);
  speed.back() = 0.0;
  for (int i = 1; i < count; ++i) {
    const double step = arc[i] - arc[i - 1];
    speed[i] = std::min(speed[i],
                        std::sqrt(speed[i - 1] * speed[i - 1] + 2.0 * ramp * step));
  }
  for (int i = count - 2; i >= 0; --i) {
    const double step = arc[i + 1] - arc[i];
    speed[i] = std::min(speed[i],
                        std::sqrt(speed[i + 1] * speed[i + 1] + 2.0 * ramp * step));
  }

  for (int i = 1; i + 1 < count; ++i) {
    Vec3 v = speed[i] * direction[i];
    for (int axis = 0; axis < 3; ++axis) {
      const double cap = 0.95 * limits.v_max[axis];
      if (std::abs(v[axis]) > cap) v *= cap / std::abs(v[axis]);
    }
    velocities[i] = v;
  }
  return velocities;
}

}  // namespace

SolveResult solve(const Corridor& corridor, const Waypoint& start, const Vec3& goal,
                  const Limits& limits, const SolveOptions& options) {
  SolveResult result;
  if (corridor.size() == 0) {
    result.status = SolveStatus::SolverFailure;
    result.message = "empty corridor";
    return result;
  }

  const double eps = options.eps_feas;
  const Aabb& first_box = corridor.bounds.front();
  const Aabb& last_box = corridor.bounds.back();
  for (int axis = 0; axis < 3; ++axis) {
    if (start.position[axis] < first_box.lower[axis] - eps ||
        start.position[axis] > first_box.upper[axis] + eps ||
        std::abs(start.velocity[axis]) > limits.v_max[axis] + eps ||
        std::abs(start.acceleration[axis]) > limits.a_max[axis] + eps) {
      result.status = SolveStatus::InfeasibleStart;
      result.message = "start state violates the first box or the kinematic limits";
      return result;
    }
    if (goal[axis] < last_box.lower[axis] - eps || goal[axis] > last_box.upper[axis] + eps) {
      result.status = SolveStatus::SolverFailure;
      result.message = "goal lies outside the final corridor box";
      return result;
    }
  }

  const Chain chain = build_chain(corridor, start, goal, limits, options);
  const int S = static_cast<int>(chain.boxes.size());
  Problem problem(chain.boxes, chain.corridor_index, start, goal, limits, options.t_min);
  result.waypoint_vars_per_axis = 3 * S;
  result.duration_vars = S;

  // Pin the goal waypoint: arrive at rest, exactly at the goal.
  for (int axis = 0; axis < 3; ++axis) {
    problem.pin(problem.wp_index(S, 0, axis), goal[axis]);
    problem.pin(problem.wp_index(S, 1, axis), 0.0);
    problem.pin(problem.wp_index(S, 2, axis), 0.0);
  }
  // Pin coordinates that geometry leaves no freedom for: a waypoint between
  // boxes whose overlap is a plane must sit on that plane, and a segment
  // whose box is flat along an axis cannot move along it at all.
  std::vector<std::array<double, 2>> allowed(static_cast<std::size_t>(std::max(S - 1, 0)) * 3);
  // Crossing direction (+1 when the axis increases into the next box) for
  // every junction axis pinned onto a shared face plane.
  std::vector<std::array<int, 3>> face_dir(static_cast<std::size_t>(std::max(S - 1, 0)),
                                           {0, 0, 0});
  for (int i = 1; i < S; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      const double lo = std::max(chain.boxes[i - 1].lower[axis], chain.boxes[i].lower[axis]);
      const double hi = std::min(chain.boxes[i - 1].upper[axis], chain.boxes[i].upper[axis]);
      allowed[(i - 1) * 3 + axis] = {lo, hi};
      if (hi - lo <= 1e-12) {
        problem.pin(problem.wp_index(i, 0, axis), 0.5 * (lo + hi));
        face_dir[i - 1][axis] = chain.boxes[i].upper[axis] > hi + 1e-12 ? 1 : -1;
      }
    }
  }
  for (int s = 0; s < S; ++s) {
    for (int axis = 0; axis < 3; ++axis) {
      const Aabb& box = chain.boxes[s];
      if (box.upper[axis] - box.lower[axis] > 1e-12) continue;
      const double mid = 0.5 * (box.lower[axis] + box.upper[axis]);
      for (int wp : {s, s + 1}) {
        if (wp == 0) {
          if (std::abs(start.position[axis] - mid) > eps ||
              std::abs(start.velocity[axis]) > eps ||
              std::abs(start.acceleration[axis]) > eps) {
            result.status = SolveStatus::SolverFailure;
            result.message = "start state conflicts with a degenerate corridor box";
            return result;
          }
          continue;
        }
        // The goal waypoint is already pinned exactly; constraint validation
        // below confirms it fits the flat box within tolerance.
        if (wp == S) continue;
        problem.pin(problem.wp_index(wp, 0, axis), mid);
        problem.pin(problem.wp_index(wp, 1, axis), 0.0);
        problem.pin(problem.wp_index(wp, 2, axis), 0.0);
      }
    }
  }

  // Seed waypoint values before constraint classification so constant
  // constraints are evaluated with their final pinned/fixed inputs.
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(problem.size());
  for (int i = 1; i <= S; ++i)
    for (int axis = 0; axis < 3; ++axis)
      x0[problem.wp_index(i, 0, axis)] = chain.points[i][axis];
  for (int s = 0; s < S; ++s) x0[problem.t_index(s)] = options.t_min;
  problem.apply_pins(x0);

  std::string build_error;
  if (!problem.build_constraints(x0, eps, &build_error)) {
    // Constants involve only the fixed start, the pinned goal, and pinned
    // geometry; a violated one means the endpoints themselves do not fit.
    result.status = SolveStatus::SolverFailure;
    result.message = build_error;
    return result;
  }

  // --- feasible initializations ---------------------------------------------
  const std::vector<Vec3> profiled = profile_velocities(chain, start, limits);
  const std::vector<Vec3> braked = brake_velocities(chain, start, limits);

  const auto make_candidate =
      [&](bool nudge, const std::vector<Vec3>* vel_seed) -> std::optional<Eigen::VectorXd> {
    Eigen::VectorXd x = x0;
    if (nudge) {
      // Pull free waypoint positions inside their allowed interval so
      // face-touching seeds do not start on a constraint bound. The margin
      // is a few percent: barrier gradients scale with 1/slack^2, and a
      // microscopic margin leaves descent numerically unable to move.
      for (int i = 1; i < S; ++i) {
        for (int axis = 0; axis < 3; ++axis) {
          const int pi = problem.wp_index(i, 0, axis);
          if (!problem.is_free(pi)) continue;
          const auto [lo, hi] = allowed[(i - 1) * 3 + axis];
          const double width = hi - lo;
          if (width <= 0.0) continue;
          x[pi] = std::clamp(x[pi], lo + 0.05 * width, hi - 0.05 * width);
        }
      }
    }
    if (vel_seed) {
      for (int i = 1; i <= S; ++i)
        for (int axis = 0; axis < 3; ++axis) {
          const int vi = problem.wp_index(i, 1, axis);
          if (problem.is_free(vi)) x[vi] = (*vel_seed)[i][axis];
        }
    }
    if (nudge) {
      // A waypoint pinned onto a shared box face needs velocity across the
      // face: with zero normal velocity the neighboring position control
      // points sit exactly on the face and the barrier has no interior.
      for (int i = 1; i < S; ++i) {
        for (int axis = 0; axis < 3; ++axis) {
          const int dir = face_dir[i - 1][axis];
          if (dir == 0) continue;
          const int vi = problem.wp_index(i, 1, axis);
          if (!problem.is_free(vi)) continue;
          const double floor_v = 0.05 * limits.v_max[axis];
          if (dir * x[vi] < floor_v) x[vi] = dir * floor_v;
        }
      }
    }
    // Directional room cap: the position hull reaches ~T*V/5 beyond a
    // waypoint on each side, so a velocity component must not exceed what
    // the boxes around the waypoint leave room for (tiny boxes force slow
    // crossings). Measured against motion direction so a face-pinned
    // crossing keeps the full width of both neighboring boxes.
    for (int i = 1; i < S; ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        const int vi = problem.wp_index(i, 1, axis);
        if (!problem.is_free(vi) || x[vi] == 0.0) continue;
        const double pos = x[problem.wp_index(i, 0, axis)];
        const Aabb& back_box = chain.boxes[i - 1];
        const Aabb& fwd_box = chain.boxes[i];
        const double room =
            x[vi] > 0.0
                ? std::min(pos - back_box.lower[axis], fwd_box.upper[axis] - pos)
                : std::min(back_box.upper[axis] - pos, pos - fwd_box.lower[axis]);
        const double cap = 2.0 * std::max(room, 0.0);
        if (std::abs(x[vi]) > cap) x[vi] = std::copysign(cap, x[vi]);
      }
    }
    for (int s = 0; s < S; ++s) {
      const double hint = std::max(
          (chain.points[s + 1] - chain.points[s]).norm() / limits.v_max.norm(),
          options.t_min);
      if (!feasible_duration(problem, x, s, hint, /*tighten=*/false)) {
        if (solver_debug()) {
          for (int axis = 0; axis < 3; ++axis) {
            double sl[kSlotCount];
            problem.slots(x, s, axis, sl);
            std::fprintf(stderr,
                         "[solver] candidate scan failed at seg=%d/%d axis=%d "
                         "box=[%.3f,%.3f] x:(p=%.3f v=%.3f a=%.3f P=%.3f "
                         "V=%.3f A=%.3f)\n",
                         s, S, axis, chain.boxes[s].lower[axis],
                         chain.boxes[s].upper[axis], sl[kSlotP], sl[kSlotV],
                         sl[kSlotA], sl[kSlotP1], sl[kSlotV1], sl[kSlotA1]);
          }
        }
        return std::nullopt;
      }
    }
    return x;
  };

  Incumbent best;
  std::optional<Eigen::VectorXd> plain = make_candidate(false, nullptr);
  std::optional<Eigen::VectorXd> nudged = make_candidate(true, nullptr);
  std::optional<Eigen::VectorXd> warm = make_candidate(true, &profiled);
  std::optional<Eigen::VectorXd> brake;
  if (start.velocity.norm() > eps) brake = make_candidate(true, &braked);
  for (const auto* candidate : {&plain, &nudged, &warm, &brake}) {
    if (!candidate->has_value()) continue;
    if (!best.valid) result.init_objective = problem.objective(**candidate);
    offer(best, problem, **candidate);
    // The loose durations keep the candidate usable as a barrier seed; a
    // tightened copy makes a far better incumbent.
    Eigen::VectorXd tight = **candidate;
    for (int s = 0; s < S; ++s)
      feasible_duration(problem, tight, s, tight[problem.t_index(s)], /*tighten=*/true);
    offer(best, problem, tight);
  }
  if (solver_debug()) {
    const auto desc = [&](const std::optional<Eigen::VectorXd>& c) {
      return c ? std::to_string(problem.objective(*c)) + "/slack=" +
                     std::to_string(problem.min_slack(*c))
               : std::string("fail");
    };
    std::fprintf(stderr, "[solver] S=%d plain=%s nudged=%s warm=%s brake=%s\n", S,
                 desc(plain).c_str(), desc(nudged).c_str(), desc(warm).c_str(),
                 desc(brake).c_str());
  }
  if (!best.valid) {
    result.status = SolveStatus::SolverFailure;
    result.message = "no feasible initialization for any duration assignment";
    return result;
  }

  // --- optimize --------------------------------------------------------------
  const bool rest_start = start.velocity.norm() <= eps && start.acceleration.norm() <= eps;
  const double interior_slack = 1e-9;

  for (int round = 0; round < std::max(options.rounds, 1); ++round) {
    if (cancelled(options)) break;

    // Barrier descent needs a strictly interior point; prefer the warm
    // profiled seed on the first round and the inflated incumbent later.
    std::optional<Eigen::VectorXd> interior;
    const auto consider = [&](const Eigen::VectorXd& x) {
      if (interior) return;
      if (problem.min_slack(x) > interior_slack) interior = x;
    };
    if (round == 0) {
      if (warm) consider(*warm);
      if (brake) consider(*brake);
      if (nudged) consider(*nudged);
      if (plain) consider(*plain);
    } else {
      Eigen::VectorXd inflated = best.x;
      if (rest_start) {
        // Uniform slow-down: position control points are invariant, every
        // derivative control point shrinks, restoring slack on the limits.
        const double s_up = 1.1;
        for (int i = 1; i <= S; ++i) {
          for (int axis = 0; axis < 3; ++axis) {
            const int vi = problem.wp_index(i, 1, axis);
            const int ai = problem.wp_index(i, 2, axis);
            if (problem.is_free(vi)) inflated[vi] /= s_up;
            if (problem.is_free(ai)) inflated[ai] /= (s_up * s_up);
          }
        }
        for (int s = 0; s < S; ++s) inflated[problem.t_index(s)] *= s_up;
      } else {
        for (int s = 0; s < S; ++s) {
          const int ti = problem.t_index(s);
          inflated[ti] = std::max(inflated[ti] * 1.1, options.t_min * 1.01);
        }
      }
      consider(inflated);
      consider(best.x);
    }

    if (interior) {
      Eigen::VectorXd x = *interior;
      // Scale the initial barrier weight so the summed log terms start out
      // comparable to the objective itself: a fixed weight either swamps a
      // good seed (the minimizer walks away from it to maximize slack and
      // the central path never returns within the iteration budget) or is
      // too weak to pull a poor seed off its constraint faces.
      const double log_terms = 2.0 * static_cast<double>(problem.constraints().size());
      double mu = options.barrier_mu0 *
                  std::max(problem.objective(x), options.t_min) / log_terms;
      for (int level = 0; level < options.barrier_levels; ++level) {
        if (cancelled(options)) break;
        const int it =
            lbfgs_minimize(problem, x, mu, options.max_inner_iterations, options);
        result.iterations += it;
        offer(best, problem, x);
        if (solver_debug())
          std::fprintf(stderr,
                       "[solver] round=%d level=%d mu=%.2e iters=%d obj=%.4f "
                       "viol=%.2e best=%.4f\n",
                       round, level, mu, it, problem.objective(x),
                       problem.max_violation(x), best.objective);
        mu *= options.barrier_decay;
      }
    } else if (solver_debug()) {
      std::fprintf(stderr, "[solver] round=%d no interior point\n", round);
    }

    // Polish the incumbent: uniform rescale (rest starts only), then shrink
    // each duration to its per-segment feasibility boundary.
    Eigen::VectorXd y = best.x;
    if (rest_start) {
      time_scaling_polish(problem, y);
      offer(best, problem, y);
      y = best.x;
    }
    for (int s = 0; s < S; ++s) {
      if (cancelled(options)) break;
      feasible_duration(problem, y, s, y[problem.t_index(s)], /*tighten=*/true);
    }
    offer(best, problem, y);
    if (solver_debug())
      std::fprintf(stderr, "[solver] round=%d after polish best=%.4f\n", round,
                   best.objective);
  }

  // --- emit -------------------------------------------------------------------
  std::vector<Waypoint> waypoints(static_cast<std::size_t>(S) + 1);
  waypoints[0] = start;
  for (int i = 1; i <= S; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      waypoints[i].position[axis] = best.x[problem.wp_index(i, 0, axis)];
      waypoints[i].velocity[axis] = best.x[problem.wp_index(i, 1, axis)];
      waypoints[i].acceleration[axis] = best.x[problem.wp_index(i, 2, axis)];
    }
  }
  std::vector<double> durations(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) durations[s] = best.x[problem.t_index(s)];

  result.trajectory = Trajectory(std::move(waypoints), std::move(durations),
                                 chain.boxes, chain.corridor_index);
  result.objective = best.objective;
  result.status = SolveStatus::Ok;
  return result;
}

}  // namespace voxnav
