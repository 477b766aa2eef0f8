#include "nonholo/odesim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace nonholo {

namespace {

struct CompiledConditions {
  std::vector<std::vector<CompiledExpr>> mu;
  std::vector<CompiledExpr> c;
};

CompiledConditions compile_conditions(const MechanicalSystem& sys,
                                      const std::vector<AffineFiberFunction>& conds) {
  CompiledConditions out;
  for (const auto& f : conds) {
    std::vector<CompiledExpr> mu;
    for (const Expr& e : f.mu) mu.emplace_back(e, sys.layout, sys.params);
    out.mu.push_back(std::move(mu));
    out.c.emplace_back(f.c, sys.layout, sys.params);
  }
  return out;
}

double constraint_residual_at(const MechanicalSystem& sys, const double* state) {
  // annihilator components of the reconstructed chart velocity
  std::vector<double> qdot(static_cast<std::size_t>(sys.n));
  for (int i = 0; i < sys.n; ++i) qdot[i] = sys.c_qdot[i].eval(state);
  double acc = 0.0;
  for (int i = 0; i < sys.n - sys.k; ++i) {
    double pairing = 0.0;
    for (int j = 0; j < sys.n; ++j) pairing += sys.c_dp_flat[i][j].eval(state) * qdot[j];
    acc += pairing * pairing;
  }
  return std::sqrt(acc);
}

double kernel_residual_at(const MechanicalSystem& sys, const double* state, bool has_p) {
  if (!has_p) return 0.0;
  double acc = 0.0;
  for (int c = 0; c < sys.k; ++c) {
    double row = 0.0;
    for (int i = 0; i < sys.n - sys.k; ++i)
      row += sys.c_fhat[c][i].eval(state) * state[sys.n + sys.k + i];
    acc += row * row;
  }
  return std::sqrt(acc);
}

double variety_residual_at(const MechanicalSystem& sys, const CompiledConditions& conds,
                           const double* state, bool has_p) {
  double worst = 0.0;
  for (std::size_t r = 0; r < conds.c.size(); ++r) {
    double v = conds.c[r].eval(state);
    if (has_p)
      for (int i = 0; i < sys.n - sys.k; ++i)
        v += conds.mu[r][i].eval(state) * state[sys.n + sys.k + i];
    worst = std::max(worst, std::abs(v));
  }
  return worst;
}

double energy_at(const MechanicalSystem& sys, const double* state) {
  double e = sys.c_potential.eval(state);
  for (int a = 0; a < sys.k; ++a) {
    double v = state[sys.n + a];
    e += 0.5 * v * v;
  }
  return e;
}

bool finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

Trajectory integrate(const MechanicalSystem& sys, Dynamics which, const PhaseState& s0,
                     const IntegrateOptions& options) {
  if (options.t_end <= 0) throw std::invalid_argument("integrate: t_end must be positive");
  if (!options.adaptive && options.dt <= 0)
    throw std::invalid_argument("integrate: dt must be positive");
  if (options.adaptive && options.tolerance <= 0)
    throw std::invalid_argument("integrate: tolerance must be positive");

  const int dim = sys.state_dim(which);
  const bool has_p = which != Dynamics::kNH;
  CompiledConditions conds = compile_conditions(sys, options.variety_conditions);

  std::vector<double> y = pack_state(sys, s0, which);
  y.resize(static_cast<std::size_t>(2 * sys.n), 0.0);  // keep p slots for evaluation

  Trajectory traj;
  traj.which = which;
  auto record = [&](double t) {
    traj.t.push_back(t);
    traj.states.emplace_back(y.begin(), y.begin() + dim);
    traj.res_constraint.push_back(constraint_residual_at(sys, y.data()));
    traj.res_kernel.push_back(kernel_residual_at(sys, y.data(), has_p));
    traj.res_variety.push_back(variety_residual_at(sys, conds, y.data(), has_p));
    traj.energy.push_back(energy_at(sys, y.data()));
  };

  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), tmp(2 * sys.n, 0.0);
  auto rhs = [&](const std::vector<double>& state, std::vector<double>& out) {
    std::copy(state.begin(), state.end(), tmp.begin());
    eval_rhs(sys, which, tmp.data(), out.data());
  };
  auto axpy = [&](const std::vector<double>& base, double h,
                  std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
    std::vector<double> out(base.begin(), base.begin() + dim);
    for (const auto& [w, kv] : terms)
      for (int i = 0; i < dim; ++i) out[i] += h * w * (*kv)[i];
    out.resize(2 * static_cast<std::size_t>(sys.n), 0.0);
    return out;
  };

  record(0.0);
  double t = 0.0;
  double h = options.adaptive ? std::min(1e-2, options.t_end) : options.dt;

  while (t < options.t_end - 1e-15) {
    h = std::min(h, options.t_end - t);
    if (!options.adaptive) {
      rhs(y, k1);
      auto y2 = axpy(y, h, {{0.5, &k1}});
      rhs(y2, k2);
      auto y3 = axpy(y, h, {{0.5, &k2}});
      rhs(y3, k3);
      auto y4 = axpy(y, h, {{1.0, &k3}});
      rhs(y4, k4);
      for (int i = 0; i < dim; ++i)
        y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      t += h;
    } else {
      rhs(y, k1);
      auto s2 = axpy(y, h, {{1.0 / 4, &k1}});
      rhs(s2, k2);
      auto s3 = axpy(y, h, {{3.0 / 32, &k1}, {9.0 / 32, &k2}});
      rhs(s3, k3);
      auto s4 = axpy(y, h, {{1932.0 / 2197, &k1}, {-7200.0 / 2197, &k2}, {7296.0 / 2197, &k3}});
      rhs(s4, k4);
      auto s5 = axpy(y, h,
                     {{439.0 / 216, &k1}, {-8.0, &k2}, {3680.0 / 513, &k3}, {-845.0 / 4104, &k4}});
      rhs(s5, k5);
      auto s6 = axpy(y, h,
                     {{-8.0 / 27, &k1},
                      {2.0, &k2},
                      {-3544.0 / 2565, &k3},
                      {1859.0 / 4104, &k4},
                      {-11.0 / 40, &k5}});
      rhs(s6, k6);
      double err = 0.0, ynorm = 0.0;
      std::vector<double> y5(dim);
      for (int i = 0; i < dim; ++i) {
        double hi = h * (16.0 / 135 * k1[i] + 6656.0 / 12825 * k3[i] + 28561.0 / 56430 * k4[i] -
                         9.0 / 50 * k5[i] + 2.0 / 55 * k6[i]);
        double lo = h * (25.0 / 216 * k1[i] + 1408.0 / 2565 * k3[i] + 2197.0 / 4104 * k4[i] -
                         1.0 / 5 * k5[i]);
        y5[i] = y[i] + hi;
        err = std::max(err, std::abs(hi - lo));
        ynorm = std::max(ynorm, std::abs(y[i]));
      }
      double bound = options.tolerance * (1.0 + ynorm);
      if (err <= bound || h <= 1e-12) {
        for (int i = 0; i < dim; ++i) y[i] = y5[i];
        t += h;
      }
      double scale = err > 0 ? 0.9 * std::pow(bound / err, 0.2) : 5.0;
      h *= std::clamp(scale, 0.2, 5.0);
      if (err > bound && h > 1e-12) continue;  // rejected step: retry without recording
    }
    if (!finite(y)) {
      traj.truncated = true;
      break;
    }
    record(t);
  }
  return traj;
}

double residual_constraint(const MechanicalSystem& sys, const Trajectory& traj) {
  (void)sys;
  double worst = 0.0;
  for (double r : traj.res_constraint) worst = std::max(worst, r);
  return worst;
}

double residual_constraint_replay(const MechanicalSystem& sys,
                                  const std::vector<std::vector<double>>& qs,
                                  const std::vector<std::vector<double>>& qdots) {
  if (qs.size() != qdots.size())
    throw std::invalid_argument("residual_constraint_replay: length mismatch");
  Environment env;
  for (const auto& [k, v] : sys.params) env.set(k, v);
  double worst = 0.0;
  for (std::size_t s = 0; s < qs.size(); ++s) {
    for (int i = 0; i < sys.n; ++i) env.set(sys.chart[i], qs[s][i]);
    double acc = 0.0;
    for (int i = 0; i < sys.n - sys.k; ++i) {
      double pairing = 0.0;
      for (int j = 0; j < sys.n; ++j) pairing += evaluate(sys.dp_flat[i][j], env) * qdots[s][j];
      acc += pairing * pairing;
    }
    worst = std::max(worst, std::sqrt(acc));
  }
  return worst;
}

double residual_kernel(const MechanicalSystem& sys, const Trajectory& traj) {
  (void)sys;
  double worst = 0.0;
  for (double r : traj.res_kernel) worst = std::max(worst, r);
  return worst;
}

double residual_variety(const MechanicalSystem& sys, const Trajectory& traj,
                        const std::vector<AffineFiberFunction>& conditions) {
  CompiledConditions conds = compile_conditions(sys, conditions);
  bool has_p = traj.which != Dynamics::kNH;
  std::vector<double> buf(static_cast<std::size_t>(2 * sys.n), 0.0);
  double worst = 0.0;
  for (const auto& state : traj.states) {
    std::copy(state.begin(), state.end(), buf.begin());
    worst = std::max(worst, variety_residual_at(sys, conds, buf.data(), has_p));
  }
  return worst;
}

double energy_drift(const Trajectory& traj) {
  double worst = 0.0;
  for (double e : traj.energy) worst = std::max(worst, std::abs(e - traj.energy.front()));
  return worst;
}

double compare_nh_rcv(const MechanicalSystem& sys, const PhaseState& s0, double t_end,
                      double dt) {
  IntegrateOptions opt;
  opt.t_end = t_end;
  opt.dt = dt;
  Trajectory nh = integrate(sys, Dynamics::kNH, s0, opt);
  Trajectory rcv = integrate(sys, Dynamics::kRcv, s0, opt);
  std::size_t steps = std::min(nh.steps(), rcv.steps());
  double gap = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    double acc = 0.0;
    for (int i = 0; i < sys.n + sys.k; ++i) {
      double d = nh.states[s][i] - rcv.states[s][i];
      acc += d * d;
    }
    gap = std::max(gap, std::sqrt(acc));
  }
  return gap;
}

void write_csv(const MechanicalSystem& sys, const Trajectory& traj, std::ostream& os) {
  os << "t";
  for (const auto& c : sys.chart) os << "," << c;
  for (const auto& v : sys.vel_names) os << "," << v;
  if (traj.which != Dynamics::kNH)
    for (const auto& p : sys.adj_names) os << "," << p;
  os << ",res_constraint,res_kernel,res_variety,energy\n";
  os.precision(9);
  for (std::size_t s = 0; s < traj.steps(); ++s) {
    os << traj.t[s];
    for (double x : traj.states[s]) os << "," << x;
    os << "," << traj.res_constraint[s] << "," << traj.res_kernel[s] << ","
       << traj.res_variety[s] << "," << traj.energy[s] << "\n";
  }
}

}  // namespace nonholo
