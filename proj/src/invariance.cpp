#include "nonholo/invariance.hpp"

#include <algorithm>
#include <cmath>

namespace nonholo {

namespace {

void guard_size(const Expr& e, std::size_t cap) {
  if (e.node_count() > cap)
    throw SizeGuardError(
        "expression size guard exceeded (" + std::to_string(e.node_count()) + " nodes > " +
        std::to_string(cap) + "); restrict the order or switch to numeric-only evaluation");
}

// mu' = ∇_{X_0} mu (+ A* mu):
// mu'_j = X_0[mu_j] + Σ_{a,i} v_a Γ^{⊥,j}_{a i} mu_i (+ Σ_i mu_i A_{ij})
std::vector<Expr> mu_step(const MechanicalSystem& sys, const std::vector<Expr>& mu,
                          bool include_astar, std::size_t cap) {
  const int k = sys.k, m = sys.n - sys.k;
  std::vector<Expr> vels;
  for (const auto& v : sys.vel_names) vels.push_back(Expr::var(v));
  std::vector<Expr> out(m);
  for (int j = 0; j < m; ++j) {
    Expr acc = nh_directional_derivative(sys, mu[j]);
    for (int a = 0; a < k; ++a)
      for (int i = 0; i < m; ++i) acc = acc + vels[a] * sys.gamma_dp[a][i][j] * mu[i];
    if (include_astar)
      for (int i = 0; i < m; ++i) acc = acc + mu[i] * sys.a_mat[i][j];
    out[j] = simplify(acc);
    guard_size(out[j], cap);
  }
  return out;
}

}  // namespace

AffineFiberFunction lie_step(const MechanicalSystem& sys, const AffineFiberFunction& f,
                             Dynamics which, std::size_t node_cap) {
  if (which != Dynamics::kReg && which != Dynamics::kSing)
    throw std::invalid_argument("lie_step: dynamics must be reg or sing");
  AffineFiberFunction out;
  out.mu = mu_step(sys, f.mu, true, node_cap);
  Expr c = nh_directional_derivative(sys, f.c);
  if (which == Dynamics::kReg) {
    for (int i = 0; i < sys.n - sys.k; ++i) c = c + f.mu[i] * sys.b_comp[i];
  }
  out.c = simplify(c);
  guard_size(out.c, node_cap);
  return out;
}

AffineFiberFunction iterated_lie(const MechanicalSystem& sys, const AffineFiberFunction& lambda,
                                 int k, Dynamics which, std::size_t node_cap) {
  if (k < 0) throw std::invalid_argument("iterated_lie: order must be nonnegative");
  AffineFiberFunction f;
  for (const Expr& e : lambda.mu) f.mu.push_back(simplify(e));
  f.c = lambda.c.valid() ? simplify(lambda.c) : Expr::constant(0.0);
  for (int i = 0; i < k; ++i) f = lie_step(sys, f, which, node_cap);
  return f;
}

Expr c_direct(const MechanicalSystem& sys, const AffineFiberFunction& lambda, int k,
              Dynamics which, std::size_t node_cap) {
  if (k < 1) throw std::invalid_argument("c_direct: order must be positive");
  if (which == Dynamics::kSing) return Expr::constant(0.0);
  const int m = sys.n - sys.k;
  std::vector<std::vector<Expr>> L(static_cast<std::size_t>(k));
  L[0].clear();
  for (const Expr& e : lambda.mu) L[0].push_back(simplify(e));
  for (int j = 1; j < k; ++j) L[j] = mu_step(sys, L[j - 1], true, node_cap);

  Expr total = Expr::constant(0.0);
  for (int j = 1; j <= k; ++j) {
    Expr pair = Expr::constant(0.0);
    for (int i = 0; i < m; ++i) pair = pair + L[k - j][i] * sys.b_comp[i];
    pair = simplify(pair);
    for (int t = 0; t < j - 1; ++t) {
      pair = nh_directional_derivative(sys, pair);
      guard_size(pair, node_cap);
    }
    total = total + pair;
  }
  total = simplify(total);
  guard_size(total, node_cap);
  return total;
}

double recursion_identity_check(const MechanicalSystem& sys, const AffineFiberFunction& lambda,
                                int k, int l, Dynamics which, int samples,
                                std::uint64_t seed) {
  AffineFiberFunction lam;
  lam.mu = lambda.mu;
  lam.c = Expr::constant(0.0);
  AffineFiberFunction both = iterated_lie(sys, lam, k + l, which);
  AffineFiberFunction first = iterated_lie(sys, lam, k, which);
  AffineFiberFunction shifted;
  shifted.mu = first.mu;
  shifted.c = Expr::constant(0.0);
  Expr rhs1 = iterated_lie(sys, shifted, l, which).c;
  Expr rhs2 = first.c;
  for (int t = 0; t < l; ++t) rhs2 = nh_directional_derivative(sys, rhs2);

  Box box = sys.sampling_box();
  Environment env;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    sample_box(box, seed, s, &env);
    double d = evaluate(both.c, env) - evaluate(rhs1, env) - evaluate(rhs2, env);
    worst = std::max(worst, std::abs(d));
  }
  return worst;
}

std::vector<Expr> dual_derivative(const MechanicalSystem& sys, const std::vector<Expr>& mu) {
  return mu_step(sys, mu, false, kDefaultNodeCap);
}

// ---------------------------------------------------------------------------
// Fiberwise affine solves

AffineSolutionSet fiber_affine_solve(const Eigen::MatrixXd& rows, const Eigen::VectorXd& offsets,
                                     double rank_tol) {
  const int m = static_cast<int>(rows.cols());
  AffineSolutionSet out;
  if (rows.rows() == 0) {
    out.nonempty = true;
    out.particular = Eigen::VectorXd::Zero(m);
    out.kernel = Eigen::MatrixXd::Identity(m, m);
    out.residual = 0.0;
    return out;
  }
  double row_scale = 0.0;
  for (int r = 0; r < rows.rows(); ++r)
    row_scale = std::max(row_scale, std::hypot(rows.row(r).norm(), offsets(r)));

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeThinU | Eigen::ComputeFullV);
  double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  double cutoff = rank_tol * std::max(1.0, smax);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > cutoff) ++rank;

  Eigen::VectorXd rhs = -offsets;
  Eigen::VectorXd y = svd.matrixU().transpose() * rhs;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(svd.matrixV().cols());
  for (int i = 0; i < rank; ++i) z(i) = y(i) / svd.singularValues()(i);
  out.particular = svd.matrixV() * z;
  out.residual = (rows * out.particular + offsets).norm();
  out.nonempty = out.residual <= rank_tol * (1.0 + row_scale);
  out.kernel = svd.matrixV().rightCols(m - rank);
  if (!out.nonempty) {
    out.particular = Eigen::VectorXd::Zero(m);
    out.kernel = Eigen::MatrixXd(m, 0);
  }
  return out;
}

bool solution_sets_equal(const AffineSolutionSet& a, const AffineSolutionSet& b, double tol) {
  if (a.nonempty != b.nonempty) return false;
  if (!a.nonempty) return true;
  if (a.kernel.cols() != b.kernel.cols()) return false;
  if ((a.particular - b.particular).lpNorm<Eigen::Infinity>() > tol) return false;
  Eigen::MatrixXd pa = a.kernel * a.kernel.transpose();
  Eigen::MatrixXd pb = b.kernel * b.kernel.transpose();
  return (pa - pb).lpNorm<Eigen::Infinity>() <= tol;
}

// ---------------------------------------------------------------------------
// Stratum sampling

PhaseState sample_stratum_state(const MechanicalSystem& sys, const std::vector<Expr>& stratum,
                                std::uint64_t seed, int index) {
  std::vector<std::string> vars = sys.chart;
  vars.insert(vars.end(), sys.vel_names.begin(), sys.vel_names.end());
  const int nv = static_cast<int>(vars.size());
  const int np = static_cast<int>(stratum.size());

  std::vector<std::vector<Expr>> jac(np, std::vector<Expr>(nv));
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < nv; ++j) jac[i][j] = partial_derivative(stratum[i], vars[j]);

  Box box = sys.full_box();
  Environment env;
  for (int attempt = 0; attempt < 64; ++attempt) {
    sample_box(box, seed, index * 64 + attempt, &env);
    bool ok = stratum.empty();
    if (!ok) {
      Eigen::VectorXd x(nv);
      for (int j = 0; j < nv; ++j) x(j) = env.get(intern_symbol(vars[j]));
      for (int it = 0; it < 50; ++it) {
        Eigen::VectorXd r(np);
        for (int i = 0; i < np; ++i) r(i) = evaluate(stratum[i], env);
        if (r.lpNorm<Eigen::Infinity>() < 1e-12) {
          ok = true;
          break;
        }
        Eigen::MatrixXd J(np, nv);
        for (int i = 0; i < np; ++i)
          for (int j = 0; j < nv; ++j) J(i, j) = evaluate(jac[i][j], env);
        Eigen::VectorXd delta = J.completeOrthogonalDecomposition().solve(-r);
        x += delta;
        for (int j = 0; j < nv; ++j) env.set(vars[j], x(j));
      }
      if (ok) {
        // snap converged coordinates to nearby exact predicate roots; the
        // certificate flows are sensitive to residuals that a plain Newton
        // solve cannot remove (unstable strata amplify them exponentially)
        for (int j = 0; j < nv; ++j) {
          double nearest = std::round(x(j) / (M_PI / 2)) * (M_PI / 2);
          if (std::abs(nearest) < 1e-9) nearest = 0.0;
          if (std::abs(x(j) - nearest) > 1e-6 || x(j) == nearest) continue;
          double old = x(j);
          x(j) = nearest;
          env.set(vars[j], nearest);
          bool still = true;
          for (int i = 0; i < np && still; ++i) still = std::abs(evaluate(stratum[i], env)) < 1e-12;
          if (!still) {
            x(j) = old;
            env.set(vars[j], old);
          }
        }
        // stay within (a small margin of) the declared box
        for (int j = 0; j < nv && ok; ++j) {
          auto iv = box.at(vars[j]);
          ok = x(j) >= iv.first - 0.05 && x(j) <= iv.second + 0.05;
        }
      }
    }
    if (ok) {
      PhaseState s;
      for (const auto& c : sys.chart) s.q.push_back(env.get(intern_symbol(c)));
      for (const auto& v : sys.vel_names) s.v.push_back(env.get(intern_symbol(v)));
      for (const auto& p : sys.adj_names) s.p.push_back(env.get(intern_symbol(p)));
      return s;
    }
  }
  throw ModelError("sample_stratum_state: could not reach the requested stratum");
}

// ---------------------------------------------------------------------------
// Invariant variety search

std::vector<AffineFiberFunction> StratifiedVariety::stacked_conditions(int order) const {
  std::vector<AffineFiberFunction> out;
  for (int k = 0; k <= order && k < static_cast<int>(iterates.size()); ++k)
    for (const auto& f : iterates[k]) out.push_back(f);
  return out;
}

std::map<std::pair<bool, int>, int> StratifiedVariety::summary() const {
  std::map<std::pair<bool, int>, int> out;
  for (const auto& s : samples) ++out[{s.solution.nonempty, s.solution.dim()}];
  return out;
}

namespace {

struct CompiledAffine {
  std::vector<CompiledExpr> mu;
  CompiledExpr c;
};

CompiledAffine compile_affine(const MechanicalSystem& sys, const AffineFiberFunction& f) {
  CompiledAffine out;
  for (const Expr& e : f.mu) out.mu.emplace_back(e, sys.layout, sys.params);
  out.c = CompiledExpr(f.c, sys.layout, sys.params);
  return out;
}

}  // namespace

StratifiedVariety invariant_variety_search(const MechanicalSystem& sys,
                                           const std::vector<AffineFiberFunction>& generators,
                                           const SearchOptions& options) {
  if (generators.empty())
    throw std::invalid_argument("invariant_variety_search: generators must be nonempty");
  if (options.n_max < 1) throw std::invalid_argument("invariant_variety_search: n_max >= 1");
  if (options.which != Dynamics::kReg && options.which != Dynamics::kSing)
    throw std::invalid_argument("invariant_variety_search: dynamics must be reg or sing");

  StratifiedVariety out;
  out.which = options.which;
  out.iterates.emplace_back();
  for (const auto& g : generators) {
    AffineFiberFunction f;
    for (const Expr& e : g.mu) f.mu.push_back(simplify(e));
    f.c = g.c.valid() ? simplify(g.c) : Expr::constant(0.0);
    out.iterates.back().push_back(std::move(f));
  }
  std::vector<std::vector<CompiledAffine>> compiled(1);
  for (const auto& f : out.iterates[0]) compiled[0].push_back(compile_affine(sys, f));

  auto ensure_order = [&](int k) {
    while (static_cast<int>(out.iterates.size()) <= k) {
      std::vector<AffineFiberFunction> next;
      std::vector<CompiledAffine> cnext;
      for (const auto& f : out.iterates.back()) {
        next.push_back(lie_step(sys, f, options.which, options.node_cap));
        cnext.push_back(compile_affine(sys, next.back()));
      }
      out.iterates.push_back(std::move(next));
      compiled.push_back(std::move(cnext));
    }
  };

  const int m = sys.n - sys.k;
  const int gens = static_cast<int>(generators.size());
  for (int s = 0; s < options.samples; ++s) {
    PhaseState state = sample_stratum_state(sys, options.stratum, options.seed, s);
    std::vector<double> packed = pack_state(sys, state, Dynamics::kReg);

    Eigen::MatrixXd rows(0, m);
    Eigen::VectorXd offs(0);
    auto append_order = [&](int k) {
      ensure_order(k);
      int base = static_cast<int>(rows.rows());
      rows.conservativeResize(base + gens, m);
      offs.conservativeResize(base + gens);
      for (int j = 0; j < gens; ++j) {
        for (int i = 0; i < m; ++i) rows(base + j, i) = compiled[k][j].mu[i].eval(packed.data());
        offs(base + j) = compiled[k][j].c.eval(packed.data());
      }
    };

    append_order(0);
    AffineSolutionSet cur = fiber_affine_solve(rows, offs, options.rank_tol);
    SearchSample rec;
    rec.state = state;
    for (int K = 0; K < options.n_max; ++K) {
      append_order(K + 1);
      AffineSolutionSet nxt = fiber_affine_solve(rows, offs, options.rank_tol);
      if (solution_sets_equal(cur, nxt)) {
        rec.stabilized = true;
        rec.stabilization_order = K;
        cur = nxt;
        break;
      }
      cur = nxt;
    }
    rec.solution = cur;
    out.samples.push_back(std::move(rec));
  }
  out.orders_used = static_cast<int>(out.iterates.size()) - 1;
  return out;
}

// ---------------------------------------------------------------------------
// Admissibility

AdmissibilityReport admissibility_check(const MechanicalSystem& sys,
                                        const StratifiedVariety& variety,
                                        const std::vector<AffineFiberFunction>& generators,
                                        double tol) {
  AdmissibilityReport report;
  const int m = sys.n - sys.k;

  std::vector<std::vector<CompiledExpr>> nabla_gen;
  for (const auto& g : generators) {
    std::vector<Expr> d = dual_derivative(sys, g.mu);
    std::vector<CompiledExpr> c;
    for (const Expr& e : d) c.emplace_back(e, sys.layout, sys.params);
    nabla_gen.push_back(std::move(c));
  }

  for (const auto& sample : variety.samples) {
    AdmissibilitySample rec;
    if (!(sample.stabilized && sample.solution.nonempty)) {
      report.samples.push_back(rec);
      continue;
    }
    rec.applicable = true;
    std::vector<double> packed = pack_state(sys, sample.state, Dynamics::kReg);

    Eigen::MatrixXd a = a_field(sys, sample.state);
    Eigen::MatrixXd f = fhat_star_matrix(sys, sample.state);
    double scale_a = 1.0 + a.norm() * std::max(1.0, f.norm());
    for (int col = 0; col < sample.solution.kernel.cols(); ++col) {
      Eigen::VectorXd u = sample.solution.kernel.col(col);
      rec.residual_a = std::max(rec.residual_a, (f * (a * u)).norm());
    }
    bool pass_a = rec.residual_a <= tol * scale_a;

    int upto = std::min(sample.stabilization_order + 1,
                        static_cast<int>(variety.iterates.size()) - 1);
    std::vector<Eigen::VectorXd> mu_rows;
    for (int k = 0; k <= upto; ++k) {
      for (const auto& it : variety.iterates[k]) {
        Eigen::VectorXd row(m);
        for (int i = 0; i < m; ++i) {
          CompiledExpr c(it.mu[i], sys.layout, sys.params);
          row(i) = c.eval(packed.data());
        }
        mu_rows.push_back(row);
      }
    }
    Eigen::MatrixXd span(m, static_cast<int>(mu_rows.size()));
    for (std::size_t i = 0; i < mu_rows.size(); ++i) span.col(static_cast<int>(i)) = mu_rows[i];
    bool pass_b = true;
    for (const auto& cg : nabla_gen) {
      Eigen::VectorXd w(m);
      for (int i = 0; i < m; ++i) w(i) = cg[i].eval(packed.data());
      Eigen::VectorXd fit = span.completeOrthogonalDecomposition().solve(w);
      double resid = (span * fit - w).norm();
      rec.residual_b = std::max(rec.residual_b, resid);
      pass_b = pass_b && resid <= tol * (1.0 + w.norm());
    }
    rec.pass = pass_a && pass_b;
    report.all_pass = report.all_pass && rec.pass;
    report.samples.push_back(rec);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Formal-integrability hypothesis checks

NowhereVanishingResult spencer_condition_i(const std::vector<Expr>& field, const Box& box,
                                           int samples, double tol, std::uint64_t seed) {
  std::vector<std::string> layout;
  std::vector<double> lo, hi;
  for (const auto& [name, iv] : box) {
    layout.push_back(name);
    lo.push_back(iv.first);
    hi.push_back(iv.second);
  }
  std::vector<CompiledExpr> comps;
  const std::map<std::string, double> no_fixed;
  for (const Expr& e : field) comps.emplace_back(e, layout, no_fixed);
  const int nv = static_cast<int>(layout.size());

  auto norm2 = [&](const std::vector<double>& x) {
    double acc = 0.0;
    for (const auto& c : comps) {
      double v = c.eval(x.data());
      acc += v * v;
    }
    return acc;
  };

  Environment env;
  std::vector<std::pair<double, std::vector<double>>> starts;
  for (int s = 0; s < samples; ++s) {
    sample_box(box, seed, s, &env);
    std::vector<double> x(nv);
    for (int j = 0; j < nv; ++j) x[j] = env.get(intern_symbol(layout[j]));
    starts.emplace_back(norm2(x), x);
  }
  std::sort(starts.begin(), starts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  starts.resize(std::min<std::size_t>(starts.size(), 8));

  double best = starts.empty() ? 0.0 : starts[0].first;
  std::vector<double> best_x = starts.empty() ? std::vector<double>(nv, 0.0) : starts[0].second;
  for (auto& [value, x] : starts) {
    std::vector<double> step(nv);
    for (int j = 0; j < nv; ++j) step[j] = 0.25 * (hi[j] - lo[j]);
    double cur = value;
    double max_step = *std::max_element(step.begin(), step.end());
    while (max_step > 1e-12) {
      bool improved = false;
      for (int j = 0; j < nv; ++j) {
        if (step[j] == 0.0) continue;
        for (double dir : {+1.0, -1.0}) {
          double old = x[j];
          x[j] = std::clamp(old + dir * step[j], lo[j], hi[j]);
          double cand = norm2(x);
          if (cand < cur - 1e-18) {
            cur = cand;
            improved = true;
            break;
          }
          x[j] = old;
        }
      }
      if (!improved) {
        for (double& s : step) s *= 0.5;
        max_step = *std::max_element(step.begin(), step.end());
      }
    }
    if (cur < best) {
      best = cur;
      best_x = x;
    }
  }

  NowhereVanishingResult out;
  out.min_norm = std::sqrt(std::max(0.0, best));
  out.nowhere_vanishing = out.min_norm > tol;
  for (int j = 0; j < nv; ++j) out.minimizer[layout[j]] = best_x[j];
  return out;
}

double spencer_condition_ii(const BundleData& bundle, const std::vector<Expr>& xi,
                            const std::map<std::string, double>& point,
                            double precondition_tol) {
  const int nb = static_cast<int>(bundle.base_vars.size());
  const int nf = bundle.fiber_dim;
  Environment env;
  for (const auto& [k, v] : point) env.set(k, v);

  auto project = [&](const std::vector<Expr>& w) {
    std::vector<Expr> out(nf);
    for (int j = 0; j < nf; ++j) {
      Expr acc = Expr::constant(0.0);
      for (int l = 0; l < nf; ++l) acc = acc + bundle.fperp_projector[j][l] * w[l];
      out[j] = simplify(acc);
    }
    return out;
  };
  auto covariant = [&](const std::vector<Expr>& section, int mu) {
    std::vector<Expr> out(nf);
    for (int j = 0; j < nf; ++j) {
      Expr acc = partial_derivative(section[j], bundle.base_vars[mu]);
      for (int i = 0; i < nf; ++i) acc = acc + bundle.gamma[mu][i][j] * section[i];
      out[j] = simplify(acc);
    }
    return out;
  };

  // eta_mu = P(∇_mu ξ)
  std::vector<std::vector<Expr>> eta(nb);
  for (int mu = 0; mu < nb; ++mu) eta[mu] = project(covariant(xi, mu));

  // first-order condition P(∇_{X_0} ξ) = 0 at the point
  double precond = 0.0;
  for (int j = 0; j < nf; ++j) {
    double acc = 0.0;
    for (int mu = 0; mu < nb; ++mu) acc += evaluate(bundle.x0[mu], env) * evaluate(eta[mu][j], env);
    precond = std::max(precond, std::abs(acc));
  }
  if (precond > precondition_tol)
    throw PreconditionError("spencer_condition_ii: section is not a first-order solution here");

  // antisymmetric part of T_{mu,nu} = P(∇_mu eta_nu)
  double worst = 0.0;
  std::vector<std::vector<std::vector<Expr>>> t(nb, std::vector<std::vector<Expr>>(nb));
  for (int mu = 0; mu < nb; ++mu)
    for (int nu = 0; nu < nb; ++nu) t[mu][nu] = project(covariant(eta[nu], mu));
  for (int mu = 0; mu < nb; ++mu) {
    for (int nu = mu + 1; nu < nb; ++nu) {
      double acc = 0.0;
      for (int j = 0; j < nf; ++j) {
        double d = evaluate(t[mu][nu][j], env) - evaluate(t[nu][mu][j], env);
        acc += d * d;
      }
      worst = std::max(worst, std::sqrt(acc));
    }
  }
  return worst;
}

BundleData adjoint_bundle_data(const MechanicalSystem& sys,
                               const std::vector<Eigen::VectorXd>& f_span) {
  BundleData out;
  out.base_vars = sys.chart;
  out.base_vars.insert(out.base_vars.end(), sys.vel_names.begin(), sys.vel_names.end());
  const int m = sys.n - sys.k;
  out.fiber_dim = m;
  out.gamma.assign(out.base_vars.size(),
                   std::vector<std::vector<Expr>>(m, std::vector<Expr>(m, Expr::constant(0.0))));
  for (int mu = 0; mu < sys.n; ++mu) out.gamma[mu] = sys.gamma_dp_chart[mu];
  for (const Expr& e : sys.xnh_qdot) out.x0.push_back(e);
  for (const Expr& e : sys.xnh_vdot) out.x0.push_back(e);

  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(m, m);
  std::vector<Eigen::VectorXd> basis;
  for (Eigen::VectorXd f : f_span) {
    for (const auto& b : basis) f -= b.dot(f) * b;
    if (f.norm() > 1e-12) {
      f.normalize();
      basis.push_back(f);
      p -= f * f.transpose();
    }
  }
  out.fperp_projector.assign(m, std::vector<Expr>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out.fperp_projector[i][j] = Expr::constant(p(i, j));
  return out;
}

}  // namespace nonholo
