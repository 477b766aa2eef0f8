#include "nonholo/mechanics.hpp"

#include <algorithm>

namespace nonholo {

namespace {

std::vector<Expr> velocity_exprs(const std::vector<std::string>& names) {
  std::vector<Expr> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(Expr::var(n));
  return out;
}

Box default_intervals(const Box& given, const std::vector<std::string>& names) {
  Box out;
  for (const auto& n : names) {
    auto it = given.find(n);
    out[n] = it != given.end() ? it->second : std::pair<double, double>{-2.0, 2.0};
  }
  return out;
}

}  // namespace

Box MechanicalSystem::sampling_box() const {
  Box out = box_with_params(chart_box, params);
  for (const auto& [name, iv] : velocity_box) out[name] = iv;
  return out;
}

Box MechanicalSystem::full_box() const {
  Box out = sampling_box();
  for (const auto& [name, iv] : adjoint_box) out[name] = iv;
  return out;
}

MechanicalSystem build_system(const SystemInput& input) {
  MechanicalSystem sys;
  sys.name = input.name;
  sys.chart = input.chart;
  sys.n = static_cast<int>(input.chart.size());
  if (sys.n == 0) throw ModelError("build_system: empty chart");
  if (static_cast<int>(input.metric_entries.size()) != sys.n)
    throw ModelError("build_system: metric dimension does not match the chart");
  sys.k = static_cast<int>(input.d_spanning.size());
  if (sys.k == 0 || sys.k > sys.n)
    throw ModelError("build_system: distribution rank must be between 1 and dim");

  sys.g.vars = input.chart;
  sys.g.entries.assign(sys.n, std::vector<Expr>(sys.n));
  for (int i = 0; i < sys.n; ++i)
    for (int j = 0; j < sys.n; ++j) sys.g.entries[i][j] = simplify(input.metric_entries[i][j]);
  sys.potential = simplify(input.potential);
  sys.params = input.params;
  sys.chart_box = input.chart_box;
  for (const auto& name : sys.chart)
    if (!sys.chart_box.count(name))
      throw ModelError("build_system: sampling box missing chart variable " + name);

  sys.vel_names = input.velocity_names;
  if (sys.vel_names.empty()) {
    for (int a = 1; a <= sys.k; ++a) sys.vel_names.push_back("v_" + std::to_string(a));
  }
  if (static_cast<int>(sys.vel_names.size()) != sys.k)
    throw ModelError("build_system: velocity name count does not match distribution rank");
  for (int i = 1; i <= sys.n - sys.k; ++i) sys.adj_names.push_back("p_" + std::to_string(i));
  sys.velocity_box = default_intervals(input.velocity_box, sys.vel_names);
  sys.adjoint_box = default_intervals(input.adjoint_box, sys.adj_names);

  Box geo_box = box_with_params(sys.chart_box, sys.params);
  check_positive_definite(sys.g, geo_box);
  sys.gamma = christoffel_symbols(sys.g);

  sys.frame_d = gram_schmidt_frame(sys.g, input.d_spanning, geo_box);
  if (input.complement_spanning.empty()) {
    sys.frame_dp = orthogonal_complement_frame(sys.g, sys.frame_d, geo_box);
  } else {
    sys.frame_dp =
        gram_schmidt_frame(sys.g, input.complement_spanning, geo_box, FrameRole::kComplement);
    for (const VectorField& xa : sys.frame_d.fields)
      for (const VectorField& xi : sys.frame_dp.fields)
        if (!probably_zero(metric_pairing(sys.g, xa, xi), geo_box))
          throw ModelError("build_system: supplied complement is not orthogonal to D");
  }
  if (sys.frame_dp.rank() != sys.n - sys.k)
    throw ModelError("build_system: complement rank mismatch");
  check_orthonormal(sys.g, sys.frame_d, geo_box);
  check_orthonormal(sys.g, sys.frame_dp, geo_box);

  const int n = sys.n, k = sys.k, m = sys.n - sys.k;

  // full-frame covariant derivative table
  std::vector<const VectorField*> frame;
  for (const auto& f : sys.frame_d.fields) frame.push_back(&f);
  for (const auto& f : sys.frame_dp.fields) frame.push_back(&f);
  std::vector<std::vector<VectorField>> nabla(n, std::vector<VectorField>(n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      nabla[a][b] = covariant_derivative(sys.gamma, sys.chart, *frame[a], *frame[b]);

  auto coeff = [&](const VectorField& f, const VectorField& x) {
    return metric_pairing(sys.g, f, x);
  };

  sys.gamma_d.assign(k, std::vector<std::vector<Expr>>(k, std::vector<Expr>(k)));
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      for (int c = 0; c < k; ++c) sys.gamma_d[a][b][c] = coeff(nabla[a][b], *frame[c]);

  sys.gamma_dp.assign(k, std::vector<std::vector<Expr>>(m, std::vector<Expr>(m)));
  for (int a = 0; a < k; ++a)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        sys.gamma_dp[a][i][j] = coeff(nabla[a][k + i], *frame[k + j]);

  sys.f_coeff.assign(k, std::vector<std::vector<Expr>>(k, std::vector<Expr>(m)));
  sys.g_coeff.assign(k, std::vector<std::vector<Expr>>(k, std::vector<Expr>(m)));
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      for (int i = 0; i < m; ++i) {
        // S_D(X_a, X_b) = P_{D⊥}(∇_{X_a}X_b) for X_b ∈ Γ(D)
        Expr sab = coeff(nabla[a][b], *frame[k + i]);
        Expr sba = coeff(nabla[b][a], *frame[k + i]);
        sys.f_coeff[a][b][i] = simplify(sab - sba);
        sys.g_coeff[a][b][i] = simplify(sab + sba);
      }
    }
  }

  sys.s_dp_coeff.assign(m, std::vector<std::vector<Expr>>(m, std::vector<Expr>(k)));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int a = 0; a < k; ++a)
        sys.s_dp_coeff[i][j][a] = coeff(nabla[k + i][k + j], *frame[a]);

  sys.gamma_dp_chart.assign(n, std::vector<std::vector<Expr>>(m, std::vector<Expr>(m)));
  for (int mu = 0; mu < n; ++mu) {
    VectorField dir;
    dir.comp.assign(n, Expr::constant(0.0));
    dir.comp[mu] = Expr::constant(1.0);
    for (int i = 0; i < m; ++i) {
      VectorField nab = covariant_derivative(sys.gamma, sys.chart, dir, *frame[k + i]);
      for (int j = 0; j < m; ++j) sys.gamma_dp_chart[mu][i][j] = coeff(nab, *frame[k + j]);
    }
  }

  // b_D: quadratic geodesic-curvature part plus the projected potential force.
  // The quadratic part is G_D(v,v) summed over both index orders, matching the
  // worked rolling-disc equations this library reproduces.
  std::vector<Expr> vels = velocity_exprs(sys.vel_names);
  VectorField grad = gradient_field(sys.g, sys.potential);
  sys.b_comp.resize(m);
  for (int i = 0; i < m; ++i) {
    Expr acc = metric_pairing(sys.g, grad, *frame[k + i]);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) acc = acc + vels[a] * vels[b] * sys.g_coeff[a][b][i];
    sys.b_comp[i] = simplify(acc);
  }

  sys.a_mat.assign(m, std::vector<Expr>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      Expr acc = Expr::constant(0.0);
      for (int a = 0; a < k; ++a) acc = acc + vels[a] * sys.s_dp_coeff[i][j][a];
      sys.a_mat[i][j] = simplify(acc);
    }
  }

  sys.fhat.assign(k, std::vector<Expr>(m));
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < m; ++i) {
      Expr acc = Expr::constant(0.0);
      for (int a = 0; a < k; ++a) acc = acc + vels[a] * sys.f_coeff[c][a][i];
      sys.fhat[c][i] = simplify(acc);
    }
  }

  sys.xnh_qdot.resize(n);
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int a = 0; a < k; ++a) acc = acc + vels[a] * frame[a]->comp[i];
    sys.xnh_qdot[i] = simplify(acc);
  }
  sys.xnh_vdot.resize(k);
  for (int c = 0; c < k; ++c) {
    Expr acc = Expr::constant(0.0);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) acc = acc - sys.gamma_d[a][b][c] * vels[a] * vels[b];
    for (int i = 0; i < n; ++i)
      acc = acc - frame[c]->comp[i] * partial_derivative(sys.potential, sys.chart[i]);
    sys.xnh_vdot[c] = simplify(acc);
  }

  // adjoint transport: ṗ_i = Σ_{a,j} v_a Γ^{⊥,j}_{a i} p_j + (A p)_i [+ b_i]
  std::vector<Expr> adj;
  for (const auto& nm : sys.adj_names) adj.push_back(Expr::var(nm));
  sys.pdot_sing.resize(m);
  sys.pdot_reg.resize(m);
  for (int i = 0; i < m; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int a = 0; a < k; ++a)
      for (int j = 0; j < m; ++j) acc = acc + vels[a] * sys.gamma_dp[a][i][j] * adj[j];
    for (int j = 0; j < m; ++j) acc = acc + sys.a_mat[i][j] * adj[j];
    sys.pdot_sing[i] = simplify(acc);
    sys.pdot_reg[i] = simplify(acc + sys.b_comp[i]);
  }

  sys.dp_flat.resize(m);
  for (int i = 0; i < m; ++i) sys.dp_flat[i] = musical_flat(sys.g, frame[k + i]->comp);

  sys.layout = sys.chart;
  sys.layout.insert(sys.layout.end(), sys.vel_names.begin(), sys.vel_names.end());
  sys.layout.insert(sys.layout.end(), sys.adj_names.begin(), sys.adj_names.end());
  auto compile = [&](const Expr& e) { return CompiledExpr(e, sys.layout, sys.params); };
  for (const Expr& e : sys.xnh_qdot) sys.c_qdot.push_back(compile(e));
  for (const Expr& e : sys.xnh_vdot) sys.c_vdot.push_back(compile(e));
  for (const Expr& e : sys.b_comp) sys.c_b.push_back(compile(e));
  for (const Expr& e : sys.pdot_sing) sys.c_pdot_sing.push_back(compile(e));
  for (const Expr& e : sys.pdot_reg) sys.c_pdot_reg.push_back(compile(e));
  sys.c_fhat.resize(k);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < m; ++i) sys.c_fhat[c].push_back(compile(sys.fhat[c][i]));
  sys.c_amat.resize(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) sys.c_amat[i].push_back(compile(sys.a_mat[i][j]));
  sys.c_dp_flat.resize(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) sys.c_dp_flat[i].push_back(compile(sys.dp_flat[i][j]));
  sys.c_potential = compile(sys.potential);

  return sys;
}

std::vector<double> pack_state(const MechanicalSystem& sys, const PhaseState& s,
                               Dynamics which) {
  std::vector<double> out(static_cast<std::size_t>(2 * sys.n), 0.0);
  std::copy(s.q.begin(), s.q.end(), out.begin());
  std::copy(s.v.begin(), s.v.end(), out.begin() + sys.n);
  if (which != Dynamics::kNH && !s.p.empty())
    std::copy(s.p.begin(), s.p.end(), out.begin() + sys.n + sys.k);
  return out;
}

Eigen::VectorXd b_field(const MechanicalSystem& sys, const PhaseState& s) {
  std::vector<double> st = pack_state(sys, s, Dynamics::kNH);
  Eigen::VectorXd out(sys.n - sys.k);
  for (int i = 0; i < sys.n - sys.k; ++i) out(i) = sys.c_b[i].eval(st.data());
  return out;
}

Eigen::MatrixXd a_field(const MechanicalSystem& sys, const PhaseState& s) {
  std::vector<double> st = pack_state(sys, s, Dynamics::kNH);
  int m = sys.n - sys.k;
  Eigen::MatrixXd out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = sys.c_amat[i][j].eval(st.data());
  return out;
}

Eigen::MatrixXd fhat_star_matrix(const MechanicalSystem& sys, const PhaseState& s) {
  std::vector<double> st = pack_state(sys, s, Dynamics::kNH);
  Eigen::MatrixXd out(sys.k, sys.n - sys.k);
  for (int c = 0; c < sys.k; ++c)
    for (int i = 0; i < sys.n - sys.k; ++i) out(c, i) = sys.c_fhat[c][i].eval(st.data());
  return out;
}

std::vector<AffineFiberFunction> kernel_annihilator_generators(const MechanicalSystem& sys) {
  std::vector<AffineFiberFunction> out;
  for (int c = 0; c < sys.k; ++c) {
    AffineFiberFunction f;
    f.mu = sys.fhat[c];
    f.c = Expr::constant(0.0);
    out.push_back(std::move(f));
  }
  return out;
}

void eval_rhs(const MechanicalSystem& sys, Dynamics which, const double* state, double* out) {
  const int n = sys.n, k = sys.k, m = sys.n - sys.k;
  for (int i = 0; i < n; ++i) out[i] = sys.c_qdot[i].eval(state);
  for (int c = 0; c < k; ++c) out[n + c] = sys.c_vdot[c].eval(state);
  if (which == Dynamics::kNH) return;
  if (which == Dynamics::kRcv) {
    for (int c = 0; c < k; ++c) {
      double force = 0.0;
      for (int i = 0; i < m; ++i) force += sys.c_fhat[c][i].eval(state) * state[n + k + i];
      out[n + c] += force;
    }
  }
  const auto& pdot = which == Dynamics::kSing ? sys.c_pdot_sing : sys.c_pdot_reg;
  for (int i = 0; i < m; ++i) out[n + k + i] = pdot[i].eval(state);
}

namespace {

Eigen::VectorXd rhs_dispatch(const MechanicalSystem& sys, Dynamics which, const PhaseState& s) {
  std::vector<double> st = pack_state(sys, s, which);
  Eigen::VectorXd out(sys.state_dim(which));
  eval_rhs(sys, which, st.data(), out.data());
  return out;
}

}  // namespace

Eigen::VectorXd rhs_nh(const MechanicalSystem& sys, const PhaseState& s) {
  return rhs_dispatch(sys, Dynamics::kNH, s);
}
Eigen::VectorXd rhs_reg(const MechanicalSystem& sys, const PhaseState& s) {
  return rhs_dispatch(sys, Dynamics::kReg, s);
}
Eigen::VectorXd rhs_sing(const MechanicalSystem& sys, const PhaseState& s) {
  return rhs_dispatch(sys, Dynamics::kSing, s);
}
Eigen::VectorXd rhs_rcv(const MechanicalSystem& sys, const PhaseState& s) {
  return rhs_dispatch(sys, Dynamics::kRcv, s);
}

Expr nh_directional_derivative(const MechanicalSystem& sys, const Expr& h) {
  Expr acc = Expr::constant(0.0);
  for (int i = 0; i < sys.n; ++i)
    acc = acc + sys.xnh_qdot[i] * partial_derivative(h, sys.chart[i]);
  for (int a = 0; a < sys.k; ++a)
    acc = acc + sys.xnh_vdot[a] * partial_derivative(h, sys.vel_names[a]);
  return simplify(acc);
}

Expr energy_expression(const MechanicalSystem& sys) {
  Expr acc = sys.potential;
  for (const auto& vn : sys.vel_names) {
    Expr v = Expr::var(vn);
    acc = acc + Expr::constant(0.5) * v * v;
  }
  return simplify(acc);
}

}  // namespace nonholo
