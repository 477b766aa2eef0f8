#ifndef NONHOLO_MECHANICS_HPP
#define NONHOLO_MECHANICS_HPP

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "nonholo/geometry.hpp"

namespace nonholo {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Affine function of the adjoint components on the pulled-back bundle:
/// evaluates to Σ_i mu_i(q,v) p_i + c(q,v).  Represents mu^e + c^h.
struct AffineFiberFunction {
  std::vector<Expr> mu;
  Expr c;
};

struct PhaseState {
  std::vector<double> q;
  std::vector<double> v;
  std::vector<double> p;  // may be empty for base dynamics
};

struct SystemInput {
  std::string name;
  std::vector<std::string> chart;
  ExprMatrix metric_entries;
  Expr potential;
  std::vector<VectorField> d_spanning;
  std::vector<VectorField> complement_spanning;  // empty: derive orthogonal complement
  std::vector<std::string> velocity_names;       // empty: v_1..v_k
  std::map<std::string, double> params;
  Box chart_box;
  Box velocity_box;  // empty entries default to [-2, 2]
  Box adjoint_box;   // likewise
};

enum class Dynamics { kNH, kReg, kSing, kRcv };

/// Constrained simple mechanical system with every frame-level coefficient
/// table precomputed and simplified once at build time.
struct MechanicalSystem {
  std::string name;
  std::vector<std::string> chart;      // q names, size n
  std::vector<std::string> vel_names;  // v names, size k
  std::vector<std::string> adj_names;  // p names, size n-k
  int n = 0;
  int k = 0;

  Metric g;
  Expr potential;
  Frame frame_d;
  Frame frame_dp;
  ChartChristoffels gamma;
  std::map<std::string, double> params;
  Box chart_box, velocity_box, adjoint_box;

  // gamma_d[a][b][c]: constrained connection, ∇^D_{X_a}X_b = Σ_c (.) X_c
  std::vector<std::vector<std::vector<Expr>>> gamma_d;
  // gamma_dp[a][i][j]: ∇^{D⊥}_{X_a}X_i = Σ_j (.) X_j, a over D, i,j over D⊥
  std::vector<std::vector<std::vector<Expr>>> gamma_dp;
  // gamma_dp_chart[mu][i][j]: same connection along coordinate directions
  std::vector<std::vector<std::vector<Expr>>> gamma_dp_chart;
  // f_coeff[a][b][i] = 𝔾(X_i^⊥, F_D(X_a, X_b)); g_coeff likewise for G_D
  std::vector<std::vector<std::vector<Expr>>> f_coeff, g_coeff;
  // s_dp_coeff[i][j][a] = 𝔾(X_a, S_{D⊥}(X_i^⊥, X_j^⊥))
  std::vector<std::vector<std::vector<Expr>>> s_dp_coeff;

  // coefficient fields over (q, v)
  std::vector<Expr> b_comp;  // adjoint-frame components of b_D
  ExprMatrix a_mat;          // A_D as a matrix acting on p
  ExprMatrix fhat;           // k x (n-k), rows over D, columns over D⊥
  std::vector<Expr> xnh_qdot;
  std::vector<Expr> xnh_vdot;
  std::vector<Expr> pdot_sing;  // transport + A·p
  std::vector<Expr> pdot_reg;   // transport + A·p + b

  // dp_flat[i] = 𝔾♭ X_i^⊥ (chart components); pairing any chart velocity
  // with these gives its annihilator components
  std::vector<std::vector<Expr>> dp_flat;

  // compiled over the state layout [q..., v..., p...] with params baked in
  std::vector<std::string> layout;
  std::vector<CompiledExpr> c_qdot, c_vdot, c_b, c_pdot_sing, c_pdot_reg;
  std::vector<std::vector<CompiledExpr>> c_fhat, c_amat, c_dp_flat;
  CompiledExpr c_potential;

  int state_dim(Dynamics which) const {
    return which == Dynamics::kNH ? n + k : 2 * n;
  }
  /// chart + velocity box with parameter values pinned
  Box sampling_box() const;
  /// sampling_box plus adjoint intervals
  Box full_box() const;
};

MechanicalSystem build_system(const SystemInput& input);

Eigen::VectorXd b_field(const MechanicalSystem& sys, const PhaseState& s);
Eigen::MatrixXd a_field(const MechanicalSystem& sys, const PhaseState& s);
Eigen::MatrixXd fhat_star_matrix(const MechanicalSystem& sys, const PhaseState& s);

/// Default annihilator generators of ker(F̂*_D): the rows of the F̂* matrix
/// read as covector fields on the pulled-back bundle (zero offset).
std::vector<AffineFiberFunction> kernel_annihilator_generators(const MechanicalSystem& sys);

/// Right-hand side over the packed state [q, v] (NH) or [q, v, p] (others).
void eval_rhs(const MechanicalSystem& sys, Dynamics which, const double* state, double* out);

Eigen::VectorXd rhs_nh(const MechanicalSystem& sys, const PhaseState& s);
Eigen::VectorXd rhs_reg(const MechanicalSystem& sys, const PhaseState& s);
Eigen::VectorXd rhs_sing(const MechanicalSystem& sys, const PhaseState& s);
Eigen::VectorXd rhs_rcv(const MechanicalSystem& sys, const PhaseState& s);

/// Derivative of a scalar over (q, v) along the nonholonomic vector field.
Expr nh_directional_derivative(const MechanicalSystem& sys, const Expr& h);

/// Orthonormal-frame kinetic plus potential energy as an expression.
Expr energy_expression(const MechanicalSystem& sys);

std::vector<double> pack_state(const MechanicalSystem& sys, const PhaseState& s,
                               Dynamics which);

}  // namespace nonholo

#endif  // NONHOLO_MECHANICS_HPP
