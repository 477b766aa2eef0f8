#ifndef NONHOLO_INVARIANCE_HPP
#define NONHOLO_INVARIANCE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nonholo/mechanics.hpp"

namespace nonholo {

class SizeGuardError : public std::runtime_error {
 public:
  explicit SizeGuardError(const std::string& what) : std::runtime_error(what) {}
};

constexpr std::size_t kDefaultNodeCap = 200000;

/// One Lie derivative of mu^e + c^h along the regular or singular dynamics:
/// mu' = (∇_{X_0} + A*) mu and c' = <mu, b> + ℒ_{X_0} c, with the b pairing
/// dropped for the singular field.
AffineFiberFunction lie_step(const MechanicalSystem& sys, const AffineFiberFunction& f,
                             Dynamics which, std::size_t node_cap = kDefaultNodeCap);

/// k-fold lie_step; equals (L_k λ, c_k λ) of the iterated-derivative
/// recursion.  Throws SizeGuardError when an intermediate expression exceeds
/// `node_cap` nodes.
AffineFiberFunction iterated_lie(const MechanicalSystem& sys, const AffineFiberFunction& lambda,
                                 int k, Dynamics which, std::size_t node_cap = kDefaultNodeCap);

/// Direct-sum form c_k(λ) = Σ_{j=1..k} ℒ_X^{j-1}<L_{k-j}λ, b>; an
/// independent oracle for the recursive offset.
Expr c_direct(const MechanicalSystem& sys, const AffineFiberFunction& lambda, int k,
              Dynamics which, std::size_t node_cap = kDefaultNodeCap);

/// Max sampled residual of c_{k+l}(λ) = c_l(L_k λ) + ℒ_X^l c_k(λ).
double recursion_identity_check(const MechanicalSystem& sys, const AffineFiberFunction& lambda,
                                int k, int l, Dynamics which = Dynamics::kReg,
                                int samples = 50, std::uint64_t seed = kDefaultSeed);

/// The covariant derivative part of the mu recursion (no A* term); used by
/// the admissibility differential condition.
std::vector<Expr> dual_derivative(const MechanicalSystem& sys, const std::vector<Expr>& mu);

/// Fiberwise solution set of stacked affine conditions mu·p + c = 0.
struct AffineSolutionSet {
  bool nonempty = true;
  Eigen::VectorXd particular;  // minimal-norm solution
  Eigen::MatrixXd kernel;      // orthonormal basis of the direction space
  double residual = 0.0;
  int dim() const { return nonempty ? static_cast<int>(kernel.cols()) : -1; }
};

AffineSolutionSet fiber_affine_solve(const Eigen::MatrixXd& rows, const Eigen::VectorXd& offsets,
                                     double rank_tol = 1e-8);

bool solution_sets_equal(const AffineSolutionSet& a, const AffineSolutionSet& b,
                         double tol = 1e-8);

struct SearchOptions {
  Dynamics which = Dynamics::kReg;  // kReg or kSing
  int n_max = 8;
  int samples = 50;
  double rank_tol = 1e-8;
  std::uint64_t seed = kDefaultSeed;
  std::vector<Expr> stratum;  // predicates over (q, v), solved to == 0
  std::size_t node_cap = kDefaultNodeCap;
};

struct SearchSample {
  PhaseState state;
  AffineSolutionSet solution;
  int stabilization_order = -1;  // first K with A_K = A_{K+1}
  bool stabilized = false;
};

/// Search output: per-sample fibers plus the stacked symbolic conditions.
struct StratifiedVariety {
  std::vector<SearchSample> samples;
  std::vector<std::vector<AffineFiberFunction>> iterates;  // [order][generator]
  int orders_used = 0;
  Dynamics which = Dynamics::kReg;

  /// stacked conditions up to `order` (all generators, orders 0..order)
  std::vector<AffineFiberFunction> stacked_conditions(int order) const;
  /// histogram over (nonempty, fiber dimension); empty fibers use dim -1
  std::map<std::pair<bool, int>, int> summary() const;
};

/// Samples states (projected onto the stratum), stacks iterated Lie
/// derivatives of the generators, and solves each fiber until the solution
/// set stabilizes or n_max is reached.
StratifiedVariety invariant_variety_search(const MechanicalSystem& sys,
                                           const std::vector<AffineFiberFunction>& generators,
                                           const SearchOptions& options);

struct AdmissibilitySample {
  bool applicable = false;  // nonempty stabilized fiber
  double residual_a = 0.0;  // A_D maps the direction space into ker(F̂*)
  double residual_b = 0.0;  // ∇_{X_0} generators lie in span(Δ_1 rows)
  bool pass = true;
};

struct AdmissibilityReport {
  std::vector<AdmissibilitySample> samples;
  bool all_pass = true;
};

AdmissibilityReport admissibility_check(const MechanicalSystem& sys,
                                        const StratifiedVariety& variety,
                                        const std::vector<AffineFiberFunction>& generators,
                                        double tol = 1e-8);

struct NowhereVanishingResult {
  bool nowhere_vanishing = false;
  double min_norm = 0.0;
  std::map<std::string, double> minimizer;
};

/// Sampled multistart minimization of |X_0| over the box (compass-search
/// refinement); true iff the minimum exceeds `tol`.  Degenerate box entries
/// pin values (parameters); the search runs over the remaining dimensions.
NowhereVanishingResult spencer_condition_i(const std::vector<Expr>& field, const Box& box,
                                           int samples = 512, double tol = 1e-6,
                                           std::uint64_t seed = kDefaultSeed);

/// Vector bundle with connection over a chart, split into F ⊕ F⊥ fiberwise.
struct BundleData {
  std::vector<std::string> base_vars;
  int fiber_dim = 0;
  // gamma[mu][i][j]: ∇_{∂_mu} e_i = Σ_j (.) e_j
  std::vector<std::vector<std::vector<Expr>>> gamma;
  ExprMatrix fperp_projector;  // fiber_dim x fiber_dim
  std::vector<Expr> x0;        // components of X_0 over base_vars
};

/// Antisymmetry residual of P_{F⊥}∇ P_{F⊥}∇ ξ at `point` for a section ξ
/// satisfying the first-order condition P_{F⊥}(∇_{X_0}ξ) = 0 there (checked
/// to `precondition_tol`, else PreconditionError).
double spencer_condition_ii(const BundleData& bundle, const std::vector<Expr>& xi,
                            const std::map<std::string, double>& point,
                            double precondition_tol = 1e-8);

/// The pulled-back adjoint bundle of a mechanical system, with F spanned by
/// constant fiber directions; the complement projector is built numerically.
BundleData adjoint_bundle_data(const MechanicalSystem& sys,
                               const std::vector<Eigen::VectorXd>& f_span);

/// Samples a state from the system box and projects it onto the common zero
/// set of the stratum predicates (Gauss-Newton; resamples on failure).
PhaseState sample_stratum_state(const MechanicalSystem& sys, const std::vector<Expr>& stratum,
                                std::uint64_t seed, int index);

}  // namespace nonholo

#endif  // NONHOLO_INVARIANCE_HPP
