#ifndef NONHOLO_GEOMETRY_HPP
#define NONHOLO_GEOMETRY_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "nonholo/expr.hpp"

namespace nonholo {

class RankDropError : public std::runtime_error {
 public:
  explicit RankDropError(const std::string& what) : std::runtime_error(what) {}
};

class SingularMetricError : public std::runtime_error {
 public:
  explicit SingularMetricError(const std::string& what) : std::runtime_error(what) {}
};

class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

using ExprMatrix = std::vector<std::vector<Expr>>;

/// Riemannian metric in one chart: a symmetric matrix of expressions in the
/// chart variables.
struct Metric {
  std::vector<std::string> vars;
  ExprMatrix entries;
  int dim() const { return static_cast<int>(vars.size()); }
};

struct VectorField {
  std::vector<Expr> comp;  // chart components
};

enum class FrameRole { kDistribution, kComplement, kFull };

/// Ordered list of (orthonormal) vector fields.
struct Frame {
  std::vector<VectorField> fields;
  FrameRole role = FrameRole::kDistribution;
  int rank() const { return static_cast<int>(fields.size()); }
};

/// Levi-Civita connection coefficients, gamma[k][i][j] = Γ^k_{ij}.
using ChartChristoffels = std::vector<ExprMatrix>;

ExprMatrix metric_inverse(const Metric& g);

/// Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}).
ChartChristoffels christoffel_symbols(const Metric& g);

std::vector<Expr> musical_flat(const Metric& g, const std::vector<Expr>& vec);
std::vector<Expr> musical_sharp(const Metric& g, const std::vector<Expr>& covec);

/// grad V = 𝔾♯ ∘ dV.
VectorField gradient_field(const Metric& g, const Expr& potential);

/// 𝔾(a, b) as an expression.
Expr metric_pairing(const Metric& g, const VectorField& a, const VectorField& b);

/// Classical Gram-Schmidt in input order with a re-orthogonalization pass.
/// Projections and normalizations certified unnecessary by probably_zero over
/// `box` are skipped, so an already orthonormal input comes back unchanged.
/// Throws RankDropError when a pivot norm² falls below 1e-8 at some sample.
Frame gram_schmidt_frame(const Metric& g, const std::vector<VectorField>& spanning,
                         const Box& box, FrameRole role = FrameRole::kDistribution);

/// Orthonormal complement of an orthonormal frame, seeded with the coordinate
/// fields in chart order.
Frame orthogonal_complement_frame(const Metric& g, const Frame& d_frame, const Box& box);

/// P = Σ_a X_a ⊗ 𝔾♭X_a for an orthonormal frame.
ExprMatrix projector(const Metric& g, const Frame& frame);

VectorField apply_matrix(const ExprMatrix& m, const VectorField& v);

/// (∇_X Y)^k = X^i ∂_i Y^k + Γ^k_{ij} X^i Y^j.
VectorField covariant_derivative(const ChartChristoffels& gamma,
                                 const std::vector<std::string>& vars, const VectorField& X,
                                 const VectorField& Y);

/// P_frame ∘ ∇^𝔾_X Y; with the D frame this is the constrained connection,
/// with the D⊥ frame its complement-bundle analogue.
VectorField constrained_derivative(const Metric& g, const ChartChristoffels& gamma,
                                   const Frame& frame, const VectorField& X,
                                   const VectorField& Y);

/// S_D(X, Y) = P_{D⊥}(∇^𝔾_X Y) for Y ∈ Γ(D).  Requires Y pointwise in
/// span(frame_d) (sampled residual ≤ 1e-9), else PreconditionError.
VectorField second_fundamental_form(const Metric& g, const ChartChristoffels& gamma,
                                    const Frame& frame_d, const VectorField& X,
                                    const VectorField& Y, const Box& box);

/// F_D(X,Y) = S_D(X,Y) − S_D(Y,X); antisymmetric by construction.
VectorField frobenius_curvature(const Metric& g, const ChartChristoffels& gamma,
                                const Frame& frame_d, const VectorField& X,
                                const VectorField& Y, const Box& box);

/// G_D(X,Y) = S_D(X,Y) + S_D(Y,X); symmetric by construction.
VectorField geodesic_curvature(const Metric& g, const ChartChristoffels& gamma,
                               const Frame& frame_d, const VectorField& X, const VectorField& Y,
                               const Box& box);

enum class CurvatureKind { kFrobenius, kGeodesic };

/// Transposes of F/G for the distribution spanned by `inner` with values in
/// `outer`, as frame-coefficient tables.  star(i, b) is W★(β_i)(Y_b) and
/// ast(b, i) is W*(Y_b)(β_i); the two are the same field with flipped
/// arguments.  Entry [i][b][c] is the inner-frame coefficient c.
struct CurvatureTranspose {
  std::vector<std::vector<std::vector<Expr>>> table;
  const std::vector<Expr>& star(int beta_index, int y_index) const {
    return table[beta_index][y_index];
  }
  const std::vector<Expr>& ast(int y_index, int beta_index) const {
    return table[beta_index][y_index];
  }
};

CurvatureTranspose curvature_transpose(const Metric& g, CurvatureKind which,
                                       const ChartChristoffels& gamma, const Frame& inner,
                                       const Frame& outer, const Box& box);

/// Numeric positive-definiteness check (Cholesky at sampled points).
void check_positive_definite(const Metric& g, const Box& box, int samples = 64,
                             std::uint64_t seed = kDefaultSeed);

/// Sampled 𝔾-orthonormality check to `tol`; throws PreconditionError.
void check_orthonormal(const Metric& g, const Frame& frame, const Box& box, double tol = 1e-10);

/// Chart box extended with degenerate intervals for fixed parameter values.
Box box_with_params(const Box& box, const std::map<std::string, double>& params);

}  // namespace nonholo

#endif  // NONHOLO_GEOMETRY_HPP
