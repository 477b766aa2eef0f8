#include "nonholo/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nonholo {

namespace {

Expr det_recursive(const ExprMatrix& m, std::vector<int> cols) {
  int row = static_cast<int>(m.size()) - static_cast<int>(cols.size());
  if (cols.size() == 1) return m[row][cols[0]];
  Expr acc = Expr::constant(0.0);
  for (std::size_t pick = 0; pick < cols.size(); ++pick) {
    std::vector<int> rest;
    rest.reserve(cols.size() - 1);
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (j != pick) rest.push_back(cols[j]);
    Expr minor = det_recursive(m, rest);
    Expr term = m[row][cols[pick]] * minor;
    acc = (pick % 2 == 0) ? acc + term : acc - term;
  }
  return acc;
}

Expr determinant(const ExprMatrix& m) {
  std::vector<int> cols(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) cols[i] = static_cast<int>(i);
  return simplify(det_recursive(m, cols));
}

ExprMatrix minor_matrix(const ExprMatrix& m, int row, int col) {
  ExprMatrix out;
  for (int i = 0; i < static_cast<int>(m.size()); ++i) {
    if (i == row) continue;
    std::vector<Expr> r;
    for (int j = 0; j < static_cast<int>(m.size()); ++j) {
      if (j == col) continue;
      r.push_back(m[i][j]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

ExprMatrix metric_inverse(const Metric& g) {
  int n = g.dim();
  Expr det = determinant(g.entries);
  if (det.is_zero()) throw SingularMetricError("metric determinant is identically zero");
  ExprMatrix inv(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Expr cof = g.entries.size() == 1 ? Expr::constant(1.0) : determinant(minor_matrix(g.entries, j, i));
      Expr sign = ((i + j) % 2 == 0) ? Expr::constant(1.0) : Expr::constant(-1.0);
      inv[i][j] = simplify(sign * cof / det);
    }
  }
  return inv;
}

ChartChristoffels christoffel_symbols(const Metric& g) {
  int n = g.dim();
  ExprMatrix ginv = metric_inverse(g);
  // ∂_i g_{jl}
  std::vector<ExprMatrix> dg(n, ExprMatrix(n, std::vector<Expr>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) dg[i][j][l] = partial_derivative(g.entries[j][l], g.vars[i]);

  ChartChristoffels gamma(n, ExprMatrix(n, std::vector<Expr>(n)));
  Expr half = Expr::constant(0.5);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Expr acc = Expr::constant(0.0);
        for (int l = 0; l < n; ++l) {
          acc = acc + ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
        }
        gamma[k][i][j] = simplify(half * acc);
      }
    }
  }
  return gamma;
}

std::vector<Expr> musical_flat(const Metric& g, const std::vector<Expr>& vec) {
  int n = g.dim();
  std::vector<Expr> out(n);
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int j = 0; j < n; ++j) acc = acc + g.entries[i][j] * vec[j];
    out[i] = simplify(acc);
  }
  return out;
}

std::vector<Expr> musical_sharp(const Metric& g, const std::vector<Expr>& covec) {
  int n = g.dim();
  ExprMatrix ginv = metric_inverse(g);
  std::vector<Expr> out(n);
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int j = 0; j < n; ++j) acc = acc + ginv[i][j] * covec[j];
    out[i] = simplify(acc);
  }
  return out;
}

VectorField gradient_field(const Metric& g, const Expr& potential) {
  std::vector<Expr> dV(g.dim());
  for (int i = 0; i < g.dim(); ++i) dV[i] = partial_derivative(potential, g.vars[i]);
  return VectorField{musical_sharp(g, dV)};
}

Expr metric_pairing(const Metric& g, const VectorField& a, const VectorField& b) {
  Expr acc = Expr::constant(0.0);
  for (int i = 0; i < g.dim(); ++i)
    for (int j = 0; j < g.dim(); ++j) acc = acc + g.entries[i][j] * a.comp[i] * b.comp[j];
  return simplify(acc);
}

namespace {

VectorField scale_field(const VectorField& v, const Expr& s) {
  VectorField out;
  out.comp.reserve(v.comp.size());
  for (const Expr& c : v.comp) out.comp.push_back(simplify(s * c));
  return out;
}

VectorField subtract_scaled(const VectorField& v, const Expr& s, const VectorField& w) {
  VectorField out;
  out.comp.reserve(v.comp.size());
  for (std::size_t i = 0; i < v.comp.size(); ++i)
    out.comp.push_back(simplify(v.comp[i] - s * w.comp[i]));
  return out;
}

double sampled_min(const Expr& e, const Box& box, int trials, std::uint64_t seed) {
  Environment env;
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < trials; ++i) {
    sample_box(box, seed, i, &env);
    lo = std::min(lo, evaluate(e, env));
  }
  return lo;
}

// One Gram-Schmidt pass against the accepted fields; skips projections that
// are certified zero, so exact inputs come through structurally intact.
VectorField project_out(const Metric& g, VectorField u, const std::vector<VectorField>& against,
                        const Box& box) {
  for (const VectorField& e : against) {
    Expr d = metric_pairing(g, u, e);
    if (d.is_zero() || probably_zero(d, box)) continue;
    u = subtract_scaled(u, d, e);
  }
  return u;
}

constexpr double kPivotTol = 1e-8;

}  // namespace

Frame gram_schmidt_frame(const Metric& g, const std::vector<VectorField>& spanning,
                         const Box& box, FrameRole role) {
  Frame out;
  out.role = role;
  for (std::size_t i = 0; i < spanning.size(); ++i) {
    VectorField u = project_out(g, spanning[i], out.fields, box);
    u = project_out(g, u, out.fields, box);  // re-orthogonalization pass
    Expr n2 = metric_pairing(g, u, u);
    if (sampled_min(n2, box, 64, kDefaultSeed) < kPivotTol)
      throw RankDropError("gram_schmidt_frame: rank drop at input " + std::to_string(i));
    if (!probably_zero(n2 - Expr::constant(1.0), box)) {
      u = scale_field(u, pow_of(n2, -1, 2));
    }
    out.fields.push_back(std::move(u));
  }
  return out;
}

Frame orthogonal_complement_frame(const Metric& g, const Frame& d_frame, const Box& box) {
  int n = g.dim();
  int want = n - d_frame.rank();
  Frame out;
  out.role = FrameRole::kComplement;
  if (want == 0) return out;
  for (int i = 0; i < n && out.rank() < want; ++i) {
    VectorField cand;
    cand.comp.assign(n, Expr::constant(0.0));
    cand.comp[i] = Expr::constant(1.0);
    VectorField u = project_out(g, cand, d_frame.fields, box);
    u = project_out(g, u, out.fields, box);
    u = project_out(g, u, d_frame.fields, box);  // re-orthogonalization pass
    u = project_out(g, u, out.fields, box);
    Expr n2 = metric_pairing(g, u, u);
    if (sampled_min(n2, box, 64, kDefaultSeed) < kPivotTol) continue;
    if (!probably_zero(n2 - Expr::constant(1.0), box)) {
      u = scale_field(u, pow_of(n2, -1, 2));
    }
    out.fields.push_back(std::move(u));
  }
  if (out.rank() != want)
    throw RankDropError("orthogonal_complement_frame: could not reach rank " +
                        std::to_string(want));
  return out;
}

ExprMatrix projector(const Metric& g, const Frame& frame) {
  int n = g.dim();
  ExprMatrix p(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (const VectorField& x : frame.fields) {
    std::vector<Expr> flat = musical_flat(g, x.comp);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) p[i][j] = p[i][j] + x.comp[i] * flat[j];
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p[i][j] = simplify(p[i][j]);
  return p;
}

VectorField apply_matrix(const ExprMatrix& m, const VectorField& v) {
  int n = static_cast<int>(m.size());
  VectorField out;
  out.comp.resize(n);
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int j = 0; j < n; ++j) acc = acc + m[i][j] * v.comp[j];
    out.comp[i] = simplify(acc);
  }
  return out;
}

VectorField covariant_derivative(const ChartChristoffels& gamma,
                                 const std::vector<std::string>& vars, const VectorField& X,
                                 const VectorField& Y) {
  int n = static_cast<int>(vars.size());
  VectorField out;
  out.comp.resize(n);
  for (int k = 0; k < n; ++k) {
    Expr acc = Expr::constant(0.0);
    for (int i = 0; i < n; ++i) {
      acc = acc + X.comp[i] * partial_derivative(Y.comp[k], vars[i]);
      for (int j = 0; j < n; ++j) acc = acc + gamma[k][i][j] * X.comp[i] * Y.comp[j];
    }
    out.comp[k] = simplify(acc);
  }
  return out;
}

VectorField constrained_derivative(const Metric& g, const ChartChristoffels& gamma,
                                   const Frame& frame, const VectorField& X,
                                   const VectorField& Y) {
  VectorField nab = covariant_derivative(gamma, g.vars, X, Y);
  // project with Σ_a 𝔾(∇, X_a) X_a rather than the full projector matrix;
  // fewer expression blowups for orthonormal frames
  int n = g.dim();
  VectorField out;
  out.comp.assign(n, Expr::constant(0.0));
  for (const VectorField& xa : frame.fields) {
    Expr coeff = metric_pairing(g, nab, xa);
    for (int i = 0; i < n; ++i) out.comp[i] = out.comp[i] + coeff * xa.comp[i];
  }
  for (int i = 0; i < n; ++i) out.comp[i] = simplify(out.comp[i]);
  return out;
}

namespace {

void require_in_span(const Metric& g, const Frame& frame, const VectorField& Y, const Box& box,
                     const char* who) {
  // residual of Y against its frame expansion
  VectorField resid = Y;
  for (const VectorField& xa : frame.fields) {
    Expr coeff = metric_pairing(g, Y, xa);
    resid = subtract_scaled(resid, coeff, xa);
  }
  for (const Expr& c : resid.comp) {
    if (!probably_zero(c, box, 64, 1e-9))
      throw PreconditionError(std::string(who) + ": argument not tangent to the distribution");
  }
}

}  // namespace

VectorField second_fundamental_form(const Metric& g, const ChartChristoffels& gamma,
                                    const Frame& frame_d, const VectorField& X,
                                    const VectorField& Y, const Box& box) {
  require_in_span(g, frame_d, Y, box, "second_fundamental_form");
  VectorField nab = covariant_derivative(gamma, g.vars, X, Y);
  // P_{D⊥} = id − P_D
  VectorField proj = nab;
  for (const VectorField& xa : frame_d.fields) {
    Expr coeff = metric_pairing(g, nab, xa);
    proj = subtract_scaled(proj, coeff, xa);
  }
  return proj;
}

VectorField frobenius_curvature(const Metric& g, const ChartChristoffels& gamma,
                                const Frame& frame_d, const VectorField& X, const VectorField& Y,
                                const Box& box) {
  require_in_span(g, frame_d, X, box, "frobenius_curvature");
  VectorField sxy = second_fundamental_form(g, gamma, frame_d, X, Y, box);
  VectorField syx = second_fundamental_form(g, gamma, frame_d, Y, X, box);
  VectorField out;
  out.comp.resize(g.dim());
  for (int i = 0; i < g.dim(); ++i) out.comp[i] = simplify(sxy.comp[i] - syx.comp[i]);
  return out;
}

VectorField geodesic_curvature(const Metric& g, const ChartChristoffels& gamma,
                               const Frame& frame_d, const VectorField& X, const VectorField& Y,
                               const Box& box) {
  require_in_span(g, frame_d, X, box, "geodesic_curvature");
  VectorField sxy = second_fundamental_form(g, gamma, frame_d, X, Y, box);
  VectorField syx = second_fundamental_form(g, gamma, frame_d, Y, X, box);
  VectorField out;
  out.comp.resize(g.dim());
  for (int i = 0; i < g.dim(); ++i) out.comp[i] = simplify(sxy.comp[i] + syx.comp[i]);
  return out;
}

CurvatureTranspose curvature_transpose(const Metric& g, CurvatureKind which,
                                       const ChartChristoffels& gamma, const Frame& inner,
                                       const Frame& outer, const Box& box) {
  int k = inner.rank();
  int m = outer.rank();
  // W(X_a, X_b) coefficients against the outer frame
  std::vector<std::vector<std::vector<Expr>>> w(
      k, std::vector<std::vector<Expr>>(k, std::vector<Expr>(m)));
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      VectorField field =
          which == CurvatureKind::kFrobenius
              ? frobenius_curvature(g, gamma, inner, inner.fields[a], inner.fields[b], box)
              : geodesic_curvature(g, gamma, inner, inner.fields[a], inner.fields[b], box);
      for (int i = 0; i < m; ++i) w[a][b][i] = metric_pairing(g, field, outer.fields[i]);
    }
  }
  // 𝔾(X_c, W★(β_i)(Y_b)) = 𝔾(β_i, W(X_c, Y_b))
  CurvatureTranspose out;
  out.table.assign(m, std::vector<std::vector<Expr>>(k, std::vector<Expr>(k)));
  for (int i = 0; i < m; ++i)
    for (int b = 0; b < k; ++b)
      for (int c = 0; c < k; ++c) out.table[i][b][c] = w[c][b][i];
  return out;
}

void check_positive_definite(const Metric& g, const Box& box, int samples, std::uint64_t seed) {
  int n = g.dim();
  Environment env;
  for (int s = 0; s < samples; ++s) {
    sample_box(box, seed, s, &env);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = evaluate(g.entries[i][j], env);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
      throw SingularMetricError("metric is not positive definite at a sampled chart point");
  }
}

void check_orthonormal(const Metric& g, const Frame& frame, const Box& box, double tol) {
  for (int i = 0; i < frame.rank(); ++i) {
    for (int j = i; j < frame.rank(); ++j) {
      Expr d = metric_pairing(g, frame.fields[i], frame.fields[j]);
      Expr target = i == j ? d - Expr::constant(1.0) : d;
      if (!probably_zero(target, box, 64, tol))
        throw PreconditionError("frame is not orthonormal to the requested tolerance");
    }
  }
}

Box box_with_params(const Box& box, const std::map<std::string, double>& params) {
  Box out = box;
  for (const auto& [name, v] : params) out[name] = {v, v};
  return out;
}

}  // namespace nonholo
