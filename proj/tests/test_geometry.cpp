#include "nonholo/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "disc_reference.hpp"
#include "doctest.h"

using namespace nonholo;

namespace {

Metric euclidean(const std::vector<std::string>& vars) {
  Metric g;
  g.vars = vars;
  int n = g.dim();
  g.entries.assign(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i) g.entries[i][i] = Expr::constant(1.0);
  return g;
}

VectorField coordinate_field(int n, int i) {
  VectorField f;
  f.comp.assign(n, Expr::constant(0.0));
  f.comp[i] = Expr::constant(1.0);
  return f;
}

double eval_field_comp(const VectorField& f, int i, const Environment& env) {
  return evaluate(f.comp[i], env);
}

Environment disc_env(const discref::Params& p, double th, std::uint64_t seed, int index) {
  Environment env;
  sample_box(discref::full_box(p), seed, index, &env);
  env.set("theta", th);
  return env;
}

// numeric Christoffel oracle: central finite differences of the metric
double christoffel_fd(const Metric& g, int k, int i, int j, Environment env) {
  int n = g.dim();
  const double h = 1e-6;
  auto dg = [&](int a, int b, int wrt) {
    Environment hi = env, lo = env;
    int id = intern_symbol(g.vars[wrt]);
    hi.set_id(id, env.get(id) + h);
    lo.set_id(id, env.get(id) - h);
    return (evaluate(g.entries[a][b], hi) - evaluate(g.entries[a][b], lo)) / (2 * h);
  };
  Eigen::MatrixXd gm(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) gm(a, b) = evaluate(g.entries[a][b], env);
  Eigen::MatrixXd ginv = gm.inverse();
  double acc = 0.0;
  for (int l = 0; l < n; ++l) acc += 0.5 * ginv(k, l) * (dg(j, l, i) + dg(i, l, j) - dg(i, j, l));
  return acc;
}

}  // namespace

TEST_CASE("christoffel symbols") {
  discref::Params p;
  Box box = discref::full_box(p);

  SUBCASE("disc metric: all chart christoffels vanish") {
    auto gamma = christoffel_symbols(discref::metric());
    for (const auto& plane : gamma)
      for (const auto& row : plane)
        for (const Expr& e : row) CHECK(e.is_zero());
  }

  SUBCASE("euclidean plane: zero") {
    auto gamma = christoffel_symbols(euclidean({"x", "y"}));
    for (const auto& plane : gamma)
      for (const auto& row : plane)
        for (const Expr& e : row) CHECK(e.is_zero());
  }

  SUBCASE("non-diagonal metric against the finite-difference oracle") {
    Metric g;
    g.vars = {"x", "y"};
    g.entries = {{Expr::constant(2.0), Expr::var("x")},
                 {Expr::var("x"), parse_expression("1 + x^2")}};
    auto gamma = christoffel_symbols(g);
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (int trial = 0; trial < 10; ++trial) {
      Environment env{{"x", d(rng)}, {"y", d(rng)}};
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            CHECK(evaluate(gamma[k][i][j], env) ==
                  doctest::Approx(christoffel_fd(g, k, i, j, env)).epsilon(1e-5));
      // sharp then flat is the identity through the cofactor inverse
      std::vector<Expr> v = {Expr::constant(d(rng)), Expr::constant(d(rng))};
      auto back = musical_sharp(g, musical_flat(g, v));
      for (int i = 0; i < 2; ++i)
        CHECK(evaluate(back[i], env) == doctest::Approx(evaluate(v[i], env)).epsilon(1e-12));
    }
  }

  SUBCASE("polar metric diag(1, r^2)") {
    Metric g;
    g.vars = {"r", "th"};
    g.entries = {{Expr::constant(1.0), Expr::constant(0.0)},
                 {Expr::constant(0.0), parse_expression("r^2")}};
    auto gamma = christoffel_symbols(g);
    // frozen from the finite-difference oracle below: Γ^r_{θθ} = −r
    Environment env{{"r", 1.7}, {"th", 0.4}};
    CHECK(evaluate(gamma[0][1][1], env) == doctest::Approx(-1.7).epsilon(1e-12));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rd(0.5, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
      Environment e2{{"r", rd(rng)}, {"th", rd(rng)}};
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            CHECK(evaluate(gamma[k][i][j], e2) ==
                  doctest::Approx(christoffel_fd(g, k, i, j, e2)).epsilon(1e-5));
    }
  }
}

TEST_CASE("musical isomorphisms") {
  discref::Params p;
  p.m = 2.3;
  Metric g = discref::metric();
  Environment env = disc_env(p, 0.7, 11, 0);

  std::vector<Expr> dx = {Expr::constant(0.0), Expr::constant(0.0), Expr::constant(1.0),
                          Expr::constant(0.0)};
  auto flat = musical_flat(g, dx);
  CHECK(evaluate(flat[2], env) == doctest::Approx(p.m));
  auto sharp = musical_sharp(g, flat);
  for (int i = 0; i < 4; ++i)
    CHECK(evaluate(sharp[i], env) == doctest::Approx(i == 2 ? 1.0 : 0.0).epsilon(1e-12));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Expr> v;
    for (int i = 0; i < 4; ++i) v.push_back(Expr::constant(d(rng)));
    auto back = musical_sharp(g, musical_flat(g, v));
    for (int i = 0; i < 4; ++i)
      CHECK(evaluate(back[i], env) == doctest::Approx(evaluate(v[i], env)).epsilon(1e-12));
  }
}

TEST_CASE("gradient field") {
  SUBCASE("disc potential: grad V = -g sin(tau) d/dx at any mass") {
    discref::Params p;
    p.m = 2.0;  // distinguishes -g sin(tau) from -(g sin(tau)/m)
    VectorField grad = gradient_field(discref::metric(), discref::potential());
    Environment env = disc_env(p, 0.3, 17, 1);
    CHECK(eval_field_comp(grad, 0, env) == 0.0);
    CHECK(eval_field_comp(grad, 1, env) == 0.0);
    CHECK(eval_field_comp(grad, 2, env) ==
          doctest::Approx(-p.grav * std::sin(p.tau)).epsilon(1e-12));
    CHECK(eval_field_comp(grad, 3, env) == 0.0);
  }
  SUBCASE("constant potential") {
    VectorField grad = gradient_field(euclidean({"x", "y"}), Expr::constant(4.2));
    for (const Expr& c : grad.comp) CHECK(c.is_zero());
  }
  SUBCASE("half x squared on the euclidean plane") {
    VectorField grad = gradient_field(euclidean({"x", "y"}), parse_expression("x^2/2"));
    CHECK(expr_equal(simplify(grad.comp[0]), Expr::var("x")));
    CHECK(grad.comp[1].is_zero());
  }
}

TEST_CASE("gram-schmidt frames") {
  discref::Params p;
  p.m = 1.6;
  p.R = 0.8;
  p.Js = 1.3;
  p.Jr = 0.7;
  Metric g = discref::metric();
  Box box = discref::full_box(p);

  SUBCASE("disc spanning reproduces the normalized frame") {
    Frame d = gram_schmidt_frame(g, discref::d_raw_spanning(), box);
    REQUIRE(d.rank() == 2);
    for (int index = 0; index < 20; ++index) {
      Environment env;
      sample_box(box, 23, index, &env);
      double th = env.get(intern_symbol("theta"));
      auto r1 = discref::x1(p, th);
      auto r2 = discref::x2(p, th);
      for (int i = 0; i < 4; ++i) {
        CHECK(eval_field_comp(d.fields[0], i, env) == doctest::Approx(r1[i]).epsilon(1e-12));
        CHECK(eval_field_comp(d.fields[1], i, env) == doctest::Approx(r2[i]).epsilon(1e-12));
      }
    }
    check_orthonormal(g, d, box);
  }

  SUBCASE("already orthonormal input is unchanged") {
    Metric e2 = euclidean({"x", "y"});
    Box b2{{"x", {-1, 1}}, {"y", {-1, 1}}};
    Frame f = gram_schmidt_frame(e2, {coordinate_field(2, 0), coordinate_field(2, 1)}, b2);
    CHECK(expr_equal(f.fields[0].comp[0], Expr::constant(1.0)));
    CHECK(expr_equal(f.fields[1].comp[1], Expr::constant(1.0)));
    CHECK(f.fields[0].comp[1].is_zero());
  }

  SUBCASE("dependent inputs raise a rank drop") {
    Metric e2 = euclidean({"x", "y"});
    Box b2{{"x", {-1, 1}}, {"y", {-1, 1}}};
    VectorField two_dx;
    two_dx.comp = {Expr::constant(2.0), Expr::constant(0.0)};
    CHECK_THROWS_AS(gram_schmidt_frame(e2, {coordinate_field(2, 0), two_dx}, b2), RankDropError);
  }
}

TEST_CASE("orthogonal complement frames") {
  discref::Params p;
  Metric g = discref::metric();
  Box box = discref::full_box(p);
  Frame d = gram_schmidt_frame(g, discref::d_fields(), box);

  SUBCASE("disc complement spans the reference complement") {
    Frame dp = orthogonal_complement_frame(g, d, box);
    REQUIRE(dp.rank() == 2);
    check_orthonormal(g, dp, box);
    // same span as the reference {X_3, X_4}: projections of each reference
    // field onto the computed complement reproduce it
    Frame ref = gram_schmidt_frame(g, discref::dp_fields(), box, FrameRole::kComplement);
    ExprMatrix proj = projector(g, dp);
    for (const VectorField& r : ref.fields) {
      VectorField back = apply_matrix(proj, r);
      for (int i = 0; i < 4; ++i) {
        Expr resid = simplify(back.comp[i] - r.comp[i]);
        CHECK(probably_zero(resid, box, 64, 1e-9));
      }
    }
  }

  SUBCASE("full distribution leaves an empty complement") {
    Metric e2 = euclidean({"x", "y"});
    Box b2{{"x", {-1, 1}}, {"y", {-1, 1}}};
    Frame full = gram_schmidt_frame(e2, {coordinate_field(2, 0), coordinate_field(2, 1)}, b2);
    Frame none = orthogonal_complement_frame(e2, full, b2);
    CHECK(none.rank() == 0);
  }

  SUBCASE("euclidean plane, D = span dx") {
    Metric e2 = euclidean({"x", "y"});
    Box b2{{"x", {-1, 1}}, {"y", {-1, 1}}};
    Frame dx = gram_schmidt_frame(e2, {coordinate_field(2, 0)}, b2);
    Frame dy = orthogonal_complement_frame(e2, dx, b2);
    REQUIRE(dy.rank() == 1);
    CHECK(expr_equal(dy.fields[0].comp[1], Expr::constant(1.0)));
    CHECK(dy.fields[0].comp[0].is_zero());
  }
}

TEST_CASE("projectors") {
  discref::Params p;
  Metric g = discref::metric();
  Box box = discref::full_box(p);
  Frame d = gram_schmidt_frame(g, discref::d_fields(), box);
  Frame dp = gram_schmidt_frame(g, discref::dp_fields(), box, FrameRole::kComplement);
  ExprMatrix pd = projector(g, d);
  ExprMatrix pdp = projector(g, dp);

  SUBCASE("full frame gives the identity") {
    Frame full;
    full.fields = d.fields;
    full.fields.insert(full.fields.end(), dp.fields.begin(), dp.fields.end());
    ExprMatrix id = projector(g, full);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(probably_zero(simplify(id[i][j] - Expr::constant(i == j ? 1.0 : 0.0)), box));
  }

  SUBCASE("complementarity and projector algebra") {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(probably_zero(
            simplify(pd[i][j] + pdp[i][j] - Expr::constant(i == j ? 1.0 : 0.0)), box));
        // P^2 = P
        Expr acc = Expr::constant(0.0);
        for (int l = 0; l < 4; ++l) acc = acc + pd[i][l] * pd[l][j];
        CHECK(probably_zero(simplify(acc - pd[i][j]), box));
      }
    }
    // 𝔾-self-adjointness and P X_a = X_a at samples
    Environment env;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2, 2);
    for (int t = 0; t < 10; ++t) {
      sample_box(box, 31, t, &env);
      Eigen::Matrix4d pm, gm;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          pm(i, j) = evaluate(pd[i][j], env);
          gm(i, j) = evaluate(g.entries[i][j], env);
        }
      CHECK((gm * pm - pm.transpose() * gm).norm() < 1e-10);
      for (const VectorField& xa : d.fields) {
        Eigen::Vector4d v;
        for (int i = 0; i < 4; ++i) v(i) = evaluate(xa.comp[i], env);
        CHECK((pm * v - v).norm() < 1e-10);
      }
    }
  }

  SUBCASE("complement projection of grad V matches the frame expansion") {
    discref::Params q;
    q.m = 1.4;
    q.Jr = 0.9;
    VectorField grad = gradient_field(g, discref::potential());
    VectorField proj = apply_matrix(pdp, grad);
    Box qbox = discref::full_box(q);
    for (int t = 0; t < 10; ++t) {
      Environment env;
      sample_box(qbox, 37, t, &env);
      double th = env.get(intern_symbol("theta"));
      double c3 = 0.0, c4 = 0.0;
      auto r3 = discref::x3(q, th);
      auto r4 = discref::x4(q, th);
      Eigen::Vector4d pv, v3, v4;
      Eigen::Matrix4d gm;
      for (int i = 0; i < 4; ++i) {
        pv(i) = evaluate(proj.comp[i], env);
        v3(i) = r3[i];
        v4(i) = r4[i];
        for (int j = 0; j < 4; ++j) gm(i, j) = evaluate(g.entries[i][j], env);
      }
      c3 = pv.dot(gm * v3);
      c4 = pv.dot(gm * v4);
      double expected3 = -std::sqrt(q.m) * q.grav * std::sin(q.tau) * std::sin(th);
      double expected4 = -std::sqrt(q.m) * std::sqrt(q.Jr) * q.grav * std::sin(q.tau) *
                         std::cos(th) / discref::W(q);
      CHECK(c3 == doctest::Approx(expected3).epsilon(1e-10));
      CHECK(c4 == doctest::Approx(expected4).epsilon(1e-10));
    }
  }
}

TEST_CASE("covariant and constrained derivatives on the disc") {
  discref::Params p;
  Metric g = discref::metric();
  Box box = discref::full_box(p);
  auto gamma = christoffel_symbols(g);
  Frame d = gram_schmidt_frame(g, discref::d_fields(), box);
  Frame dp = gram_schmidt_frame(g, discref::dp_fields(), box, FrameRole::kComplement);

  auto frame_coeff = [&](const VectorField& f, const VectorField& x, const Environment& env) {
    Eigen::Vector4d fv, xv;
    Eigen::Matrix4d gm;
    for (int i = 0; i < 4; ++i) {
      fv(i) = evaluate(f.comp[i], env);
      xv(i) = evaluate(x.comp[i], env);
      for (int j = 0; j < 4; ++j) gm(i, j) = evaluate(g.entries[i][j], env);
    }
    return fv.dot(gm * xv);
  };

  VectorField n12 = covariant_derivative(gamma, g.vars, d.fields[0], d.fields[1]);
  VectorField n13 = covariant_derivative(gamma, g.vars, d.fields[0], dp.fields[0]);
  VectorField n14 = covariant_derivative(gamma, g.vars, d.fields[0], dp.fields[1]);

  for (int t = 0; t < 20; ++t) {
    Environment env;
    sample_box(box, 41, t, &env);
    // ∇_{X_1}X_2 = −κ X_3
    CHECK(frame_coeff(n12, dp.fields[0], env) == doctest::Approx(-discref::kappa(p)).epsilon(1e-10));
    CHECK(std::abs(frame_coeff(n12, dp.fields[1], env)) < 1e-10);
    CHECK(std::abs(frame_coeff(n12, d.fields[0], env)) < 1e-10);
    // ∇_{X_1}X_3 = κ X_2 + κ₂ X_4
    CHECK(frame_coeff(n13, d.fields[1], env) == doctest::Approx(discref::kappa(p)).epsilon(1e-10));
    CHECK(frame_coeff(n13, dp.fields[1], env) == doctest::Approx(discref::kappa2(p)).epsilon(1e-10));
    // ∇_{X_1}X_4 = −κ₂ X_3 (sign fixed by metric compatibility)
    CHECK(frame_coeff(n14, dp.fields[0], env) == doctest::Approx(-discref::kappa2(p)).epsilon(1e-10));
    CHECK(std::abs(frame_coeff(n14, d.fields[1], env)) < 1e-10);
  }

  SUBCASE("unit parameters give the -1/sqrt(2) coefficient") {
    Environment env;
    sample_box(box, 43, 0, &env);
    CHECK(frame_coeff(n12, dp.fields[0], env) == doctest::Approx(-0.7071067812).epsilon(1e-9));
  }

  SUBCASE("flat chart, constant field") {
    Metric e2 = euclidean({"x", "y"});
    auto gamma2 = christoffel_symbols(e2);
    VectorField c = coordinate_field(2, 1);
    VectorField r = covariant_derivative(gamma2, e2.vars, coordinate_field(2, 0), c);
    for (const Expr& e : r.comp) CHECK(e.is_zero());
  }

  SUBCASE("constrained connection coefficients vanish on D") {
    for (const VectorField& xa : d.fields) {
      for (const VectorField& xb : d.fields) {
        VectorField r = constrained_derivative(g, gamma, d, xa, xb);
        for (const Expr& e : r.comp) CHECK(probably_zero(e, box));
      }
    }
  }

  SUBCASE("complement constrained derivative") {
    VectorField r = constrained_derivative(g, gamma, dp, d.fields[0], dp.fields[0]);
    for (int t = 0; t < 10; ++t) {
      Environment env;
      sample_box(box, 47, t, &env);
      CHECK(frame_coeff(r, dp.fields[1], env) == doctest::Approx(discref::kappa2(p)).epsilon(1e-10));
      CHECK(std::abs(frame_coeff(r, dp.fields[0], env)) < 1e-10);
      CHECK(std::abs(frame_coeff(r, d.fields[0], env)) < 1e-10);
      CHECK(std::abs(frame_coeff(r, d.fields[1], env)) < 1e-10);
    }
    VectorField zero;
    zero.comp.assign(4, Expr::constant(0.0));
    VectorField rz = constrained_derivative(g, gamma, dp, zero, dp.fields[0]);
    for (const Expr& e : rz.comp) CHECK(e.is_zero());
  }
}

TEST_CASE("second fundamental form and curvatures") {
  discref::Params p;
  Metric g = discref::metric();
  Box box = discref::full_box(p);
  auto gamma = christoffel_symbols(g);
  Frame d = gram_schmidt_frame(g, discref::d_fields(), box);
  Frame dp = gram_schmidt_frame(g, discref::dp_fields(), box, FrameRole::kComplement);

  SUBCASE("S_D(X_1, X_2) = -kappa X_3 and lands in the complement") {
    VectorField s = second_fundamental_form(g, gamma, d, d.fields[0], d.fields[1], box);
    Expr c3 = metric_pairing(g, s, dp.fields[0]);
    CHECK(probably_zero(simplify(c3 + parse_expression("sqrt(m)*R/(sqrt(J_s)*sqrt(J_r+m*R^2))")),
                        box));
    for (const VectorField& xa : d.fields)
      CHECK(probably_zero(metric_pairing(g, s, xa), box));
  }

  SUBCASE("precondition: second argument must be tangent to D") {
    CHECK_THROWS_AS(
        second_fundamental_form(g, gamma, d, d.fields[0], coordinate_field(4, 2), box),
        PreconditionError);
  }

  SUBCASE("flat chart with flat distribution") {
    Metric e3 = euclidean({"x", "y", "z"});
    Box b3{{"x", {-1, 1}}, {"y", {-1, 1}}, {"z", {-1, 1}}};
    auto gamma3 = christoffel_symbols(e3);
    Frame dflat = gram_schmidt_frame(e3, {coordinate_field(3, 0), coordinate_field(3, 1)}, b3);
    VectorField s =
        second_fundamental_form(e3, gamma3, dflat, dflat.fields[0], dflat.fields[0], b3);
    for (const Expr& e : s.comp) CHECK(probably_zero(e, b3));
    // integrable distribution: F_D vanishes identically
    VectorField f =
        frobenius_curvature(e3, gamma3, dflat, dflat.fields[0], dflat.fields[1], b3);
    for (const Expr& e : f.comp) CHECK(probably_zero(e, b3));
  }

  SUBCASE("frobenius and geodesic curvature of the disc") {
    VectorField f = frobenius_curvature(g, gamma, d, d.fields[0], d.fields[1], box);
    VectorField gg = geodesic_curvature(g, gamma, d, d.fields[0], d.fields[1], box);
    Expr kappa_expr = parse_expression("sqrt(m)*R/(sqrt(J_s)*sqrt(J_r+m*R^2))");
    CHECK(probably_zero(simplify(metric_pairing(g, f, dp.fields[0]) + kappa_expr), box));
    CHECK(probably_zero(simplify(metric_pairing(g, gg, dp.fields[0]) + kappa_expr), box));
    CHECK(probably_zero(metric_pairing(g, f, dp.fields[1]), box));

    // antisymmetry/symmetry are exact by construction
    VectorField fr = frobenius_curvature(g, gamma, d, d.fields[1], d.fields[0], box);
    VectorField gr = geodesic_curvature(g, gamma, d, d.fields[1], d.fields[0], box);
    for (int i = 0; i < 4; ++i) {
      CHECK(simplify(f.comp[i] + fr.comp[i]).is_zero());
      CHECK(simplify(gg.comp[i] - gr.comp[i]).is_zero());
    }

    // F_D(X, X) = 0 for a random section of D
    VectorField x;
    x.comp.assign(4, Expr::constant(0.0));
    for (int i = 0; i < 4; ++i)
      x.comp[i] = simplify(Expr::constant(0.7) * d.fields[0].comp[i] +
                           parse_expression("0.3*cos(theta)") * d.fields[1].comp[i]);
    VectorField fxx = frobenius_curvature(g, gamma, d, x, x, box);
    for (const Expr& e : fxx.comp) CHECK(simplify(e).is_zero());
  }
}

TEST_CASE("curvature transposes") {
  discref::Params p;
  Metric g = discref::metric();
  Box box = discref::full_box(p);
  auto gamma = christoffel_symbols(g);
  Frame d = gram_schmidt_frame(g, discref::d_fields(), box);
  Frame dp = gram_schmidt_frame(g, discref::dp_fields(), box, FrameRole::kComplement);

  SUBCASE("complement curvature transposes vanish on the disc") {
    for (CurvatureKind kind : {CurvatureKind::kFrobenius, CurvatureKind::kGeodesic}) {
      CurvatureTranspose t = curvature_transpose(g, kind, gamma, dp, d, box);
      for (const auto& beta : t.table)
        for (const auto& y : beta)
          for (const Expr& c : y) CHECK(probably_zero(c, box));
    }
  }

  SUBCASE("pairing identity and argument flip") {
    CurvatureTranspose t = curvature_transpose(g, CurvatureKind::kFrobenius, gamma, d, dp, box);
    // 𝔾(X_1, F*(X_2)(X_3)) = −κ
    Environment env;
    sample_box(box, 53, 0, &env);
    CHECK(evaluate(t.ast(1, 0)[0], env) == doctest::Approx(-discref::kappa(p)).epsilon(1e-10));
    CHECK(&t.ast(1, 0) == &t.star(0, 1));

    // 𝔾(X, F★(β)(Y)) = 𝔾(β, F_D(X, Y)) on random frame triples
    VectorField f12 = frobenius_curvature(g, gamma, d, d.fields[0], d.fields[1], box);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
      sample_box(box, 59, trial, &env);
      double a1 = dist(rng), a2 = dist(rng), b1 = dist(rng), b2 = dist(rng), c1 = dist(rng),
             c2 = dist(rng);
      // X = a1 X_1 + a2 X_2, Y = b1 X_1 + b2 X_2, β = c1 X_3 + c2 X_4
      double lhs = 0.0;
      for (int xc = 0; xc < 2; ++xc) {
        double xw = xc == 0 ? a1 : a2;
        for (int yb = 0; yb < 2; ++yb) {
          double yw = yb == 0 ? b1 : b2;
          for (int bi = 0; bi < 2; ++bi) {
            double bw = bi == 0 ? c1 : c2;
            lhs += xw * yw * bw * evaluate(t.star(bi, yb)[xc], env);
          }
        }
      }
      // rhs via F_D bilinearity: F(X,Y) = (a1 b2 − a2 b1) F(X_1, X_2)
      double fw = a1 * b2 - a2 * b1;
      double rhs = 0.0;
      for (int bi = 0; bi < 2; ++bi) {
        double bw = bi == 0 ? c1 : c2;
        rhs += bw * fw * evaluate(metric_pairing(g, f12, dp.fields[bi]), env);
      }
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
  }
}

TEST_CASE("connection invariants at random points") {
  // metric compatibility and torsion-freeness for a curved metric
  Metric g;
  g.vars = {"r", "th"};
  g.entries = {{Expr::constant(1.0), Expr::constant(0.0)},
               {Expr::constant(0.0), parse_expression("r^2")}};
  Box box{{"r", {0.5, 2.0}}, {"th", {-3.0, 3.0}}};
  auto gamma = christoffel_symbols(g);

  auto field2 = [](const char* a, const char* b) {
    VectorField f;
    f.comp = {parse_expression(a), parse_expression(b)};
    return f;
  };
  VectorField X = field2("r", "sin(th)");
  VectorField Y = field2("cos(th)", "r");
  VectorField Z = field2("r*r", "1");

  VectorField nxy = covariant_derivative(gamma, g.vars, X, Y);
  VectorField nyx = covariant_derivative(gamma, g.vars, Y, X);
  VectorField nxz = covariant_derivative(gamma, g.vars, X, Z);

  // [X, Y]
  VectorField bracket;
  bracket.comp.resize(2);
  for (int k = 0; k < 2; ++k) {
    Expr acc = Expr::constant(0.0);
    for (int i = 0; i < 2; ++i) {
      acc = acc + X.comp[i] * partial_derivative(Y.comp[k], g.vars[i]) -
            Y.comp[i] * partial_derivative(X.comp[k], g.vars[i]);
    }
    bracket.comp[k] = simplify(acc);
  }

  Expr gyz = metric_pairing(g, Y, Z);
  Environment env;
  for (int t = 0; t < 50; ++t) {
    sample_box(box, 61, t, &env);
    // torsion: ∇_X Y − ∇_Y X − [X,Y] = 0
    for (int k = 0; k < 2; ++k) {
      double v = evaluate(nxy.comp[k], env) - evaluate(nyx.comp[k], env) -
                 evaluate(bracket.comp[k], env);
      CHECK(std::abs(v) < 1e-8);
    }
    // compatibility: X 𝔾(Y,Z) = 𝔾(∇_X Y, Z) + 𝔾(Y, ∇_X Z)
    double xg = 0.0;
    for (int i = 0; i < 2; ++i)
      xg += evaluate(X.comp[i], env) * evaluate(partial_derivative(gyz, g.vars[i]), env);
    double lhs = evaluate(metric_pairing(g, nxy, Z), env) +
                 evaluate(metric_pairing(g, Y, nxz), env);
    CHECK(std::abs(xg - lhs) < 1e-8);
  }
}
