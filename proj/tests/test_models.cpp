#include "nonholo/models.hpp"

#include <cmath>

#include "disc_reference.hpp"
#include "doctest.h"

using namespace nonholo;

TEST_CASE("rolling disc fixture") {
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(rolling_disc(-1, 1, 1, 1, 9.8, 0.0), ModelError);
    CHECK_THROWS_AS(rolling_disc(1, 0, 1, 1, 9.8, 0.0), ModelError);
    CHECK_THROWS_AS(rolling_disc(1, 1, 1, 1, 9.8, 1.6), ModelError);
  }

  SUBCASE("frames are the closed-form orthonormal basis at any parameters") {
    discref::Params p;
    p.m = 1.9;
    p.R = 0.6;
    p.Js = 0.8;
    p.Jr = 1.4;
    MechanicalSystem sys = rolling_disc(p.m, p.R, p.Js, p.Jr, p.grav, p.tau);
    Environment env;
    Box box = sys.sampling_box();
    for (int t = 0; t < 50; ++t) {
      sample_box(box, 307, t, &env);
      double th = env.get(intern_symbol("theta"));
      auto r2 = discref::x2(p, th);
      auto r3 = discref::x3(p, th);
      auto r4 = discref::x4(p, th);
      for (int i = 0; i < 4; ++i) {
        CHECK(evaluate(sys.frame_d.fields[1].comp[i], env) ==
              doctest::Approx(r2[i]).epsilon(1e-12));
        CHECK(evaluate(sys.frame_dp.fields[0].comp[i], env) ==
              doctest::Approx(r3[i]).epsilon(1e-12));
        CHECK(evaluate(sys.frame_dp.fields[1].comp[i], env) ==
              doctest::Approx(r4[i]).epsilon(1e-12));
      }
      // orthonormality spot checks
      double g22 = evaluate(metric_pairing(sys.g, sys.frame_d.fields[1], sys.frame_d.fields[1]),
                            env);
      double g23 = evaluate(metric_pairing(sys.g, sys.frame_d.fields[1], sys.frame_dp.fields[0]),
                            env);
      CHECK(g22 == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(g23) < 1e-12);
    }
  }

  SUBCASE("frobenius coefficient at unit parameters") {
    MechanicalSystem sys = rolling_disc();
    Environment env;
    sample_box(sys.sampling_box(), 311, 0, &env);
    CHECK(evaluate(sys.f_coeff[0][1][0], env) ==
          doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }

  SUBCASE("zero incline kills the potential part of b") {
    MechanicalSystem sys = rolling_disc(1, 1, 1, 1, 9.8, 0.0);
    // with v = 0 the whole field vanishes identically over the chart
    Expr b0 = sys.b_comp[0];
    Expr b1 = sys.b_comp[1];
    Box box = sys.sampling_box();
    box["v_s"] = {0.0, 0.0};
    box["v_r"] = {0.0, 0.0};
    CHECK(probably_zero(b0, box));
    CHECK(probably_zero(b1, box));
  }
}

TEST_CASE("flat holonomic fixture") {
  MechanicalSystem sys = flat_holonomic();
  Box box = sys.sampling_box();
  for (const auto& plane : sys.f_coeff)
    for (const auto& row : plane)
      for (const Expr& e : row) CHECK(probably_zero(e, box));
  for (const auto& row : sys.fhat)
    for (const Expr& e : row) CHECK(probably_zero(e, sys.sampling_box()));
}

TEST_CASE("model file loader") {
  SUBCASE("shipped disc model reproduces the fixture") {
    MechanicalSystem fixture = rolling_disc();
    MechanicalSystem loaded = load_model_text(print_model(fixture));
    Box box = fixture.full_box();
    Environment env;
    for (int t = 0; t < 50; ++t) {
      sample_box(box, 313, t, &env);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          CHECK(evaluate(fixture.g.entries[i][j], env) ==
                doctest::Approx(evaluate(loaded.g.entries[i][j], env)).epsilon(1e-12));
      CHECK(evaluate(fixture.potential, env) ==
            doctest::Approx(evaluate(loaded.potential, env)).epsilon(1e-12));
      for (int a = 0; a < 2; ++a)
        for (int i = 0; i < 4; ++i) {
          CHECK(evaluate(fixture.frame_d.fields[a].comp[i], env) ==
                doctest::Approx(evaluate(loaded.frame_d.fields[a].comp[i], env))
                    .epsilon(1e-12));
          CHECK(evaluate(fixture.frame_dp.fields[a].comp[i], env) ==
                doctest::Approx(evaluate(loaded.frame_dp.fields[a].comp[i], env))
                    .epsilon(1e-12));
        }
      for (int i = 0; i < 2; ++i)
        CHECK(evaluate(fixture.b_comp[i], env) ==
              doctest::Approx(evaluate(loaded.b_comp[i], env)).epsilon(1e-11));
    }
    CHECK(loaded.vel_names == fixture.vel_names);
  }

  SUBCASE("unknown function names carry the line number") {
    std::string text =
        "[chart]\nx\ny\n[params]\nm = 1\n[metric]\ng[1][1] = 1\ng[2][2] = 1\n"
        "[potential]\nV = sine(x)\n[distribution]\nX[1][1] = 1\n[box]\nx in [-1, 1]\ny in [-1, 1]\n";
    try {
      load_model_text(text);
      FAIL("expected ModelParseError");
    } catch (const ModelParseError& e) {
      CHECK(e.line == 10);  // the V = sine(x) line
    }
  }

  SUBCASE("missing box is rejected") {
    std::string text =
        "[chart]\nx\ny\n[metric]\ng[1][1] = 1\ng[2][2] = 1\n"
        "[potential]\nV = 0\n[distribution]\nX[1][1] = 1\n[box]\nx in [-1, 1]\n";
    CHECK_THROWS_WITH_AS(load_model_text(text),
                         doctest::Contains("missing box interval"), ModelError);
  }

  SUBCASE("undeclared identifiers are rejected") {
    std::string text =
        "[chart]\nx\ny\n[metric]\ng[1][1] = 1\ng[2][2] = 1\n"
        "[potential]\nV = q*x\n[distribution]\nX[1][1] = 1\n[box]\nx in [-1, 1]\ny in [-1, 1]\n";
    CHECK_THROWS_WITH_AS(load_model_text(text), doctest::Contains("undeclared identifier"),
                         ModelError);
  }

  SUBCASE("unknown sections and keys are rejected") {
    CHECK_THROWS_AS(load_model_text("[charts]\nx\n"), ModelParseError);
    std::string text =
        "[chart]\nx\n[metric]\nh[1][1] = 1\n[potential]\nV = 0\n"
        "[distribution]\nX[1][1] = 1\n[box]\nx in [-1, 1]\n";
    CHECK_THROWS_AS(load_model_text(text), ModelParseError);
  }

  SUBCASE("make_model applies overrides") {
    MechanicalSystem steep = make_model("disc", {{"tau", 0.9}});
    CHECK(steep.params.at("tau") == doctest::Approx(0.9));
    CHECK_THROWS_AS(make_model("no_such_file.mdl"), ModelError);
    CHECK_THROWS_AS(make_model("disc", {{"bogus", 1.0}}), ModelError);
  }

#ifdef NONHOLO_SOURCE_DIR
  SUBCASE("the shipped disc model file stays in sync with the fixture") {
    MechanicalSystem fixture = rolling_disc();
    MechanicalSystem shipped = load_model(std::string(NONHOLO_SOURCE_DIR) + "/models/disc.mdl");
    Box box = fixture.full_box();
    Environment env;
    for (int t = 0; t < 50; ++t) {
      sample_box(box, 317, t, &env);
      for (int a = 0; a < 2; ++a)
        for (int i = 0; i < 4; ++i)
          CHECK(evaluate(fixture.frame_dp.fields[a].comp[i], env) ==
                doctest::Approx(evaluate(shipped.frame_dp.fields[a].comp[i], env))
                    .epsilon(1e-12));
      for (int i = 0; i < 2; ++i)
        CHECK(evaluate(fixture.b_comp[i], env) ==
              doctest::Approx(evaluate(shipped.b_comp[i], env)).epsilon(1e-11));
    }
  }
#endif
}
