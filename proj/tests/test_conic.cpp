#include <cmath>

#include "coopt/conic.hpp"
#include "doctest.h"

using namespace coopt;

TEST_SUITE("conic") {

TEST_CASE("two-variable LP reaches the vertex") {
  // max x1 + x2 s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6, x >= 0 -> (8/5, 6/5)
  ProgramBuilder pb;
  const int x1 = pb.add_variable();
  const int x2 = pb.add_variable();
  pb.add_cost(x1, -1.0);
  pb.add_cost(x2, -1.0);
  pb.add_nonneg(LinExpr(4.0).add(x1, -1.0).add(x2, -2.0));
  pb.add_nonneg(LinExpr(6.0).add(x1, -3.0).add(x2, -1.0));
  pb.add_lower_bound(x1, 0.0);
  pb.add_lower_bound(x2, 0.0);
  const auto sol = make_solver("ipm")->solve(pb.build());
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.x[x1] == doctest::Approx(1.6).epsilon(1e-7));
  CHECK(sol.x[x2] == doctest::Approx(1.2).epsilon(1e-7));
  CHECK(sol.primal_objective == doctest::Approx(-2.8).epsilon(1e-8));
  CHECK(sol.dual_objective == doctest::Approx(-2.8).epsilon(1e-7));
}

TEST_CASE("distance from a point to a line via a second-order cone") {
  // min t s.t. t >= ||(x1 - 3, x2 + 4)||, x1 + x2 = 0 -> 1/sqrt(2)
  ProgramBuilder pb;
  const int t = pb.add_variable();
  const int x1 = pb.add_variable();
  const int x2 = pb.add_variable();
  pb.add_cost(t, 1.0);
  pb.add_equality(LinExpr().add(x1, 1.0).add(x2, 1.0));
  pb.add_soc({LinExpr().add(t, 1.0), LinExpr(-3.0).add(x1, 1.0), LinExpr(4.0).add(x2, 1.0)});
  const auto sol = make_solver()->solve(pb.build());
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.primal_objective == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-7));
  CHECK(sol.x[x1] == doctest::Approx(3.5).epsilon(1e-6));
  CHECK(sol.x[x2] == doctest::Approx(-3.5).epsilon(1e-6));
}

TEST_CASE("infeasible and unbounded programs are certified") {
  {
    ProgramBuilder pb;
    const int x = pb.add_variable();
    pb.add_cost(x, 1.0);
    pb.add_lower_bound(x, 1.0);
    pb.add_upper_bound(x, 0.0);
    CHECK(make_solver()->solve(pb.build()).status == SolveStatus::primal_infeasible);
  }
  {
    ProgramBuilder pb;
    const int x = pb.add_variable();
    pb.add_cost(x, -1.0);
    pb.add_lower_bound(x, 0.0);
    CHECK(make_solver()->solve(pb.build()).status == SolveStatus::dual_infeasible);
  }
}

TEST_CASE("norm minimization with a simplex constraint") {
  // min ||x||_2 s.t. sum x = 1, x >= 0 over R^5 -> x = 1/5, norm 1/sqrt(5)
  ProgramBuilder pb;
  const int t = pb.add_variable();
  const int x = pb.add_variables(5);
  pb.add_cost(t, 1.0);
  LinExpr sum(-1.0);
  std::vector<LinExpr> cone{LinExpr().add(t, 1.0)};
  for (int i = 0; i < 5; ++i) {
    sum.add(x + i, 1.0);
    pb.add_lower_bound(x + i, 0.0);
    cone.push_back(LinExpr().add(x + i, 1.0));
  }
  pb.add_equality(sum);
  pb.add_soc(cone);
  const auto sol = make_solver()->solve(pb.build());
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.primal_objective == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-7));
  for (int i = 0; i < 5; ++i) CHECK(sol.x[x + i] == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("CBF export lists every block") {
  ProgramBuilder pb;
  const int t = pb.add_variable();
  const int x = pb.add_variable();
  pb.add_cost(t, 1.0);
  pb.add_equality(LinExpr(-2.0).add(x, 1.0));
  pb.add_lower_bound(x, 0.0);
  pb.add_soc({LinExpr().add(t, 1.0), LinExpr().add(x, 1.0)});
  const std::string cbf = to_cbf(pb.build());
  CHECK(cbf.find("CON\n4 3\nL= 1\nL+ 1\nQ 2\n") != std::string::npos);
  CHECK(cbf.find("BCOORD\n1\n0 -2\n") != std::string::npos);
}

}
