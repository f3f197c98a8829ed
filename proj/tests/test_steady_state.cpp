#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gridfreq/steady_state.hpp"
#include "oracles.hpp"

using namespace gridfreq;
using Catch::Approx;

namespace {

MachineParams homogeneous_params(int n, double m, double d, const Vec& p) {
  return {Vec::Constant(n, m), Vec::Constant(n, d), p};
}

}  // namespace

TEST_CASE("synchronous frequency formulas", "[steady_state]") {
  SECTION("open loop") {
    Vec p(2);
    p << 1.0, 1.0;
    const MachineParams mp = homogeneous_params(2, 1.0, 1.0, p);
    REQUIRE(sync_frequency_open(mp, Vec::Zero(2)) == Approx(1.0));
    REQUIRE(sync_frequency_open(mp, -p) == Approx(0.0).margin(1e-15));
  }

  SECTION("leaky with the grid-code numbers") {
    // 18 pu imbalance, 2100 pu of damping, 1500 pu of DC gain -> 0.005 pu.
    Vec p(3);
    p << 18.0, 0.0, 0.0;
    MachineParams mp = homogeneous_params(3, 1.0, 700.0, p);
    const Vec dc = Vec::Constant(3, 500.0);
    REQUIRE(sync_frequency_leaky(mp, dc) == Approx(0.005));
    mp.injection.setZero();
    REQUIRE(sync_frequency_leaky(mp, dc) == 0.0);
  }
}

TEST_CASE("minimum DC gain for a frequency band", "[steady_state]") {
  REQUIRE(min_dc_gain_for_band(18.0, 0.005, 2100.0) == Approx(1500.0));
  REQUIRE(min_dc_gain_for_band(0.0, 0.01, 50.0) == 0.0);
  REQUIRE_THROWS_AS(min_dc_gain_for_band(1.0, 0.0, 1.0), validation_error);

  SECTION("bound is tight") {
    const double sum_p = 7.3, eps = 0.002, sum_d = 840.0;
    const double need = min_dc_gain_for_band(sum_p, eps, sum_d);
    REQUIRE(need > 0.0);
    Vec inj(1);
    inj << sum_p;
    const MachineParams mp{Vec::Ones(1), Vec::Constant(1, sum_d), inj};
    REQUIRE(std::abs(sync_frequency_leaky(mp, Vec::Constant(1, need))) == Approx(eps));
  }
}

TEST_CASE("dispatch: exact variant", "[steady_state]") {
  SECTION("a = (1,2), sum P* = 3") {
    DispatchProblem prob;
    prob.variant = DispatchVariant::exact;
    prob.cost = Vec(2);
    prob.cost << 1.0, 2.0;
    prob.sum_p_star = 3.0;
    const Vec u = solve_dispatch(prob);
    // Independent oracle: projected-gradient QP on sum a_i u_i^2 with 1^T u = -3.
    const Vec u_qp = oracles::qp_equality_min(prob.cost, Vec::Ones(2), -3.0);
    REQUIRE((u - u_qp).lpNorm<Eigen::Infinity>() < 1e-8);
    REQUIRE(u(0) == Approx(-2.0));
    REQUIRE(u(1) == Approx(-1.0));
  }

  SECTION("equal costs split evenly") {
    DispatchProblem prob;
    prob.cost = Vec::Constant(5, 3.3);
    prob.sum_p_star = 10.0;
    const Vec u = solve_dispatch(prob);
    for (int i = 0; i < 5; ++i) REQUIRE(u(i) == Approx(-2.0));
  }

  SECTION("random instances: oracle match, marginal costs, dominance") {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> cost(0.2, 5.0), imbalance(-8.0, 8.0), unit(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 6);
      DispatchProblem prob;
      prob.cost = Vec(n);
      for (int i = 0; i < n; ++i) prob.cost(i) = cost(rng);
      prob.sum_p_star = imbalance(rng);
      const Vec u = solve_dispatch(prob);

      REQUIRE(u.sum() + prob.sum_p_star == Approx(0.0).margin(1e-10));
      const Vec marginal = prob.cost.cwiseProduct(u);
      REQUIRE(marginal.maxCoeff() - marginal.minCoeff() <=
              1e-10 * std::max(1.0, u.norm()));

      const Vec u_qp = oracles::qp_equality_min(prob.cost, Vec::Ones(n), -prob.sum_p_star);
      REQUIRE((u - u_qp).lpNorm<Eigen::Infinity>() < 1e-8);

      const double obj = u.cwiseAbs2().dot(prob.cost);
      for (int s = 0; s < 500; ++s) {
        Vec cand(n);
        for (int i = 0; i < n; ++i) cand(i) = unit(rng);
        cand -= Vec::Constant(n, (cand.sum() + prob.sum_p_star) / n);  // feasible
        REQUIRE(obj <= cand.cwiseAbs2().dot(prob.cost) + 1e-12);
      }
    }
  }
}

TEST_CASE("dispatch: leaky variant", "[steady_state]") {
  DispatchProblem prob;
  prob.variant = DispatchVariant::leaky;
  prob.cost = Vec(3);
  prob.cost << 0.005, 0.01, 0.02;
  prob.damping = Vec(3);
  prob.damping << 20.0, 20.0, 1.0;
  prob.sum_p_star = -0.9;
  const Vec u = solve_dispatch(prob);

  SECTION("proportional power sharing K_i u_i = K_j u_j") {
    const Vec marginal = prob.cost.cwiseProduct(u);
    REQUIRE(marginal.maxCoeff() - marginal.minCoeff() <= 1e-12 * u.norm());
  }

  SECTION("discounted balance constraint holds") {
    // sum P* + sum (1 + D_i K_i) u_i = 0
    double acc = prob.sum_p_star;
    for (int i = 0; i < 3; ++i) acc += (1.0 + prob.damping(i) * prob.cost(i)) * u(i);
    REQUIRE(acc == Approx(0.0).margin(1e-12));
  }

  SECTION("net load strictly underestimated") {
    REQUIRE(std::abs(u.sum()) < std::abs(prob.sum_p_star));
  }

  SECTION("matches the closed-loop steady state injections") {
    // u_i = -K_i^{-1} sum P* / sum (D_j + K_j^{-1})
    const double denom = prob.damping.sum() + prob.cost.cwiseInverse().sum();
    for (int i = 0; i < 3; ++i)
      REQUIRE(u(i) == Approx(-prob.sum_p_star / (prob.cost(i) * denom)));
  }

  SECTION("optimal for the discounted program when D K is homogeneous") {
    DispatchProblem h;
    h.variant = DispatchVariant::leaky;
    h.cost = Vec(3);
    h.cost << 0.005, 0.01, 0.02;
    h.damping = Vec(3);
    // D_i K_i = 0.1 for every unit.
    h.damping << 20.0, 10.0, 5.0;
    h.sum_p_star = 2.4;
    const Vec uh = solve_dispatch(h);
    Vec balance_coeff(3);
    for (int i = 0; i < 3; ++i) balance_coeff(i) = 1.0 + h.damping(i) * h.cost(i);
    const Vec u_qp = oracles::qp_equality_min(h.cost, balance_coeff, -h.sum_p_star);
    REQUIRE((uh - u_qp).lpNorm<Eigen::Infinity>() < 1e-8);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    const double obj = uh.cwiseAbs2().dot(h.cost);
    for (int s = 0; s < 2000; ++s) {
      Vec cand(3);
      for (int i = 0; i < 3; ++i) cand(i) = unit(rng);
      const double viol = balance_coeff.dot(cand) + h.sum_p_star;
      cand -= viol / balance_coeff.squaredNorm() * balance_coeff;
      REQUIRE(obj <= cand.cwiseAbs2().dot(h.cost) + 1e-12);
    }
  }
}

TEST_CASE("synchronous solution solver", "[steady_state]") {
  SECTION("balanced zero injections give the origin") {
    const NetworkModel net = oracles::random_network(6, 4, 8);
    const MachineParams mp = homogeneous_params(6, 2.0, 1.5, Vec::Zero(6));
    const SynchronousSolution sol = solve_synchronous_open(net, mp);
    REQUIRE(sol.theta_star.cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(sol.omega_sync == 0.0);
    REQUIRE(sol.secure);
  }

  SECTION("two buses invert the sine") {
    const double b = 2.0, p = 1.2;
    const NetworkModel net = NetworkModel::from_weights(2, {{0, 1, b}});
    Vec inj(2);
    inj << p, -p;
    const MachineParams mp = homogeneous_params(2, 1.0, 1.0, inj);
    const SynchronousSolution sol = solve_synchronous_open(net, mp);
    const double diff = sol.theta_star(0) - sol.theta_star(1);
    REQUIRE(std::sin(diff) == Approx(p / b).epsilon(1e-12));
    REQUIRE(sol.residual <= 1e-10);
  }

  SECTION("leaky closed loop: p* and u* consistent") {
    const NetworkModel net = oracles::random_network(5, 3, 15);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    Vec inj(5);
    for (int i = 0; i < 5; ++i) inj(i) = u(rng);
    const MachineParams mp = homogeneous_params(5, 1.0, 2.0, inj);
    auto ctrl = ControllerSpec::leaky({0, 1, 2, 3, 4}, Vec::Constant(5, 0.8),
                                      Vec::Constant(5, 0.05));
    const SynchronousSolution sol = solve_synchronous(net, mp, ctrl);
    REQUIRE(sol.omega_sync ==
            Approx(inj.sum() / (mp.damping.sum() + 5.0 / 0.8)).margin(1e-14));
    for (int i = 0; i < 5; ++i) {
      REQUIRE(sol.u_star(i) == Approx(-sol.omega_sync / 0.8));
      REQUIRE(sol.p_star(i) == Approx(sol.omega_sync / 0.8));
    }
    // The solution satisfies the closed-loop stationarity equations.
    const Vec residual = mp.injection - mp.damping * sol.omega_sync -
                         net.potential_gradient(sol.theta_star) + sol.u_star;
    REQUIRE(residual.lpNorm<Eigen::Infinity>() < 1e-9);
  }

  SECTION("infeasible flow reported") {
    const NetworkModel net = NetworkModel::from_weights(2, {{0, 1, 0.5}});
    Vec inj(2);
    inj << 5.0, -5.0;  // far above the 0.5 pu line limit
    const MachineParams mp = homogeneous_params(2, 1.0, 1e-9, inj);
    REQUIRE_THROWS_AS(solve_synchronous_open(net, mp), numerical_error);
  }
}
