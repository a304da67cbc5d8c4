// Compares the serial and parallel execution paths on the reduction kernels
// and on a full occupancy/backward-induction workload, and asserts that both
// paths produce bitwise-identical results while timing them.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "densepath/reward_lab.hpp"
#include "densepath/soft_control.hpp"
#include "densepath/synth_env.hpp"

namespace {

using densepath::Exec;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_seconds();
    f();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
  std::printf("%-28s serial %9.4f ms   parallel %9.4f ms   speedup %5.2fx   bitwise %s\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              identical ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
  using namespace densepath;

  // Flat reductions on a large buffer.
  const std::size_t n = 8u << 20;
  RngStream rng(2024);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) y[i] = rng.uniform(-1.0, 1.0);

  double s_val = 0.0, p_val = 0.0;
  double ts = time_best_of(5, [&] { s_val = kernels::sum(Exec::Serial, x); });
  double tp = time_best_of(5, [&] { p_val = kernels::sum(Exec::Parallel, x); });
  report("sum (8M doubles)", ts, tp, bitwise_equal(s_val, p_val));

  ts = time_best_of(5, [&] { s_val = kernels::dot(Exec::Serial, x, y); });
  tp = time_best_of(5, [&] { p_val = kernels::dot(Exec::Parallel, x, y); });
  report("dot (8M doubles)", ts, tp, bitwise_equal(s_val, p_val));

  ts = time_best_of(5, [&] { s_val = kernels::sum_sq_diff(Exec::Serial, x, y); });
  tp = time_best_of(5, [&] { p_val = kernels::sum_sq_diff(Exec::Parallel, x, y); });
  report("sum_sq_diff (8M doubles)", ts, tp, bitwise_equal(s_val, p_val));

  // Tree workloads on a wide environment: layered dynamic programming.
  EnvRecipe recipe;
  recipe.kind = RecipeKind::random_reward;
  recipe.vocab_size = 7;
  recipe.horizon = 7;
  recipe.prompt_count = 2;
  recipe.seed = 9;
  const EnvSpec env = make_env(recipe);
  const TreePtr tree = Tree::build(env);
  std::printf("\ntree: %zu states, %zu state-action entries\n", tree->node_count(),
              tree->edge_count());

  const RewardFn r = ground_truth_reward(tree);
  SoftSolution sol_s = soft_backward_induction(r, 1.0, Exec::Serial);
  SoftSolution sol_p = sol_s;
  ts = time_best_of(5, [&] { sol_s = soft_backward_induction(r, 1.0, Exec::Serial); });
  tp = time_best_of(5, [&] { sol_p = soft_backward_induction(r, 1.0, Exec::Parallel); });
  report("soft_backward_induction", ts, tp,
         bitwise_equal(sol_s.q, sol_p.q) && bitwise_equal(sol_s.v, sol_p.v));

  const PolicyTable pi(tree, boltzmann_logits(sol_s));
  Occupancy occ_s = occupancy(pi, Exec::Serial);
  Occupancy occ_p = occ_s;
  ts = time_best_of(5, [&] { occ_s = occupancy(pi, Exec::Serial); });
  tp = time_best_of(5, [&] { occ_p = occupancy(pi, Exec::Parallel); });
  report("occupancy", ts, tp, bitwise_equal(occ_s.mass, occ_p.mass));

  double ret_s = 0.0, ret_p = 0.0;
  ts = time_best_of(5, [&] { ret_s = expected_return(occ_s, r, Exec::Serial); });
  tp = time_best_of(5, [&] { ret_p = expected_return(occ_p, r, Exec::Parallel); });
  report("expected_return", ts, tp, bitwise_equal(ret_s, ret_p));

  const bool ok = bitwise_equal(s_val, p_val) && bitwise_equal(occ_s.mass, occ_p.mass) &&
                  bitwise_equal(ret_s, ret_p);
  std::printf("\n%s\n", ok ? "serial and parallel paths agree bitwise" : "MISMATCH DETECTED");
  return ok ? 0 : 1;
}
