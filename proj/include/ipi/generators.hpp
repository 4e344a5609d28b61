#pragma once

#include <array>
#include <utility>
#include <vector>

#include "io.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "sparse.hpp"

namespace ipi {

/**
 * Two-state example: action 0 stays put, action 1 jumps to the other state.
 * Costs are g(0,0) = 1, g(0,1) = 2, g(1,.) = 0. For gamma = 0.9 the optimal
 * value is (2, 0) with policy (1, 0).
 */
inline Mdp make_e1(double gamma = 0.9) {
  Mdp mdp;
  mdp.n = 2;
  mdp.m = 2;
  mdp.gamma = gamma;
  mdp.P = csr_from_triplets(4, 2, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 1, 1.0}, {3, 0, 1.0}});
  mdp.g = {1.0, 2.0, 0.0, 0.0};
  return mdp;
}

/**
 * Reflecting random walk on states 0..n-1 with cost s + a (distance from
 * state 0 plus effort). Action a steps left with probability
 * 0.5 + 0.4 * a / (m - 1) and right otherwise, so action 0 is the unbiased
 * walk and m = 1 gives the plain chain.
 */
inline Mdp make_chain(index_t n, index_t m, double gamma, Executor& exec) {
  auto transition = [n, m](index_t s, index_t a) {
    const double left = m == 1 ? 0.5 : 0.5 + 0.4 * static_cast<double>(a) / static_cast<double>(m - 1);
    const index_t l = s > 0 ? s - 1 : 0;
    const index_t r = s + 1 < n ? s + 1 : n - 1;
    return std::array<std::pair<index_t, double>, 2>{{{l, left}, {r, 1.0 - left}}};
  };
  auto cost = [](index_t s, index_t a) { return static_cast<double>(s + a); };
  return build_from_generator(n, m, gamma, transition, cost, exec);
}

inline Mdp make_chain(index_t n, index_t m = 1, double gamma = 0.9) {
  Executor exec(n);
  return make_chain(n, m, gamma, exec);
}

}  // namespace ipi
