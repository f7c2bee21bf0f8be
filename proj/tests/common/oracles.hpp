#pragma once

// Independent reference computations used by the unit tests and the
// acceptance binary. They favour transparency over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "skf/matalg.hpp"

namespace skf::oracle {

// Minimum transport cost by enumerating the vertices of the transportation
// polytope: every basic solution uses n1 + n2 - 1 cells, so each subset of
// that size is solved as a linear system and kept if it is feasible.
inline double transport_by_vertices(const std::vector<double>& a, const std::vector<double>& b, const Matrix& cost) {
  const int n1 = static_cast<int>(a.size()), n2 = static_cast<int>(b.size());
  const int cells = n1 * n2, basis = n1 + n2 - 1;
  Matrix eq = Matrix::Zero(n1 + n2, cells);
  Vector rhs(n1 + n2);
  for (int i = 0; i < n1; ++i) rhs(i) = a[static_cast<std::size_t>(i)];
  for (int j = 0; j < n2; ++j) rhs(n1 + j) = b[static_cast<std::size_t>(j)];
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      eq(i, i * n2 + j) = 1.0;
      eq(n1 + j, i * n2 + j) = 1.0;
    }
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(basis));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == basis) {
      Matrix sub(n1 + n2, basis);
      for (int k = 0; k < basis; ++k) sub.col(k) = eq.col(pick[static_cast<std::size_t>(k)]);
      Eigen::FullPivHouseholderQR<Matrix> qr(sub);
      if (qr.rank() < basis) return;
      const Vector x = qr.solve(rhs);
      if ((sub * x - rhs).norm() > 1e-12) return;
      if (x.minCoeff() < -1e-13) return;
      double c = 0.0;
      for (int k = 0; k < basis; ++k) {
        const int cell = pick[static_cast<std::size_t>(k)];
        c += std::max(0.0, x(k)) * cost(cell / n2, cell % n2);
      }
      best = std::min(best, c);
      return;
    }
    for (int cell = start; cell <= cells - (basis - depth); ++cell) {
      pick[static_cast<std::size_t>(depth)] = cell;
      rec(cell + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

// Brute force over every transport plan whose entries are multiples of
// 1/units, for masses given in those units. Exact when the margins are
// integral, since the transportation polytope then has integral vertices.
inline double transport_by_grid(const std::vector<int>& a_units, const std::vector<int>& b_units, int units,
                                const Matrix& cost) {
  const std::size_t n1 = a_units.size(), n2 = b_units.size();
  std::vector<int> col_left = b_units;
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, int, double)> rec = [&](std::size_t i, std::size_t j, int row_left,
                                                                        double acc) {
    if (i == n1) {
      for (int v : col_left)
        if (v != 0) return;
      best = std::min(best, acc);
      return;
    }
    if (j + 1 == n2) {  // last cell of the row takes the remainder
      if (row_left > col_left[j]) return;
      col_left[j] -= row_left;
      rec(i + 1, 0, i + 1 < n1 ? a_units[i + 1] : 0,
          acc + row_left * cost(static_cast<Index>(i), static_cast<Index>(j)) / units);
      col_left[j] += row_left;
      return;
    }
    for (int f = 0; f <= std::min(row_left, col_left[j]); ++f) {
      col_left[j] -= f;
      rec(i, j + 1, row_left - f, acc + f * cost(static_cast<Index>(i), static_cast<Index>(j)) / units);
      col_left[j] += f;
    }
  };
  rec(0, 0, a_units.front(), 0.0);
  return best;
}

// Random positive integer masses of `n` points summing to `units`.
inline std::vector<int> random_units(std::size_t n, int units, std::mt19937_64& rng) {
  std::vector<int> cuts;
  std::uniform_int_distribution<int> u(1, units - 1);
  while (cuts.size() + 1 < n) {
    const int c = u(rng);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> out;
  int prev = 0;
  for (int c : cuts) out.push_back(c - prev), prev = c;
  out.push_back(units - prev);
  return out;
}

}  // namespace skf::oracle
