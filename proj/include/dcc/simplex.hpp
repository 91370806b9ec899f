#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace dcc {

/// Standard-form LP: minimize c'x subject to A x = b, x >= 0, with A stored by sparse columns.
struct LpProblem {
    std::size_t rows = 0;
    std::vector<double> b;
    std::vector<double> c;
    std::vector<std::vector<std::pair<std::size_t, double>>> columns;

    std::size_t cols() const { return columns.size(); }
};

struct SimplexOptions {
    std::size_t max_iterations = 1000000;
    double optimality_tol = 1e-11;
    double pivot_tol = 1e-9;
    std::size_t refactor_every = 64;
    std::size_t degenerate_streak = 50; ///< switch to Bland's rule after this many stalled pivots
    bool polish = true;                 ///< recompute x, y on the final basis in long double
};

enum class SimplexStatus { Optimal, Unbounded, IterationLimit };
std::string to_string(SimplexStatus s);

struct SimplexResult {
    SimplexStatus status = SimplexStatus::IterationLimit;
    std::vector<double> x;             ///< primal, size cols
    std::vector<double> y;             ///< duals of the equality rows, size rows
    std::vector<std::size_t> basis;    ///< basic column per row
    double objective = 0.0;
    std::size_t iterations = 0;
    std::size_t bland_pivots = 0;
};

/// Revised simplex (explicit dense basis inverse, product-form updates, periodic
/// refactorization) from a primal feasible starting basis. Dantzig pricing; falls back to
/// Bland's rule while pivots stall. Throws ContractViolation if `basis` is singular or
/// primal infeasible.
SimplexResult solve_simplex(const LpProblem& lp, std::vector<std::size_t> basis,
                            const SimplexOptions& options = {});

} // namespace dcc
