#include "dcc/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dcc/errors.hpp"

namespace dcc {

std::string to_string(SimplexStatus s) {
    switch (s) {
    case SimplexStatus::Optimal: return "optimal";
    case SimplexStatus::Unbounded: return "unbounded";
    case SimplexStatus::IterationLimit: return "iteration_limit";
    }
    return "?";
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
basis_matrix(const LpProblem& lp, const std::vector<std::size_t>& basis) {
    const auto m = static_cast<Eigen::Index>(lp.rows);
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> B =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, m);
    for (std::size_t r = 0; r < basis.size(); ++r)
        for (const auto& [row, v] : lp.columns[basis[r]])
            B(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(r)) = static_cast<Scalar>(v);
    return B;
}

class Simplex {
public:
    Simplex(const LpProblem& lp, std::vector<std::size_t> basis, const SimplexOptions& opt)
        : lp_(lp), opt_(opt), basis_(std::move(basis)), is_basic_(lp.cols(), -1) {
        if (basis_.size() != lp_.rows) throw ContractViolation("simplex: basis size != rows");
        for (std::size_t r = 0; r < basis_.size(); ++r) {
            if (basis_[r] >= lp_.cols() || is_basic_[basis_[r]] >= 0)
                throw ContractViolation("simplex: invalid starting basis");
            is_basic_[basis_[r]] = static_cast<long>(r);
        }
        refactor();
        for (Eigen::Index i = 0; i < xb_.size(); ++i)
            if (xb_[i] < -1e-9) throw ContractViolation("simplex: starting basis is infeasible");
    }

    SimplexResult run() {
        SimplexResult res;
        std::size_t since_refactor = 0;
        std::size_t stalled = 0;
        for (;;) {
            if (res.iterations >= opt_.max_iterations) {
                res.status = SimplexStatus::IterationLimit;
                break;
            }
            const Vec y = dual();
            const bool bland = stalled >= opt_.degenerate_streak;
            long entering = -1;
            double best = -opt_.optimality_tol;
            for (std::size_t j = 0; j < lp_.cols(); ++j) {
                if (is_basic_[j] >= 0) continue;
                double dj = lp_.c[j];
                for (const auto& [row, v] : lp_.columns[j]) dj -= y[static_cast<Eigen::Index>(row)] * v;
                if (dj < best) {
                    entering = static_cast<long>(j);
                    if (bland) break;
                    best = dj;
                }
            }
            if (entering < 0) {
                // confirm on a fresh factorization before declaring optimality
                if (since_refactor == 0) {
                    res.status = SimplexStatus::Optimal;
                    break;
                }
                refactor();
                since_refactor = 0;
                continue;
            }

            const Vec u = ftran(static_cast<std::size_t>(entering));
            long leave = -1;
            double ratio = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < u.size(); ++r) {
                if (u[r] <= opt_.pivot_tol) continue;
                const double t = std::max(xb_[r], 0.0) / u[r];
                const bool better = t < ratio - 1e-15 ||
                                    (t <= ratio + 1e-15 && leave >= 0 &&
                                     basis_[static_cast<std::size_t>(r)] <
                                         basis_[static_cast<std::size_t>(leave)]);
                if (leave < 0 || better) {
                    ratio = t;
                    leave = static_cast<long>(r);
                }
            }
            if (leave < 0) {
                res.status = SimplexStatus::Unbounded;
                break;
            }

            pivot(static_cast<std::size_t>(entering), static_cast<Eigen::Index>(leave), u, ratio);
            ++res.iterations;
            if (bland) ++res.bland_pivots;
            stalled = ratio <= 1e-12 ? stalled + 1 : 0;
            if (++since_refactor >= opt_.refactor_every) {
                refactor();
                since_refactor = 0;
            }
        }
        finish(res);
        return res;
    }

private:
    void refactor() {
        const Mat B = basis_matrix<double>(lp_, basis_);
        Eigen::FullPivLU<Mat> lu(B);
        if (!lu.isInvertible()) throw ContractViolation("simplex: singular basis");
        binv_ = lu.inverse();
        xb_ = binv_ * Eigen::Map<const Vec>(lp_.b.data(), static_cast<Eigen::Index>(lp_.rows));
    }

    Vec dual() const {
        Vec cb(static_cast<Eigen::Index>(lp_.rows));
        for (std::size_t r = 0; r < basis_.size(); ++r) cb[static_cast<Eigen::Index>(r)] = lp_.c[basis_[r]];
        return binv_.transpose() * cb;
    }

    Vec ftran(std::size_t j) const {
        Vec u = Vec::Zero(static_cast<Eigen::Index>(lp_.rows));
        for (const auto& [row, v] : lp_.columns[j]) u.noalias() += v * binv_.col(static_cast<Eigen::Index>(row));
        return u;
    }

    void pivot(std::size_t entering, Eigen::Index r, const Vec& u, double step) {
        xb_ -= step * u;
        xb_[r] = step;
        const double piv = u[r];
        binv_.row(r) /= piv;
        Vec col = u;
        col[r] = 0.0;
        binv_.noalias() -= col * binv_.row(r);
        is_basic_[basis_[static_cast<std::size_t>(r)]] = -1;
        basis_[static_cast<std::size_t>(r)] = entering;
        is_basic_[entering] = static_cast<long>(r);
    }

    void finish(SimplexResult& res) {
        const std::size_t m = lp_.rows;
        res.basis = basis_;
        res.x.assign(lp_.cols(), 0.0);
        res.y.assign(m, 0.0);
        if (opt_.polish) {
            using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
            using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
            const LMat B = basis_matrix<long double>(lp_, basis_);
            Eigen::PartialPivLU<LMat> lu(B);
            LVec b(static_cast<Eigen::Index>(m)), cb(static_cast<Eigen::Index>(m));
            for (std::size_t r = 0; r < m; ++r) {
                b[static_cast<Eigen::Index>(r)] = lp_.b[r];
                cb[static_cast<Eigen::Index>(r)] = lp_.c[basis_[r]];
            }
            const LVec xb = lu.solve(b);
            const LVec y = lu.transpose().solve(cb);
            long double obj = 0.0L;
            for (std::size_t r = 0; r < m; ++r) {
                const long double xr = xb[static_cast<Eigen::Index>(r)];
                res.x[basis_[r]] = static_cast<double>(xr);
                obj += static_cast<long double>(lp_.c[basis_[r]]) * xr;
                res.y[r] = static_cast<double>(y[static_cast<Eigen::Index>(r)]);
            }
            res.objective = static_cast<double>(obj);
        } else {
            const Vec y = dual();
            double obj = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                res.x[basis_[r]] = xb_[static_cast<Eigen::Index>(r)];
                obj += lp_.c[basis_[r]] * xb_[static_cast<Eigen::Index>(r)];
                res.y[r] = y[static_cast<Eigen::Index>(r)];
            }
            res.objective = obj;
        }
    }

    const LpProblem& lp_;
    SimplexOptions opt_;
    std::vector<std::size_t> basis_;
    std::vector<long> is_basic_;
    Mat binv_;
    Vec xb_;
};

} // namespace

SimplexResult solve_simplex(const LpProblem& lp, std::vector<std::size_t> basis,
                            const SimplexOptions& options) {
    if (lp.b.size() != lp.rows || lp.c.size() != lp.cols())
        throw ContractViolation("simplex: inconsistent problem dimensions");
    for (const auto& col : lp.columns)
        for (const auto& [row, v] : col)
            if (row >= lp.rows) throw ContractViolation("simplex: column entry out of range");
    Simplex s(lp, std::move(basis), options);
    return s.run();
}

} // namespace dcc
