#pragma once

#include "ctwfe/design.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace ctwfe::lsq {

/// Columns whose pivot falls below this fraction of the largest pivot seen so
/// far are treated as linearly dependent on the columns before them.
inline constexpr double kRelativePivotTolerance = 1e-10;

/// Householder QR that walks the columns in their given order and skips any
/// column already (numerically) in the span of the earlier kept ones. Unlike
/// norm-pivoted QR, which columns survive depends only on column order.
class OrderedQR {
public:
    /// `pivot_floor` seeds the running largest pivot, for callers that have
    /// already projected out a block of columns with known pivots.
    explicit OrderedQR(Eigen::MatrixXd matrix, double relative_tolerance = kRelativePivotTolerance,
                       double pivot_floor = 0.0);

    Eigen::Index rows() const { return qr_.rows(); }
    Eigen::Index cols() const { return qr_.cols(); }
    std::size_t rank() const { return kept_.size(); }
    const std::vector<Eigen::Index>& kept() const { return kept_; }
    const std::vector<Eigen::Index>& dropped() const { return dropped_; }

    /// Least-squares coefficients for every column; dropped columns get 0.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

private:
    Eigen::MatrixXd qr_;  // R above the diagonal of kept columns, reflectors below
    Eigen::VectorXd tau_;
    std::vector<Eigen::Index> kept_;
    std::vector<Eigen::Index> dropped_;
};

struct LsqSolution {
    Eigen::VectorXd coefficients;             // one per input column, 0 for rank-dropped columns
    std::vector<Eigen::Index> rank_dropped;   // input column positions
    double rss = 0.0;
    Eigen::VectorXd residuals;
};

/// Plain dense least squares on an arbitrary matrix.
LsqSolution solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

/// Factorization of a conditional event-study design; keeps a pointer to
/// `design`, which must outlive it. The type-by-period
/// indicator columns are projected out by within-cell demeaning before the
/// ordered QR runs on the remaining columns, which is exact for balanced
/// panels and much cheaper than factoring the full design.
class DesignFactorization {
public:
    explicit DesignFactorization(const DesignMatrix& design);

    /// Positions (into design.columns) dropped for numerical rank deficiency.
    const std::vector<Eigen::Index>& rank_dropped() const { return rank_dropped_; }

    LsqSolution solve(const Eigen::VectorXd& response) const;

private:
    const DesignMatrix* design_;
    std::vector<Eigen::Index> fe_cols_;     // positions of time-effect columns
    std::vector<Eigen::Index> other_cols_;  // positions of everything else
    std::vector<int> row_cell_;             // cell id (type, period) per row
    Eigen::VectorXd cell_count_;
    std::vector<OrderedQR> fe_blocks_;              // per type: time effects on that type's rows
    std::vector<std::vector<Eigen::Index>> type_rows_;
    std::vector<std::vector<Eigen::Index>> type_fe_cols_;
    Eigen::MatrixXd other_resid_;            // other columns with cell means removed
    std::unique_ptr<OrderedQR> other_qr_;
    std::vector<Eigen::Index> rank_dropped_;

    Eigen::VectorXd remove_cell_means(const Eigen::VectorXd& v) const;
};

/// Least squares of the stacked response on an event-study design.
LsqSolution solve(const DesignMatrix& design, const Eigen::VectorXd& response);

}  // namespace ctwfe::lsq
