#include "ctwfe/lsq.hpp"

#include "ctwfe/error.hpp"

#include <algorithm>
#include <cmath>

namespace ctwfe::lsq {

using Eigen::Index;

OrderedQR::OrderedQR(Eigen::MatrixXd matrix, double relative_tolerance, double pivot_floor) : qr_(std::move(matrix)) {
    const Index m = qr_.rows();
    const Index n = qr_.cols();
    tau_.resize(std::min(m, n));
    Eigen::VectorXd workspace(std::max<Index>(n, 1));
    double max_pivot = pivot_floor;
    Index rank = 0;
    for (Index j = 0; j < n; ++j) {
        if (rank == m) {
            dropped_.push_back(j);
            continue;
        }
        auto tail = qr_.col(j).segment(rank, m - rank);
        const double norm = tail.norm();
        if (norm == 0.0 || norm <= relative_tolerance * max_pivot) {
            dropped_.push_back(j);
            continue;
        }
        double tau = 0.0;
        double beta = 0.0;
        tail.makeHouseholderInPlace(tau, beta);
        qr_(rank, j) = beta;
        if (j + 1 < n) {
            qr_.block(rank, j + 1, m - rank, n - j - 1)
                .applyHouseholderOnTheLeft(qr_.col(j).segment(rank + 1, m - rank - 1), tau, workspace.data());
        }
        tau_(rank) = tau;
        kept_.push_back(j);
        max_pivot = std::max(max_pivot, std::abs(beta));
        ++rank;
    }
}

Eigen::VectorXd OrderedQR::solve(const Eigen::VectorXd& rhs) const {
    const Index m = qr_.rows();
    if (rhs.size() != m) throw DataError("right-hand side length does not match the factored matrix");
    Eigen::VectorXd b = rhs;
    double workspace = 0.0;
    const auto rank = static_cast<Index>(kept_.size());
    for (Index idx = 0; idx < rank; ++idx) {
        const Index j = kept_[static_cast<std::size_t>(idx)];
        b.segment(idx, m - idx)
            .applyHouseholderOnTheLeft(qr_.col(j).segment(idx + 1, m - idx - 1), tau_(idx), &workspace);
    }
    Eigen::VectorXd z(rank);
    for (Index row = rank - 1; row >= 0; --row) {
        double acc = b(row);
        for (Index c = row + 1; c < rank; ++c) acc -= qr_(row, kept_[static_cast<std::size_t>(c)]) * z(c);
        z(row) = acc / qr_(row, kept_[static_cast<std::size_t>(row)]);
    }
    Eigen::VectorXd coefficients = Eigen::VectorXd::Zero(qr_.cols());
    for (Index c = 0; c < rank; ++c) coefficients(kept_[static_cast<std::size_t>(c)]) = z(c);
    return coefficients;
}

LsqSolution solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
    if (design.rows() != response.size())
        throw DataError("design has " + std::to_string(design.rows()) + " rows but the response has " +
                        std::to_string(response.size()));
    if (design.cols() == 0) throw DataError("design has no columns");
    OrderedQR qr(design);
    if (qr.rank() == 0) throw NumericalError("every column was dropped as rank deficient");
    LsqSolution out;
    out.coefficients = qr.solve(response);
    out.rank_dropped = qr.dropped();
    out.residuals = response - design * out.coefficients;
    out.rss = out.residuals.squaredNorm();
    return out;
}

DesignFactorization::DesignFactorization(const DesignMatrix& design) : design_(&design) {
    const auto& X = design.values;
    if (X.cols() == 0) throw DataError("design has no columns");
    const auto& periods = design.layout.periods();
    const int K = design.layout.spec().types;
    const auto n_periods = static_cast<int>(periods.size());

    for (std::size_t j = 0; j < design.columns.size(); ++j) {
        if (design.columns[j].kind == ColumnKind::TimeEffect)
            fe_cols_.push_back(static_cast<Index>(j));
        else
            other_cols_.push_back(static_cast<Index>(j));
    }

    row_cell_.resize(design.rows.size());
    cell_count_ = Eigen::VectorXd::Zero(K * n_periods);
    type_rows_.resize(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < design.rows.size(); ++i) {
        const auto& row = design.rows[i];
        const int cell = (row.type - 1) * n_periods + (row.period - periods.front());
        row_cell_[i] = cell;
        cell_count_(cell) += 1.0;
        type_rows_[static_cast<std::size_t>(row.type - 1)].push_back(static_cast<Index>(i));
    }

    double pivot_floor = 0.0;
    for (Index j : fe_cols_) pivot_floor = std::max(pivot_floor, X.col(j).norm());

    // Time effects of type k live only on type-k rows, so each type's block is factored separately.
    type_fe_cols_.resize(static_cast<std::size_t>(K));
    for (Index j : fe_cols_)
        type_fe_cols_[static_cast<std::size_t>(design.columns[static_cast<std::size_t>(j)].type - 1)].push_back(j);
    fe_blocks_.reserve(static_cast<std::size_t>(K));
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
        const auto& rows = type_rows_[k];
        const auto& cols = type_fe_cols_[k];
        Eigen::MatrixXd block(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c)
            for (std::size_t r = 0; r < rows.size(); ++r)
                block(static_cast<Index>(r), static_cast<Index>(c)) = X(rows[r], cols[c]);
        fe_blocks_.emplace_back(std::move(block));
        for (Index d : fe_blocks_.back().dropped()) rank_dropped_.push_back(cols[static_cast<std::size_t>(d)]);
    }

    other_resid_.resize(X.rows(), static_cast<Index>(other_cols_.size()));
    for (std::size_t c = 0; c < other_cols_.size(); ++c)
        other_resid_.col(static_cast<Index>(c)) = remove_cell_means(X.col(other_cols_[c]));
    other_qr_ = std::make_unique<OrderedQR>(other_resid_, kRelativePivotTolerance, pivot_floor);
    for (Index d : other_qr_->dropped()) rank_dropped_.push_back(other_cols_[static_cast<std::size_t>(d)]);
    std::sort(rank_dropped_.begin(), rank_dropped_.end());
}

Eigen::VectorXd DesignFactorization::remove_cell_means(const Eigen::VectorXd& v) const {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(cell_count_.size());
    for (Index i = 0; i < v.size(); ++i) sums(row_cell_[static_cast<std::size_t>(i)]) += v(i);
    Eigen::VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const int cell = row_cell_[static_cast<std::size_t>(i)];
        out(i) = v(i) - sums(cell) / cell_count_(cell);
    }
    return out;
}

LsqSolution DesignFactorization::solve(const Eigen::VectorXd& response) const {
    const auto& X = design_->values;
    if (X.rows() != response.size())
        throw DataError("design has " + std::to_string(X.rows()) + " rows but the response has " +
                        std::to_string(response.size()));

    LsqSolution out;
    out.coefficients = Eigen::VectorXd::Zero(X.cols());
    Eigen::VectorXd partial = response;
    if (!other_cols_.empty()) {
        const Eigen::VectorXd b = other_qr_->solve(remove_cell_means(response));
        for (std::size_t c = 0; c < other_cols_.size(); ++c) {
            out.coefficients(other_cols_[c]) = b(static_cast<Index>(c));
            if (b(static_cast<Index>(c)) != 0.0) partial -= b(static_cast<Index>(c)) * X.col(other_cols_[c]);
        }
    }
    for (std::size_t k = 0; k < fe_blocks_.size(); ++k) {
        const auto& rows = type_rows_[k];
        if (type_fe_cols_[k].empty()) continue;
        Eigen::VectorXd rhs(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) rhs(static_cast<Index>(r)) = partial(rows[r]);
        const Eigen::VectorXd d = fe_blocks_[k].solve(rhs);
        for (std::size_t c = 0; c < type_fe_cols_[k].size(); ++c)
            out.coefficients(type_fe_cols_[k][c]) = d(static_cast<Index>(c));
    }
    if (rank_dropped_.size() == static_cast<std::size_t>(X.cols()))
        throw NumericalError("every column was dropped as rank deficient");
    out.rank_dropped = rank_dropped_;
    out.residuals = response - X * out.coefficients;
    out.rss = out.residuals.squaredNorm();
    return out;
}

LsqSolution solve(const DesignMatrix& design, const Eigen::VectorXd& response) {
    return DesignFactorization(design).solve(response);
}

}  // namespace ctwfe::lsq
