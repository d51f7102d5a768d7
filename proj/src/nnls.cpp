#include "kernest/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kernest {

namespace {

// Thin QR factorization Q R of a column subset, maintained under appends
// (classical Gram-Schmidt with one reorthogonalization pass) and deletions
// (Givens re-triangularization).
class IncrementalQr {
public:
    IncrementalQr(Eigen::Index rows, Eigen::Index capacity)
        : q_(rows, capacity), r_(capacity, capacity) {}

    Eigen::Index size() const noexcept { return p_; }

    bool append(const Eigen::VectorXd& column) {
        if (p_ == q_.cols()) return false;
        const double norm = column.norm();
        if (norm == 0.0) return false;
        Eigen::VectorXd v = column;
        Eigen::VectorXd coeff = Eigen::VectorXd::Zero(p_);
        for (int pass = 0; pass < 2 && p_ > 0; ++pass) {
            const Eigen::VectorXd c = q_.leftCols(p_).transpose() * v;
            v.noalias() -= q_.leftCols(p_) * c;
            coeff += c;
        }
        const double rho = v.norm();
        if (rho <= 1e-12 * norm) return false;
        q_.col(p_) = v / rho;
        r_.col(p_).head(p_) = coeff;
        r_(p_, p_) = rho;
        r_.col(p_).tail(r_.rows() - p_ - 1).setZero();
        ++p_;
        return true;
    }

    void remove(Eigen::Index k) {
        for (Eigen::Index c = k; c + 1 < p_; ++c) r_.col(c).head(p_) = r_.col(c + 1).head(p_);
        for (Eigen::Index c = k; c + 1 < p_; ++c) {
            const double a = r_(c, c);
            const double b = r_(c + 1, c);
            const double h = std::hypot(a, b);
            if (h == 0.0) continue;
            const double cs = a / h;
            const double sn = b / h;
            for (Eigen::Index j = c; j + 1 < p_; ++j) {
                const double top = r_(c, j);
                const double bot = r_(c + 1, j);
                r_(c, j) = cs * top + sn * bot;
                r_(c + 1, j) = -sn * top + cs * bot;
            }
            r_(c + 1, c) = 0.0;
            const Eigen::VectorXd qc = q_.col(c);
            q_.col(c) = cs * qc + sn * q_.col(c + 1);
            q_.col(c + 1) = -sn * qc + cs * q_.col(c + 1);
        }
        --p_;
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd y = q_.leftCols(p_).transpose() * b;
        r_.topLeftCorner(p_, p_).triangularView<Eigen::Upper>().solveInPlace(y);
        return y;
    }

private:
    Eigen::MatrixXd q_;
    Eigen::MatrixXd r_;
    Eigen::Index p_ = 0;
};

double dual_scale(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    return (a.transpose() * b).cwiseAbs().maxCoeff();
}

double kkt_from_dual(const Eigen::VectorXd& dual, const Eigen::VectorXd& x, double scale) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double v = x[j] > 0.0 ? std::abs(dual[j]) : std::max(dual[j], 0.0);
        worst = std::max(worst, v);
    }
    return scale > 0.0 ? worst / scale : worst;
}

} // namespace

double nnls_kkt_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& x) {
    const Eigen::VectorXd dual = a.transpose() * (b - a * x);
    return kkt_from_dual(dual, x, dual_scale(a, b));
}

NnlsResult solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const NnlsOptions& opts) {
    const Eigen::Index n = a.cols();
    NnlsResult res;
    res.x = Eigen::VectorXd::Zero(n);

    const double scale = n > 0 && a.rows() > 0 ? dual_scale(a, b) : 0.0;
    if (scale == 0.0) {
        res.converged = true;
        for (Eigen::Index j = 0; j < n; ++j) res.zero_multiplier.push_back(static_cast<std::size_t>(j));
        return res;
    }
    const double threshold = std::min(opts.kkt_tol, opts.entry_tol) * scale;

    IncrementalQr qr(a.rows(), std::min(a.rows(), n));
    std::vector<Eigen::Index> order;   // QR position -> column
    std::vector<char> passive(n, 0);
    std::vector<char> blocked(n, 0);   // entered and was immediately expelled
    Eigen::VectorXd& x = res.x;
    Eigen::VectorXd dual = a.transpose() * b;

    std::size_t iterations = 0;
    while (true) {
        Eigen::Index best = -1;
        double best_value = threshold;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (passive[j] || blocked[j]) continue;
            if (dual[j] > best_value) {
                best_value = dual[j];
                best = j;
            }
        }
        if (best < 0) {
            res.converged = true;
            break;
        }
        if (++iterations > opts.max_iterations) break;

        if (!qr.append(a.col(best))) {
            blocked[best] = 1;
            continue;
        }
        passive[best] = 1;
        order.push_back(best);

        bool moved = false;
        while (qr.size() > 0) {
            if (++iterations > opts.max_iterations) break;
            const Eigen::VectorXd z = qr.solve(b);
            if ((z.array() > 0.0).all()) {
                for (std::size_t i = 0; i < order.size(); ++i) x[order[i]] = z[static_cast<Eigen::Index>(i)];
                moved = true;
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            Eigen::Index hit = -1;
            for (std::size_t i = 0; i < order.size(); ++i) {
                const double zi = z[static_cast<Eigen::Index>(i)];
                if (zi <= 0.0) {
                    const double xi = x[order[i]];
                    const double step = xi / (xi - zi);
                    if (step < alpha) {
                        alpha = step;
                        hit = static_cast<Eigen::Index>(i);
                    }
                }
            }
            if (alpha > 0.0) moved = true;
            for (std::size_t i = 0; i < order.size(); ++i) {
                const Eigen::Index j = order[i];
                x[j] += alpha * (z[static_cast<Eigen::Index>(i)] - x[j]);
            }
            x[order[static_cast<std::size_t>(hit)]] = 0.0;
            for (Eigen::Index i = static_cast<Eigen::Index>(order.size()) - 1; i >= 0; --i) {
                const Eigen::Index j = order[static_cast<std::size_t>(i)];
                if (x[j] <= 0.0) {
                    x[j] = 0.0;
                    passive[j] = 0;
                    qr.remove(i);
                    order.erase(order.begin() + i);
                }
            }
        }
        if (iterations > opts.max_iterations) break;

        if (moved) {
            std::fill(blocked.begin(), blocked.end(), 0);
        } else if (!passive[best]) {
            blocked[best] = 1;
        }
        dual = a.transpose() * (b - a * x);
    }

    dual = a.transpose() * (b - a * x);
    res.iterations = iterations;
    res.kkt_residual = kkt_from_dual(dual, x, scale);
    if (res.converged && res.kkt_residual > opts.kkt_tol) {
        // Blocked columns can leave residual violations behind.
        res.converged = false;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (x[j] == 0.0 && std::abs(dual[j]) <= opts.kkt_tol * scale) {
            res.zero_multiplier.push_back(static_cast<std::size_t>(j));
        }
    }
    return res;
}

} // namespace kernest
