// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// MMSE channel estimation: the per-antenna tone-domain estimator (which for
// common-base cyclic-shift pilots reduces to a per-tap scalar Wiener filter
// after derotation) and the per-tap spatial estimator across the massive
// array, with closed-form error covariances and the residual matrix that
// isolates the excess error due to inter-cell pilot interference.

#ifndef PDPALIGN_ESTIMATION_HPP
#define PDPALIGN_ESTIMATION_HPP

#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "pdpalign/common.hpp"
#include "pdpalign/ofdm.hpp"
#include "pdpalign/pdp.hpp"

namespace pdpalign {

/// Per-user pilot tone powers rho and the receiver noise variance sigma^2.
struct LinkBudget {
    Eigen::VectorXd tone_powers;
    double noise_variance = 0;

    static LinkBudget uniform_snr(int n_users, double snr_db) {
        LinkBudget b;
        b.tone_powers = Eigen::VectorXd::Ones(n_users);
        b.noise_variance = std::pow(10.0, -snr_db / 10.0);
        return b;
    }

    void validate() const {
        if (!(noise_variance > 0))
            throw std::invalid_argument("LinkBudget: noise variance must be > 0");
        for (int i = 0; i < tone_powers.size(); ++i)
            if (tone_powers(i) < 0)
                throw std::invalid_argument("LinkBudget: tone powers must be >= 0");
    }
};

namespace detail {

// Derotated-domain denominator diagonal for the target user:
// d(n) = sigma^2 + sum_j rho_j P_j((n + tau_j - tau_u) mod L).
// With common-base cyclic-shift pilots every interference term is diagonal,
// so the tone-domain MMSE filter acts tap by tap.
inline Eigen::VectorXd wiener_denominator(const std::vector<PilotSequence>& pilots,
                                          const std::vector<PowerDelayProfile>& pdps,
                                          const LinkBudget& budget, int target) {
    const int n_users = static_cast<int>(pilots.size());
    if (static_cast<int>(pdps.size()) != n_users || budget.tone_powers.size() != n_users)
        throw std::invalid_argument("estimation: pilots/pdps/budget sizes disagree");
    if (target < 0 || target >= n_users)
        throw std::invalid_argument("estimation: target index out of range");
    budget.validate();
    const int length = pilots[target].length();
    for (int j = 0; j < n_users; ++j)
        if (pilots[j].length() != length || pdps[j].grid_length() != length)
            throw std::invalid_argument("estimation: sequence/profile length mismatch");

    // the diagonal reduction only holds when every pilot is a cyclic shift of
    // one common base: entrywise, s_j(n) conj(s_u(n)) must be the phase ramp
    // of the relative shift
    for (int j = 0; j < n_users; ++j) {
        const int dt = mod_floor(pilots[j].shift - pilots[target].shift, length);
        for (int n = 0; n < length; ++n) {
            double ph = kTwoPi * static_cast<double>(dt) * n / length;
            cxd ramp{std::cos(ph), std::sin(ph)};
            if (std::abs(pilots[j].values(n) * std::conj(pilots[target].values(n)) - ramp) > 1e-9)
                throw std::invalid_argument(
                    "estimation: pilot sequences do not share a common base");
        }
    }

    Eigen::VectorXd d = Eigen::VectorXd::Constant(length, budget.noise_variance);
    for (int j = 0; j < n_users; ++j) {
        const int dt = mod_floor(pilots[j].shift - pilots[target].shift, length);
        for (int n = 0; n < length; ++n)
            d(n) += budget.tone_powers(j) * pdps[j].powers(mod_floor(n + dt, length));
    }
    return d;
}

}  // namespace detail

/// MMSE estimate of the target user's CIR at one antenna from the tone-domain
/// observation y.  Implemented as the per-tap Wiener filter on the derotated
/// observation z = F' S_u' y, which is exactly the full matrix-form estimator
/// when all pilots are cyclic shifts of one constant-modulus base.
inline Vec per_antenna_mmse(const Vec& y, const std::vector<PilotSequence>& pilots,
                            const std::vector<PowerDelayProfile>& pdps,
                            const LinkBudget& budget, int target) {
    const Eigen::VectorXd d = detail::wiener_denominator(pilots, pdps, budget, target);
    const int length = pilots[target].length();
    if (static_cast<int>(y.size()) != length)
        throw std::invalid_argument("per_antenna_mmse: observation length mismatch");

    const Mat f = unitary_dft(length);
    Vec z = f.adjoint() * pilots[target].values.conjugate().cwiseProduct(y).matrix();

    const double rho = budget.tone_powers(target);
    const auto& p = pdps[target].powers;
    Vec h(length);
    for (int n = 0; n < length; ++n) h(n) = std::sqrt(rho) * p(n) / d(n) * z(n);
    return h;
}

/// Error covariance of per_antenna_mmse; diagonal with entries
/// P_u(n) - rho_u P_u(n)^2 / d(n).
inline Mat per_antenna_error_cov(const std::vector<PilotSequence>& pilots,
                                 const std::vector<PowerDelayProfile>& pdps,
                                 const LinkBudget& budget, int target) {
    const Eigen::VectorXd d = detail::wiener_denominator(pilots, pdps, budget, target);
    const int length = pilots[target].length();
    const double rho = budget.tone_powers(target);
    const auto& p = pdps[target].powers;
    Mat e = Mat::Zero(length, length);
    for (int n = 0; n < length; ++n) e(n, n) = p(n) - rho * p(n) * p(n) / d(n);
    return e;
}

/// Derotate each antenna's tone-domain observation by the base sequence and
/// stack taps across antennas: input Y is L x M (one column per antenna),
/// output G is M x L with column n equal to g_n = [z_1(n), ..., z_M(n)]^T.
inline Mat derotate_and_stack(const Mat& y_per_antenna, const Vec& base) {
    const int length = static_cast<int>(base.size());
    if (static_cast<int>(y_per_antenna.rows()) != length)
        throw std::invalid_argument("derotate_and_stack: observation rows != base length");
    const Mat f = unitary_dft(length);
    Mat z = f.adjoint() * (base.conjugate().asDiagonal() * y_per_antenna);
    return z.transpose();
}

/// Per-tap spatial MMSE filter across the array:
/// h_hat = C_own (sigma^2 I + C_own + sum C_others)^{-1} g.
/// Factorizes once; reuse across realizations of the same geometry.
class PerTapFilter {
public:
    PerTapFilter(Mat c_own, const std::vector<Mat>& c_others, double noise_var)
        : c_own_(std::move(c_own)) {
        if (!(noise_var > 0))
            throw std::invalid_argument("PerTapFilter: noise variance must be > 0");
        const auto m = c_own_.rows();
        if (c_own_.cols() != m) throw std::invalid_argument("PerTapFilter: C_own not square");
        Mat a = noise_var * Mat::Identity(m, m) + c_own_;
        for (const Mat& c : c_others) {
            if (c.rows() != m || c.cols() != m)
                throw std::invalid_argument("PerTapFilter: covariance size mismatch");
            a += c;
        }
        llt_.compute(a);
    }

    Vec estimate(const Vec& g) const { return c_own_ * llt_.solve(g); }

    Mat error_covariance() const {
        Mat e = c_own_ - c_own_ * llt_.solve(c_own_);
        return 0.5 * (e + e.adjoint());
    }

private:
    Mat c_own_;
    Eigen::LLT<Mat> llt_;
};

inline Vec per_tap_mmse(const Vec& g, const Mat& c_own, const std::vector<Mat>& c_others,
                        double noise_var) {
    return PerTapFilter(c_own, c_others, noise_var).estimate(g);
}

/// Error covariance of the per-tap estimator:
/// C_own - C_own (sigma^2 I + C_own + sum C_others)^{-1} C_own.
inline Mat per_tap_error_cov(const Mat& c_own, const std::vector<Mat>& c_others,
                             double noise_var) {
    return PerTapFilter(c_own, c_others, noise_var).error_covariance();
}

/// Residual matrix: the excess per-tap error covariance caused by the
/// interference terms, computed by subtracting the interference-free error
/// covariance from the full one.
inline Mat residual_matrix(const Mat& c_own, const std::vector<Mat>& c_others,
                           double noise_var) {
    Mat r = per_tap_error_cov(c_own, c_others, noise_var) -
            per_tap_error_cov(c_own, {}, noise_var);
    return 0.5 * (r + r.adjoint());
}

/// Bundle of per-tap estimation outputs across one aggregate delay grid.
struct EstimationReport {
    Mat estimates;                       // M x L, column n holds the tap-n estimate
    std::vector<Mat> error_covariances;  // per tap, Hermitian PSD
    std::vector<Mat> residuals;          // per tap, Hermitian PSD
};

/// Residual matrix through the explicit eigen-factored form: with
/// sum C_others = U S U' (nonzero eigenpairs only) and A = sigma^2 I + C_own,
/// R = C_own A^{-1} U (S^{-1} + U' A^{-1} U)^{-1} U' A^{-1} C_own.
/// Kept as an independent cross-check of residual_matrix.
inline Mat residual_matrix_lowrank(const Mat& c_own, const std::vector<Mat>& c_others,
                                   double noise_var) {
    if (!(noise_var > 0))
        throw std::invalid_argument("residual_matrix_lowrank: noise variance must be > 0");
    const auto m = c_own.rows();
    Mat t = Mat::Zero(m, m);
    for (const Mat& c : c_others) t += c;
    if (t.norm() == 0.0) return Mat::Zero(m, m);

    Eigen::SelfAdjointEigenSolver<Mat> es(t);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double thresh = 1e-9 * ev.cwiseAbs().maxCoeff();
    std::vector<int> keep;
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) > thresh) keep.push_back(i);
    if (keep.empty()) return Mat::Zero(m, m);

    const int r = static_cast<int>(keep.size());
    Mat u(m, r);
    Eigen::VectorXd sig(r);
    for (int i = 0; i < r; ++i) {
        u.col(i) = es.eigenvectors().col(keep[i]);
        sig(i) = ev(keep[i]);
    }

    Eigen::LLT<Mat> a0((noise_var * Mat::Identity(m, m) + c_own).eval());
    Mat ainv_u = a0.solve(u);
    Mat b = c_own * ainv_u;  // M x r
    Mat mid = sig.cwiseInverse().asDiagonal().toDenseMatrix().cast<cxd>() + u.adjoint() * ainv_u;
    Mat res = b * mid.llt().solve(b.adjoint());
    return 0.5 * (res + res.adjoint());
}

/// Run the per-tap spatial MMSE across every tap of a derotated observation
/// block (column n = g_n) and report estimates, error covariances and
/// residual matrices together.
inline EstimationReport estimate_taps(const Mat& g, const std::vector<Mat>& c_own,
                                      const std::vector<std::vector<Mat>>& c_others,
                                      double noise_var) {
    const int length = static_cast<int>(g.cols());
    if (static_cast<int>(c_own.size()) != length ||
        static_cast<int>(c_others.size()) != length)
        throw std::invalid_argument("estimate_taps: per-tap covariance counts != taps");
    EstimationReport rep;
    rep.estimates.resize(g.rows(), length);
    rep.error_covariances.reserve(length);
    rep.residuals.reserve(length);
    for (int n = 0; n < length; ++n) {
        PerTapFilter filter(c_own[n], c_others[n], noise_var);
        rep.estimates.col(n) = filter.estimate(g.col(n));
        rep.error_covariances.push_back(filter.error_covariance());
        rep.residuals.push_back(residual_matrix(c_own[n], c_others[n], noise_var));
    }
    return rep;
}

}  // namespace pdpalign

#endif  // PDPALIGN_ESTIMATION_HPP
