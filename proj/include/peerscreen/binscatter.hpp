#pragma once

// Nonparametric binned regression of E[Y|X] with covariate adjustment:
// equal-count binning, joint within-bin polynomial + covariate least squares,
// global-polynomial bias correction, pointwise robust confidence bands,
// IMSE-based bin selection, and sup-t Monte Carlo shape tests.
//
// Conventions used throughout:
//   * covariates enter centered at their sample means, so bin intercepts are
//     the curve evaluated at covariate means;
//   * the within-bin basis is centered at the bin's evaluation point, so the
//     intercept IS the point estimate there;
//   * the evaluation grid is the midpoint of each bin's observed x-range;
//   * variances are HC1 with the joint fit's n/(n-K) scaling.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "peerscreen/mathx.hpp"
#include "peerscreen/regress.hpp"
#include "peerscreen/rng.hpp"

namespace peerscreen {

enum class BinScheme { fixed_count, imse_optimal };

struct Binning {
    std::vector<double> edges;               // J+1 breakpoints over x
    std::vector<int> assignment;             // observation -> bin index
    std::vector<std::vector<int>> members;   // per-bin observation indices
    std::vector<double> centers;             // evaluation grid
    int J = 0;
    BinScheme scheme = BinScheme::fixed_count;

    int size(int j) const { return static_cast<int>(members[static_cast<std::size_t>(j)].size()); }
};

/// Equal-count partition into J bins. Observations are ordered by x with ties
/// broken by input position (stable), and the first n mod J bins take the
/// extra observation.
inline Binning make_bins(const std::vector<double>& x, int J,
                         BinScheme scheme = BinScheme::fixed_count) {
    const auto n = static_cast<int>(x.size());
    if (n == 0) throw std::invalid_argument("make_bins: empty input");
    if (J < 1 || J > n) throw std::invalid_argument("make_bins: need 1 <= J <= n");

    std::vector<int> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return x[static_cast<std::size_t>(a)] <
                                                x[static_cast<std::size_t>(b)]; });

    Binning b;
    b.J = J;
    b.scheme = scheme;
    b.assignment.assign(x.size(), -1);
    b.members.resize(static_cast<std::size_t>(J));
    const int base = n / J, rem = n % J;
    int pos = 0;
    for (int j = 0; j < J; ++j) {
        int size = base + (j < rem ? 1 : 0);
        for (int t = 0; t < size; ++t) {
            int idx = order[static_cast<std::size_t>(pos++)];
            b.assignment[static_cast<std::size_t>(idx)] = j;
            b.members[static_cast<std::size_t>(j)].push_back(idx);
        }
    }
    b.edges.resize(static_cast<std::size_t>(J) + 1);
    b.centers.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        const auto& m = b.members[static_cast<std::size_t>(j)];
        double lo = x[static_cast<std::size_t>(m.front())];
        double hi = x[static_cast<std::size_t>(m.back())];
        b.centers[static_cast<std::size_t>(j)] = 0.5 * (lo + hi);
        if (j == 0) b.edges[0] = lo;
        else {
            double prev_hi = x[static_cast<std::size_t>(
                b.members[static_cast<std::size_t>(j - 1)].back())];
            b.edges[static_cast<std::size_t>(j)] = 0.5 * (prev_hi + lo);
        }
        if (j == J - 1) b.edges[static_cast<std::size_t>(J)] = hi;
    }
    return b;
}

/// Fixed per-bin count (e.g. 10 papers per bin); J = n / per_bin with any
/// remainder spread over the earliest bins.
inline Binning make_bins_per_count(const std::vector<double>& x, int per_bin) {
    if (per_bin < 1) throw std::invalid_argument("make_bins_per_count: per_bin must be >= 1");
    const auto n = static_cast<int>(x.size());
    if (n == 0) throw std::invalid_argument("make_bins_per_count: empty input");
    int J = std::max(1, n / per_bin);
    return make_bins(x, J, BinScheme::fixed_count);
}

// ---------------------------------------------------------------------------
// Global polynomial fit (used standalone and for bias correction)

struct GlobalPolyFit {
    Eigen::VectorXd poly_coefs;       // raw basis: 1, x, ..., x^degree
    Eigen::VectorXd covariate_coefs;  // for covariates centered at sample means
    int degree = 3;
    double sigma2 = 0.0;              // RSS / (n - k)
    double rss = 0.0;
    std::size_t n = 0;

    /// Curve at covariate means.
    double eval(double x) const {
        double v = 0.0;
        for (Eigen::Index d = poly_coefs.size() - 1; d >= 0; --d) v = v * x + poly_coefs(d);
        return v;
    }
};

namespace detail {

// Multiplies polynomial `a` (coef vector, ascending) by (c0 + c1*x).
inline std::vector<double> poly_mul_linear(const std::vector<double>& a, double c0, double c1) {
    std::vector<double> out(a.size() + 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] += a[i] * c0;
        out[i + 1] += a[i] * c1;
    }
    return out;
}

inline Eigen::MatrixXd centered(const Eigen::MatrixXd& w, Eigen::VectorXd& means_out) {
    means_out = w.cols() > 0 ? Eigen::VectorXd(w.colwise().mean()) : Eigen::VectorXd(0);
    Eigen::MatrixXd wc = w;
    for (Eigen::Index c = 0; c < w.cols(); ++c) wc.col(c).array() -= means_out(c);
    return wc;
}

} // namespace detail

/// Least squares of y on [1, x, ..., x^degree] plus centered covariates.
/// x is standardized internally for conditioning; reported coefficients are
/// mapped back to the raw basis, so they solve the raw-basis normal equations.
inline GlobalPolyFit global_poly_fit(const std::vector<double>& y, const std::vector<double>& x,
                                     const Eigen::MatrixXd& covariates, int degree = 3) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (x.size() != y.size()) throw std::invalid_argument("global_poly_fit: x/y size mismatch");
    if (degree < 0) throw std::invalid_argument("global_poly_fit: degree must be >= 0");
    if (n <= degree + covariates.cols())
        throw std::invalid_argument("global_poly_fit: n too small for requested degree");

    auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    double mid = 0.5 * (*mn + *mx);
    double half = 0.5 * (*mx - *mn);
    if (half <= 0.0) half = 1.0;

    const Eigen::Index k = degree + 1 + covariates.cols();
    Eigen::MatrixXd X(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        double u = (x[static_cast<std::size_t>(i)] - mid) / half;
        double pw = 1.0;
        for (int d = 0; d <= degree; ++d) {
            X(i, d) = pw;
            pw *= u;
        }
    }
    Eigen::VectorXd cov_means;
    if (covariates.cols() > 0)
        X.rightCols(covariates.cols()) = detail::centered(covariates, cov_means);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < k) {
        std::vector<std::string> offending;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < k; ++j) {
            Eigen::Index c = perm(j);
            offending.push_back(c <= degree ? "x^" + std::to_string(c)
                                            : "covariate " + std::to_string(c - degree - 1));
        }
        throw RankDeficiencyError(offending);
    }
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    Eigen::VectorXd coef = qr.solve(yv);

    GlobalPolyFit fit;
    fit.degree = degree;
    fit.n = static_cast<std::size_t>(n);
    fit.rss = (yv - X * coef).squaredNorm();
    fit.sigma2 = n > k ? fit.rss / static_cast<double>(n - k) : 0.0;
    fit.covariate_coefs = coef.tail(covariates.cols());

    // Expand sum_d b_d ((x-mid)/half)^d back to powers of x.
    std::vector<double> raw(static_cast<std::size_t>(degree) + 1, 0.0);
    std::vector<double> basis{1.0};
    for (int d = 0; d <= degree; ++d) {
        for (std::size_t t = 0; t < basis.size(); ++t) raw[t] += coef(d) * basis[t];
        basis = detail::poly_mul_linear(basis, -mid / half, 1.0 / half);
    }
    fit.poly_coefs = Eigen::Map<Eigen::VectorXd>(raw.data(), degree + 1);
    return fit;
}

// ---------------------------------------------------------------------------
// Binscatter fit

struct BinscatterFit {
    Binning binning;
    int degree = 1;                                // within-bin polynomial order
    std::vector<Eigen::VectorXd> bin_coefs;        // per bin, basis centered at grid point
    Eigen::VectorXd covariate_coefs;
    Eigen::VectorXd covariate_means;
    std::vector<std::string> covariate_names;
    GlobalPolyFit global_cubic;                    // bias-correction reference fit
    std::vector<double> grid;                      // bin centers
    Eigen::VectorXd estimate;                      // mu-hat at grid
    Eigen::VectorXd corrected;                     // bias-corrected mu-hat
    Eigen::VectorXd se;                            // robust SE at grid
    Eigen::MatrixXd grid_cov;                      // covariance of estimate across grid
    Eigen::MatrixXd grid_influence;                // estimate = grid_influence * y
    Eigen::VectorXd residuals;
    double hc1_scale = 1.0;                        // n / (n - K)
    double sigma2 = 0.0;                           // joint-fit residual variance
    double confidence_level = 0.95;
    std::size_t n = 0;

    // inputs retained for shape tests and refits
    std::vector<double> x_data;
    std::vector<double> y_data;
    Eigen::MatrixXd covariates;
};

namespace detail {

inline Eigen::MatrixXd bin_basis(const std::vector<double>& x, const std::vector<int>& members,
                                 double center, int p) {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(members.size()), p + 1);
    for (std::size_t r = 0; r < members.size(); ++r) {
        double dx = x[static_cast<std::size_t>(members[r])] - center;
        double pw = 1.0;
        for (int d = 0; d <= p; ++d) {
            B(static_cast<Eigen::Index>(r), d) = pw;
            pw *= dx;
        }
    }
    return B;
}

// Projection of values (defined per observation) onto the degree-p basis of
// each bin; returns the fitted value at the bin's grid point.
inline Eigen::VectorXd project_onto_bins(const std::vector<double>& x, const Binning& bins,
                                         int p, const Eigen::VectorXd& values) {
    Eigen::VectorXd out(bins.J);
    for (int j = 0; j < bins.J; ++j) {
        const auto& m = bins.members[static_cast<std::size_t>(j)];
        Eigen::MatrixXd B = bin_basis(x, m, bins.centers[static_cast<std::size_t>(j)], p);
        Eigen::VectorXd v(static_cast<Eigen::Index>(m.size()));
        for (std::size_t r = 0; r < m.size(); ++r)
            v(static_cast<Eigen::Index>(r)) = values(m[r]);
        Eigen::VectorXd b = (B.transpose() * B).ldlt().solve(B.transpose() * v);
        out(j) = b(0);
    }
    return out;
}

} // namespace detail

/// Joint least squares of y on the per-bin polynomial basis plus centered
/// covariates. The reported curve and bands refer to covariate sample means.
inline BinscatterFit fit_binscatter(const std::vector<double>& y, const std::vector<double>& x,
                                    const Eigen::MatrixXd& covariates, const Binning& bins,
                                    int p = 1, std::vector<std::string> covariate_names = {},
                                    double level = 0.95) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (x.size() != y.size()) throw std::invalid_argument("fit_binscatter: x/y size mismatch");
    if (covariates.rows() > 0 && covariates.rows() != n)
        throw std::invalid_argument("fit_binscatter: covariate row mismatch");
    if (p < 0) throw std::invalid_argument("fit_binscatter: degree must be >= 0");
    if (static_cast<std::size_t>(bins.assignment.size()) != y.size())
        throw std::invalid_argument("fit_binscatter: binning built on different sample");
    for (int j = 0; j < bins.J; ++j)
        if (bins.size(j) < p + 1)
            throw RankDeficiencyError({"bin " + std::to_string(j) + " has fewer than p+1 points"});

    const Eigen::Index kcov = covariates.cols();
    const Eigen::Index K = static_cast<Eigen::Index>(bins.J) * (p + 1) + kcov;
    if (n <= K)
        throw std::invalid_argument("fit_binscatter: more parameters than observations");

    BinscatterFit fit;
    fit.binning = bins;
    fit.degree = p;
    fit.grid = bins.centers;
    fit.confidence_level = level;
    fit.n = static_cast<std::size_t>(n);
    fit.x_data = x;
    fit.y_data = y;
    fit.covariates = covariates;
    fit.covariate_names = std::move(covariate_names);
    fit.hc1_scale = static_cast<double>(n) / static_cast<double>(n - K);

    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    fit.estimate.resize(bins.J);
    fit.se.resize(bins.J);
    fit.grid_cov = Eigen::MatrixXd::Zero(bins.J, bins.J);
    fit.grid_influence = Eigen::MatrixXd::Zero(bins.J, n);
    fit.residuals.resize(n);

    if (kcov == 0) {
        // Block-diagonal design: solve bin by bin. Identical to the joint fit,
        // including the global HC1 scaling.
        fit.covariate_coefs.resize(0);
        fit.covariate_means.resize(0);
        double rss = 0.0;
        for (int j = 0; j < bins.J; ++j) {
            const auto& m = bins.members[static_cast<std::size_t>(j)];
            Eigen::MatrixXd B = detail::bin_basis(x, m, bins.centers[static_cast<std::size_t>(j)], p);
            Eigen::VectorXd yj(static_cast<Eigen::Index>(m.size()));
            for (std::size_t r = 0; r < m.size(); ++r)
                yj(static_cast<Eigen::Index>(r)) = y[static_cast<std::size_t>(m[r])];
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
            if (qr.rank() < B.cols())
                throw RankDeficiencyError({"bin " + std::to_string(j)});
            Eigen::VectorXd b = qr.solve(yj);
            Eigen::VectorXd ej = yj - B * b;
            rss += ej.squaredNorm();
            fit.bin_coefs.push_back(b);
            fit.estimate(j) = b(0);

            Eigen::MatrixXd btb_inv =
                (B.transpose() * B).ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
            Eigen::RowVectorXd infl = (btb_inv.row(0) * B.transpose());
            Eigen::MatrixXd meat = B.transpose() * ej.array().square().matrix().asDiagonal() * B;
            Eigen::MatrixXd vj = btb_inv * meat * btb_inv;
            fit.grid_cov(j, j) = fit.hc1_scale * vj(0, 0);
            for (std::size_t r = 0; r < m.size(); ++r) {
                fit.grid_influence(j, m[r]) = infl(static_cast<Eigen::Index>(r));
                fit.residuals(m[r]) = ej(static_cast<Eigen::Index>(r));
            }
        }
        fit.sigma2 = rss / static_cast<double>(n - K);
    } else {
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, K);
        for (Eigen::Index i = 0; i < n; ++i) {
            int j = bins.assignment[static_cast<std::size_t>(i)];
            double dx = x[static_cast<std::size_t>(i)] - bins.centers[static_cast<std::size_t>(j)];
            double pw = 1.0;
            for (int d = 0; d <= p; ++d) {
                X(i, static_cast<Eigen::Index>(j) * (p + 1) + d) = pw;
                pw *= dx;
            }
        }
        X.rightCols(kcov) = detail::centered(covariates, fit.covariate_means);

        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < K) {
            std::vector<std::string> offending;
            const auto& perm = qr.colsPermutation().indices();
            for (Eigen::Index jj = qr.rank(); jj < K; ++jj) {
                Eigen::Index c = perm(jj);
                if (c < K - kcov)
                    offending.push_back("bin " + std::to_string(c / (p + 1)) + " x^" +
                                        std::to_string(c % (p + 1)));
                else {
                    auto ci = static_cast<std::size_t>(c - (K - kcov));
                    offending.push_back(ci < fit.covariate_names.size()
                                            ? fit.covariate_names[ci]
                                            : "covariate " + std::to_string(ci));
                }
            }
            throw RankDeficiencyError(offending);
        }
        Eigen::VectorXd coef = qr.solve(yv);
        fit.residuals = yv - X * coef;
        fit.sigma2 = fit.residuals.squaredNorm() / static_cast<double>(n - K);
        fit.covariate_coefs = coef.tail(kcov);
        for (int j = 0; j < bins.J; ++j) {
            fit.bin_coefs.push_back(coef.segment(static_cast<Eigen::Index>(j) * (p + 1), p + 1));
            fit.estimate(j) = coef(static_cast<Eigen::Index>(j) * (p + 1));
        }

        Eigen::MatrixXd xtx_inv =
            (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(K, K));
        Eigen::MatrixXd meat =
            X.transpose() * fit.residuals.array().square().matrix().asDiagonal() * X;
        Eigen::MatrixXd V = fit.hc1_scale * xtx_inv * meat * xtx_inv;
        for (int a = 0; a < bins.J; ++a)
            for (int b = 0; b < bins.J; ++b)
                fit.grid_cov(a, b) = V(static_cast<Eigen::Index>(a) * (p + 1),
                                       static_cast<Eigen::Index>(b) * (p + 1));
        Eigen::MatrixXd xtx_inv_xt = xtx_inv * X.transpose();
        for (int j = 0; j < bins.J; ++j)
            fit.grid_influence.row(j) = xtx_inv_xt.row(static_cast<Eigen::Index>(j) * (p + 1));
    }

    for (int j = 0; j < bins.J; ++j)
        fit.se(j) = std::sqrt(std::max(0.0, fit.grid_cov(j, j)));

    // Bias correction: the global cubic g is the smoother reference; the
    // estimated bias of the binned fit at the grid is (projection of g onto
    // the bin basis) - g, which vanishes when the truth lies in the
    // within-bin class.
    fit.global_cubic = global_poly_fit(y, x, covariates, 3);
    Eigen::VectorXd g_at_obs(n);
    for (Eigen::Index i = 0; i < n; ++i)
        g_at_obs(i) = fit.global_cubic.eval(x[static_cast<std::size_t>(i)]);
    Eigen::VectorXd g_proj = detail::project_onto_bins(x, bins, p, g_at_obs);
    fit.corrected.resize(bins.J);
    for (int j = 0; j < bins.J; ++j) {
        double bias = g_proj(j) - fit.global_cubic.eval(bins.centers[static_cast<std::size_t>(j)]);
        fit.corrected(j) = fit.estimate(j) - bias;
    }
    return fit;
}

struct ConfidenceBand {
    std::vector<double> lo, hi;
    double z = 0.0;
};

/// Pointwise intervals: bias-corrected estimate +/- z(level) * robust SE.
inline ConfidenceBand confidence_band(const BinscatterFit& fit, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("confidence_band: level must be in (0,1)");
    ConfidenceBand band;
    band.z = norm_quantile(0.5 + 0.5 * level);
    band.lo.resize(static_cast<std::size_t>(fit.binning.J));
    band.hi.resize(static_cast<std::size_t>(fit.binning.J));
    for (int j = 0; j < fit.binning.J; ++j) {
        band.lo[static_cast<std::size_t>(j)] = fit.corrected(j) - band.z * fit.se(j);
        band.hi[static_cast<std::size_t>(j)] = fit.corrected(j) + band.z * fit.se(j);
    }
    return band;
}

// ---------------------------------------------------------------------------
// IMSE-optimal bin count

struct ImseSelection {
    int J = 2;
    bool degenerate_variance = false;
    double bias_constant = 0.0;     // B-hat
    double residual_variance = 0.0; // V-hat
};

/// J* = ceil( (2(p+1) B n / V)^(1/(2p+3)) ), clamped to [2, n/2].
/// V-hat is the residual variance of the global cubic fit. B-hat is the
/// squared curvature left after projecting the cubic onto a pilot binning,
/// rescaled to its J-free constant and normalized by (p+1) so the closed form
/// solves the first-order condition of (p+1) V J / n + B J^(-2(p+1)).
inline ImseSelection select_bins_imse(const std::vector<double>& y, const std::vector<double>& x,
                                      const Eigen::MatrixXd& covariates, int p = 1) {
    const auto n = static_cast<int>(y.size());
    if (n < 20) throw std::invalid_argument("select_bins_imse: need n >= 20");
    if (p < 0) throw std::invalid_argument("select_bins_imse: degree must be >= 0");

    GlobalPolyFit g = global_poly_fit(y, x, covariates, 3);
    ImseSelection sel;
    sel.residual_variance = g.sigma2;
    if (g.sigma2 <= 1e-12 * (1.0 + sample_variance(std::vector<double>(y)))) {
        sel.J = 2;
        sel.degenerate_variance = true;
        return sel;
    }

    int max_pilot = n / (p + 2);
    int pilot = std::clamp(static_cast<int>(std::lround(std::sqrt(double(n)))), 2,
                           std::max(2, max_pilot));
    Binning pb = make_bins(x, pilot);
    Eigen::VectorXd g_at_obs(n);
    for (int i = 0; i < n; ++i) g_at_obs(i) = g.eval(x[static_cast<std::size_t>(i)]);

    // Mean squared projection error of g across observations.
    double mspe = 0.0;
    for (int j = 0; j < pb.J; ++j) {
        const auto& m = pb.members[static_cast<std::size_t>(j)];
        Eigen::MatrixXd B = detail::bin_basis(x, m, pb.centers[static_cast<std::size_t>(j)], p);
        Eigen::VectorXd v(static_cast<Eigen::Index>(m.size()));
        for (std::size_t r = 0; r < m.size(); ++r) v(static_cast<Eigen::Index>(r)) = g_at_obs(m[r]);
        Eigen::VectorXd b = (B.transpose() * B).ldlt().solve(B.transpose() * v);
        mspe += (v - B * b).squaredNorm();
    }
    mspe /= static_cast<double>(n);

    double exponent2 = 2.0 * (p + 1);
    sel.bias_constant = std::pow(static_cast<double>(pilot), exponent2) * mspe /
                        static_cast<double>(p + 1);
    double inner = 2.0 * (p + 1) * sel.bias_constant * static_cast<double>(n) /
                   sel.residual_variance;
    int jstar = inner > 0 ? static_cast<int>(std::ceil(std::pow(inner, 1.0 / (2.0 * p + 3.0))))
                          : 0;
    sel.J = std::clamp(jstar, 2, std::max(2, n / 2));
    return sel;
}

// ---------------------------------------------------------------------------
// Shape tests (sup-t with Monte Carlo critical values)

struct ShapeTestResult {
    std::string null_description;
    double statistic = 0.0;  // sup-t
    double p_value = 1.0;
    int draws = 0;           // Monte Carlo draws B
};

namespace detail {

// Draws max_j z_j / sd_j (signed or absolute) for z ~ N(0, cov), B times.
// The factor comes from the eigendecomposition so near-singular covariances
// (noiseless fits) are handled without jitter.
inline double mc_sup_pvalue(const Eigen::MatrixXd& cov, const Eigen::VectorXd& sd,
                            double statistic, bool absolute, int B, std::uint64_t seed) {
    const auto m = cov.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::MatrixXd factor = es.eigenvectors() *
                             es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    int count = 0;
    for (int b = 0; b < B; ++b) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b) + 1);
        Eigen::VectorXd xi(m);
        for (Eigen::Index i = 0; i < m; ++i) xi(i) = rng.normal();
        Eigen::VectorXd z = factor * xi;
        double t = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) {
            double v = z(i) / sd(i);
            if (absolute) v = std::abs(v);
            t = std::max(t, v);
        }
        if (t >= statistic) ++count;
    }
    return (1.0 + count) / (static_cast<double>(B) + 1.0);
}

inline Eigen::VectorXd sd_floor(const Eigen::MatrixXd& cov, double scale_hint) {
    Eigen::VectorXd sd(cov.rows());
    double fl = 1e-12 * (1.0 + std::abs(scale_hint));
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        sd(i) = std::max(std::sqrt(std::max(0.0, cov(i, i))), fl);
    return sd;
}

} // namespace detail

/// Sup-t test of H0: the conditional mean is a degree-q polynomial. The
/// statistic standardizes mu-hat minus the fitted null polynomial at every
/// grid point by the SE of that difference; both fits are linear in y, so the
/// difference covariance comes from their influence functions under HC1
/// weighting. Valid binnings are the caller's responsibility: with an
/// arbitrarily fixed J (say 100) the test is meaningless, use IMSE-selected
/// bins.
inline ShapeTestResult test_poly_order(const BinscatterFit& fit, int q, int B = 1000,
                                       std::uint64_t seed = 1) {
    if (B < 500) throw std::invalid_argument("test_poly_order: need B >= 500");
    if (q < 0) throw std::invalid_argument("test_poly_order: q must be >= 0");
    if (q + 1 >= fit.binning.J)
        throw std::invalid_argument(
            "test_poly_order: null polynomial can interpolate the grid (q+1 >= J)");

    const auto n = static_cast<Eigen::Index>(fit.n);
    const auto J = fit.binning.J;

    // Null-model influence at the grid, in the scaled basis used by the fit.
    const auto& x = fit.x_data;
    auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    double mid = 0.5 * (*mn + *mx), half = 0.5 * (*mx - *mn);
    if (half <= 0.0) half = 1.0;
    const Eigen::Index kcov = fit.covariates.cols();
    const Eigen::Index kz = q + 1 + kcov;
    Eigen::MatrixXd Z(n, kz);
    for (Eigen::Index i = 0; i < n; ++i) {
        double u = (x[static_cast<std::size_t>(i)] - mid) / half, pw = 1.0;
        for (int d = 0; d <= q; ++d) {
            Z(i, d) = pw;
            pw *= u;
        }
    }
    if (kcov > 0) {
        Eigen::VectorXd dummy;
        Z.rightCols(kcov) = detail::centered(fit.covariates, dummy);
    }
    Eigen::MatrixXd ztz_inv = (Z.transpose() * Z).ldlt().solve(Eigen::MatrixXd::Identity(kz, kz));
    Eigen::MatrixXd P(J, kz);
    P.setZero();
    for (int j = 0; j < J; ++j) {
        double u = (fit.grid[static_cast<std::size_t>(j)] - mid) / half, pw = 1.0;
        for (int d = 0; d <= q; ++d) {
            P(j, d) = pw;
            pw *= u;
        }
    }
    Eigen::MatrixXd a_null = P * ztz_inv * Z.transpose();      // J x n
    Eigen::MatrixXd a_diff = fit.grid_influence - a_null;      // difference process

    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(fit.y_data.data(), n);
    Eigen::VectorXd diff = a_diff * yv;
    Eigen::MatrixXd cov = fit.hc1_scale *
                          (a_diff * fit.residuals.array().square().matrix().asDiagonal() *
                           a_diff.transpose());
    Eigen::VectorXd sd = detail::sd_floor(cov, fit.estimate.cwiseAbs().maxCoeff());

    ShapeTestResult res;
    res.null_description = "polynomial order " + std::to_string(q);
    res.draws = B;
    res.statistic = 0.0;
    for (int j = 0; j < J; ++j) res.statistic = std::max(res.statistic, std::abs(diff(j)) / sd(j));
    res.p_value = detail::mc_sup_pvalue(cov, sd, res.statistic, /*absolute=*/true, B, seed);
    return res;
}

/// One-sided sup-t test of H0: the conditional mean is weakly decreasing
/// across the grid. Violations are positive adjacent-bin increases; the
/// Monte Carlo null is the least-favorable flat curve.
inline ShapeTestResult test_monotone_decreasing(const BinscatterFit& fit, int B = 1000,
                                                std::uint64_t seed = 1) {
    if (B < 500) throw std::invalid_argument("test_monotone: need B >= 500");
    const int J = fit.binning.J;
    if (J < 2) throw std::invalid_argument("test_monotone: need at least 2 bins");

    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(J - 1, J);
    for (int j = 0; j + 1 < J; ++j) {
        D(j, j) = -1.0;
        D(j, j + 1) = 1.0;
    }
    Eigen::VectorXd incr = D * fit.estimate;
    Eigen::MatrixXd cov = D * fit.grid_cov * D.transpose();
    Eigen::VectorXd sd = detail::sd_floor(cov, fit.estimate.cwiseAbs().maxCoeff());

    ShapeTestResult res;
    res.null_description = "weakly decreasing";
    res.draws = B;
    res.statistic = -std::numeric_limits<double>::infinity();
    for (int j = 0; j + 1 < J; ++j) res.statistic = std::max(res.statistic, incr(j) / sd(j));
    res.p_value = detail::mc_sup_pvalue(cov, sd, res.statistic, /*absolute=*/false, B, seed);
    return res;
}

} // namespace peerscreen
