#include "opal/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "opal/rng.hpp"

namespace opal {

namespace {

constexpr double kEntropyTol = 1e-5;
constexpr int kMaxBisection = 200;

// Gradient of KL(P||Q) in structure-of-arrays form. A single pass over the
// upper triangle accumulates the attractive sum sum_j p_ij w_ij (y_i - y_j)
// and the unnormalized repulsive sum sum_j w_ij^2 (y_i - y_j); the
// normalizer Z is only needed at the end.
void gradient_soa(const std::vector<double>& p, std::size_t n, const std::vector<double>& yx,
                  const std::vector<double>& yy, double exaggeration, std::vector<double>& gx,
                  std::vector<double>& gy, std::vector<double>& scratch) {
    scratch.assign(4 * n, 0.0);
    double* ax = scratch.data();
    double* ay = ax + n;
    double* rx = ay + n;
    double* ry = rx + n;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = yx[i];
        const double yi = yy[i];
        const double* prow = p.data() + i * n;
        const double* px = yx.data();
        const double* py = yy.data();
        double axi = 0.0, ayi = 0.0, rxi = 0.0, ryi = 0.0, zi = 0.0;
#pragma omp simd reduction(+ : axi, ayi, rxi, ryi, zi)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = xi - px[j];
            const double dy = yi - py[j];
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            const double pw = prow[j] * w;
            const double w2 = w * w;
            axi += pw * dx;
            ayi += pw * dy;
            rxi += w2 * dx;
            ryi += w2 * dy;
            zi += w;
            ax[j] -= pw * dx;
            ay[j] -= pw * dy;
            rx[j] -= w2 * dx;
            ry[j] -= w2 * dy;
        }
        ax[i] += axi;
        ay[i] += ayi;
        rx[i] += rxi;
        ry[i] += ryi;
        z += zi;
    }
    z *= 2.0;
    gx.resize(n);
    gy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        gx[i] = 4.0 * (exaggeration * ax[i] - rx[i] / z);
        gy[i] = 4.0 * (exaggeration * ay[i] - ry[i] / z);
    }
}

double kl_soa(const AffinityMatrix& p, const std::vector<double>& yx, const std::vector<double>& yy) {
    const std::size_t n = p.n;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = yx[i] - yx[j];
            const double dy = yy[i] - yy[j];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    z *= 2.0;
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double pij = p.p[i * n + j];
            if (pij <= 0.0) continue;
            const double dx = yx[i] - yx[j];
            const double dy = yy[i] - yy[j];
            const double q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
            // both (i, j) and (j, i)
            kl += 2.0 * pij * std::log(pij / q);
        }
    }
    return kl;
}

void split_coords(const Matrix& y, std::vector<double>& yx, std::vector<double>& yy) {
    if (y.cols() != 2) throw std::invalid_argument("embedding must have 2 columns");
    yx.resize(y.rows());
    yy.resize(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        yx[i] = y(i, 0);
        yy[i] = y(i, 1);
    }
}

} // namespace

double conditional_row(std::span<const double> sq_dist, std::size_t self, double beta, std::span<double> out) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sq_dist.size(); ++j) {
        if (j != self) dmin = std::min(dmin, sq_dist[j]);
    }
    double sum = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < sq_dist.size(); ++j) {
        if (j == self) {
            out[j] = 0.0;
            continue;
        }
        const double shifted = sq_dist[j] - dmin;
        const double e = std::exp(-beta * shifted);
        out[j] = e;
        sum += e;
        weighted += e * shifted;
    }
    for (std::size_t j = 0; j < sq_dist.size(); ++j) out[j] /= sum;
    const double nats = std::log(sum) + beta * weighted / sum;
    return nats / std::numbers::ln2;
}

void check_distinct_rows(const Matrix& features, std::span<const SampleId> ids) {
    const std::size_t n = features.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        auto ra = features.row(a), rb = features.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<SampleId> dup;
    for (std::size_t k = 1; k < n; ++k) {
        auto ra = features.row(order[k - 1]), rb = features.row(order[k]);
        if (std::equal(ra.begin(), ra.end(), rb.begin())) {
            for (auto r : {order[k - 1], order[k]}) {
                dup.push_back(ids.empty() ? static_cast<SampleId>(r) : ids[r]);
            }
        }
    }
    if (dup.empty()) return;
    std::sort(dup.begin(), dup.end());
    dup.erase(std::unique(dup.begin(), dup.end()), dup.end());
    std::ostringstream msg;
    msg << "identical feature rows for ids";
    for (std::size_t k = 0; k < dup.size() && k < 20; ++k) msg << ' ' << dup[k];
    if (dup.size() > 20) msg << " ... (" << dup.size() << " total)";
    throw DegenerateRow(std::move(dup), msg.str());
}

AffinityMatrix pairwise_affinities(const Matrix& features, double perplexity, std::span<const SampleId> ids) {
    const std::size_t n = features.rows();
    if (n < 3) throw std::invalid_argument("pairwise_affinities needs at least 3 points");
    if (!ids.empty() && ids.size() != n) throw std::invalid_argument("pairwise_affinities: id count mismatch");
    if (!(perplexity > 0.0)) throw std::invalid_argument("perplexity must be positive");
    check_distinct_rows(features, ids);

    AffinityMatrix a;
    a.n = n;
    a.perplexity = perplexity;
    if (perplexity >= static_cast<double>(n - 1)) {
        a.perplexity = std::max(1.0, static_cast<double>(n - 1) / 3.0);
        a.clamped = true;
        spdlog::warn("perplexity {} too large for {} points, using {}", perplexity, n, a.perplexity);
    }
    const double target = std::log2(a.perplexity);

    // squared distances via |a|^2 + |b|^2 - 2ab would lose precision for
    // nearby points, so compute differences directly
    const std::size_t d = features.cols();
    std::vector<double> sq(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = features.row(i).data();
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* xj = features.row(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double t = xi[k] - xj[k];
                s += t * t;
            }
            sq[i * n + j] = s;
            sq[j * n + i] = s;
        }
    }

    std::vector<double> cond(n * n, 0.0);
    a.betas.resize(n);
    a.entropy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> row(sq.data() + i * n, n);
        std::span<double> out(cond.data() + i * n, n);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n - 1);
        double beta = 1.0 / mean;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double h = conditional_row(row, i, beta, out);
        for (int it = 0; it < kMaxBisection && std::abs(h - target) >= kEntropyTol; ++it) {
            if (h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = conditional_row(row, i, beta, out);
        }
        a.betas[i] = beta;
        a.entropy[i] = h;
    }

    a.p.assign(n * n, 0.0);
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = (cond[i * n + j] + cond[j * n + i]) / denom;
            a.p[i * n + j] = v;
            a.p[j * n + i] = v;
        }
    }
    return a;
}

double kl_divergence(const AffinityMatrix& p, const Matrix& y) {
    std::vector<double> yx, yy;
    split_coords(y, yx, yy);
    return kl_soa(p, yx, yy);
}

Matrix kl_gradient(const AffinityMatrix& p, const Matrix& y, double exaggeration) {
    std::vector<double> yx, yy, gx, gy, scratch;
    split_coords(y, yx, yy);
    gradient_soa(p.p, p.n, yx, yy, exaggeration, gx, gy, scratch);
    Matrix g(p.n, 2);
    for (std::size_t i = 0; i < p.n; ++i) {
        g(i, 0) = gx[i];
        g(i, 1) = gy[i];
    }
    return g;
}

Projection2D tsne_embed(const AffinityMatrix& p, const TsneOptions& options, std::uint64_t seed) {
    const std::size_t n = p.n;
    if (options.iters < 1) throw std::invalid_argument("tsne_embed: iters must be positive");
    Rng rng(seed);
    std::vector<double> yx(n), yy(n);
    for (std::size_t i = 0; i < n; ++i) {
        yx[i] = 1e-4 * rng.normal();
        yy[i] = 1e-4 * rng.normal();
    }
    std::vector<double> ux(n, 0.0), uy(n, 0.0), gainx(n, 1.0), gainy(n, 1.0);
    std::vector<double> gx, gy, scratch;

    Projection2D out;
    out.seed = seed;
    out.perplexity = p.perplexity;
    const int kl_every = std::max(1, options.kl_every);

    for (int it = 0; it < options.iters; ++it) {
        if (it % kl_every == 0) out.kl_history.push_back({it, kl_soa(p, yx, yy)});
        const double exaggeration = it < options.exaggeration_iters ? options.early_exaggeration : 1.0;
        const double momentum = it < options.momentum_switch ? options.initial_momentum : options.final_momentum;
        gradient_soa(p.p, n, yx, yy, exaggeration, gx, gy, scratch);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(gx[i]) || !std::isfinite(gy[i])) {
                throw TsneError("non-finite t-SNE gradient at iteration " + std::to_string(it) + ", point " +
                                std::to_string(i));
            }
        }
        auto step = [&](double g, double& u, double& gain, double& y) {
            gain = ((g > 0.0) != (u > 0.0)) ? gain + 0.2 : gain * 0.8;
            gain = std::max(gain, 0.01);
            u = momentum * u - options.learning_rate * gain * g;
            y += u;
        };
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            step(gx[i], ux[i], gainx[i], yx[i]);
            step(gy[i], uy[i], gainy[i], yy[i]);
            mx += yx[i];
            my += yy[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            yx[i] -= mx;
            yy[i] -= my;
        }
    }
    out.kl_history.push_back({options.iters, kl_soa(p, yx, yy)});

    out.coords = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.coords(i, 0) = yx[i];
        out.coords(i, 1) = yy[i];
    }
    return out;
}

Projection2D project(const Matrix& features, std::span<const SampleId> ids, const TsneOptions& options,
                     std::uint64_t seed) {
    return tsne_embed(pairwise_affinities(features, options.perplexity, ids), options, seed);
}

} // namespace opal
