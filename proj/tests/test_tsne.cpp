#include <doctest.h>

#include <cmath>
#include <numeric>

#include "opal/tsne.hpp"
#include "opal/rng.hpp"

using namespace opal;

namespace {

Matrix gaussian_rows(std::size_t n, std::size_t d, Rng& rng, double offset = 0.0) {
    Matrix m(n, d);
    for (auto& v : m.data()) v = rng.normal() + offset;
    return m;
}

std::vector<double> sq_dist_row(const Matrix& x, std::size_t i) {
    std::vector<double> out(x.rows());
    for (std::size_t j = 0; j < x.rows(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
        out[j] = s;
    }
    return out;
}

TsneOptions quick_options() {
    TsneOptions o;
    o.perplexity = 10;
    o.iters = 300;
    o.exaggeration_iters = 100;
    o.momentum_switch = 100;
    return o;
}

} // namespace

TEST_CASE("three equidistant points give uniform conditionals") {
    // unit vectors: every squared distance is exactly 2
    const auto x = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const auto sq = sq_dist_row(x, 0);
    std::vector<double> out(3);
    for (double beta : {0.01, 1.0, 50.0}) {
        conditional_row(sq, 0, beta, out);
        CHECK(out[0] == 0.0);
        CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(out[2] == doctest::Approx(0.5).epsilon(1e-12));
    }
    // the target entropy is unreachable here; the search must still stop
    const auto p = pairwise_affinities(x, 1.5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(p(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 6.0));
}

TEST_CASE("conditional rows sum to one and hit the target entropy") {
    Rng rng(3);
    const auto x = gaussian_rows(80, 5, rng);
    const double perp = 15.0;
    const auto p = pairwise_affinities(x, perp);
    CHECK_FALSE(p.clamped);
    for (std::size_t i = 0; i < p.n; ++i) {
        std::vector<double> row(p.n);
        const double h = conditional_row(sq_dist_row(x, i), i, p.betas[i], row);
        CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(h - std::log2(perp)) < 1e-5);
        // recompute entropy from scratch
        double h2 = 0.0;
        for (double q : row)
            if (q > 0) h2 -= q * std::log2(q);
        CHECK(std::abs(std::pow(2.0, h2) - perp) < 1e-3);
    }
}

TEST_CASE("joint affinities are symmetric and normalized") {
    Rng rng(11);
    const auto x = gaussian_rows(50, 3, rng);
    const auto p = pairwise_affinities(x, 12.0);
    double total = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
        CHECK(p(i, i) == 0.0);
        for (std::size_t j = 0; j < p.n; ++j) {
            CHECK(p(i, j) >= 0.0);
            CHECK(p(i, j) == p(j, i));
            total += p(i, j);
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perplexity clamp") {
    Rng rng(1);
    const auto x = gaussian_rows(20, 2, rng);
    const auto p = pairwise_affinities(x, 50.0);
    CHECK(p.clamped);
    CHECK(p.perplexity == doctest::Approx(19.0 / 3.0));
    CHECK_THROWS(pairwise_affinities(gaussian_rows(2, 2, rng), 5.0));
}

TEST_CASE("duplicate rows raise DegenerateRow with the ids") {
    auto x = Matrix::from_rows({{0, 0}, {1, 1}, {2, 0}, {1, 1}, {3, 3}});
    const std::vector<SampleId> ids{40, 41, 42, 43, 44};
    try {
        pairwise_affinities(x, 1.2, ids);
        FAIL("expected DegenerateRow");
    } catch (const DegenerateRow& e) {
        CHECK(e.ids() == std::vector<SampleId>{41, 43});
    }
}

TEST_CASE("KL gradient matches finite differences") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 10;
        const auto x = gaussian_rows(n, 4, rng);
        const auto p = pairwise_affinities(x, 3.0);
        auto y = gaussian_rows(n, 2, rng);
        for (double exag : {1.0, 12.0}) {
            const auto g = kl_gradient(p, y, exag);
            // exaggerated P only scales the attractive part; compare against
            // the plain objective for exag = 1
            if (exag != 1.0) continue;
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double eps = 1e-5;
                const double keep = y.data()[i];
                y.data()[i] = keep + eps;
                const double up = kl_divergence(p, y);
                y.data()[i] = keep - eps;
                const double down = kl_divergence(p, y);
                y.data()[i] = keep;
                const double fd = (up - down) / (2 * eps);
                num += (fd - g.data()[i]) * (fd - g.data()[i]);
                den += fd * fd;
            }
            CHECK(std::sqrt(num / den) < 1e-4);
        }
    }
}

TEST_CASE("embedding lowers KL and is deterministic") {
    Rng rng(21);
    const auto x = gaussian_rows(60, 6, rng);
    const auto p = pairwise_affinities(x, 10.0);
    const auto opts = quick_options();
    const auto a = tsne_embed(p, opts, 5);
    const auto b = tsne_embed(p, opts, 5);
    const auto c = tsne_embed(p, opts, 6);
    CHECK(a.coords.data() == b.coords.data());
    CHECK(a.coords.data() != c.coords.data());
    REQUIRE(a.kl_history.size() >= 2);
    CHECK(a.kl_history.front().iter == 0);
    CHECK(a.kl_history.back().iter == opts.iters);
    CHECK(a.kl_history.back().kl < a.kl_history.front().kl);
    for (double v : a.coords.data()) CHECK(std::isfinite(v));
    CHECK(a.coords.rows() == 60);
    CHECK(a.coords.cols() == 2);
}

TEST_CASE("two separated clusters stay separable") {
    Rng rng(8);
    Matrix x(60, 8);
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t k = 0; k < 8; ++k) x(i, k) = 0.1 * rng.normal() + (i < 30 ? 0.0 : 10.0);
    std::vector<SampleId> ids(60);
    std::iota(ids.begin(), ids.end(), 0);
    const auto proj = project(x, ids, quick_options(), 3);
    double c[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < 60; ++i) {
        c[i / 30][0] += proj.coords(i, 0) / 30;
        c[i / 30][1] += proj.coords(i, 1) / 30;
    }
    // side of the perpendicular bisector of the centroids
    const double nx = c[1][0] - c[0][0], ny = c[1][1] - c[0][1];
    const double mx = (c[0][0] + c[1][0]) / 2, my = (c[0][1] + c[1][1]) / 2;
    for (std::size_t i = 0; i < 60; ++i) {
        const double s = (proj.coords(i, 0) - mx) * nx + (proj.coords(i, 1) - my) * ny;
        CHECK((i < 30 ? s < 0 : s > 0));
    }
}

TEST_CASE("project keeps the row count and records the seed") {
    Rng rng(2);
    const auto x = gaussian_rows(25, 3, rng);
    std::vector<SampleId> ids(25);
    std::iota(ids.begin(), ids.end(), 100);
    auto opts = quick_options();
    opts.iters = 50;
    const auto proj = project(x, ids, opts, 42);
    CHECK(proj.coords.rows() == 25);
    CHECK(proj.seed == 42);
}
