#include <cmath>
#include <map>

#include "doctest.h"
#include "ssv/numerics.hpp"

using namespace ssv;

namespace {

// independent oracle: best 2-partition of points by exhaustive bitmask search
double best_two_partition_cost(const std::vector<Vec>& pts, std::vector<Vec>* centroids_out) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts[0].size();
    double best = 1e300;
    for (std::size_t mask = 1; mask + 1 < (1u << n); ++mask) {
        Vec c0(dim, 0.0), c1(dim, 0.0);
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            auto& c = (mask >> i) & 1 ? c0 : c1;
            ((mask >> i) & 1 ? n0 : n1)++;
            for (std::size_t d = 0; d < dim; ++d) c[d] += pts[i][d];
        }
        for (std::size_t d = 0; d < dim; ++d) {
            c0[d] /= static_cast<double>(n0);
            c1[d] /= static_cast<double>(n1);
        }
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec& c = (mask >> i) & 1 ? c0 : c1;
            for (std::size_t d = 0; d < dim; ++d)
                cost += (pts[i][d] - c[d]) * (pts[i][d] - c[d]);
        }
        if (cost < best) {
            best = cost;
            if (centroids_out) *centroids_out = {c0, c1};
        }
    }
    return best;
}

}  // namespace

TEST_CASE("softmax basics") {
    auto u = softmax({0.0, 0.0, 0.0});
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    auto big = softmax({1000.0, 0.0});
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(big[0]));

    auto v = softmax({std::log(2.0), std::log(1.0), std::log(1.0)});
    CHECK(v[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(softmax({}), std::invalid_argument);
}

TEST_CASE("softmax properties: sums to one, shift invariant") {
    RngStream rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(8);
        Vec s(n);
        for (double& x : s) x = 10.0 * rng.normal();
        const Vec p = softmax(s);
        double total = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);
            total += x;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

        Vec shifted = s;
        const double c = 5.0 * rng.normal();
        for (double& x : shifted) x += c;
        const Vec q = softmax(shifted);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);
    }
}

TEST_CASE("cosine similarity") {
    CHECK(cosine_sim({1, 0}, {1, 0}) == doctest::Approx(1.0));
    CHECK(cosine_sim({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(cosine_sim({1, 1}, {1, 0}) == doctest::Approx(0.7071).epsilon(1e-4));
    CHECK(cosine_sim({0, 0}, {1, 2}) == 0.0);
    CHECK_THROWS_AS(cosine_sim({1, 2}, {1, 2, 3}), std::invalid_argument);

    RngStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Vec a(5), b(5);
        for (double& x : a) x = rng.normal();
        for (double& x : b) x = rng.normal();
        const double ab = cosine_sim(a, b);
        CHECK(std::abs(ab - cosine_sim(b, a)) < 1e-12);
        CHECK(ab >= -1.0 - 1e-12);
        CHECK(ab <= 1.0 + 1e-12);
    }
}

TEST_CASE("rng replay and stream independence") {
    RngStream a(42, 7), b(42, 7), c(42, 8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        const auto xa = a.next_u64();
        all_equal = all_equal && xa == b.next_u64();
        any_diff = any_diff || xa != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff);

    RngStream parent(9, 1);
    RngStream f1 = parent.fork(0), f2 = parent.fork(1), f1b = RngStream(9, 1).fork(0);
    CHECK(f1.next_u64() == f1b.next_u64());
    CHECK(f1.next_u64() != f2.next_u64());
}

TEST_CASE("sample_categorical distribution") {
    RngStream rng(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_categorical({1.0, 0.0}, rng) == 0);

    std::map<std::size_t, std::size_t> counts;
    for (int i = 0; i < 100000; ++i) ++counts[sample_categorical({0.5, 0.5}, rng)];
    const double f0 = counts[0] / 1e5;
    CHECK(f0 > 0.49);
    CHECK(f0 < 0.51);

    counts.clear();
    const Vec probs{0.2, 0.3, 0.5};
    for (int i = 0; i < 100000; ++i) ++counts[sample_categorical(probs, rng)];
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(counts[k] / 1e5 - probs[k]) < 0.01);

    CHECK_THROWS_AS(sample_categorical({0.5, 0.2}, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_categorical({1.5, -0.5}, rng), std::invalid_argument);
}

TEST_CASE("kmeans recovers two separated clusters") {
    const std::vector<Vec> pts{{0, 0}, {0.1, 0}, {10, 10}, {10.1, 10}};
    std::vector<Vec> oracle;
    best_two_partition_cost(pts, &oracle);

    RngStream rng(1);
    auto centroids = kmeans(pts, 2, rng);
    REQUIRE(centroids.size() == 2);
    // match centroids to oracle irrespective of order
    auto close = [](const Vec& a, const Vec& b) {
        return std::abs(a[0] - b[0]) < 1e-9 && std::abs(a[1] - b[1]) < 1e-9;
    };
    const bool direct = close(centroids[0], oracle[0]) && close(centroids[1], oracle[1]);
    const bool swapped = close(centroids[0], oracle[1]) && close(centroids[1], oracle[0]);
    CHECK((direct || swapped));
}

TEST_CASE("kmeans edge cases") {
    RngStream rng(2);
    const std::vector<Vec> pts{{1, 2}, {3, 4}, {5, 6}};
    auto centroids = kmeans(pts, 3, rng);
    REQUIRE(centroids.size() == 3);
    // singleton clusters: centroids are the points, any order
    for (const Vec& p : pts) {
        bool found = false;
        for (const Vec& c : centroids)
            found = found || (c[0] == p[0] && c[1] == p[1]);
        CHECK(found);
    }

    const std::vector<Vec> same{{2, 2}, {2, 2}, {2, 2}};
    auto degenerate = kmeans(same, 2, rng);
    REQUIRE(degenerate.size() == 2);
    for (const Vec& c : degenerate) {
        CHECK(c[0] == doctest::Approx(2.0));
        CHECK(c[1] == doctest::Approx(2.0));
    }

    CHECK_THROWS_AS(kmeans(pts, 4, rng), std::invalid_argument);
}

TEST_CASE("kmeans objective non-increasing across iterations") {
    RngStream rng(13);
    std::vector<Vec> pts;
    for (int i = 0; i < 60; ++i) {
        Vec p(3);
        for (double& x : p) x = rng.normal() + (i % 3) * 4.0;
        pts.push_back(p);
    }
    // run iteration-by-iteration via seeded restarts of increasing budget
    double prev = 1e300;
    std::vector<Vec> init;
    {
        RngStream r2(99);
        init = kmeans(pts, 4, r2, 0);  // max_iter=0 keeps the raw seeds
    }
    for (std::size_t iters = 1; iters <= 15; ++iters) {
        auto c = kmeans_seeded(pts, init, iters);
        const double obj = kmeans_objective(pts, c);
        CHECK(obj <= prev + 1e-9);
        prev = obj;
    }
}

TEST_CASE("kmeans deterministic given rng seed") {
    std::vector<Vec> pts;
    RngStream gen(77);
    for (int i = 0; i < 30; ++i) pts.push_back({gen.normal(), gen.normal()});
    RngStream r1(4, 2), r2(4, 2);
    CHECK(kmeans(pts, 5, r1) == kmeans(pts, 5, r2));
}
