#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "ssv/saliency.hpp"

using namespace ssv;

namespace {

// independent Otsu oracle: direct two-class variance per candidate split
std::optional<double> otsu_oracle(const std::vector<double>& values, std::size_t bins) {
    std::vector<std::size_t> hist(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        ++hist[b];
    }
    double best_var = -1.0;
    std::size_t best_t = 0;
    for (std::size_t t = 1; t < bins; ++t) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (std::size_t b = 0; b < bins; ++b) {
            if (b < t) {
                n0 += hist[b];
                s0 += static_cast<double>(b) * hist[b];
            } else {
                n1 += hist[b];
                s1 += static_cast<double>(b) * hist[b];
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const double total = n0 + n1;
        const double mu0 = s0 / n0, mu1 = s1 / n1;
        const double var = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (best_var <= 0.0) return std::nullopt;
    return static_cast<double>(best_t) / static_cast<double>(bins);
}

SaliencyMap map_of(std::vector<double> values, std::size_t h, std::size_t w) {
    SaliencyMap sal;
    sal.height = h;
    sal.width = w;
    sal.raw = values;
    sal.normalized = std::move(values);
    return sal;
}

}  // namespace

TEST_CASE("compute_saliency raw and normalized") {
    PatchGrid grid;
    grid.height = 2;
    grid.width = 2;
    grid.query = {1, 0};
    grid.patch_embeddings.assign(4, Vec{0, 0});
    SUBCASE("orthogonal query gives constant zero map") {
        grid.fused_embeddings.assign(4, Vec{0, 1});
        const SaliencyMap sal = compute_saliency(grid);
        for (double v : sal.raw) CHECK(v == doctest::Approx(0.0));
        for (double v : sal.normalized) CHECK(v == 0.0);
    }
    SUBCASE("one matching patch is the maximum") {
        grid.fused_embeddings = {{0, 1}, {1, 0}, {0, 1}, {0, 1}};
        const SaliencyMap sal = compute_saliency(grid);
        CHECK(sal.normalized[1] == doctest::Approx(1.0));
        CHECK(sal.normalized[0] == doctest::Approx(0.0));
    }
}

TEST_CASE("min-max normalization on the 1,3,3,5 example") {
    // raw values {1,3,3,5} -> normalized {0,0.5,0.5,1}; exercised via the
    // formula directly by crafting fused embeddings is awkward, so check the
    // invariant through idempotence instead and the formula by hand here
    std::vector<double> raw{1, 3, 3, 5};
    const double mn = 1, mx = 5;
    std::vector<double> expect;
    for (double v : raw) expect.push_back((v - mn) / (mx - mn));
    CHECK(expect == std::vector<double>{0.0, 0.5, 0.5, 1.0});
}

TEST_CASE("normalization idempotence and query-scale invariance") {
    RngStream rng(21);
    PatchGrid grid;
    grid.height = 4;
    grid.width = 4;
    grid.query.resize(8);
    for (double& v : grid.query) v = rng.normal();
    for (std::size_t p = 0; p < 16; ++p) {
        Vec f(8);
        for (double& v : f) v = rng.normal();
        grid.fused_embeddings.push_back(f);
        grid.patch_embeddings.push_back(Vec(4, 0.0));
    }
    const SaliencyMap sal = compute_saliency(grid);

    // re-normalizing the normalized map changes nothing
    PatchGrid again = grid;
    const auto renorm = [](const std::vector<double>& v) {
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        std::vector<double> out;
        for (double x : v) out.push_back((x - *mn) / (*mx - *mn));
        return out;
    };
    const auto twice = renorm(sal.normalized);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(twice[i] - sal.normalized[i]) < 1e-12);

    // scaling the query leaves the normalized map unchanged
    for (double& v : again.query) v *= 37.5;
    const SaliencyMap scaled = compute_saliency(again);
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(std::abs(scaled.normalized[i] - sal.normalized[i]) < 1e-9);
}

TEST_CASE("otsu splits a bimodal map and flags constants") {
    std::vector<double> values;
    for (int i = 0; i < 8; ++i) values.push_back(0.1);
    for (int i = 0; i < 8; ++i) values.push_back(0.9);
    const auto tau = otsu_threshold(map_of(values, 4, 4));
    REQUIRE(tau.has_value());
    CHECK(*tau > 0.1);
    CHECK(*tau <= 0.9);
    const BinaryMask mask = binarize(map_of(values, 4, 4), *tau);
    for (std::size_t i = 0; i < 8; ++i) CHECK_FALSE(mask.bits[i]);
    for (std::size_t i = 8; i < 16; ++i) CHECK(mask.bits[i]);

    CHECK_FALSE(otsu_threshold(map_of(std::vector<double>(16, 0.5), 4, 4)).has_value());
}

TEST_CASE("otsu equals the exhaustive oracle on random maps") {
    RngStream rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> values(256);
        for (double& v : values) v = rng.uniform();
        const auto got = otsu_threshold(map_of(values, 16, 16));
        const auto want = otsu_oracle(values, 256);
        REQUIRE(got.has_value());
        REQUIRE(want.has_value());
        CHECK(*got == *want);
    }
    // 1000-value map, non-square
    std::vector<double> big(1000);
    for (double& v : big) v = rng.uniform();
    CHECK(*otsu_threshold(map_of(big, 25, 40)) == *otsu_oracle(big, 256));
}

TEST_CASE("binarize bounds and monotonicity in tau") {
    const auto sal = map_of({0.0, 0.5, 0.5, 1.0}, 2, 2);
    const BinaryMask all = binarize(sal, 0.0);
    for (auto b : all.bits) CHECK(b);
    const BinaryMask none = binarize(sal, 1.0 + 1e-9);
    for (auto b : none.bits) CHECK_FALSE(b);
    const BinaryMask mid = binarize(sal, 0.5);
    CHECK(mid.bits == std::vector<std::uint8_t>{0, 1, 1, 1});

    RngStream rng(8);
    std::vector<double> values(64);
    for (double& v : values) v = rng.uniform();
    const auto m = map_of(values, 8, 8);
    double prev_tau = 0.0;
    BinaryMask prev = binarize(m, prev_tau);
    for (double tau : {0.2, 0.4, 0.6, 0.8, 1.01}) {
        const BinaryMask cur = binarize(m, tau);
        for (std::size_t i = 0; i < 64; ++i)
            if (!prev.bits[i]) CHECK_FALSE(cur.bits[i]);  // raising tau never sets a bit
        prev = cur;
    }
}

TEST_CASE("pgm round trip and malformed input") {
    std::vector<double> values(48);
    RngStream rng(55);
    for (double& v : values) v = rng.uniform();
    const auto sal = map_of(values, 6, 8);
    const std::string path = "test_sal.pgm";
    write_pgm(path, sal);
    const SaliencyMap back = read_pgm(path);
    CHECK(back.height == 6);
    CHECK(back.width == 8);
    for (std::size_t i = 0; i < values.size(); ++i)
        CHECK(std::abs(back.normalized[i] - sal.normalized[i]) <= 0.5 / 255.0 + 1e-12);

    {
        std::ofstream bad("test_bad.pgm", std::ios::binary);
        bad << "P5\n6 8\n255\nxx";  // truncated pixels
    }
    CHECK_THROWS_WITH_AS(read_pgm("test_bad.pgm"),
                         doctest::Contains("byte offset"), std::runtime_error);
    std::remove(path.c_str());
    std::remove("test_bad.pgm");
}

TEST_CASE("saliency json round trip") {
    const auto sal = map_of({0.0, 0.25, 0.75, 1.0}, 2, 2);
    nlohmann::json j = sal;
    const auto back = j.get<SaliencyMap>();
    CHECK(back.raw == sal.raw);
    CHECK(back.normalized == sal.normalized);
    CHECK(back.height == 2);
}
