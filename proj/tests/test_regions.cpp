#include <algorithm>
#include <set>

#include "doctest.h"
#include "ssv/regions.hpp"

using namespace ssv;

namespace {

BinaryMask mask_of(std::vector<std::uint8_t> bits, std::size_t h, std::size_t w) {
    BinaryMask m;
    m.height = h;
    m.width = w;
    m.bits = std::move(bits);
    return m;
}

// independent recursive flood-fill oracle (8-connectivity)
void flood(const BinaryMask& m, std::size_t p, std::vector<int>& label, int id) {
    label[p] = id;
    const long r = static_cast<long>(p / m.width), c = static_cast<long>(p % m.width);
    for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
            const long nr = r + dr, nc = c + dc;
            if (nr < 0 || nc < 0 || nr >= static_cast<long>(m.height) ||
                nc >= static_cast<long>(m.width))
                continue;
            const std::size_t q = static_cast<std::size_t>(nr) * m.width +
                                  static_cast<std::size_t>(nc);
            if (m.bits[q] && label[q] < 0) flood(m, q, label, id);
        }
}

std::set<std::set<std::size_t>> oracle_partition(const BinaryMask& m) {
    std::vector<int> label(m.bits.size(), -1);
    int next = 0;
    for (std::size_t p = 0; p < m.bits.size(); ++p)
        if (m.bits[p] && label[p] < 0) flood(m, p, label, next++);
    std::vector<std::set<std::size_t>> comps(next);
    for (std::size_t p = 0; p < m.bits.size(); ++p)
        if (label[p] >= 0) comps[label[p]].insert(p);
    return {comps.begin(), comps.end()};
}

SaliencyMap map_of(std::vector<double> values, std::size_t h, std::size_t w) {
    SaliencyMap sal;
    sal.height = h;
    sal.width = w;
    sal.raw = values;
    sal.normalized = std::move(values);
    return sal;
}

PatchGrid grid_with_embeddings(std::size_t h, std::size_t w, std::size_t dim, RngStream& rng) {
    PatchGrid grid;
    grid.height = h;
    grid.width = w;
    grid.query = Vec(dim, 1.0);
    for (std::size_t p = 0; p < h * w; ++p) {
        Vec z(dim);
        for (double& v : z) v = rng.normal();
        grid.patch_embeddings.push_back(z);
        grid.fused_embeddings.push_back(z);
    }
    return grid;
}

}  // namespace

TEST_CASE("connected components joins diagonals") {
    // two diagonal-touching bits -> one component
    auto comps = connected_components(mask_of({1, 0, 0, 1}, 2, 2));
    REQUIRE(comps.size() == 1);
    CHECK(comps[0] == std::vector<std::size_t>{0, 3});

    // separated blocks
    std::vector<std::uint8_t> bits(16, 0);
    bits[0] = bits[1] = 1;
    bits[15] = 1;
    comps = connected_components(mask_of(bits, 4, 4));
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].size() == 2);  // size-descending order
    CHECK(comps[1].size() == 1);

    CHECK(connected_components(mask_of(std::vector<std::uint8_t>(9, 0), 3, 3)).empty());
}

TEST_CASE("connected components matches the flood-fill oracle on random masks") {
    RngStream rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint8_t> bits(256);
        for (auto& b : bits) b = rng.uniform() < 0.45 ? 1 : 0;
        const BinaryMask m = mask_of(bits, 16, 16);
        const auto got = connected_components(m);
        std::set<std::set<std::size_t>> got_sets;
        for (const auto& comp : got) got_sets.insert({comp.begin(), comp.end()});
        CHECK(got_sets == oracle_partition(m));
    }
}

TEST_CASE("filter_small drops below alpha*H*W") {
    // H=W=16 -> min area 2.56: singletons dropped, size-3 kept
    std::vector<std::vector<std::size_t>> comps{{1, 2, 3}, {7}, {9, 10}};
    auto kept = filter_small(comps, 16, 16, 0.01);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0] == std::vector<std::size_t>{1, 2, 3});

    CHECK(filter_small(comps, 16, 16, 0.9).empty());
    auto all = filter_small(comps, 2, 2, 0.1);  // min area 0.4, everything kept
    CHECK(all == comps);
}

TEST_CASE("score_and_select ranks by mean saliency with stable tie-break") {
    const auto sal = map_of({1.0, 1.0, 0.2, 0.4, 0, 0, 0, 0, 0}, 3, 3);
    const std::vector<std::vector<std::size_t>> comps{{2, 3}, {0, 1}};
    auto selected = score_and_select(comps, sal, 5);
    REQUIRE(selected.size() == 2);
    CHECK(selected[0].score == doctest::Approx(1.0));
    CHECK(selected[0].patches == std::vector<std::size_t>{0, 1});
    CHECK(selected[1].score == doctest::Approx(0.3));

    // under-full bank keeps everything
    CHECK(score_and_select(comps, sal, 10).size() == 2);

    // equal scores: deterministic tie-break by bbox top-left
    const auto flat = map_of(std::vector<double>(9, 0.5), 3, 3);
    const std::vector<std::vector<std::size_t>> ties{{8}, {0}};
    auto t1 = score_and_select(ties, flat, 3);
    auto t2 = score_and_select(ties, flat, 3);
    CHECK(t1[0].patches == std::vector<std::size_t>{0});
    CHECK(t1[0].patches == t2[0].patches);
}

TEST_CASE("compress_region pass-through and clustering branches") {
    RngStream rng(23);
    PatchGrid grid = grid_with_embeddings(10, 10, 4, rng);
    const auto sal = map_of(std::vector<double>(100, 0.5), 10, 10);

    // m <= n: verbatim embeddings
    auto tokens = compress_region({3, 4, 5}, grid, sal, 48);
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0] == grid.patch_embeddings[3]);
    CHECK(tokens[2] == grid.patch_embeddings[5]);

    // identical embeddings, m > n: all centroids equal that embedding
    PatchGrid same = grid;
    for (auto& z : same.patch_embeddings) z = Vec{1.0, 2.0, 3.0, 4.0};
    std::vector<std::size_t> all(100);
    for (std::size_t i = 0; i < 100; ++i) all[i] = i;
    auto centroids = compress_region(all, same, sal, 48);
    REQUIRE(centroids.size() == 48);
    for (const auto& c : centroids) CHECK(c == Vec{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("compress_region matches the exhaustive 2-partition oracle") {
    // 60 embeddings in 2 tight, well-separated clouds; budget 2
    RngStream rng(29);
    PatchGrid grid;
    grid.height = 6;
    grid.width = 10;
    grid.query = {1, 0};
    std::vector<double> salv(60);
    Vec mean_a(2, 0.0), mean_b(2, 0.0);
    for (std::size_t p = 0; p < 60; ++p) {
        const bool cloud_a = p < 30;
        Vec z{cloud_a ? 0.0 : 20.0, cloud_a ? 0.0 : 20.0};
        z[0] += 0.1 * rng.normal();
        z[1] += 0.1 * rng.normal();
        grid.patch_embeddings.push_back(z);
        grid.fused_embeddings.push_back(Vec{1, 0});
        salv[p] = rng.uniform();
        auto& m = cloud_a ? mean_a : mean_b;
        m[0] += z[0] / 30.0;
        m[1] += z[1] / 30.0;
    }
    std::vector<std::size_t> all(60);
    for (std::size_t i = 0; i < 60; ++i) all[i] = i;
    auto centroids = compress_region(all, grid, map_of(salv, 6, 10), 2);
    REQUIRE(centroids.size() == 2);
    std::sort(centroids.begin(), centroids.end(),
              [](const Vec& a, const Vec& b) { return a[0] < b[0]; });
    CHECK(centroids[0][0] == doctest::Approx(mean_a[0]).epsilon(1e-9));
    CHECK(centroids[1][0] == doctest::Approx(mean_b[0]).epsilon(1e-9));
    CHECK(centroids[1][1] == doctest::Approx(mean_b[1]).epsilon(1e-9));
}

TEST_CASE("global complement") {
    RngStream rng(19);
    PatchGrid grid = grid_with_embeddings(2, 2, 2, rng);
    grid.patch_embeddings = {{5, 5}, {1, 0}, {0, 1}, {1, 1}};

    // empty kept: mean over all patches
    Vec g = global_complement({}, grid);
    CHECK(g[0] == doctest::Approx((5 + 1 + 0 + 1) / 4.0));

    // kept covers all but one patch
    g = global_complement({{0, 1, 2}}, grid);
    CHECK(g == Vec{1, 1});

    // kept = {(0,0)}, remaining (1,0),(0,1),(1,1) -> (2/3, 2/3)
    g = global_complement({{0}}, grid);
    CHECK(g[0] == doctest::Approx(2.0 / 3.0));
    CHECK(g[1] == doctest::Approx(2.0 / 3.0));

    // full coverage falls back to the all-patch mean
    g = global_complement({{0, 1, 2, 3}}, grid);
    CHECK(g[0] == doctest::Approx(7.0 / 4.0));
}

TEST_CASE("build_region_bank coverage, ordering and budget invariants") {
    RngStream rng(41);
    PatchGrid grid = grid_with_embeddings(16, 16, 6, rng);
    // plant two blocks aligned with the query
    grid.query = Vec(6, 0.0);
    grid.query[0] = 1.0;
    auto plant = [&grid](std::size_t row, std::size_t col, double strength) {
        for (std::size_t r = row; r < row + 3; ++r)
            for (std::size_t c = col; c < col + 3; ++c) {
                Vec f(6, 0.0);
                f[0] = strength;
                f[1] = 1.0 - strength;
                grid.fused_embeddings[r * 16 + c] = f;
            }
    };
    plant(2, 2, 0.9);
    plant(10, 10, 0.7);
    // background orthogonal to the query
    for (std::size_t p = 0; p < 256; ++p) {
        const std::size_t r = p / 16, c = p % 16;
        const bool in_block = (r >= 2 && r < 5 && c >= 2 && c < 5) ||
                              (r >= 10 && r < 13 && c >= 10 && c < 13);
        if (!in_block) {
            Vec f(6, 0.0);
            f[2] = 1.0;
            grid.fused_embeddings[p] = f;
        }
    }

    RegionConfig config;
    const RegionBank bank = build_region_bank(grid, config);
    REQUIRE(bank.regions.size() == 2);
    CHECK(bank.regions[0].score >= bank.regions[1].score);
    CHECK(bank.regions[0].patches.size() == 9);
    CHECK(bank.regions[0].patches.front() == 2 * 16 + 2);

    // coverage: regions + complement partition the grid
    std::set<std::size_t> seen;
    for (const auto& region : bank.regions) {
        CHECK(region.tokens.size() <= config.token_budget);
        for (std::size_t p : region.patches) CHECK(seen.insert(p).second);
    }
    for (std::size_t p : bank.complement_patches) CHECK(seen.insert(p).second);
    CHECK(seen.size() == 256);

    // deterministic: identical bank JSON across rebuilds
    nlohmann::json j1 = bank;
    nlohmann::json j2 = build_region_bank(grid, config);
    CHECK(j1.dump() == j2.dump());

    // degenerate path: constant saliency -> global only
    PatchGrid flat = grid;
    for (auto& f : flat.fused_embeddings) {
        f.assign(6, 0.0);
        f[2] = 1.0;
    }
    const RegionBank empty_bank = build_region_bank(flat, config);
    CHECK(empty_bank.regions.empty());
    CHECK(empty_bank.complement_patches.size() == 256);
    CHECK(empty_bank.global_embedding.size() == 6);
}

TEST_CASE("bank json round trip") {
    RngStream rng(43);
    PatchGrid grid = grid_with_embeddings(8, 8, 3, rng);
    const RegionBank bank = build_region_bank(grid, RegionConfig{});
    nlohmann::json j = bank;
    const auto back = j.get<RegionBank>();
    nlohmann::json j2 = back;
    CHECK(j.dump() == j2.dump());
}
