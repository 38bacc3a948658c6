#include "ssv/regions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

namespace ssv {

Vec Region::mean_token() const {
    if (tokens.empty()) throw std::invalid_argument("Region::mean_token: no tokens");
    Vec mean(tokens[0].size(), 0.0);
    for (const Vec& t : tokens)
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += t[d];
    for (double& v : mean) v /= static_cast<double>(tokens.size());
    return mean;
}

Vec RegionBank::slot_embedding(std::size_t slot) const {
    if (slot < regions.size()) return regions[slot].mean_token();
    if (slot == regions.size()) return global_embedding;
    throw std::invalid_argument("RegionBank::slot_embedding: slot out of range");
}

std::vector<std::vector<std::size_t>> connected_components(const BinaryMask& mask) {
    const std::size_t h = mask.height, w = mask.width;
    std::vector<int> label(h * w, -1);
    std::vector<std::vector<std::size_t>> components;

    for (std::size_t start = 0; start < h * w; ++start) {
        if (!mask.bits[start] || label[start] >= 0) continue;
        const int id = static_cast<int>(components.size());
        components.emplace_back();
        std::queue<std::size_t> frontier;
        frontier.push(start);
        label[start] = id;
        while (!frontier.empty()) {
            const std::size_t p = frontier.front();
            frontier.pop();
            components[id].push_back(p);
            const std::size_t r = p / w, c = p % w;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const long nr = static_cast<long>(r) + dr;
                    const long nc = static_cast<long>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) || nc >= static_cast<long>(w))
                        continue;
                    const std::size_t q = static_cast<std::size_t>(nr) * w +
                                          static_cast<std::size_t>(nc);
                    if (mask.bits[q] && label[q] < 0) {
                        label[q] = id;
                        frontier.push(q);
                    }
                }
            }
        }
        std::sort(components[id].begin(), components[id].end());
    }
    std::stable_sort(components.begin(), components.end(),
                     [](const auto& a, const auto& b) {
                         if (a.size() != b.size()) return a.size() > b.size();
                         return a.front() < b.front();
                     });
    return components;
}

std::vector<std::vector<std::size_t>> filter_small(
    const std::vector<std::vector<std::size_t>>& components, std::size_t height,
    std::size_t width, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("filter_small: alpha not in (0,1)");
    const double min_area = alpha * static_cast<double>(height) * static_cast<double>(width);
    std::vector<std::vector<std::size_t>> kept;
    for (const auto& comp : components)
        if (static_cast<double>(comp.size()) >= min_area) kept.push_back(comp);
    return kept;
}

namespace {

BBox bbox_of(const std::vector<std::size_t>& patches, std::size_t width) {
    BBox b{SIZE_MAX, 0, SIZE_MAX, 0};
    for (std::size_t p : patches) {
        const std::size_t r = p / width, c = p % width;
        b.row_min = std::min(b.row_min, r);
        b.row_max = std::max(b.row_max, r);
        b.col_min = std::min(b.col_min, c);
        b.col_max = std::max(b.col_max, c);
    }
    return b;
}

}  // namespace

std::vector<ScoredComponent> score_and_select(
    const std::vector<std::vector<std::size_t>>& components, const SaliencyMap& sal,
    std::size_t bank_size) {
    if (bank_size < 1) throw std::invalid_argument("score_and_select: bank_size >= 1 required");
    std::vector<ScoredComponent> scored;
    scored.reserve(components.size());
    for (const auto& comp : components) {
        double mean = 0.0;
        for (std::size_t p : comp) mean += sal.normalized[p];
        mean /= static_cast<double>(comp.size());
        scored.push_back({comp, mean});
    }
    const std::size_t w = sal.width;
    std::stable_sort(scored.begin(), scored.end(), [w](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        const BBox ba = bbox_of(a.patches, w), bb = bbox_of(b.patches, w);
        if (ba.row_min != bb.row_min) return ba.row_min < bb.row_min;
        return ba.col_min < bb.col_min;
    });
    if (scored.size() > bank_size - 1) scored.resize(bank_size - 1);
    return scored;
}

std::vector<Vec> compress_region(const std::vector<std::size_t>& patches, const PatchGrid& grid,
                                 const SaliencyMap& sal, std::size_t budget,
                                 std::size_t kmeans_max_iter) {
    if (patches.empty()) throw std::invalid_argument("compress_region: empty region");
    if (budget < 1) throw std::invalid_argument("compress_region: budget >= 1 required");
    if (patches.size() <= budget) {
        std::vector<Vec> tokens;
        tokens.reserve(patches.size());
        for (std::size_t p : patches) tokens.push_back(grid.patch_embeddings[p]);
        return tokens;
    }
    // saliency-ranked seeds, then k-means over the full patch set
    std::vector<std::size_t> order = patches;
    std::stable_sort(order.begin(), order.end(), [&sal](std::size_t a, std::size_t b) {
        if (sal.normalized[a] != sal.normalized[b]) return sal.normalized[a] > sal.normalized[b];
        return a < b;
    });
    std::vector<Vec> init;
    init.reserve(budget);
    for (std::size_t i = 0; i < budget; ++i) init.push_back(grid.patch_embeddings[order[i]]);
    std::vector<Vec> points;
    points.reserve(patches.size());
    for (std::size_t p : patches) points.push_back(grid.patch_embeddings[p]);
    return kmeans_seeded(points, std::move(init), kmeans_max_iter);
}

Vec global_complement(const std::vector<std::vector<std::size_t>>& kept, const PatchGrid& grid) {
    std::vector<std::uint8_t> covered(grid.patch_count(), 0);
    for (const auto& comp : kept)
        for (std::size_t p : comp) covered[p] = 1;
    const std::size_t dim = grid.patch_embeddings.empty() ? 0 : grid.patch_embeddings[0].size();
    Vec mean(dim, 0.0);
    std::size_t count = 0;
    for (std::size_t p = 0; p < grid.patch_count(); ++p) {
        if (covered[p]) continue;
        for (std::size_t d = 0; d < dim; ++d) mean[d] += grid.patch_embeddings[p][d];
        ++count;
    }
    if (count == 0) {
        // kept covers everything: fall back to the all-patch mean
        for (std::size_t p = 0; p < grid.patch_count(); ++p)
            for (std::size_t d = 0; d < dim; ++d) mean[d] += grid.patch_embeddings[p][d];
        count = grid.patch_count();
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

RegionBank build_region_bank(const PatchGrid& grid, const RegionConfig& config) {
    return build_region_bank(grid, compute_saliency(grid), config);
}

RegionBank build_region_bank(const PatchGrid& grid, const SaliencyMap& sal,
                             const RegionConfig& config) {
    RegionBank bank;
    const auto tau = otsu_threshold(sal, config.otsu_bins);
    if (!tau) {
        bank.global_embedding = global_complement({}, grid);
        bank.complement_patches.resize(grid.patch_count());
        std::iota(bank.complement_patches.begin(), bank.complement_patches.end(), 0);
        return bank;
    }
    bank.threshold = *tau;
    const BinaryMask mask = binarize(sal, *tau);
    auto components = connected_components(mask);
    components = filter_small(components, grid.height, grid.width, config.min_area_frac);
    const auto selected = score_and_select(components, sal, config.bank_size);

    std::vector<std::vector<std::size_t>> kept;
    for (const auto& sc : selected) {
        Region region;
        region.patches = sc.patches;
        region.score = sc.score;
        region.bbox = bbox_of(sc.patches, grid.width);
        region.tokens = compress_region(sc.patches, grid, sal, config.token_budget,
                                        config.kmeans_max_iter);
        kept.push_back(sc.patches);
        bank.regions.push_back(std::move(region));
    }
    bank.global_embedding = global_complement(kept, grid);

    std::vector<std::uint8_t> covered(grid.patch_count(), 0);
    for (const auto& comp : kept)
        for (std::size_t p : comp) covered[p] = 1;
    for (std::size_t p = 0; p < grid.patch_count(); ++p)
        if (!covered[p]) bank.complement_patches.push_back(p);
    return bank;
}

void to_json(nlohmann::json& j, const Region& r) {
    j = nlohmann::json{{"patches", r.patches},
                       {"score", r.score},
                       {"tokens", r.tokens},
                       {"bbox", {{"row_min", r.bbox.row_min},
                                 {"row_max", r.bbox.row_max},
                                 {"col_min", r.bbox.col_min},
                                 {"col_max", r.bbox.col_max}}}};
}

void from_json(const nlohmann::json& j, Region& r) {
    j.at("patches").get_to(r.patches);
    j.at("score").get_to(r.score);
    j.at("tokens").get_to(r.tokens);
    const auto& b = j.at("bbox");
    b.at("row_min").get_to(r.bbox.row_min);
    b.at("row_max").get_to(r.bbox.row_max);
    b.at("col_min").get_to(r.bbox.col_min);
    b.at("col_max").get_to(r.bbox.col_max);
}

void to_json(nlohmann::json& j, const RegionBank& bank) {
    j = nlohmann::json{{"regions", bank.regions},
                       {"global_embedding", bank.global_embedding},
                       {"complement_patches", bank.complement_patches},
                       {"threshold", bank.threshold}};
}

void from_json(const nlohmann::json& j, RegionBank& bank) {
    j.at("regions").get_to(bank.regions);
    j.at("global_embedding").get_to(bank.global_embedding);
    j.at("complement_patches").get_to(bank.complement_patches);
    j.at("threshold").get_to(bank.threshold);
}

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

constexpr Rgb kRegionColors[] = {
    {0, 255, 0}, {0, 128, 255}, {255, 255, 0}, {255, 0, 255},
    {0, 255, 255}, {255, 128, 0}, {128, 0, 255}, {255, 255, 255},
};

}  // namespace

void render_overlay(const std::string& ppm_path, const std::string& legend_json_path,
                    const SaliencyMap& sal, const RegionBank& bank) {
    const std::size_t h = sal.height, w = sal.width;
    std::vector<Rgb> pixels(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        const auto v = static_cast<std::uint8_t>(
            std::lround(std::clamp(sal.normalized[i], 0.0, 1.0) * 255.0));
        pixels[i] = {v, 0, 0};
    }
    // boundary = region patch with at least one 8-neighbor outside the region
    for (std::size_t k = 0; k < bank.regions.size(); ++k) {
        const auto& region = bank.regions[k];
        std::vector<std::uint8_t> inside(h * w, 0);
        for (std::size_t p : region.patches) inside[p] = 1;
        const Rgb color = kRegionColors[k % std::size(kRegionColors)];
        for (std::size_t p : region.patches) {
            const std::size_t r = p / w, c = p % w;
            bool boundary = false;
            for (int dr = -1; dr <= 1 && !boundary; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const long nr = static_cast<long>(r) + dr;
                    const long nc = static_cast<long>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) ||
                        nc >= static_cast<long>(w) ||
                        !inside[static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc)]) {
                        boundary = true;
                        break;
                    }
                }
            }
            if (boundary) pixels[p] = color;
        }
    }

    std::ofstream out(ppm_path, std::ios::binary);
    if (!out) throw std::runtime_error("render_overlay: cannot open " + ppm_path);
    out << "P6\n" << w << " " << h << "\n255\n";
    for (const Rgb& px : pixels) {
        out.put(static_cast<char>(px.r));
        out.put(static_cast<char>(px.g));
        out.put(static_cast<char>(px.b));
    }
    if (!out) throw std::runtime_error("render_overlay: write failed for " + ppm_path);

    nlohmann::json legend = nlohmann::json::array();
    for (std::size_t k = 0; k < bank.regions.size(); ++k) {
        const Rgb color = kRegionColors[k % std::size(kRegionColors)];
        legend.push_back({{"rank", k},
                          {"score", bank.regions[k].score},
                          {"color", {color.r, color.g, color.b}},
                          {"patch_count", bank.regions[k].patches.size()}});
    }
    std::ofstream lj(legend_json_path);
    if (!lj) throw std::runtime_error("render_overlay: cannot open " + legend_json_path);
    lj << legend.dump(2) << "\n";
}

}  // namespace ssv
