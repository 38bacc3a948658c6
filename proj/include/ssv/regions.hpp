#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ssv/saliency.hpp"

namespace ssv {

struct BBox {
    std::size_t row_min = 0, row_max = 0, col_min = 0, col_max = 0;
};

// One discriminative local region: 8-connected patch footprint, mean
// normalized saliency, and a token set of at most `token_budget` visual
// embeddings (projection into language space happens in the policy).
struct Region {
    std::vector<std::size_t> patches;  // flat indices row*W+col, sorted ascending
    double score = 0.0;                // rho_k, mean normalized saliency
    std::vector<Vec> tokens;
    BBox bbox;

    Vec mean_token() const;
};

// The candidate visual action space: up to N-1 local regions sorted by
// descending score, plus one global complement embedding.
struct RegionBank {
    std::vector<Region> regions;
    Vec global_embedding;
    std::vector<std::size_t> complement_patches;  // sorted ascending
    double threshold = 0.0;                       // Otsu tau; 0 on the degenerate path

    // bank slots exposed to the policy: regions then global
    std::size_t slot_count() const { return regions.size() + 1; }
    // embedding used for slot k scoring/injection (mean region token or global)
    Vec slot_embedding(std::size_t slot) const;
};

struct RegionConfig {
    std::size_t bank_size = 5;      // N: N-1 local regions + global complement
    std::size_t token_budget = 48;  // n
    double min_area_frac = 0.01;    // alpha, of H*W
    std::size_t otsu_bins = 256;
    std::size_t kmeans_max_iter = 100;
};

// Maximal 8-connected components of true bits, ordered by size descending
// (ties: smaller first patch index). Patches within a component are sorted.
std::vector<std::vector<std::size_t>> connected_components(const BinaryMask& mask);

// Drops components with fewer than alpha*H*W patches.
std::vector<std::vector<std::size_t>> filter_small(
    const std::vector<std::vector<std::size_t>>& components, std::size_t height,
    std::size_t width, double alpha);

struct ScoredComponent {
    std::vector<std::size_t> patches;
    double score;
};

// Top bank_size-1 components by mean normalized saliency, descending; ties
// break toward the smaller bbox top-left coordinate.
std::vector<ScoredComponent> score_and_select(
    const std::vector<std::vector<std::size_t>>& components, const SaliencyMap& sal,
    std::size_t bank_size);

// Token compression with fixed budget n. m <= n patches pass through verbatim;
// otherwise all m embeddings are clustered into n centroids, seeded by the n
// patches of highest normalized saliency.
std::vector<Vec> compress_region(const std::vector<std::size_t>& patches, const PatchGrid& grid,
                                 const SaliencyMap& sal, std::size_t budget,
                                 std::size_t kmeans_max_iter = 100);

// Mean patch embedding over all patches not covered by `kept`; falls back to
// the all-patch mean when kept covers the whole grid.
Vec global_complement(const std::vector<std::vector<std::size_t>>& kept, const PatchGrid& grid);

// Full pipeline: saliency -> Otsu -> mask -> CCA -> area filter -> score and
// select -> compress -> complement. Degenerate saliency yields a bank with no
// local regions and the all-patch global embedding.
RegionBank build_region_bank(const PatchGrid& grid, const RegionConfig& config);
RegionBank build_region_bank(const PatchGrid& grid, const SaliencyMap& sal,
                             const RegionConfig& config);

void to_json(nlohmann::json& j, const Region& r);
void from_json(const nlohmann::json& j, Region& r);
void to_json(nlohmann::json& j, const RegionBank& bank);
void from_json(const nlohmann::json& j, RegionBank& bank);

// PPM (P6) overlay: saliency in the red channel, region boundaries in solid
// per-rank colors. The legend maps colors to region ranks and scores.
void render_overlay(const std::string& ppm_path, const std::string& legend_json_path,
                    const SaliencyMap& sal, const RegionBank& bank);

}  // namespace ssv
