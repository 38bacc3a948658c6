#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ssv/numerics.hpp"

namespace ssv {

// Patch-level view of an image/question pair. patch_embeddings carry the raw
// visual features used for region tokens; fused_embeddings live in the same
// space as the query and drive the saliency scores.
struct PatchGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Vec> patch_embeddings;  // H*W entries, dimension D_v
    std::vector<Vec> fused_embeddings;  // H*W entries, same dimension as query
    Vec query;

    std::size_t patch_count() const { return height * width; }
    std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }
};

struct SaliencyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> raw;         // cosine similarity per patch
    std::vector<double> normalized;  // min-max rescaled into [0,1]; all zeros if constant

    double normalized_at(std::size_t row, std::size_t col) const {
        return normalized[row * width + col];
    }
};

struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;
    double threshold = 0.0;

    bool at(std::size_t row, std::size_t col) const { return bits[row * width + col] != 0; }
};

// raw[i,j] = cosine_sim(query, fused[i,j]); normalized = min-max rescale.
// A constant raw map normalizes to all zeros.
SaliencyMap compute_saliency(const PatchGrid& grid);

// Otsu's threshold over a `bins`-bucket histogram of the normalized values.
// Returns nullopt for a (near-)constant map. Ties break toward the smaller
// threshold. The returned value is a bin edge in (0,1).
std::optional<double> otsu_threshold(const SaliencyMap& sal, std::size_t bins = 256);

BinaryMask binarize(const SaliencyMap& sal, double tau);

// netpbm I/O: 8-bit binary grayscale, value = round(255 * normalized).
void write_pgm(const std::string& path, const SaliencyMap& sal);
// Parse failures throw std::runtime_error carrying the byte offset.
SaliencyMap read_pgm(const std::string& path);

void to_json(nlohmann::json& j, const SaliencyMap& sal);
void from_json(const nlohmann::json& j, SaliencyMap& sal);

}  // namespace ssv
