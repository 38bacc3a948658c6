#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ssv {

using Vec = std::vector<double>;

// Dense row-major matrix, just enough for the projectors and the toy reasoner.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Vec matvec(const Vec& x) const;
    void add_scaled(const Mat& other, double scale);
};

// Counter-based deterministic RNG (xoshiro256** seeded via splitmix64 over
// (seed, stream_id)). Identical (seed, stream_id) replay identical sequences;
// distinct stream_ids give independent streams safe to hand to parallel workers.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n);
    // standard normal via Box-Muller (no state caching, draws two uniforms)
    double normal();

    // Derive an independent child stream. Forking never advances this stream.
    RngStream fork(std::uint64_t child_id) const;

private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    std::uint64_t stream_id_;
};

// Numerically stable softmax (max subtraction). Entries of -inf are treated
// as masked and get probability 0; at least one entry must be unmasked.
Vec softmax(const Vec& scores);

// Cosine similarity; returns 0 if either operand has zero norm.
double cosine_sim(const Vec& a, const Vec& b);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);

// Draws index i with probability probs[i]. probs must be nonnegative and sum
// to 1 within 1e-6.
std::size_t sample_categorical(const Vec& probs, RngStream& rng);

// Lloyd's k-means with initial centroids chosen as k distinct points via rng.
// Empty clusters are refilled with the point farthest from its centroid.
std::vector<Vec> kmeans(const std::vector<Vec>& points, std::size_t k, RngStream& rng,
                        std::size_t max_iter = 100);

// Same, but with caller-supplied initial centroids (|init| = k).
std::vector<Vec> kmeans_seeded(const std::vector<Vec>& points, std::vector<Vec> init,
                               std::size_t max_iter = 100);

// Sum over points of squared distance to the nearest centroid.
double kmeans_objective(const std::vector<Vec>& points, const std::vector<Vec>& centroids);

}  // namespace ssv
