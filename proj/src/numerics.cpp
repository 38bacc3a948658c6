#include "ssv/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssv {

Vec Mat::matvec(const Vec& x) const {
    if (x.size() != cols) throw std::invalid_argument("matvec: dimension mismatch");
    Vec y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = data.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

void Mat::add_scaled(const Mat& other, double scale) {
    if (other.rows != rows || other.cols != cols)
        throw std::invalid_argument("add_scaled: shape mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += scale * other.data[i];
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    std::uint64_t s = seed ^ rotl(stream_id, 32) ^ (stream_id * 0xd2b74407b1ce6e93ULL);
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double RngStream::normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

RngStream RngStream::fork(std::uint64_t child_id) const {
    std::uint64_t mix = stream_id_;
    std::uint64_t derived = splitmix64(mix) ^ rotl(child_id, 17) ^ (child_id * 0x9e3779b97f4a7c15ULL);
    return RngStream(seed_, derived + 1);
}

Vec softmax(const Vec& scores) {
    if (scores.empty()) throw std::invalid_argument("softmax: empty input");
    const double neg_inf = -std::numeric_limits<double>::infinity();
    double mx = neg_inf;
    for (double s : scores) {
        if (std::isnan(s)) throw std::invalid_argument("softmax: NaN score");
        mx = std::max(mx, s);
    }
    if (mx == neg_inf) throw std::invalid_argument("softmax: all entries masked");
    Vec out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = scores[i] == neg_inf ? 0.0 : std::exp(scores[i] - mx);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double cosine_sim(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::size_t sample_categorical(const Vec& probs, RngStream& rng) {
    if (probs.empty()) throw std::invalid_argument("sample_categorical: empty input");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("sample_categorical: negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("sample_categorical: probabilities do not sum to 1");
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // u landed in the rounding tail; return the last entry with positive mass
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

namespace {

double sq_dist(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

std::size_t nearest_centroid(const Vec& p, const std::vector<Vec>& centroids) {
    std::size_t best = 0;
    double best_d = sq_dist(p, centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double d = sq_dist(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

double kmeans_objective(const std::vector<Vec>& points, const std::vector<Vec>& centroids) {
    double acc = 0.0;
    for (const Vec& p : points) acc += sq_dist(p, centroids[nearest_centroid(p, centroids)]);
    return acc;
}

std::vector<Vec> kmeans_seeded(const std::vector<Vec>& points, std::vector<Vec> init,
                               std::size_t max_iter) {
    const std::size_t k = init.size();
    if (k == 0 || k > points.size())
        throw std::invalid_argument("kmeans: need 1 <= k <= |points|");
    const std::size_t dim = points[0].size();
    for (const Vec& p : points)
        if (p.size() != dim) throw std::invalid_argument("kmeans: inconsistent dimensions");

    std::vector<Vec> centroids = std::move(init);
    std::vector<std::size_t> assign(points.size(), 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = iter == 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::size_t c = nearest_centroid(points[i], centroids);
            if (c != assign[i]) changed = true;
            assign[i] = c;
        }
        if (!changed) break;

        std::vector<Vec> sums(k, Vec(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += points[i][d];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // refill with the point currently farthest from its centroid
                std::size_t far_i = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < points.size(); ++i) {
                    const double d = sq_dist(points[i], centroids[assign[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                centroids[c] = points[far_i];
                assign[far_i] = c;
            } else {
                for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / counts[c];
            }
        }
    }
    return centroids;
}

std::vector<Vec> kmeans(const std::vector<Vec>& points, std::size_t k, RngStream& rng,
                        std::size_t max_iter) {
    if (k == 0 || k > points.size())
        throw std::invalid_argument("kmeans: need 1 <= k <= |points|");
    // choose k distinct indices (distinct as indices; duplicate values are
    // resolved by the empty-cluster rule)
    std::vector<std::size_t> idx(points.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<Vec> init;
    init.reserve(k);
    for (std::size_t i = 0; i < k; ++i) init.push_back(points[idx[i]]);
    return kmeans_seeded(points, std::move(init), max_iter);
}

}  // namespace ssv
