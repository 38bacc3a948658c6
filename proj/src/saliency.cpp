#include "ssv/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ssv {

SaliencyMap compute_saliency(const PatchGrid& grid) {
    const std::size_t count = grid.patch_count();
    if (grid.fused_embeddings.size() != count || grid.patch_embeddings.size() != count)
        throw std::invalid_argument("compute_saliency: grid embedding counts do not match H*W");
    SaliencyMap sal;
    sal.height = grid.height;
    sal.width = grid.width;
    sal.raw.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        sal.raw[i] = cosine_sim(grid.query, grid.fused_embeddings[i]);

    const auto [mn_it, mx_it] = std::minmax_element(sal.raw.begin(), sal.raw.end());
    const double mn = *mn_it, mx = *mx_it;
    sal.normalized.resize(count);
    if (mx > mn) {
        for (std::size_t i = 0; i < count; ++i) sal.normalized[i] = (sal.raw[i] - mn) / (mx - mn);
    } else {
        std::fill(sal.normalized.begin(), sal.normalized.end(), 0.0);
    }
    return sal;
}

std::optional<double> otsu_threshold(const SaliencyMap& sal, std::size_t bins) {
    if (sal.normalized.empty()) throw std::invalid_argument("otsu_threshold: empty map");
    if (bins < 2) throw std::invalid_argument("otsu_threshold: need bins >= 2");
    const auto [mn_it, mx_it] = std::minmax_element(sal.normalized.begin(), sal.normalized.end());
    if (*mx_it - *mn_it < 1e-12) return std::nullopt;  // degenerate, no contrast

    std::vector<std::size_t> hist(bins, 0);
    for (double v : sal.normalized) {
        auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        ++hist[b];
    }

    const double total = static_cast<double>(sal.normalized.size());
    double total_mean = 0.0;
    for (std::size_t b = 0; b < bins; ++b) total_mean += static_cast<double>(b) * hist[b];
    total_mean /= total;

    // split t: background bins [0, t), foreground bins [t, bins)
    double w0 = 0.0, sum0 = 0.0;
    double best_var = -1.0;
    std::size_t best_t = 0;
    for (std::size_t t = 1; t < bins; ++t) {
        w0 += hist[t - 1];
        sum0 += static_cast<double>(t - 1) * hist[t - 1];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_mean * total - sum0) / w1;
        const double var = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (best_var <= 0.0) return std::nullopt;
    return static_cast<double>(best_t) / static_cast<double>(bins);
}

BinaryMask binarize(const SaliencyMap& sal, double tau) {
    if (!std::isfinite(tau)) throw std::invalid_argument("binarize: non-finite threshold");
    BinaryMask mask;
    mask.height = sal.height;
    mask.width = sal.width;
    mask.threshold = tau;
    mask.bits.resize(sal.normalized.size());
    for (std::size_t i = 0; i < sal.normalized.size(); ++i)
        mask.bits[i] = sal.normalized[i] >= tau ? 1 : 0;
    return mask;
}

void write_pgm(const std::string& path, const SaliencyMap& sal) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << sal.width << " " << sal.height << "\n255\n";
    for (double v : sal.normalized) {
        const int byte = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        out.put(static_cast<char>(byte));
    }
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

namespace {

[[noreturn]] void pgm_fail(const std::string& path, std::streamoff off, const std::string& what) {
    std::ostringstream msg;
    msg << "read_pgm: " << path << ": " << what << " at byte offset " << off;
    throw std::runtime_error(msg.str());
}

// reads the next whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            break;
        }
    }
    while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
    return tok;
}

}  // namespace

SaliencyMap read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);

    const std::string magic = next_token(in);
    if (magic != "P5") pgm_fail(path, 0, "expected magic 'P5', got '" + magic + "'");

    auto parse_count = [&](const char* name) -> long {
        const std::streamoff off = in.tellg();
        const std::string tok = next_token(in);
        try {
            const long v = std::stol(tok);
            if (v <= 0) throw std::invalid_argument("nonpositive");
            return v;
        } catch (const std::exception&) {
            pgm_fail(path, off, std::string("invalid ") + name + " '" + tok + "'");
        }
    };
    const long width = parse_count("width");
    const long height = parse_count("height");
    const std::streamoff maxval_off = in.tellg();
    const long maxval = parse_count("maxval");
    if (maxval != 255) pgm_fail(path, maxval_off, "unsupported maxval (want 255)");

    SaliencyMap sal;
    sal.width = static_cast<std::size_t>(width);
    sal.height = static_cast<std::size_t>(height);
    const std::size_t count = sal.width * sal.height;
    std::vector<char> buf(count);
    const std::streamoff data_off = in.tellg();
    in.read(buf.data(), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
        pgm_fail(path, data_off + in.gcount(), "truncated pixel data");

    sal.normalized.resize(count);
    sal.raw.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        sal.normalized[i] = static_cast<double>(static_cast<unsigned char>(buf[i])) / 255.0;
        sal.raw[i] = sal.normalized[i];
    }
    return sal;
}

void to_json(nlohmann::json& j, const SaliencyMap& sal) {
    j = nlohmann::json{{"height", sal.height},
                       {"width", sal.width},
                       {"raw", sal.raw},
                       {"normalized", sal.normalized}};
}

void from_json(const nlohmann::json& j, SaliencyMap& sal) {
    j.at("height").get_to(sal.height);
    j.at("width").get_to(sal.width);
    j.at("raw").get_to(sal.raw);
    j.at("normalized").get_to(sal.normalized);
}

}  // namespace ssv
