#include "ssv/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace ssv {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PolicyParams PolicyParams::init(std::size_t dim_language, std::size_t dim_visual,
                                RngStream& rng) {
    PolicyParams params;
    params.w_sig = Mat(dim_language, dim_language);
    params.w_vis = Mat(dim_language, dim_visual);
    params.stop_embedding.resize(dim_language);
    const double sig_scale = 1.0 / std::sqrt(static_cast<double>(dim_language));
    const double vis_scale = 1.0 / std::sqrt(static_cast<double>(dim_visual));
    for (double& v : params.w_sig.data) v = sig_scale * rng.normal();
    for (double& v : params.w_vis.data) v = vis_scale * rng.normal();
    for (double& v : params.stop_embedding) v = sig_scale * rng.normal();
    return params;
}

ActionDistribution score_actions(const PolicyParams& params, const ReasoningState& state,
                                 const RegionBank& bank, const PolicyConfig& config) {
    if (state.h.size() != params.dim_language())
        throw std::invalid_argument("score_actions: state dimension mismatch");
    const Vec h_tilde = params.w_sig.matvec(state.h);
    const std::size_t slots = bank.slot_count();

    ActionDistribution dist;
    dist.scores.resize(slots + 1);
    for (std::size_t k = 0; k < slots; ++k) {
        if (!config.allow_revisit && state.visited.count(k)) {
            dist.scores[k] = kNegInf;
            continue;
        }
        const double s = cosine_sim(h_tilde, params.w_vis.matvec(bank.slot_embedding(k)));
        dist.scores[k] = (config.sim_floor_enabled && s < config.sim_floor) ? kNegInf : s;
    }
    dist.scores[slots] = cosine_sim(h_tilde, params.stop_embedding);
    dist.probs = softmax(dist.scores);
    return dist;
}

double log_prob(const ActionDistribution& dist, const Action& a) {
    const std::size_t i = dist.action_index(a);
    if (i >= dist.probs.size()) throw std::invalid_argument("log_prob: action out of range");
    if (dist.probs[i] == 0.0) throw masked_error("log_prob: action has zero probability");
    return std::log(dist.probs[i]);
}

PolicyGrad PolicyGrad::zeros(const PolicyParams& params) {
    PolicyGrad g;
    g.d_w_sig = Mat(params.w_sig.rows, params.w_sig.cols);
    g.d_w_vis = Mat(params.w_vis.rows, params.w_vis.cols);
    g.d_stop.assign(params.stop_embedding.size(), 0.0);
    return g;
}

void PolicyGrad::add_scaled(const PolicyGrad& other, double scale) {
    d_w_sig.add_scaled(other.d_w_sig, scale);
    d_w_vis.add_scaled(other.d_w_vis, scale);
    for (std::size_t i = 0; i < d_stop.size(); ++i) d_stop[i] += scale * other.d_stop[i];
}

namespace {

// d cos(x,y)/dx = y/(|x||y|) - cos * x/|x|^2; zero if either norm vanishes
void accumulate_cos_grads(const Vec& x, const Vec& y, double weight, Vec* dx, Vec* dy) {
    const double nx = norm(x), ny = norm(y);
    if (nx == 0.0 || ny == 0.0 || weight == 0.0) return;
    const double c = dot(x, y) / (nx * ny);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (dx) (*dx)[i] += weight * (y[i] / (nx * ny) - c * x[i] / (nx * nx));
        if (dy) (*dy)[i] += weight * (x[i] / (nx * ny) - c * y[i] / (ny * ny));
    }
}

void add_outer(Mat& m, const Vec& u, const Vec& v) {
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) += u[r] * v[c];
}

}  // namespace

PolicyGrad backprop_scores(const PolicyParams& params, const ReasoningState& state,
                           const RegionBank& bank, const ActionDistribution& dist,
                           const Vec& dscore) {
    if (dscore.size() != dist.scores.size())
        throw std::invalid_argument("backprop_scores: dscore size mismatch");
    PolicyGrad grad = PolicyGrad::zeros(params);
    const Vec h_tilde = params.w_sig.matvec(state.h);
    Vec d_h_tilde(h_tilde.size(), 0.0);

    const std::size_t slots = bank.slot_count();
    for (std::size_t k = 0; k < slots; ++k) {
        if (dist.scores[k] == kNegInf || dscore[k] == 0.0) continue;
        const Vec e_k = bank.slot_embedding(k);
        const Vec e_tilde = params.w_vis.matvec(e_k);
        Vec d_e_tilde(e_tilde.size(), 0.0);
        accumulate_cos_grads(h_tilde, e_tilde, dscore[k], &d_h_tilde, &d_e_tilde);
        add_outer(grad.d_w_vis, d_e_tilde, e_k);
    }
    accumulate_cos_grads(h_tilde, params.stop_embedding, dscore[slots], &d_h_tilde,
                         &grad.d_stop);
    add_outer(grad.d_w_sig, d_h_tilde, state.h);
    return grad;
}

PolicyGrad grad_log_prob(const PolicyParams& params, const ReasoningState& state,
                         const RegionBank& bank, const Action& a, const PolicyConfig& config) {
    const ActionDistribution dist = score_actions(params, state, bank, config);
    const std::size_t ai = dist.action_index(a);
    if (dist.probs[ai] == 0.0) throw masked_error("grad_log_prob: masked action");
    Vec dscore(dist.probs.size());
    for (std::size_t i = 0; i < dscore.size(); ++i)
        dscore[i] = (i == ai ? 1.0 : 0.0) - dist.probs[i];
    return backprop_scores(params, state, bank, dist, dscore);
}

void apply_update(PolicyParams& params, const PolicyGrad& grad, double scale) {
    params.w_sig.add_scaled(grad.d_w_sig, scale);
    params.w_vis.add_scaled(grad.d_w_vis, scale);
    for (std::size_t i = 0; i < params.stop_embedding.size(); ++i)
        params.stop_embedding[i] += scale * grad.d_stop[i];
}

Action sample_action(const ActionDistribution& dist, RngStream& rng) {
    const std::size_t i = sample_categorical(dist.probs, rng);
    return i == dist.stop_index() ? Action::stop() : Action::select(i);
}

Action greedy_action(const ActionDistribution& dist) {
    double best = dist.probs[dist.stop_index()];
    for (double p : dist.probs) best = std::max(best, p);
    if (dist.probs[dist.stop_index()] == best) return Action::stop();
    for (std::size_t i = 0; i < dist.probs.size(); ++i)
        if (dist.probs[i] == best) return Action::select(i);
    return Action::stop();
}

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const nlohmann::json& meta) {
    nlohmann::json header = meta;
    header["dim_language"] = params.dim_language();
    header["dim_visual"] = params.dim_visual();
    header["format"] = "ssv-checkpoint-v1";
    std::ofstream hj(path);
    if (!hj) throw std::runtime_error("save_checkpoint: cannot open " + path);
    hj << header.dump(2) << "\n";

    const std::string bin_path = path + ".bin";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + bin_path);
    auto write_all = [&bin, &bin_path](const std::vector<double>& values) {
        bin.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!bin) throw std::runtime_error("save_checkpoint: write failed for " + bin_path);
    };
    write_all(params.w_sig.data);
    write_all(params.w_vis.data);
    write_all(params.stop_embedding);
}

PolicyParams load_checkpoint(const std::string& path, nlohmann::json* meta_out) {
    std::ifstream hj(path);
    if (!hj) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json header = nlohmann::json::parse(hj);
    if (header.value("format", "") != "ssv-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unrecognized format in " + path);
    const auto dl = header.at("dim_language").get<std::size_t>();
    const auto dv = header.at("dim_visual").get<std::size_t>();

    PolicyParams params;
    params.w_sig = Mat(dl, dl);
    params.w_vis = Mat(dl, dv);
    params.stop_embedding.resize(dl);

    const std::string bin_path = path + ".bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + bin_path);
    auto read_all = [&bin, &bin_path](std::vector<double>& values) {
        bin.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (static_cast<std::size_t>(bin.gcount()) != values.size() * sizeof(double))
            throw std::runtime_error("load_checkpoint: truncated " + bin_path);
    };
    read_all(params.w_sig.data);
    read_all(params.w_vis.data);
    read_all(params.stop_embedding);
    if (meta_out) *meta_out = header;
    return params;
}

}  // namespace ssv
