#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "ssv/regions.hpp"

namespace ssv {

// Selecting a region whose probability was masked to zero.
struct masked_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full learnable state of the visual-access policy: two bias-free linear
// projectors plus the learnable STOP embedding.
struct PolicyParams {
    Mat w_sig;           // D_L x D_L
    Mat w_vis;           // D_L x D_v
    Vec stop_embedding;  // D_L

    static PolicyParams init(std::size_t dim_language, std::size_t dim_visual, RngStream& rng);

    std::size_t dim_language() const { return w_sig.rows; }
    std::size_t dim_visual() const { return w_vis.cols; }
};

struct ReasoningState {
    Vec h;
    std::size_t t = 1;
    std::set<std::size_t> visited;  // bank slot indices already selected
};

struct Action {
    bool is_stop = false;
    std::size_t index = 0;  // bank slot, valid when !is_stop

    static Action stop() { return {true, 0}; }
    static Action select(std::size_t slot) { return {false, slot}; }
    bool operator==(const Action&) const = default;
};

// Scores over bank slots followed by one STOP entry. Masked entries carry a
// score of -inf and probability 0.
struct ActionDistribution {
    Vec scores;
    Vec probs;

    std::size_t stop_index() const { return scores.size() - 1; }
    std::size_t action_index(const Action& a) const { return a.is_stop ? stop_index() : a.index; }
};

struct PolicyConfig {
    bool allow_revisit = false;
    // Optional raw-score floor on region slots (the similarity filtering
    // threshold); disabled by default. STOP is never floored.
    bool sim_floor_enabled = false;
    double sim_floor = 0.7;
};

// h_tilde = W_sig h; e_tilde_k = W_vis e_k; s_k = cos(h_tilde, e_tilde_k);
// STOP scored as cos(h_tilde, stop_embedding); probs = softmax over unmasked.
ActionDistribution score_actions(const PolicyParams& params, const ReasoningState& state,
                                 const RegionBank& bank, const PolicyConfig& config = {});

// Natural log of the action's probability; throws masked_error on zero mass.
double log_prob(const ActionDistribution& dist, const Action& a);

struct PolicyGrad {
    Mat d_w_sig;
    Mat d_w_vis;
    Vec d_stop;

    static PolicyGrad zeros(const PolicyParams& params);
    void add_scaled(const PolicyGrad& other, double scale);
};

// Gradient of sum_k dscore[k] * s_k w.r.t. the parameters, with masked
// entries contributing nothing. The log-prob and KL gradients both reduce to
// this with different dscore vectors.
PolicyGrad backprop_scores(const PolicyParams& params, const ReasoningState& state,
                           const RegionBank& bank, const ActionDistribution& dist,
                           const Vec& dscore);

// Exact gradient of log pi(a|s): dscore = onehot(a) - probs.
PolicyGrad grad_log_prob(const PolicyParams& params, const ReasoningState& state,
                         const RegionBank& bank, const Action& a,
                         const PolicyConfig& config = {});

// params += scale * grad (pass a negative scale for descent).
void apply_update(PolicyParams& params, const PolicyGrad& grad, double scale);

Action sample_action(const ActionDistribution& dist, RngStream& rng);
// Argmax with ties broken toward STOP, then toward the lower slot index.
Action greedy_action(const ActionDistribution& dist);

// Checkpoint format: JSON header at `path`, flat little-endian float64
// parameter arrays (w_sig, w_vis, stop_embedding) in the sidecar `path`+".bin".
void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const nlohmann::json& meta);
PolicyParams load_checkpoint(const std::string& path, nlohmann::json* meta_out = nullptr);

}  // namespace ssv
