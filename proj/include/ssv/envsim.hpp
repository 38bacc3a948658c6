#pragma once

#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "ssv/policy.hpp"

namespace ssv {

struct EnvConfig {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t dim_visual = 32;
    std::size_t dim_language = 64;
    std::size_t classes = 4;
    std::size_t max_steps = 8;  // rollout hard cap

    std::size_t block_side_min = 2;
    std::size_t block_side_max = 3;
    double relevant_base = 0.95;   // relevance of the rank-0 block
    double relevant_step = 0.25;   // decrease per rank among required blocks
    double distractor_base = 0.30;
    double distractor_step = 0.08;
    double fused_noise = 0.02;     // jitter on fused embeddings inside blocks
    double feature_gain = 2.0;     // scale of the relevance-plane component
    double feature_noise = 0.40;   // per-block content spread, kept off the relevance plane
    double patch_noise = 0.10;     // per-patch jitter on visual embeddings
    double background_scale = 0.30;
    std::size_t max_retries = 64;  // placement/solvability retries per task
};

// Fixed (non-learned) recurrent stand-in for the reasoning backbone:
// h' = tanh(A h + B W_in injected), answer = argmax(readout h). A is rescaled
// to spectral norm <= 0.9 so repeated injection contracts.
struct ToyReasoner {
    Mat a;         // D_L x D_L
    Mat b;         // D_L x D_L
    Mat input_map; // D_L x D_v
    Mat readout;   // C x D_L
    Vec h0;

    static ToyReasoner make(std::size_t dim_language, std::size_t dim_visual,
                            std::size_t classes, RngStream& rng);

    Vec step(const Vec& h, const Vec& injected) const;
    std::size_t answer(const Vec& h) const;
};

// Frozen per-experiment world: reasoner weights plus the relevance plane that
// block features are arranged on (angle on the plane encodes query relevance,
// which is what the policy has to learn to read).
struct Environment {
    EnvConfig config;
    ToyReasoner reasoner;
    Vec relevance_axis_a;  // D_v, orthonormal pair spanning the relevance plane
    Vec relevance_axis_b;

    static Environment make(const EnvConfig& config, std::uint64_t seed);
};

struct PlantedBlock {
    std::size_t row = 0, col = 0, height = 0, width = 0;
    std::size_t rank = 0;     // 0 = most relevant; ranks >= difficulty are distractors
    double relevance = 0.0;   // in [0,1]
    Vec feature;              // D_v, what injecting this block contributes
};

struct TaskInstance {
    std::uint64_t task_seed = 0;
    std::size_t difficulty = 1;     // number of blocks whose evidence is required
    std::size_t n_distractors = 0;
    std::size_t gold_answer = 0;
    std::vector<PlantedBlock> planted;
    PatchGrid grid;
};

// Deterministic given (environment, task_seed). Plants non-touching blocks,
// computes the gold answer by running the reasoner over the required features
// in rank order, and rejects (re-rolls) instances where the actual region
// bank's rank-ordered rollout fails to reproduce that answer.
TaskInstance generate_task(const Environment& env, const RegionConfig& region_config,
                           std::uint64_t task_seed, std::size_t difficulty,
                           std::size_t n_distractors);

struct RewardWeights {
    double format = 0.2;   // lambda_1
    double length = 0.01;  // lambda_2
    double vision = 0.05;  // lambda_3
};

struct RewardBreakdown {
    int r_task = 0;
    int r_format = 0;
    std::size_t length_tokens = 0;
    std::size_t vision_steps = 0;
    double total = 0.0;
};

struct TrajectoryStep {
    ReasoningState state;  // state the action was taken in
    Action action;
    double log_prob;       // under the learned policy
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    std::size_t predicted_answer = 0;
    bool stopped_explicitly = false;
    RewardBreakdown reward;
};

// Picks the next action given the current distribution and state.
using ActionChooser = std::function<Action(const ActionDistribution&, const ReasoningState&)>;

// Core rollout loop: score, choose, inject through the reasoner, until STOP
// or the cap. Log-probs are recorded under the learned policy regardless of
// who chose the action.
Trajectory rollout_with(const PolicyParams& params, const ToyReasoner& reasoner,
                        const RegionBank& bank, const ActionChooser& choose,
                        std::size_t cap, const PolicyConfig& config = {});

Trajectory rollout(const PolicyParams& params, const ToyReasoner& reasoner,
                   const RegionBank& bank, RngStream& rng, std::size_t cap,
                   const PolicyConfig& config = {});
Trajectory rollout_greedy(const PolicyParams& params, const ToyReasoner& reasoner,
                          const RegionBank& bank, std::size_t cap,
                          const PolicyConfig& config = {});
// Uniform over unmasked actions (STOP included): the random region policy.
Trajectory rollout_random(const PolicyParams& params, const ToyReasoner& reasoner,
                          const RegionBank& bank, RngStream& rng, std::size_t cap,
                          const PolicyConfig& config = {});

RewardBreakdown compute_reward(const Trajectory& traj, const TaskInstance& task,
                               const RewardWeights& weights);

// Dataset rows carry only seeds and geometry; grids are regenerated on load.
void to_json(nlohmann::json& j, const TaskInstance& task);
TaskInstance task_from_json(const nlohmann::json& j, const Environment& env,
                            const RegionConfig& region_config);

void to_json(nlohmann::json& j, const Trajectory& traj);

}  // namespace ssv
