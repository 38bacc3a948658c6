#pragma once

#include <map>
#include <string>

#include "ssv/envsim.hpp"

namespace ssv {

// KL divergence is undefined: reference has zero mass on supported actions.
struct divergent_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 1e-3;             // Stage I step size (cross-entropy summed per batch)
    double rl_lr = 0.5;           // Stage II step size (loss is a per-trajectory mean)
    std::size_t group_size = 4;   // G
    double kl_weight = 0.02;      // beta
    RewardWeights rewards;
    std::size_t e_warm = 4;       // curriculum warm-up epochs
    std::size_t sft_epochs = 6;
    std::size_t sft_batch = 16;
    std::size_t rl_steps = 200;
    std::size_t rl_batch = 8;
    std::size_t eval_every = 50;  // Stage II evaluation period, 0 disables
    std::size_t rollout_cap = 8;  // kept in sync with env.max_steps by run_experiment
    PolicyConfig policy;
};

struct DataConfig {
    std::size_t n_train = 400;
    std::size_t n_eval = 500;
    std::size_t difficulty_min = 1;
    std::size_t difficulty_max = 2;
    std::size_t max_distractors = 2;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    EnvConfig env;
    RegionConfig regions;
    TrainConfig train;
    DataConfig data;
};

double curriculum_lambda(std::size_t epoch, std::size_t e_warm);

// Heuristic viewing trajectory for behavior cloning: with probability
// lambda_e the bank's local regions in descending-score order, otherwise a
// random permutation of them; STOP is always appended.
std::vector<Action> pseudo_expert_order(const RegionBank& bank, double lambda_e, RngStream& rng,
                                        bool* saliency_branch_out = nullptr);

struct SftItem {
    const TaskInstance* task;
    const RegionBank* bank;
    std::vector<Action> expert;
};

struct SftMetrics {
    double loss = 0.0;          // pre-update cross-entropy, summed over the batch
    std::size_t steps = 0;
    std::size_t masked_skips = 0;
};

SftMetrics sft_step(PolicyParams& params, const std::vector<SftItem>& batch,
                    const ToyReasoner& reasoner, const TrainConfig& config);

struct TrajectoryGroup {
    std::vector<Trajectory> trajectories;
    Vec rewards;
    Vec advantages;  // rewards minus the group mean; sums to zero
};

Vec group_advantages(const Vec& rewards);

// Sum_p p ln(p/q) with 0 ln 0 = 0; throws divergent_error if q lacks mass
// where p has some.
double kl_divergence(const ActionDistribution& p, const ActionDistribution& q);

struct GrpoItem {
    const TaskInstance* task;
    const RegionBank* bank;
};

struct GrpoMetrics {
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double policy_loss = 0.0;
    std::size_t degenerate_groups = 0;  // all-equal rewards, advantage signal absent
    std::vector<TrajectoryGroup> groups;
};

// One GRPO update: per task sample G trajectories from the mixed policy
// (per-trajectory Bernoulli(lambda_e) choice of learned vs random policy),
// mean-subtract rewards within the group, and descend
// -sum_i sum_t A_i log pi(a|s) + beta * mean-over-states KL(pi || pi_ref).
GrpoMetrics grpo_step(PolicyParams& params, const PolicyParams& sft_reference,
                      const std::vector<GrpoItem>& batch, const ToyReasoner& reasoner,
                      double lambda_e, const TrainConfig& config, RngStream& rng);

enum class OrderMode { random, cognition };
enum class StructureMode { patch_subset, saliency_regions };

struct EvalOptions {
    OrderMode order = OrderMode::cognition;
    StructureMode structure = StructureMode::saliency_regions;
    long fixed_k = -1;  // -1 = adaptive (policy STOP decides)
    std::uint64_t seed = 0;
    PolicyConfig policy;
};

struct EvalReport {
    std::size_t n_tasks = 0;
    double accuracy = 0.0;
    double mean_vision_steps = 0.0;
    double mean_reward = 0.0;
    std::map<std::size_t, std::pair<std::size_t, double>> per_difficulty;  // diff -> (n, acc)
};

EvalReport evaluate(const PolicyParams& params, const Environment& env,
                    const std::vector<TaskInstance>& tasks,
                    const std::vector<RegionBank>& banks, const RegionConfig& region_config,
                    const RewardWeights& rewards, const EvalOptions& options);

// Question-independent bank over random contiguous rectangles with the same
// token budget; the structure-ablation baseline.
RegionBank build_patch_subset_bank(const TaskInstance& task, const Environment& env,
                                   const RegionConfig& region_config, std::uint64_t eval_seed);

struct ExperimentReport {
    nlohmann::json json;  // full report as written to report.json
};

struct RunOptions {
    bool stage_sft = true;
    bool stage_rl = true;
    const PolicyParams* init = nullptr;  // replaces the fresh random initialization
};

// FNV-1a over the canonical config JSON, hex-encoded.
std::string config_hash(const ExperimentConfig& config);

// Two-stage run: curriculum SFT, snapshot, GRPO with periodic held-out
// evaluation. Writes report.json, sft.ckpt.json(+.bin), final.ckpt.json(+.bin)
// and train_log.jsonl under out_dir. Stages can be run separately: disable
// stage_sft and pass the SFT checkpoint as init to resume into Stage II (the
// loaded parameters then serve as the KL reference).
ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                                const RunOptions& options = {});

void to_json(nlohmann::json& j, const EvalReport& report);
void to_json(nlohmann::json& j, const ExperimentConfig& config);
void from_json(const nlohmann::json& j, ExperimentConfig& config);

}  // namespace ssv
