#include "ssv/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ssv {

double curriculum_lambda(std::size_t epoch, std::size_t e_warm) {
    if (e_warm < 1) throw std::invalid_argument("curriculum_lambda: e_warm >= 1 required");
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(e_warm));
}

std::vector<Action> pseudo_expert_order(const RegionBank& bank, double lambda_e, RngStream& rng,
                                        bool* saliency_branch_out) {
    const std::size_t locals = bank.regions.size();
    std::vector<std::size_t> order(locals);
    std::iota(order.begin(), order.end(), 0);
    const bool saliency_branch = rng.uniform() < lambda_e;
    if (saliency_branch_out) *saliency_branch_out = saliency_branch;
    if (!saliency_branch) {
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + rng.uniform_int(order.size() - i);
            std::swap(order[i], order[j]);
        }
    }
    std::vector<Action> seq;
    seq.reserve(locals + 1);
    for (std::size_t slot : order) seq.push_back(Action::select(slot));
    seq.push_back(Action::stop());
    return seq;
}

SftMetrics sft_step(PolicyParams& params, const std::vector<SftItem>& batch,
                    const ToyReasoner& reasoner, const TrainConfig& config) {
    SftMetrics metrics;
    PolicyGrad grad = PolicyGrad::zeros(params);
    for (const SftItem& item : batch) {
        ReasoningState state{reasoner.h0, 1, {}};
        for (const Action& expert : item.expert) {
            try {
                const ActionDistribution dist =
                    score_actions(params, state, *item.bank, config.policy);
                metrics.loss -= log_prob(dist, expert);
                grad.add_scaled(grad_log_prob(params, state, *item.bank, expert, config.policy),
                                1.0);
                ++metrics.steps;
            } catch (const masked_error&) {
                ++metrics.masked_skips;
            }
            if (expert.is_stop) break;
            state.h = reasoner.step(state.h, item.bank->slot_embedding(expert.index));
            state.t += 1;
            state.visited.insert(expert.index);
        }
    }
    // descend the cross-entropy: loss gradient is the negated log-prob gradient
    apply_update(params, grad, config.lr);
    return metrics;
}

Vec group_advantages(const Vec& rewards) {
    if (rewards.size() < 2)
        throw std::invalid_argument("group_advantages: group size >= 2 required");
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                        static_cast<double>(rewards.size());
    Vec adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
    return adv;
}

double kl_divergence(const ActionDistribution& p, const ActionDistribution& q) {
    if (p.probs.size() != q.probs.size())
        throw std::invalid_argument("kl_divergence: support size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        if (p.probs[i] == 0.0) continue;
        if (q.probs[i] == 0.0)
            throw divergent_error("kl_divergence: reference has zero mass on supported action");
        kl += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
    }
    return kl;
}

GrpoMetrics grpo_step(PolicyParams& params, const PolicyParams& sft_reference,
                      const std::vector<GrpoItem>& batch, const ToyReasoner& reasoner,
                      double lambda_e, const TrainConfig& config, RngStream& rng) {
    if (config.group_size < 2)
        throw std::invalid_argument("grpo_step: group size >= 2 required");
    GrpoMetrics metrics;
    PolicyGrad grad = PolicyGrad::zeros(params);
    std::size_t n_traj = 0, n_states = 0;

    for (const GrpoItem& item : batch) {
        TrajectoryGroup group;
        for (std::size_t i = 0; i < config.group_size; ++i) {
            const bool use_policy = rng.uniform() < lambda_e;
            Trajectory traj =
                use_policy
                    ? rollout(params, reasoner, *item.bank, rng, config.rollout_cap,
                              config.policy)
                    : rollout_random(params, reasoner, *item.bank, rng, config.rollout_cap,
                                     config.policy);
            traj.reward = compute_reward(traj, *item.task, config.rewards);
            group.rewards.push_back(traj.reward.total);
            group.trajectories.push_back(std::move(traj));
        }
        group.advantages = group_advantages(group.rewards);
        const bool degenerate = std::all_of(group.advantages.begin(), group.advantages.end(),
                                            [](double a) { return a == 0.0; });
        if (degenerate) ++metrics.degenerate_groups;

        for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
            const double adv = group.advantages[i];
            metrics.mean_reward += group.rewards[i];
            ++n_traj;
            for (const TrajectoryStep& step : group.trajectories[i].steps) {
                metrics.policy_loss -= adv * step.log_prob;
                if (adv != 0.0)
                    grad.add_scaled(grad_log_prob(params, step.state, *item.bank, step.action,
                                                  config.policy),
                                    adv);
            }
        }
        metrics.groups.push_back(std::move(group));
    }

    // KL(pi_theta || pi_SFT) averaged over every state visited by the batch
    PolicyGrad kl_grad = PolicyGrad::zeros(params);
    for (std::size_t gi = 0; gi < metrics.groups.size(); ++gi) {
        const GrpoItem& item = batch[gi];
        for (const Trajectory& traj : metrics.groups[gi].trajectories) {
            for (const TrajectoryStep& step : traj.steps) {
                const ActionDistribution p =
                    score_actions(params, step.state, *item.bank, config.policy);
                const ActionDistribution q =
                    score_actions(sft_reference, step.state, *item.bank, config.policy);
                const double kl = kl_divergence(p, q);
                metrics.mean_kl += kl;
                ++n_states;
                Vec dscore(p.probs.size(), 0.0);
                for (std::size_t k = 0; k < p.probs.size(); ++k)
                    if (p.probs[k] > 0.0)
                        dscore[k] = p.probs[k] * (std::log(p.probs[k] / q.probs[k]) - kl);
                kl_grad.add_scaled(backprop_scores(params, step.state, *item.bank, p, dscore),
                                   1.0);
            }
        }
    }
    // mean over trajectories so the advantage term and the per-state KL mean
    // share a scale and kl_weight stays meaningful
    if (n_traj > 0) {
        const PolicyGrad summed = grad;
        grad = PolicyGrad::zeros(params);
        grad.add_scaled(summed, 1.0 / static_cast<double>(n_traj));
        metrics.policy_loss /= static_cast<double>(n_traj);
        metrics.mean_reward /= static_cast<double>(n_traj);
    }
    if (n_states > 0) {
        metrics.mean_kl /= static_cast<double>(n_states);
        grad.add_scaled(kl_grad, -config.kl_weight / static_cast<double>(n_states));
    }

    apply_update(params, grad, config.rl_lr);
    return metrics;
}

RegionBank build_patch_subset_bank(const TaskInstance& task, const Environment& env,
                                   const RegionConfig& region_config, std::uint64_t eval_seed) {
    RngStream rng(eval_seed ^ 0x70617463ULL, task.task_seed);
    const EnvConfig& cfg = env.config;
    const SaliencyMap sal = compute_saliency(task.grid);

    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::uint8_t> covered(task.grid.patch_count(), 0);
    for (std::size_t g = 0; g + 1 < region_config.bank_size; ++g) {
        for (std::size_t attempt = 0; attempt < 64; ++attempt) {
            const std::size_t bh = cfg.block_side_min +
                                   rng.uniform_int(cfg.block_side_max - cfg.block_side_min + 1);
            const std::size_t bw = cfg.block_side_min +
                                   rng.uniform_int(cfg.block_side_max - cfg.block_side_min + 1);
            const std::size_t row = rng.uniform_int(cfg.height - bh + 1);
            const std::size_t col = rng.uniform_int(cfg.width - bw + 1);
            std::vector<std::size_t> patches;
            bool clash = false;
            for (std::size_t r = row; r < row + bh && !clash; ++r)
                for (std::size_t c = col; c < col + bw; ++c) {
                    const std::size_t p = task.grid.index(r, c);
                    if (covered[p]) {
                        clash = true;
                        break;
                    }
                    patches.push_back(p);
                }
            if (clash) continue;
            for (std::size_t p : patches) covered[p] = 1;
            groups.push_back(std::move(patches));
            break;
        }
    }

    RegionBank bank;
    std::vector<std::vector<std::size_t>> kept;
    for (auto& patches : groups) {
        Region region;
        std::sort(patches.begin(), patches.end());
        double mean = 0.0;
        for (std::size_t p : patches) mean += sal.normalized[p];
        region.score = mean / static_cast<double>(patches.size());
        region.bbox.row_min = patches.front() / task.grid.width;
        region.bbox.col_min = patches.front() % task.grid.width;
        region.bbox.row_max = patches.back() / task.grid.width;
        region.bbox.col_max = patches.back() % task.grid.width;
        region.tokens = compress_region(patches, task.grid, sal, region_config.token_budget,
                                        region_config.kmeans_max_iter);
        region.patches = std::move(patches);
        kept.push_back(region.patches);
        bank.regions.push_back(std::move(region));
    }
    std::stable_sort(bank.regions.begin(), bank.regions.end(),
                     [](const Region& a, const Region& b) { return a.score > b.score; });
    bank.global_embedding = global_complement(kept, task.grid);
    for (std::size_t p = 0; p < task.grid.patch_count(); ++p)
        if (!covered[p]) bank.complement_patches.push_back(p);
    return bank;
}

namespace {

// greedy over region slots only until k picks, then stop
Action fixed_k_greedy(const ActionDistribution& dist, const ReasoningState& state, long k) {
    if (static_cast<long>(state.visited.size()) >= k) return Action::stop();
    long best = -1;
    for (std::size_t i = 0; i + 1 < dist.probs.size(); ++i)
        if (dist.probs[i] > 0.0 && (best < 0 || dist.probs[i] > dist.probs[best]))
            best = static_cast<long>(i);
    if (best < 0) return Action::stop();
    return Action::select(static_cast<std::size_t>(best));
}

Action fixed_k_random(const ActionDistribution& dist, const ReasoningState& state, long k,
                      RngStream& rng) {
    if (static_cast<long>(state.visited.size()) >= k) return Action::stop();
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i + 1 < dist.probs.size(); ++i)
        if (dist.probs[i] > 0.0) open.push_back(i);
    if (open.empty()) return Action::stop();
    return Action::select(open[rng.uniform_int(open.size())]);
}

Action adaptive_random(const ActionDistribution& dist, RngStream& rng) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < dist.probs.size(); ++i)
        if (dist.probs[i] > 0.0) open.push_back(i);
    const std::size_t pick = open[rng.uniform_int(open.size())];
    return pick == dist.stop_index() ? Action::stop() : Action::select(pick);
}

}  // namespace

EvalReport evaluate(const PolicyParams& params, const Environment& env,
                    const std::vector<TaskInstance>& tasks,
                    const std::vector<RegionBank>& banks, const RegionConfig& region_config,
                    const RewardWeights& rewards, const EvalOptions& options) {
    EvalReport report;
    report.n_tasks = tasks.size();
    const std::size_t cap = env.config.max_steps;

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskInstance& task = tasks[i];
        RegionBank subset_bank;
        const RegionBank* bank = &banks[i];
        if (options.structure == StructureMode::patch_subset) {
            subset_bank = build_patch_subset_bank(task, env, region_config, options.seed);
            bank = &subset_bank;
        }

        RngStream rng(options.seed, 0x6576616cULL + i);
        Trajectory traj;
        if (options.order == OrderMode::cognition) {
            if (options.fixed_k < 0) {
                traj = rollout_greedy(params, env.reasoner, *bank, cap, options.policy);
            } else {
                const long k = options.fixed_k;
                traj = rollout_with(
                    params, env.reasoner, *bank,
                    [k](const ActionDistribution& d, const ReasoningState& s) {
                        return fixed_k_greedy(d, s, k);
                    },
                    cap, options.policy);
            }
        } else {
            if (options.fixed_k < 0) {
                traj = rollout_with(
                    params, env.reasoner, *bank,
                    [&rng](const ActionDistribution& d, const ReasoningState&) {
                        return adaptive_random(d, rng);
                    },
                    cap, options.policy);
            } else {
                const long k = options.fixed_k;
                traj = rollout_with(
                    params, env.reasoner, *bank,
                    [&rng, k](const ActionDistribution& d, const ReasoningState& s) {
                        return fixed_k_random(d, s, k, rng);
                    },
                    cap, options.policy);
            }
        }
        traj.reward = compute_reward(traj, task, rewards);

        report.accuracy += traj.reward.r_task;
        report.mean_vision_steps += static_cast<double>(traj.reward.vision_steps);
        report.mean_reward += traj.reward.total;
        auto& [n, acc] = report.per_difficulty[task.difficulty];
        ++n;
        acc += traj.reward.r_task;
    }
    if (!tasks.empty()) {
        report.accuracy /= static_cast<double>(tasks.size());
        report.mean_vision_steps /= static_cast<double>(tasks.size());
        report.mean_reward /= static_cast<double>(tasks.size());
    }
    for (auto& [diff, entry] : report.per_difficulty)
        if (entry.first > 0) entry.second /= static_cast<double>(entry.first);
    return report;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(const nlohmann::json& j) {
    std::ostringstream os;
    os << std::hex << fnv1a(j.dump());
    return os.str();
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) {
    nlohmann::json j;
    to_json(j, config);
    return hash_hex(j);
}

ExperimentReport run_experiment(const ExperimentConfig& config_in, const std::string& out_dir,
                                const RunOptions& options) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    ExperimentConfig config = config_in;
    config.train.rollout_cap = config.env.max_steps;

    const Environment env = Environment::make(config.env, config.seed);

    auto make_tasks = [&](std::uint64_t stream, std::size_t n) {
        RngStream rng(config.seed, stream);
        std::vector<TaskInstance> tasks;
        tasks.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t task_seed = rng.next_u64();
            const std::size_t difficulty =
                config.data.difficulty_min +
                rng.uniform_int(config.data.difficulty_max - config.data.difficulty_min + 1);
            const std::size_t distractors = rng.uniform_int(config.data.max_distractors + 1);
            tasks.push_back(
                generate_task(env, config.regions, task_seed, difficulty, distractors));
        }
        return tasks;
    };
    const std::vector<TaskInstance> train_tasks = make_tasks(100, config.data.n_train);
    const std::vector<TaskInstance> eval_tasks = make_tasks(200, config.data.n_eval);

    auto build_banks = [&](const std::vector<TaskInstance>& tasks) {
        std::vector<RegionBank> banks;
        banks.reserve(tasks.size());
        for (const TaskInstance& t : tasks) banks.push_back(build_region_bank(t.grid, config.regions));
        return banks;
    };
    const std::vector<RegionBank> train_banks = build_banks(train_tasks);
    const std::vector<RegionBank> eval_banks = build_banks(eval_tasks);

    RngStream init_rng(config.seed, 300);
    PolicyParams params = PolicyParams::init(config.env.dim_language, config.env.dim_visual,
                                             init_rng);
    if (options.init) {
        if (options.init->dim_language() != config.env.dim_language ||
            options.init->dim_visual() != config.env.dim_visual)
            throw std::invalid_argument(
                "run_experiment: initial checkpoint dimensions do not match env config");
        params = *options.init;
    }

    std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
    if (!log) throw std::runtime_error("run_experiment: cannot open train_log.jsonl in " + out_dir);

    nlohmann::json config_json;
    to_json(config_json, config);
    nlohmann::json report{{"config", config_json},
                          {"config_hash", hash_hex(config_json)},
                          {"evals", nlohmann::json::array()}};

    auto eval_policy = [&](const PolicyParams& p, const PolicyParams* kl_ref) {
        EvalOptions opts;
        opts.seed = config.seed;
        opts.policy = config.train.policy;
        EvalReport er = evaluate(p, env, eval_tasks, eval_banks, config.regions,
                                 config.train.rewards, opts);
        double mean_kl = 0.0;
        std::size_t n_states = 0;
        if (kl_ref) {
            for (std::size_t i = 0; i < eval_tasks.size(); ++i) {
                const Trajectory traj = rollout_greedy(p, env.reasoner, eval_banks[i],
                                                       env.config.max_steps, config.train.policy);
                for (const TrajectoryStep& step : traj.steps) {
                    const auto dp = score_actions(p, step.state, eval_banks[i],
                                                  config.train.policy);
                    const auto dq = score_actions(*kl_ref, step.state, eval_banks[i],
                                                  config.train.policy);
                    mean_kl += kl_divergence(dp, dq);
                    ++n_states;
                }
            }
            if (n_states > 0) mean_kl /= static_cast<double>(n_states);
        }
        return std::pair<EvalReport, double>(er, mean_kl);
    };

    // Stage I: curriculum behavior cloning
    RngStream sft_rng(config.seed, 400);
    for (std::size_t epoch = 0; options.stage_sft && epoch < config.train.sft_epochs; ++epoch) {
        const double lambda_e = curriculum_lambda(epoch, config.train.e_warm);
        std::vector<std::size_t> order(train_tasks.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + sft_rng.uniform_int(order.size() - i);
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0, epoch_skips = 0;
        for (std::size_t start = 0; start < order.size(); start += config.train.sft_batch) {
            std::vector<SftItem> batch;
            const std::size_t end = std::min(order.size(), start + config.train.sft_batch);
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                batch.push_back({&train_tasks[idx], &train_banks[idx],
                                 pseudo_expert_order(train_banks[idx], lambda_e, sft_rng)});
            }
            const SftMetrics m = sft_step(params, batch, env.reasoner, config.train);
            epoch_loss += m.loss;
            epoch_steps += m.steps;
            epoch_skips += m.masked_skips;
        }
        log << nlohmann::json{{"stage", "sft"},
                              {"epoch", epoch},
                              {"lambda_e", lambda_e},
                              {"loss_per_step", epoch_steps ? epoch_loss / epoch_steps : 0.0},
                              {"masked_skips", epoch_skips}}
                   .dump()
            << "\n";
    }

    const PolicyParams sft_snapshot = params;
    save_checkpoint((fs::path(out_dir) / "sft.ckpt.json").string(), sft_snapshot,
                    {{"stage", "sft"}, {"config_hash", report["config_hash"]}});
    {
        const auto [er, kl] = eval_policy(params, nullptr);
        nlohmann::json ej;
        to_json(ej, er);
        ej["stage"] = "sft";
        ej["step"] = 0;
        ej["mean_kl"] = kl;
        ej["lambda_e"] = curriculum_lambda(config.train.sft_epochs, config.train.e_warm);
        report["evals"].push_back(ej);
    }

    // Stage II: GRPO with mixed exploration
    RngStream rl_rng(config.seed, 500);
    for (std::size_t step = 0; options.stage_rl && step < config.train.rl_steps; ++step) {
        const std::size_t epoch_equiv =
            train_tasks.empty() ? 0 : (step * config.train.rl_batch) / train_tasks.size();
        const double lambda_e = curriculum_lambda(epoch_equiv, config.train.e_warm);
        std::vector<GrpoItem> batch;
        for (std::size_t i = 0; i < config.train.rl_batch; ++i) {
            const std::size_t idx = rl_rng.uniform_int(train_tasks.size());
            batch.push_back({&train_tasks[idx], &train_banks[idx]});
        }
        const GrpoMetrics m =
            grpo_step(params, sft_snapshot, batch, env.reasoner, lambda_e, config.train, rl_rng);
        log << nlohmann::json{{"stage", "rl"},
                              {"step", step},
                              {"lambda_e", lambda_e},
                              {"mean_reward", m.mean_reward},
                              {"mean_kl", m.mean_kl},
                              {"policy_loss", m.policy_loss},
                              {"degenerate_groups", m.degenerate_groups}}
                   .dump()
            << "\n";

        const bool last = step + 1 == config.train.rl_steps;
        if (last || (config.train.eval_every > 0 && (step + 1) % config.train.eval_every == 0)) {
            const auto [er, kl] = eval_policy(params, &sft_snapshot);
            nlohmann::json ej;
            to_json(ej, er);
            ej["stage"] = "rl";
            ej["step"] = step + 1;
            ej["mean_kl"] = kl;
            ej["lambda_e"] = lambda_e;
            report["evals"].push_back(ej);
        }
    }

    save_checkpoint((fs::path(out_dir) / "final.ckpt.json").string(), params,
                    {{"stage", "final"}, {"config_hash", report["config_hash"]}});

    if (!report["evals"].empty()) report["final"] = report["evals"].back();
    std::ofstream rj(fs::path(out_dir) / "report.json");
    if (!rj)
        throw std::runtime_error("run_experiment: cannot open report.json in " + out_dir);
    rj << report.dump(2) << "\n";
    return ExperimentReport{std::move(report)};
}

void to_json(nlohmann::json& j, const EvalReport& report) {
    nlohmann::json pd = nlohmann::json::object();
    for (const auto& [diff, entry] : report.per_difficulty)
        pd[std::to_string(diff)] = {{"n", entry.first}, {"accuracy", entry.second}};
    j = nlohmann::json{{"n_tasks", report.n_tasks},
                       {"greedy_accuracy", report.accuracy},
                       {"mean_vision_steps", report.mean_vision_steps},
                       {"mean_reward", report.mean_reward},
                       {"per_difficulty", std::move(pd)}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(known.begin(), known.end(),
                         [&key](const char* k) { return key == k; }))
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{
        {"seed", c.seed},
        {"env",
         {{"height", c.env.height},
          {"width", c.env.width},
          {"dim_visual", c.env.dim_visual},
          {"dim_language", c.env.dim_language},
          {"classes", c.env.classes},
          {"max_steps", c.env.max_steps},
          {"block_side_min", c.env.block_side_min},
          {"block_side_max", c.env.block_side_max},
          {"relevant_base", c.env.relevant_base},
          {"relevant_step", c.env.relevant_step},
          {"distractor_base", c.env.distractor_base},
          {"distractor_step", c.env.distractor_step},
          {"fused_noise", c.env.fused_noise},
          {"feature_gain", c.env.feature_gain},
          {"feature_noise", c.env.feature_noise},
          {"patch_noise", c.env.patch_noise},
          {"background_scale", c.env.background_scale},
          {"max_retries", c.env.max_retries}}},
        {"regions",
         {{"bank_size", c.regions.bank_size},
          {"token_budget", c.regions.token_budget},
          {"min_area_frac", c.regions.min_area_frac},
          {"otsu_bins", c.regions.otsu_bins},
          {"kmeans_max_iter", c.regions.kmeans_max_iter}}},
        {"train",
         {{"lr", c.train.lr},
          {"rl_lr", c.train.rl_lr},
          {"group_size", c.train.group_size},
          {"kl_weight", c.train.kl_weight},
          {"reward_format", c.train.rewards.format},
          {"reward_length", c.train.rewards.length},
          {"reward_vision", c.train.rewards.vision},
          {"e_warm", c.train.e_warm},
          {"sft_epochs", c.train.sft_epochs},
          {"sft_batch", c.train.sft_batch},
          {"rl_steps", c.train.rl_steps},
          {"rl_batch", c.train.rl_batch},
          {"eval_every", c.train.eval_every},
          {"allow_revisit", c.train.policy.allow_revisit},
          {"sim_floor_enabled", c.train.policy.sim_floor_enabled},
          {"sim_floor", c.train.policy.sim_floor}}},
        {"data",
         {{"n_train", c.data.n_train},
          {"n_eval", c.data.n_eval},
          {"difficulty_min", c.data.difficulty_min},
          {"difficulty_max", c.data.difficulty_max},
          {"max_distractors", c.data.max_distractors}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    reject_unknown(j, {"seed", "env", "regions", "train", "data"}, "root");
    if (!j.contains("seed")) throw std::invalid_argument("config: 'seed' is required");
    j.at("seed").get_to(c.seed);

    if (j.contains("env")) {
        const auto& e = j.at("env");
        reject_unknown(e,
                       {"height", "width", "dim_visual", "dim_language", "classes", "max_steps",
                        "block_side_min", "block_side_max", "relevant_base", "relevant_step",
                        "distractor_base", "distractor_step", "fused_noise", "feature_gain",
                        "feature_noise", "patch_noise", "background_scale", "max_retries"},
                       "env");
        if (e.contains("height")) e.at("height").get_to(c.env.height);
        if (e.contains("width")) e.at("width").get_to(c.env.width);
        if (e.contains("dim_visual")) e.at("dim_visual").get_to(c.env.dim_visual);
        if (e.contains("dim_language")) e.at("dim_language").get_to(c.env.dim_language);
        if (e.contains("classes")) e.at("classes").get_to(c.env.classes);
        if (e.contains("max_steps")) e.at("max_steps").get_to(c.env.max_steps);
        if (e.contains("block_side_min")) e.at("block_side_min").get_to(c.env.block_side_min);
        if (e.contains("block_side_max")) e.at("block_side_max").get_to(c.env.block_side_max);
        if (e.contains("relevant_base")) e.at("relevant_base").get_to(c.env.relevant_base);
        if (e.contains("relevant_step")) e.at("relevant_step").get_to(c.env.relevant_step);
        if (e.contains("distractor_base")) e.at("distractor_base").get_to(c.env.distractor_base);
        if (e.contains("distractor_step")) e.at("distractor_step").get_to(c.env.distractor_step);
        if (e.contains("fused_noise")) e.at("fused_noise").get_to(c.env.fused_noise);
        if (e.contains("feature_gain")) e.at("feature_gain").get_to(c.env.feature_gain);
        if (e.contains("feature_noise")) e.at("feature_noise").get_to(c.env.feature_noise);
        if (e.contains("patch_noise")) e.at("patch_noise").get_to(c.env.patch_noise);
        if (e.contains("background_scale")) e.at("background_scale").get_to(c.env.background_scale);
        if (e.contains("max_retries")) e.at("max_retries").get_to(c.env.max_retries);
    }
    if (j.contains("regions")) {
        const auto& r = j.at("regions");
        reject_unknown(r, {"bank_size", "token_budget", "min_area_frac", "otsu_bins",
                           "kmeans_max_iter"},
                       "regions");
        if (r.contains("bank_size")) r.at("bank_size").get_to(c.regions.bank_size);
        if (r.contains("token_budget")) r.at("token_budget").get_to(c.regions.token_budget);
        if (r.contains("min_area_frac")) r.at("min_area_frac").get_to(c.regions.min_area_frac);
        if (r.contains("otsu_bins")) r.at("otsu_bins").get_to(c.regions.otsu_bins);
        if (r.contains("kmeans_max_iter")) r.at("kmeans_max_iter").get_to(c.regions.kmeans_max_iter);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t,
                       {"lr", "rl_lr", "group_size", "kl_weight", "reward_format", "reward_length",
                        "reward_vision", "e_warm", "sft_epochs", "sft_batch", "rl_steps",
                        "rl_batch", "eval_every", "allow_revisit", "sim_floor_enabled",
                        "sim_floor"},
                       "train");
        if (t.contains("lr")) t.at("lr").get_to(c.train.lr);
        if (t.contains("rl_lr")) t.at("rl_lr").get_to(c.train.rl_lr);
        if (t.contains("group_size")) t.at("group_size").get_to(c.train.group_size);
        if (t.contains("kl_weight")) t.at("kl_weight").get_to(c.train.kl_weight);
        if (t.contains("reward_format")) t.at("reward_format").get_to(c.train.rewards.format);
        if (t.contains("reward_length")) t.at("reward_length").get_to(c.train.rewards.length);
        if (t.contains("reward_vision")) t.at("reward_vision").get_to(c.train.rewards.vision);
        if (t.contains("e_warm")) t.at("e_warm").get_to(c.train.e_warm);
        if (t.contains("sft_epochs")) t.at("sft_epochs").get_to(c.train.sft_epochs);
        if (t.contains("sft_batch")) t.at("sft_batch").get_to(c.train.sft_batch);
        if (t.contains("rl_steps")) t.at("rl_steps").get_to(c.train.rl_steps);
        if (t.contains("rl_batch")) t.at("rl_batch").get_to(c.train.rl_batch);
        if (t.contains("eval_every")) t.at("eval_every").get_to(c.train.eval_every);
        if (t.contains("allow_revisit")) t.at("allow_revisit").get_to(c.train.policy.allow_revisit);
        if (t.contains("sim_floor_enabled"))
            t.at("sim_floor_enabled").get_to(c.train.policy.sim_floor_enabled);
        if (t.contains("sim_floor")) t.at("sim_floor").get_to(c.train.policy.sim_floor);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"n_train", "n_eval", "difficulty_min", "difficulty_max",
                           "max_distractors"},
                       "data");
        if (d.contains("n_train")) d.at("n_train").get_to(c.data.n_train);
        if (d.contains("n_eval")) d.at("n_eval").get_to(c.data.n_eval);
        if (d.contains("difficulty_min")) d.at("difficulty_min").get_to(c.data.difficulty_min);
        if (d.contains("difficulty_max")) d.at("difficulty_max").get_to(c.data.difficulty_max);
        if (d.contains("max_distractors")) d.at("max_distractors").get_to(c.data.max_distractors);
    }
}

}  // namespace ssv
