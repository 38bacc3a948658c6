#include "ssv/envsim.hpp"

#include <algorithm>
#include <cmath>

namespace ssv {

namespace {

Vec random_unit(std::size_t dim, RngStream& rng) {
    Vec v(dim);
    double n = 0.0;
    while (n == 0.0) {
        for (double& x : v) x = rng.normal();
        n = norm(v);
    }
    for (double& x : v) x /= n;
    return v;
}

double spectral_norm(const Mat& m, std::size_t iters = 100) {
    Vec v(m.cols, 1.0 / std::sqrt(static_cast<double>(m.cols)));
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        Vec u = m.matvec(v);
        Vec w(m.cols, 0.0);  // w = M^T u
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c) w[c] += m.at(r, c) * u[r];
        const double nw = norm(w);
        if (nw == 0.0) return 0.0;
        for (double& x : w) x /= nw;
        v = w;
        sigma = norm(m.matvec(v));
    }
    return sigma;
}

Mat random_mat(std::size_t rows, std::size_t cols, double scale, RngStream& rng) {
    Mat m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

// component of x orthogonal to unit vector u, renormalized
Vec orthonormal_to(const Vec& u, RngStream& rng) {
    Vec v = random_unit(u.size(), rng);
    const double proj = dot(v, u);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * u[i];
    const double n = norm(v);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

ToyReasoner ToyReasoner::make(std::size_t dim_language, std::size_t dim_visual,
                              std::size_t classes, RngStream& rng) {
    ToyReasoner r;
    const double dl_scale = 1.0 / std::sqrt(static_cast<double>(dim_language));
    r.a = random_mat(dim_language, dim_language, dl_scale, rng);
    const double sa = spectral_norm(r.a);
    if (sa > 0.0)
        for (double& v : r.a.data) v *= 0.9 / sa;
    r.b = random_mat(dim_language, dim_language, dl_scale, rng);
    const double sb = spectral_norm(r.b);
    if (sb > 0.0)
        for (double& v : r.b.data) v /= sb;
    r.input_map = random_mat(dim_language, dim_visual,
                             1.0 / std::sqrt(static_cast<double>(dim_visual)), rng);
    r.readout = random_mat(classes, dim_language, dl_scale, rng);
    r.h0.resize(dim_language);
    for (double& v : r.h0) v = std::tanh(0.5 * rng.normal());
    return r;
}

Vec ToyReasoner::step(const Vec& h, const Vec& injected) const {
    const Vec drive = b.matvec(input_map.matvec(injected));
    Vec next = a.matvec(h);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::tanh(next[i] + drive[i]);
    return next;
}

std::size_t ToyReasoner::answer(const Vec& h) const {
    const Vec logits = readout.matvec(h);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

Environment Environment::make(const EnvConfig& config, std::uint64_t seed) {
    Environment env;
    env.config = config;
    RngStream rng(seed, /*stream_id=*/1);
    env.reasoner = ToyReasoner::make(config.dim_language, config.dim_visual, config.classes, rng);
    env.relevance_axis_a = random_unit(config.dim_visual, rng);
    env.relevance_axis_b = orthonormal_to(env.relevance_axis_a, rng);
    return env;
}

namespace {

struct BlockGeom {
    std::size_t row, col, h, w;
};

bool blocks_touch(const BlockGeom& a, const BlockGeom& b) {
    // touching under 8-connectivity (need a full empty ring between blocks)
    const bool row_sep = a.row > b.row + b.h || b.row > a.row + a.h;
    const bool col_sep = a.col > b.col + b.w || b.col > a.col + a.w;
    return !(row_sep || col_sep);
}

// One generation attempt; returns false when placement fails or the planted
// blocks collide.
bool try_generate(const Environment& env, RngStream& rng, std::size_t difficulty,
                  std::size_t n_distractors, TaskInstance& out) {
    const EnvConfig& cfg = env.config;
    const std::size_t n_blocks = difficulty + n_distractors;

    std::vector<BlockGeom> geoms;
    for (std::size_t bidx = 0; bidx < n_blocks; ++bidx) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < 32 && !placed; ++attempt) {
            BlockGeom g;
            g.h = cfg.block_side_min + rng.uniform_int(cfg.block_side_max - cfg.block_side_min + 1);
            g.w = cfg.block_side_min + rng.uniform_int(cfg.block_side_max - cfg.block_side_min + 1);
            g.row = rng.uniform_int(cfg.height - g.h + 1);
            g.col = rng.uniform_int(cfg.width - g.w + 1);
            placed = std::none_of(geoms.begin(), geoms.end(),
                                  [&g](const BlockGeom& other) { return blocks_touch(g, other); });
            if (placed) geoms.push_back(g);
        }
        if (!placed) return false;
    }

    const Vec query = random_unit(cfg.dim_language, rng);

    out.difficulty = difficulty;
    out.n_distractors = n_distractors;
    out.planted.clear();
    out.grid.height = cfg.height;
    out.grid.width = cfg.width;
    out.grid.query = query;
    out.grid.patch_embeddings.assign(cfg.height * cfg.width, Vec());
    out.grid.fused_embeddings.assign(cfg.height * cfg.width, Vec());

    // background first
    for (std::size_t p = 0; p < cfg.height * cfg.width; ++p) {
        Vec z(cfg.dim_visual);
        for (double& v : z) v = cfg.background_scale * rng.normal();
        out.grid.patch_embeddings[p] = std::move(z);
        Vec zf(cfg.dim_language);
        for (double& v : zf) v = rng.normal();
        const double n = norm(zf);
        for (double& v : zf) v /= n;
        out.grid.fused_embeddings[p] = std::move(zf);
    }

    for (std::size_t bidx = 0; bidx < n_blocks; ++bidx) {
        PlantedBlock block;
        block.row = geoms[bidx].row;
        block.col = geoms[bidx].col;
        block.height = geoms[bidx].h;
        block.width = geoms[bidx].w;
        block.rank = bidx;
        block.relevance =
            bidx < difficulty
                ? cfg.relevant_base - cfg.relevant_step * static_cast<double>(bidx)
                : cfg.distractor_base -
                      cfg.distractor_step * static_cast<double>(bidx - difficulty);
        block.relevance = std::clamp(block.relevance, 0.05, 1.0);

        // relevance encoded as an angle on the (a, b) plane so it survives
        // the cosine's scale invariance; per-block content lives off that
        // plane so it diversifies answers without disturbing the ranking
        const double angle = (1.0 - block.relevance) * M_PI / 2.0;
        Vec content(cfg.dim_visual);
        for (double& v : content) v = cfg.feature_noise * rng.normal();
        const double ca = dot(content, env.relevance_axis_a);
        const double cb = dot(content, env.relevance_axis_b);
        block.feature.assign(cfg.dim_visual, 0.0);
        for (std::size_t d = 0; d < cfg.dim_visual; ++d)
            block.feature[d] = cfg.feature_gain * (std::cos(angle) * env.relevance_axis_a[d] +
                                                   std::sin(angle) * env.relevance_axis_b[d]) +
                               content[d] - ca * env.relevance_axis_a[d] -
                               cb * env.relevance_axis_b[d];

        // fused embeddings with controlled cosine to the query
        const double c = std::clamp(0.2 + 0.75 * block.relevance, -1.0, 1.0);
        const Vec off_axis = orthonormal_to(query, rng);
        for (std::size_t r = block.row; r < block.row + block.height; ++r) {
            for (std::size_t col = block.col; col < block.col + block.width; ++col) {
                const std::size_t p = out.grid.index(r, col);
                for (std::size_t d = 0; d < cfg.dim_visual; ++d)
                    out.grid.patch_embeddings[p][d] =
                        block.feature[d] + cfg.patch_noise * rng.normal();
                for (std::size_t d = 0; d < cfg.dim_language; ++d)
                    out.grid.fused_embeddings[p][d] = c * query[d] +
                                                      std::sqrt(1.0 - c * c) * off_axis[d] +
                                                      cfg.fused_noise * rng.normal();
            }
        }
        out.planted.push_back(std::move(block));
    }

    // gold answer: required features injected in rank order
    Vec h = env.reasoner.h0;
    for (std::size_t r = 0; r < difficulty; ++r) h = env.reasoner.step(h, out.planted[r].feature);
    out.gold_answer = env.reasoner.answer(h);
    return true;
}

// The bank's rank-ordered rollout must reproduce the gold answer, so a
// perfect policy scores 100% task reward on accepted instances.
bool bank_oracle_matches(const Environment& env, const RegionConfig& region_config,
                         const TaskInstance& task) {
    const RegionBank bank = build_region_bank(task.grid, region_config);
    if (bank.regions.size() < task.difficulty) return false;
    Vec h = env.reasoner.h0;
    for (std::size_t k = 0; k < task.difficulty; ++k)
        h = env.reasoner.step(h, bank.regions[k].mean_token());
    return env.reasoner.answer(h) == task.gold_answer;
}

}  // namespace

TaskInstance generate_task(const Environment& env, const RegionConfig& region_config,
                           std::uint64_t task_seed, std::size_t difficulty,
                           std::size_t n_distractors) {
    if (difficulty < 1) throw std::invalid_argument("generate_task: difficulty >= 1 required");
    const std::size_t max_area = env.config.block_side_max * env.config.block_side_max;
    if ((difficulty + n_distractors) * max_area > env.config.height * env.config.width)
        throw std::invalid_argument("generate_task: blocks cannot fit the grid");

    for (std::size_t retry = 0; retry < env.config.max_retries; ++retry) {
        RngStream rng(task_seed, /*stream_id=*/retry + 2);
        TaskInstance task;
        task.task_seed = task_seed;
        if (!try_generate(env, rng, difficulty, n_distractors, task)) continue;
        if (!bank_oracle_matches(env, region_config, task)) continue;
        return task;
    }
    throw std::runtime_error("generate_task: no solvable instance after bounded retries");
}

Trajectory rollout_with(const PolicyParams& params, const ToyReasoner& reasoner,
                        const RegionBank& bank, const ActionChooser& choose,
                        std::size_t cap, const PolicyConfig& config) {
    if (cap < 1) throw std::invalid_argument("rollout: cap >= 1 required");
    Trajectory traj;
    ReasoningState state{reasoner.h0, 1, {}};
    Vec h = reasoner.h0;
    for (std::size_t step = 0; step < cap; ++step) {
        const ActionDistribution dist = score_actions(params, state, bank, config);
        const Action action = choose(dist, state);
        traj.steps.push_back({state, action, log_prob(dist, action)});
        if (action.is_stop) {
            traj.stopped_explicitly = true;
            break;
        }
        h = reasoner.step(h, bank.slot_embedding(action.index));
        state.h = h;
        state.t += 1;
        state.visited.insert(action.index);
    }
    traj.predicted_answer = reasoner.answer(h);
    return traj;
}

Trajectory rollout(const PolicyParams& params, const ToyReasoner& reasoner,
                   const RegionBank& bank, RngStream& rng, std::size_t cap,
                   const PolicyConfig& config) {
    return rollout_with(
        params, reasoner, bank,
        [&rng](const ActionDistribution& dist, const ReasoningState&) {
            return sample_action(dist, rng);
        },
        cap, config);
}

Trajectory rollout_greedy(const PolicyParams& params, const ToyReasoner& reasoner,
                          const RegionBank& bank, std::size_t cap,
                          const PolicyConfig& config) {
    return rollout_with(
        params, reasoner, bank,
        [](const ActionDistribution& dist, const ReasoningState&) {
            return greedy_action(dist);
        },
        cap, config);
}

Trajectory rollout_random(const PolicyParams& params, const ToyReasoner& reasoner,
                          const RegionBank& bank, RngStream& rng, std::size_t cap,
                          const PolicyConfig& config) {
    return rollout_with(
        params, reasoner, bank,
        [&rng](const ActionDistribution& dist, const ReasoningState&) {
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < dist.probs.size(); ++i)
                if (dist.probs[i] > 0.0) open.push_back(i);
            const std::size_t pick = open[rng.uniform_int(open.size())];
            return pick == dist.stop_index() ? Action::stop() : Action::select(pick);
        },
        cap, config);
}

RewardBreakdown compute_reward(const Trajectory& traj, const TaskInstance& task,
                               const RewardWeights& weights) {
    RewardBreakdown rb;
    rb.r_task = traj.predicted_answer == task.gold_answer ? 1 : 0;
    rb.r_format = traj.stopped_explicitly ? 1 : 0;
    rb.length_tokens = traj.steps.size();
    for (const auto& step : traj.steps)
        if (!step.action.is_stop) ++rb.vision_steps;
    rb.total = static_cast<double>(rb.r_task) + weights.format * rb.r_format -
               weights.length * static_cast<double>(rb.length_tokens) -
               weights.vision * static_cast<double>(rb.vision_steps);
    return rb;
}

void to_json(nlohmann::json& j, const TaskInstance& task) {
    nlohmann::json planted = nlohmann::json::array();
    for (const auto& block : task.planted)
        planted.push_back({{"row", block.row},
                           {"col", block.col},
                           {"height", block.height},
                           {"width", block.width},
                           {"rank", block.rank},
                           {"relevance", block.relevance}});
    j = nlohmann::json{{"task_seed", task.task_seed},
                       {"difficulty", task.difficulty},
                       {"n_distractors", task.n_distractors},
                       {"gold_answer", task.gold_answer},
                       {"planted", std::move(planted)}};
}

TaskInstance task_from_json(const nlohmann::json& j, const Environment& env,
                            const RegionConfig& region_config) {
    TaskInstance task = generate_task(env, region_config, j.at("task_seed").get<std::uint64_t>(),
                                      j.at("difficulty").get<std::size_t>(),
                                      j.at("n_distractors").get<std::size_t>());
    if (task.gold_answer != j.at("gold_answer").get<std::size_t>())
        throw std::runtime_error(
            "task_from_json: regenerated task disagrees with stored gold answer "
            "(environment seed or config mismatch)");
    return task;
}

void to_json(nlohmann::json& j, const Trajectory& traj) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : traj.steps)
        steps.push_back({{"t", step.state.t},
                         {"action", step.action.is_stop ? nlohmann::json("stop")
                                                        : nlohmann::json(step.action.index)},
                         {"log_prob", step.log_prob}});
    j = nlohmann::json{{"steps", std::move(steps)},
                       {"predicted_answer", traj.predicted_answer},
                       {"stopped_explicitly", traj.stopped_explicitly},
                       {"reward",
                        {{"r_task", traj.reward.r_task},
                         {"r_format", traj.reward.r_format},
                         {"length_tokens", traj.reward.length_tokens},
                         {"vision_steps", traj.reward.vision_steps},
                         {"total", traj.reward.total}}}};
}

}  // namespace ssv
