#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssv/training.hpp"

namespace fs = std::filesystem;
using namespace ssv;

namespace {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_threads_env() {
    const char* raw = std::getenv("SSV_THREADS");
    if (!raw) return;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || n < 1)
        throw config_error("SSV_THREADS must be a positive integer, got '" + std::string(raw) +
                           "'");
    // every module currently runs sequentially, so any positive cap is honored
}

nlohmann::json parse_override_value(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        return nlohmann::json(text);
    }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("config " + path + ": " + e.what());
    }
    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw config_error("--set expects key=value, got '" + kv + "'");
        std::string pointer = "/" + kv.substr(0, eq);
        for (char& c : pointer)
            if (c == '.') c = '/';
        j[nlohmann::json::json_pointer(pointer)] = parse_override_value(kv.substr(eq + 1));
    }
    ExperimentConfig config;
    try {
        from_json(j, config);
    } catch (const std::exception& e) {
        throw config_error("config " + path + ": " + e.what());
    }
    return config;
}

std::vector<TaskInstance> sample_tasks(const Environment& env, const ExperimentConfig& config,
                                       std::uint64_t stream, std::size_t n) {
    RngStream rng(config.seed, stream);
    std::vector<TaskInstance> tasks;
    tasks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t task_seed = rng.next_u64();
        const std::size_t difficulty =
            config.data.difficulty_min +
            rng.uniform_int(config.data.difficulty_max - config.data.difficulty_min + 1);
        const std::size_t distractors = rng.uniform_int(config.data.max_distractors + 1);
        tasks.push_back(generate_task(env, config.regions, task_seed, difficulty, distractors));
    }
    return tasks;
}

std::vector<TaskInstance> read_task_file(const std::string& path, const Environment& env,
                                         const ExperimentConfig& config) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open task file: " + path);
    std::vector<TaskInstance> tasks;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            tasks.push_back(task_from_json(nlohmann::json::parse(line), env, config.regions));
        } catch (const std::exception& e) {
            throw data_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return tasks;
}

PolicyParams load_policy(const std::string& path, const ExperimentConfig& config) {
    if (!fs::exists(path)) throw data_error("checkpoint not found: " + path);
    PolicyParams params;
    try {
        params = load_checkpoint(path);
    } catch (const std::exception& e) {
        throw data_error(std::string("checkpoint: ") + e.what());
    }
    if (params.dim_language() != config.env.dim_language ||
        params.dim_visual() != config.env.dim_visual)
        throw config_error("checkpoint " + path + " has dims " +
                           std::to_string(params.dim_language()) + "x" +
                           std::to_string(params.dim_visual()) +
                           ", config expects " + std::to_string(config.env.dim_language) + "x" +
                           std::to_string(config.env.dim_visual));
    return params;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_path, long n_tasks, std::uint64_t stream) {
    const ExperimentConfig config = load_config(config_path, sets);
    const Environment env = Environment::make(config.env, config.seed);
    const std::size_t n = n_tasks < 0 ? config.data.n_train : static_cast<std::size_t>(n_tasks);
    const std::vector<TaskInstance> tasks = sample_tasks(env, config, stream, n);

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
    for (const TaskInstance& task : tasks) {
        nlohmann::json j = task;
        out << j.dump() << "\n";
    }
    write_json(out_path + ".manifest.json", {{"format", "ssv-tasks-v1"},
                                             {"seed", config.seed},
                                             {"config_hash", config_hash(config)},
                                             {"stream", stream},
                                             {"n_tasks", n}});
    return 0;
}

// Shared by segment and render: resolve the input into a grid + saliency map.
struct SegmentInput {
    PatchGrid grid;
    SaliencyMap sal;
};

SegmentInput resolve_input(const std::string& task_path, const std::string& pgm_path,
                           const ExperimentConfig& config) {
    SegmentInput in;
    if (!task_path.empty()) {
        std::ifstream tf(task_path);
        if (!tf) throw data_error("cannot open task file: " + task_path);
        const Environment env = Environment::make(config.env, config.seed);
        try {
            const TaskInstance task =
                task_from_json(nlohmann::json::parse(tf), env, config.regions);
            in.grid = task.grid;
        } catch (const std::exception& e) {
            throw data_error(task_path + ": " + e.what());
        }
        in.sal = compute_saliency(in.grid);
        return in;
    }
    // PGM input: the image already is the (normalized) saliency heatmap and
    // each patch carries its gray value as a one-dimensional embedding.
    try {
        in.sal = read_pgm(pgm_path);
    } catch (const std::exception& e) {
        throw data_error(std::string("pgm: ") + e.what());
    }
    in.grid.height = in.sal.height;
    in.grid.width = in.sal.width;
    in.grid.query = {1.0};
    for (std::size_t p = 0; p < in.sal.normalized.size(); ++p) {
        in.grid.patch_embeddings.push_back({in.sal.raw[p]});
        in.grid.fused_embeddings.push_back({in.sal.raw[p]});
    }
    return in;
}

int cmd_segment(const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& task_path, const std::string& pgm_path,
                const std::string& out_dir, bool overlay_only) {
    const ExperimentConfig config = load_config(config_path, sets);
    const SegmentInput in = resolve_input(task_path, pgm_path, config);
    const RegionBank bank = build_region_bank(in.grid, in.sal, config.regions);

    fs::create_directories(out_dir);
    render_overlay((fs::path(out_dir) / "overlay.ppm").string(),
                   (fs::path(out_dir) / "legend.json").string(), in.sal, bank);
    if (!overlay_only) {
        nlohmann::json bj = bank;
        write_json((fs::path(out_dir) / "bank.json").string(), bj);
        write_pgm((fs::path(out_dir) / "saliency.pgm").string(), in.sal);
    }
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir, bool stage_sft, bool stage_rl,
              const std::string& init_path) {
    const ExperimentConfig config = load_config(config_path, sets);
    RunOptions options;
    options.stage_sft = stage_sft;
    options.stage_rl = stage_rl;
    PolicyParams init;
    if (!init_path.empty()) {
        init = load_policy(init_path, config);
        options.init = &init;
    }
    try {
        run_experiment(config, out_dir, options);
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    return 0;
}

OrderMode parse_order(const std::string& s) {
    if (s == "random") return OrderMode::random;
    if (s == "cognition") return OrderMode::cognition;
    throw config_error("order must be random or cognition, got '" + s + "'");
}

StructureMode parse_structure(const std::string& s) {
    if (s == "patch_subset") return StructureMode::patch_subset;
    if (s == "saliency_regions") return StructureMode::saliency_regions;
    throw config_error("structure must be patch_subset or saliency_regions, got '" + s + "'");
}

long parse_fixed_k(const std::string& s) {
    if (s == "adaptive") return -1;
    try {
        const long k = std::stol(s);
        if (k >= 1) return k;
    } catch (const std::exception&) {
    }
    throw config_error("fixed-k must be a positive integer or 'adaptive', got '" + s + "'");
}

int cmd_eval(const std::string& config_path, const std::vector<std::string>& sets,
             const std::string& ckpt_path, const std::string& tasks_path,
             const std::string& order, const std::string& structure, const std::string& fixed_k,
             bool full, const std::string& out_path) {
    const ExperimentConfig config = load_config(config_path, sets);
    const PolicyParams params = load_policy(ckpt_path, config);
    const Environment env = Environment::make(config.env, config.seed);
    const std::vector<TaskInstance> tasks = read_task_file(tasks_path, env, config);
    std::vector<RegionBank> banks;
    banks.reserve(tasks.size());
    for (const TaskInstance& t : tasks) banks.push_back(build_region_bank(t.grid, config.regions));

    auto run_one = [&](OrderMode om, StructureMode sm, long k) {
        EvalOptions opts;
        opts.order = om;
        opts.structure = sm;
        opts.fixed_k = k;
        opts.seed = config.seed;
        opts.policy = config.train.policy;
        nlohmann::json j;
        to_json(j, evaluate(params, env, tasks, banks, config.regions, config.train.rewards,
                            opts));
        j["order"] = om == OrderMode::cognition ? "cognition" : "random";
        j["structure"] = sm == StructureMode::saliency_regions ? "saliency_regions"
                                                               : "patch_subset";
        j["fixed_k"] = k < 0 ? nlohmann::json("adaptive") : nlohmann::json(k);
        return j;
    };

    nlohmann::json report{{"checkpoint", ckpt_path},
                          {"n_tasks", tasks.size()},
                          {"seed", config.seed},
                          {"config_hash", config_hash(config)},
                          {"result", run_one(parse_order(order), parse_structure(structure),
                                             parse_fixed_k(fixed_k))}};
    if (full) {
        nlohmann::json ablation = nlohmann::json::array();
        for (StructureMode sm : {StructureMode::saliency_regions, StructureMode::patch_subset})
            for (OrderMode om : {OrderMode::cognition, OrderMode::random})
                ablation.push_back(run_one(om, sm, -1));
        report["ablation"] = std::move(ablation);
        nlohmann::json budget = nlohmann::json::array();
        for (long k : {2L, 3L, 4L, -1L})
            budget.push_back(run_one(OrderMode::cognition, StructureMode::saliency_regions, k));
        report["budget"] = std::move(budget);
    }
    if (out_path.empty())
        std::cout << report.dump(2) << "\n";
    else
        write_json(out_path, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"question-conditioned region banks with a sequential visual access policy"};
    app.require_subcommand(1);

    std::string config_path, out_path, out_dir, task_path, pgm_path, ckpt_path, tasks_path;
    std::string order = "cognition", structure = "saliency_regions", fixed_k = "adaptive";
    std::string init_path;
    std::vector<std::string> sets;
    long n_tasks = -1;
    std::uint64_t stream = 100;
    bool full = false;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->add_option("--set", sets, "override config entries, e.g. train.lr=0.5");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "sample a task dataset (JSONL + manifest)");
    add_config(gen);
    gen->add_option("--out", out_path, "output JSONL path")->required();
    gen->add_option("--n-tasks", n_tasks, "number of tasks (default: data.n_train)");
    gen->add_option("--stream", stream, "RNG stream id (train=100, eval=200)");

    CLI::App* seg = app.add_subcommand("segment", "build a region bank and write artifacts");
    add_config(seg);
    seg->add_option("--task", task_path, "task JSON file");
    seg->add_option("--pgm", pgm_path, "saliency heatmap PGM (P5)");
    seg->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* ren = app.add_subcommand("render", "write the overlay PPM and legend only");
    add_config(ren);
    ren->add_option("--task", task_path, "task JSON file");
    ren->add_option("--pgm", pgm_path, "saliency heatmap PGM (P5)");
    ren->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* tr = app.add_subcommand("train", "run both training stages");
    add_config(tr);
    tr->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* trs = app.add_subcommand("train-sft", "run Stage I only");
    add_config(trs);
    trs->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* trr = app.add_subcommand("train-rl", "run Stage II from an SFT checkpoint");
    add_config(trr);
    trr->add_option("--out-dir", out_dir, "output directory")->required();
    trr->add_option("--init", init_path, "SFT checkpoint to resume from")->required();

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a task file");
    add_config(ev);
    ev->add_option("--checkpoint", ckpt_path, "policy checkpoint")->required();
    ev->add_option("--tasks", tasks_path, "task JSONL file")->required();
    ev->add_option("--order", order, "random | cognition");
    ev->add_option("--structure", structure, "patch_subset | saliency_regions");
    ev->add_option("--fixed-k", fixed_k, "2 | 3 | 4 | adaptive");
    ev->add_flag("--full", full, "also emit the structure x order and budget tables");
    ev->add_option("--out", out_path, "report path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        check_threads_env();
        if (gen->parsed()) return cmd_gen_data(config_path, sets, out_path, n_tasks, stream);
        if (seg->parsed() || ren->parsed()) {
            if (task_path.empty() == pgm_path.empty())
                throw config_error("exactly one of --task and --pgm is required");
            return cmd_segment(config_path, sets, task_path, pgm_path, out_dir, ren->parsed());
        }
        if (tr->parsed()) return cmd_train(config_path, sets, out_dir, true, true, "");
        if (trs->parsed()) return cmd_train(config_path, sets, out_dir, true, false, "");
        if (trr->parsed()) return cmd_train(config_path, sets, out_dir, false, true, init_path);
        if (ev->parsed())
            return cmd_eval(config_path, sets, ckpt_path, tasks_path, order, structure, fixed_k,
                            full, out_path);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
