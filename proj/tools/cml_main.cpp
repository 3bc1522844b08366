// Command-line interface: dataset generation, training, ablation grids,
// verification / clustering evaluation, and gradient checking.
//
// Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cml/config_json.hpp"
#include "cml/datagen.hpp"
#include "cml/encoder.hpp"
#include "cml/eval.hpp"
#include "cml/gradcheck.hpp"
#include "cml/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using cml::Json;

std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("CML_SEED");
    if (!env || !*env) return std::nullopt;
    return std::strtoull(env, nullptr, 10);
}

// Every output file F gets a sibling F.config.json recording the effective
// configuration that produced it.
void dump_effective_config(const Json& config, const std::string& out_path) {
    cml::write_json_file(config, out_path + ".config.json");
}

struct SeedFlag {
    std::optional<std::uint64_t> value;
};

void add_seed_flag(CLI::App* cmd, SeedFlag& seed) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&seed](std::uint64_t v) { seed.value = v; },
        "Override the run seed (falls back to config file, then CML_SEED)");
}

std::uint64_t pick_seed(const SeedFlag& flag, bool seed_in_json, std::uint64_t json_seed,
                        std::uint64_t fallback) {
    if (flag.value) return *flag.value;
    if (seed_in_json) return json_seed;
    if (const auto env = env_seed()) return *env;
    return fallback;
}

cml::TrainConfig load_train_config(const std::string& path, const SeedFlag& seed_flag) {
    Json j = path.empty() ? Json::object() : cml::load_json_file(path);
    bool seed_in_json = false;
    cml::TrainConfig config = cml::train_config_from_json(j, &seed_in_json);
    config.seed = pick_seed(seed_flag, seed_in_json, config.seed, config.seed);
    return config;
}

// Dataset provider for the harness commands: a fixed dataset file is split
// per seed; otherwise each seed generates its own synthetic dataset from the
// config's "data" section.
cml::DatasetProvider make_provider(const std::string& config_path, const std::string& data_path,
                                   const cml::TrainConfig& config) {
    if (!data_path.empty()) {
        cml::Dataset fixed = cml::read_dataset(data_path);
        const double frac = config.train_frac;
        return [fixed, frac](std::uint64_t seed) {
            cml::Rng rng(seed, 41);
            return cml::split(fixed, frac, rng);
        };
    }
    Json j = config_path.empty() ? Json::object() : cml::load_json_file(config_path);
    cml::SynthSpec spec;
    if (j.contains("data")) {
        spec = cml::synth_spec_from_json(j.at("data"));
    } else {
        spec.sigma = cml::ramped_sigma(spec.num_classes, 0.1, 0.8);
    }
    const double frac = config.train_frac;
    return [spec, frac](std::uint64_t seed) {
        cml::SynthSpec seeded = spec;
        seeded.seed = seed;
        cml::Dataset ds = cml::generate(seeded);
        cml::Rng rng(seed, 41);
        return cml::split(ds, frac, rng);
    };
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string token;
    for (char ch : csv) {
        if (ch == ',') {
            if (!token.empty()) out.push_back(token);
            token.clear();
        } else {
            token += ch;
        }
    }
    if (!token.empty()) out.push_back(token);
    return out;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path,
                 const std::string& csv_path, const SeedFlag& seed_flag) {
    Json j = spec_path.empty() ? Json::object() : cml::load_json_file(spec_path);
    bool seed_in_json = false;
    cml::SynthSpec spec = cml::synth_spec_from_json(j, &seed_in_json);
    spec.seed = pick_seed(seed_flag, seed_in_json, spec.seed, spec.seed);

    const cml::Dataset ds = cml::generate(spec);
    cml::write_dataset(ds, out_path);
    if (!csv_path.empty()) cml::write_dataset_csv(ds, csv_path);
    dump_effective_config(cml::to_json(spec), out_path);
    std::cout << "wrote " << ds.size() << " samples (" << spec.num_classes << " classes, dim "
              << spec.input_dim << ") to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const SeedFlag& seed_flag, double split_frac,
              const Json& overrides) {
    Json j = config_path.empty() ? Json::object() : cml::load_json_file(config_path);
    j.update(overrides);
    bool seed_in_json = false;
    cml::TrainConfig config = cml::train_config_from_json(j, &seed_in_json);
    config.seed = pick_seed(seed_flag, seed_in_json || overrides.contains("seed"), config.seed,
                            config.seed);
    if (config.checkpoint_every == 0) config.checkpoint_every = 1;

    const cml::Dataset full = cml::read_dataset(data_path);
    cml::Dataset train_split = full;
    cml::Dataset eval_split;
    const cml::Dataset* eval_ptr = nullptr;
    if (split_frac > 0.0) {
        cml::Rng rng(config.seed, 41);
        cml::SplitResult sr = cml::split(full, split_frac, rng);
        train_split = std::move(sr.train);
        eval_split = std::move(sr.eval);
        eval_ptr = &eval_split;
    }

    fs::create_directories(out_dir);
    cml::write_json_file(cml::to_json(config), (fs::path(out_dir) / "effective_config.json").string());

    cml::TrainCallbacks callbacks;
    callbacks.on_checkpoint = [&](std::size_t epoch, const cml::MlpModel& model) {
        char name[48];
        std::snprintf(name, sizeof(name), "checkpoint_epoch_%03zu.cmlm", epoch);
        cml::save_checkpoint(model, (fs::path(out_dir) / name).string());
    };

    const cml::TrainResult result = cml::train(config, train_split, eval_ptr, &callbacks);

    cml::save_checkpoint(result.model, (fs::path(out_dir) / "model.cmlm").string());

    {
        std::ofstream log_out(fs::path(out_dir) / "train_log.jsonl");
        std::size_t epoch_cursor = 0;
        for (const auto& rec : result.log.iterations) {
            while (epoch_cursor < result.log.epochs.size() &&
                   result.log.epochs[epoch_cursor].epoch < rec.epoch) {
                log_out << cml::to_json(result.log.epochs[epoch_cursor]).dump() << "\n";
                ++epoch_cursor;
            }
            log_out << cml::to_json(rec).dump() << "\n";
        }
        for (; epoch_cursor < result.log.epochs.size(); ++epoch_cursor)
            log_out << cml::to_json(result.log.epochs[epoch_cursor]).dump() << "\n";
    }
    {
        std::ofstream debug_out(fs::path(out_dir) / "cluster_debug.jsonl");
        for (const auto& rec : result.log.cluster_debug)
            debug_out << cml::to_json(rec).dump() << "\n";
    }

    Json summary;
    summary["timestamp"] = cml::iso_timestamp();
    summary["seed"] = config.seed;
    summary["ablation"] = config.ablation;
    summary["epochs"] = config.epochs;
    summary["final_mean_loss"] = result.log.epochs.back().mean_total;
    summary["initial_mean_loss"] = result.log.epochs.front().mean_total;
    if (result.log.epochs.back().has_metrics)
        summary["eval"] = cml::to_json(result.log.epochs.back().metrics);
    summary["tau"] = result.tau.tau();
    summary["tau0"] = result.tau0.tau();
    cml::write_json_file(summary, (fs::path(out_dir) / "summary.json").string());

    std::cout << "final mean loss " << result.log.epochs.back().mean_total << " after "
              << config.epochs << " epochs; artifacts in " << out_dir << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_path,
               const std::string& settings_csv, std::size_t num_seeds,
               const std::string& out_path, const SeedFlag& seed_flag, std::size_t jobs) {
    cml::TrainConfig config = load_train_config(config_path, seed_flag);
    const auto settings = split_csv(settings_csv);
    if (settings.empty()) throw cml::UnknownSettingError("ablate: no settings given");
    const auto provider = make_provider(config_path, data_path, config);

    const cml::HarnessTable table =
        cml::ablation_run(config, settings, num_seeds, provider, jobs);

    Json j = cml::to_json(table);
    j["timestamp"] = cml::iso_timestamp();
    j["seeds"] = num_seeds;
    j["base_seed"] = config.seed;
    cml::write_json_file(j, out_path);
    dump_effective_config(cml::to_json(config), out_path);

    for (const auto& row : table.rows)
        std::cout << row.name << ": median NMI " << row.median_nmi << ", median margin "
                  << row.median_margin << "\n";
    return 0;
}

int cmd_compare_losses(const std::string& config_path, const std::string& data_path,
                       const std::string& variants_csv, std::size_t num_seeds,
                       const std::string& out_path, const SeedFlag& seed_flag,
                       std::size_t jobs) {
    cml::TrainConfig config = load_train_config(config_path, seed_flag);
    const auto variants = split_csv(variants_csv);
    if (variants.empty()) throw cml::UnknownSettingError("compare-losses: no variants given");
    const auto provider = make_provider(config_path, data_path, config);

    const cml::HarnessTable table =
        cml::compare_losses(config, variants, num_seeds, provider, jobs);

    Json j = cml::to_json(table);
    j["timestamp"] = cml::iso_timestamp();
    j["seeds"] = num_seeds;
    j["base_seed"] = config.seed;
    cml::write_json_file(j, out_path);
    dump_effective_config(cml::to_json(config), out_path);

    for (const auto& row : table.rows)
        std::cout << row.name << ": median NMI " << row.median_nmi << ", median margin "
                  << row.median_margin << "\n";
    return 0;
}

int cmd_eval_verify(const std::string& model_path, const std::string& data_path,
                    const std::string& out_path, const std::string& hist_path,
                    std::size_t num_pos, std::size_t num_neg, const SeedFlag& seed_flag) {
    const cml::MlpModel model = cml::load_checkpoint(model_path);
    const cml::Dataset ds = cml::read_dataset(data_path);
    const std::uint64_t seed = pick_seed(seed_flag, false, 0, env_seed().value_or(1));

    cml::Rng rng(seed, 37);
    const auto pairs = cml::make_pairs(ds.labels, num_pos, num_neg, rng);
    const cml::VerificationReport report = cml::verification_eval(model, ds.inputs, pairs);

    Json j = cml::to_json(report);
    j["timestamp"] = cml::iso_timestamp();
    j["seed"] = seed;
    cml::write_json_file(j, out_path);
    dump_effective_config(Json{{"model", model_path}, {"data", data_path},
                               {"num_pos", num_pos}, {"num_neg", num_neg}, {"seed", seed}},
                          out_path);

    if (!hist_path.empty()) {
        std::ofstream hist(hist_path);
        if (!hist) throw cml::IoError("cannot open " + hist_path);
        hist << "bin_left,bin_right,pos_count,neg_count\n";
        const double width = report.bin_left.size() > 1
                                 ? report.bin_left[1] - report.bin_left[0]
                                 : 2.0;
        hist.precision(17);
        for (std::size_t b = 0; b < report.bin_left.size(); ++b)
            hist << report.bin_left[b] << ',' << report.bin_left[b] + width << ','
                 << report.pos_counts[b] << ',' << report.neg_counts[b] << "\n";
    }

    std::cout << "margin " << report.margin << " (mu_pos " << report.mu_pos << ", mu_neg "
              << report.mu_neg << "), best accuracy " << report.best_accuracy << "\n";
    return 0;
}

int cmd_eval_cluster(const std::string& model_path, const std::string& data_path,
                     const std::string& method, long long k_opt, double eps,
                     std::size_t min_pts, const std::string& out_path,
                     const SeedFlag& seed_flag) {
    const cml::MlpModel model = cml::load_checkpoint(model_path);
    const cml::Dataset ds = cml::read_dataset(data_path);
    const std::uint64_t seed = pick_seed(seed_flag, false, 0, env_seed().value_or(1));

    std::vector<cml::Vec> embeddings(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        embeddings[i] = cml::forward(model, ds.inputs[i]);

    Json j;
    cml::ClusteringResult clusters;
    if (method == "kmeans") {
        const std::size_t k = k_opt > 0 ? static_cast<std::size_t>(k_opt)
                                        : static_cast<std::size_t>(ds.num_classes());
        cml::Rng rng(seed, 31);
        clusters = cml::kmeans(embeddings, k, 100, rng);
        j["method"] = "kmeans";
        j["k"] = k;
    } else if (method == "dbscan") {
        clusters = cml::dbscan(embeddings, eps, min_pts);
        j["method"] = "dbscan";
        j["eps"] = eps;
        j["min_pts"] = min_pts;
    } else {
        throw cml::InvalidParamsError("eval-cluster: unknown method " + method);
    }

    const double score_nmi = cml::nmi(clusters, ds.labels);
    const cml::BCubedScore bc = cml::bcubed_f(clusters, ds.labels);
    std::size_t noise = 0;
    for (int a : clusters.assignment)
        if (a < 0) ++noise;

    j["timestamp"] = cml::iso_timestamp();
    j["seed"] = seed;
    j["num_clusters"] = clusters.num_clusters;
    j["num_noise"] = noise;
    j["nmi"] = score_nmi;
    j["bcubed_p"] = bc.precision;
    j["bcubed_r"] = bc.recall;
    j["bcubed_f"] = bc.f;
    cml::write_json_file(j, out_path);
    dump_effective_config(Json{{"model", model_path}, {"data", data_path}, {"method", method},
                               {"seed", seed}},
                          out_path);

    std::cout << method << ": NMI " << score_nmi << ", BCubed F " << bc.f << " ("
              << clusters.num_clusters << " clusters, " << noise << " noise)\n";
    return 0;
}

int cmd_gradcheck(const std::string& loss_name, std::size_t num_seeds, double h,
                  const std::string& out_path, const SeedFlag& seed_flag) {
    const std::uint64_t base_seed = pick_seed(seed_flag, false, 0, env_seed().value_or(1));

    std::vector<std::string> names;
    if (loss_name == "all") {
        names = {"arcface", "cg-arcface", "clu-con", "clu-con-fixed",
                 "clu-ali", "center", "triplet", "encoder"};
    } else {
        names = {loss_name};
    }

    Json per_loss = Json::object();
    double overall_max = 0.0;
    for (const std::string& name : names) {
        double worst = 0.0;
        std::string worst_block;
        for (std::size_t s = 0; s < num_seeds; ++s) {
            const cml::GradCheckReport report =
                (name == "encoder")
                    ? cml::gradcheck_encoder(base_seed + s, h)
                    : cml::gradcheck_loss_instance(cml::loss_kind_from_name(name),
                                                   base_seed + s, h);
            if (report.max_rel_err > worst) {
                worst = report.max_rel_err;
                for (const auto& block : report.blocks)
                    if (block.max_rel_err == report.max_rel_err) worst_block = block.name;
            }
        }
        per_loss[name] = {{"max_rel_err", worst}, {"worst_block", worst_block}};
        overall_max = std::max(overall_max, worst);
        std::cout << name << ": max rel err " << worst << "\n";
    }

    const bool pass = overall_max < 1e-4;
    if (!out_path.empty()) {
        Json j;
        j["timestamp"] = cml::iso_timestamp();
        j["seed"] = base_seed;
        j["seeds"] = num_seeds;
        j["h"] = h;
        j["per_loss"] = per_loss;
        j["max_rel_err"] = overall_max;
        j["pass"] = pass;
        cml::write_json_file(j, out_path);
    }
    std::cout << (pass ? "PASS" : "FAIL") << " (max rel err " << overall_max << ")\n";
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint margin-classification + contrastive-clustering trainer"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset");
    std::string gen_spec, gen_out, gen_csv;
    SeedFlag gen_seed;
    gen->add_option("--spec", gen_spec, "Dataset spec JSON (defaults apply when omitted)");
    gen->add_option("--out", gen_out, "Output dataset file (binary)")->required();
    gen->add_option("--csv", gen_csv, "Also export CSV to this path");
    add_seed_flag(gen, gen_seed);

    // train
    auto* tr = app.add_subcommand("train", "Train on a dataset file");
    std::string tr_config, tr_data, tr_out;
    SeedFlag tr_seed;
    double tr_split = 0.0;
    Json tr_overrides = Json::object();
    tr->add_option("--config", tr_config, "Train config JSON");
    tr->add_option("--data", tr_data, "Dataset file")->required();
    tr->add_option("--out-dir", tr_out, "Output directory")->required();
    tr->add_option("--split", tr_split,
                   "Hold out this fraction's complement for eval (e.g. 0.8 trains on 80%)");
    tr->add_option_function<std::size_t>(
        "--epochs", [&tr_overrides](std::size_t v) { tr_overrides["epochs"] = v; },
        "Override epochs");
    tr->add_option_function<std::size_t>(
        "--batch-size", [&tr_overrides](std::size_t v) { tr_overrides["batch_size"] = v; },
        "Override batch size");
    tr->add_option_function<std::string>(
        "--ablation", [&tr_overrides](const std::string& v) { tr_overrides["ablation"] = v; },
        "Ablation setting (baseline, 1..6)");
    tr->add_option_function<std::size_t>(
        "--threads", [&tr_overrides](std::size_t v) { tr_overrides["threads"] = v; },
        "Worker threads inside the trainer");
    add_seed_flag(tr, tr_seed);

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
    std::string ab_config, ab_data, ab_settings = "baseline,1,2,3,4,5,6", ab_out;
    std::size_t ab_seeds = 5, ab_jobs = 1;
    SeedFlag ab_seed;
    ab->add_option("--config", ab_config, "Train config JSON (its \"data\" section feeds the runs)");
    ab->add_option("--data", ab_data, "Fixed dataset file (otherwise per-seed synthetic data)");
    ab->add_option("--settings", ab_settings, "Comma-separated settings (baseline,1..6)");
    ab->add_option("--seeds", ab_seeds, "Number of seeds per setting");
    ab->add_option("--out", ab_out, "Output table JSON")->required();
    ab->add_option("--jobs", ab_jobs, "Concurrent training runs");
    add_seed_flag(ab, ab_seed);

    // compare-losses
    auto* cmp = app.add_subcommand("compare-losses",
                                   "Swap the contrastive slot between loss variants");
    std::string cmp_config, cmp_data, cmp_variants = "clu_con,center,triplet", cmp_out;
    std::size_t cmp_seeds = 5, cmp_jobs = 1;
    SeedFlag cmp_seed;
    cmp->add_option("--config", cmp_config, "Train config JSON");
    cmp->add_option("--data", cmp_data, "Fixed dataset file");
    cmp->add_option("--variants", cmp_variants,
                    "Comma-separated: clu_con, clu_con_fixed, center, triplet");
    cmp->add_option("--seeds", cmp_seeds, "Number of seeds per variant");
    cmp->add_option("--out", cmp_out, "Output table JSON")->required();
    cmp->add_option("--jobs", cmp_jobs, "Concurrent training runs");
    add_seed_flag(cmp, cmp_seed);

    // eval-verify
    auto* ev = app.add_subcommand("eval-verify", "Pairwise verification report");
    std::string ev_model, ev_data, ev_out, ev_hist;
    std::size_t ev_pos = 2000, ev_neg = 2000;
    SeedFlag ev_seed;
    ev->add_option("--model", ev_model, "Model checkpoint")->required();
    ev->add_option("--data", ev_data, "Dataset file")->required();
    ev->add_option("--out", ev_out, "Output report JSON")->required();
    ev->add_option("--hist", ev_hist, "Histogram CSV path");
    ev->add_option("--num-pos", ev_pos, "Positive pairs to sample");
    ev->add_option("--num-neg", ev_neg, "Negative pairs to sample");
    add_seed_flag(ev, ev_seed);

    // eval-cluster
    auto* ec = app.add_subcommand("eval-cluster", "Cluster embeddings and score the partition");
    std::string ec_model, ec_data, ec_method = "kmeans", ec_out;
    long long ec_k = 0;
    double ec_eps = 0.5;
    std::size_t ec_min_pts = 5;
    SeedFlag ec_seed;
    ec->add_option("--model", ec_model, "Model checkpoint")->required();
    ec->add_option("--data", ec_data, "Dataset file")->required();
    ec->add_option("--method", ec_method, "kmeans or dbscan");
    ec->add_option("--k", ec_k, "k for k-means (default: ground-truth class count)");
    ec->add_option("--eps", ec_eps, "DBSCAN eps");
    ec->add_option("--min-pts", ec_min_pts, "DBSCAN min_pts");
    ec->add_option("--out", ec_out, "Output report JSON")->required();
    add_seed_flag(ec, ec_seed);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    std::string gc_loss = "all", gc_out;
    std::size_t gc_seeds = 100;
    double gc_h = 1e-5;
    SeedFlag gc_seed;
    gc->add_option("--loss", gc_loss,
                   "arcface | cg-arcface | clu-con | clu-con-fixed | clu-ali | center | "
                   "triplet | encoder | all");
    gc->add_option("--seeds", gc_seeds, "Random instances per loss");
    gc->add_option("--step", gc_h, "Finite-difference step h");
    gc->add_option("--out", gc_out, "Report JSON path");
    add_seed_flag(gc, gc_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_spec, gen_out, gen_csv, gen_seed);
        if (tr->parsed())
            return cmd_train(tr_config, tr_data, tr_out, tr_seed, tr_split, tr_overrides);
        if (ab->parsed())
            return cmd_ablate(ab_config, ab_data, ab_settings, ab_seeds, ab_out, ab_seed, ab_jobs);
        if (cmp->parsed())
            return cmd_compare_losses(cmp_config, cmp_data, cmp_variants, cmp_seeds, cmp_out,
                                      cmp_seed, cmp_jobs);
        if (ev->parsed())
            return cmd_eval_verify(ev_model, ev_data, ev_out, ev_hist, ev_pos, ev_neg, ev_seed);
        if (ec->parsed())
            return cmd_eval_cluster(ec_model, ec_data, ec_method, ec_k, ec_eps, ec_min_pts,
                                    ec_out, ec_seed);
        if (gc->parsed())
            return cmd_gradcheck(gc_loss, gc_seeds, gc_h, gc_out, gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
