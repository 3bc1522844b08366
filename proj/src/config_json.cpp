#include "cml/config_json.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

namespace cml {

namespace {

std::string slot_name(ContrastiveSlot slot) {
    switch (slot) {
        case ContrastiveSlot::CluCon: return "clu_con";
        case ContrastiveSlot::Center: return "center";
        case ContrastiveSlot::Triplet: return "triplet";
    }
    throw ConfigInvalidError("bad contrastive slot");
}

ContrastiveSlot slot_from_name(const std::string& name) {
    if (name == "clu_con") return ContrastiveSlot::CluCon;
    if (name == "center") return ContrastiveSlot::Center;
    if (name == "triplet") return ContrastiveSlot::Triplet;
    throw ConfigInvalidError("config: unknown contrastive_slot " + name);
}

template <typename T>
void maybe(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json to_json(const TrainConfig& c) {
    Json j;
    j["profile"] = c.profile;
    j["embedding_dim"] = c.embedding_dim;
    j["batch_size"] = c.batch_size;
    j["queue_capacity"] = c.queue_capacity;
    j["momentum_encoder"] = c.momentum_encoder;
    j["momentum_center"] = c.momentum_center;
    j["alpha"] = c.alpha;
    j["num_sampled_classes"] = c.num_sampled_classes;
    j["margin"] = c.margin;
    j["scale"] = c.scale;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["base_lr"] = c.base_lr;
    j["lr_milestones"] = c.lr_milestones;
    j["epochs"] = c.epochs;
    j["warmup_iters"] = c.warmup_iters;
    j["seed"] = c.seed;
    j["ablation"] = c.ablation;
    j["cg_margin"] = c.cg_margin;
    j["contrastive"] = c.contrastive;
    j["aligning"] = c.aligning;
    j["contrastive_slot"] = slot_name(c.contrastive_slot);
    j["temp_mode"] = c.temp_mode == TempMode::Adaptive ? "adaptive" : "fixed";
    j["tau_init"] = c.tau_init;
    j["triplet_margin"] = c.triplet_margin;
    j["hidden_dims"] = c.hidden_dims;
    j["train_frac"] = c.train_frac;
    j["threads"] = c.threads;
    j["eval_every"] = c.eval_every;
    j["checkpoint_every"] = c.checkpoint_every;
    return j;
}

TrainConfig train_config_from_json(const Json& j, bool* seed_in_json) {
    TrainConfig c = TrainConfig::desk_profile();
    if (j.contains("profile")) {
        const auto profile = j.at("profile").get<std::string>();
        if (profile == "paper") c = TrainConfig::paper_profile();
        else if (profile != "desk") throw ConfigInvalidError("config: unknown profile " + profile);
    }
    maybe(j, "embedding_dim", c.embedding_dim);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "queue_capacity", c.queue_capacity);
    maybe(j, "momentum_encoder", c.momentum_encoder);
    maybe(j, "momentum_center", c.momentum_center);
    maybe(j, "alpha", c.alpha);
    maybe(j, "num_sampled_classes", c.num_sampled_classes);
    maybe(j, "margin", c.margin);
    maybe(j, "scale", c.scale);
    maybe(j, "lambda1", c.lambda1);
    maybe(j, "lambda2", c.lambda2);
    maybe(j, "base_lr", c.base_lr);
    maybe(j, "lr_milestones", c.lr_milestones);
    maybe(j, "epochs", c.epochs);
    maybe(j, "warmup_iters", c.warmup_iters);
    maybe(j, "seed", c.seed);
    if (seed_in_json) *seed_in_json = j.contains("seed");
    if (j.contains("ablation")) apply_ablation_setting(c, j.at("ablation").get<std::string>());
    maybe(j, "cg_margin", c.cg_margin);
    maybe(j, "contrastive", c.contrastive);
    maybe(j, "aligning", c.aligning);
    if (j.contains("contrastive_slot"))
        c.contrastive_slot = slot_from_name(j.at("contrastive_slot").get<std::string>());
    if (j.contains("temp_mode")) {
        const auto mode = j.at("temp_mode").get<std::string>();
        if (mode == "adaptive") c.temp_mode = TempMode::Adaptive;
        else if (mode == "fixed") c.temp_mode = TempMode::Fixed;
        else throw ConfigInvalidError("config: unknown temp_mode " + mode);
    }
    maybe(j, "tau_init", c.tau_init);
    maybe(j, "triplet_margin", c.triplet_margin);
    maybe(j, "hidden_dims", c.hidden_dims);
    maybe(j, "train_frac", c.train_frac);
    maybe(j, "threads", c.threads);
    maybe(j, "eval_every", c.eval_every);
    maybe(j, "checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
}

Json to_json(const SynthSpec& spec) {
    Json j;
    j["num_classes"] = spec.num_classes;
    j["samples_per_class"] = spec.samples_per_class;
    j["input_dim"] = spec.input_dim;
    j["sigma"] = spec.sigma;
    j["seed"] = spec.seed;
    return j;
}

SynthSpec synth_spec_from_json(const Json& j, bool* seed_in_json) {
    SynthSpec spec;
    maybe(j, "num_classes", spec.num_classes);
    maybe(j, "samples_per_class", spec.samples_per_class);
    maybe(j, "input_dim", spec.input_dim);
    maybe(j, "seed", spec.seed);
    if (seed_in_json) *seed_in_json = j.contains("seed");
    if (j.contains("sigma")) {
        spec.sigma = j.at("sigma").get<std::vector<double>>();
    } else if (j.contains("sigma_range")) {
        const auto range = j.at("sigma_range").get<std::vector<double>>();
        if (range.size() != 2) throw InvalidSpecError("sigma_range needs [lo, hi]");
        spec.sigma = ramped_sigma(spec.num_classes, range[0], range[1]);
    } else {
        spec.sigma = ramped_sigma(spec.num_classes, 0.1, 0.8);
    }
    spec.validate();
    return spec;
}

Json to_json(const EvalSummary& summary) {
    Json j;
    j["kmeans_nmi"] = summary.kmeans_nmi;
    j["bcubed_f"] = summary.bcubed_f;
    j["bcubed_p"] = summary.bcubed_p;
    j["bcubed_r"] = summary.bcubed_r;
    j["margin"] = summary.margin;
    j["best_accuracy"] = summary.best_accuracy;
    Json tars = Json::array();
    for (const auto& t : summary.tar_at_far)
        tars.push_back({{"far", t.far}, {"tar", t.tar}, {"threshold", t.threshold}});
    j["tar_at_far"] = tars;
    return j;
}

Json to_json(const VerificationReport& report) {
    Json j;
    j["num_pos"] = report.num_pos;
    j["num_neg"] = report.num_neg;
    j["mu_pos"] = report.mu_pos;
    j["mu_neg"] = report.mu_neg;
    j["margin"] = report.margin;
    j["best_accuracy"] = report.best_accuracy;
    j["best_threshold"] = report.best_threshold;
    Json tars = Json::array();
    for (const auto& t : report.tar_at_far)
        tars.push_back({{"far", t.far}, {"tar", t.tar}, {"threshold", t.threshold}});
    j["tar_at_far"] = tars;
    j["bin_left"] = report.bin_left;
    j["pos_counts"] = report.pos_counts;
    j["neg_counts"] = report.neg_counts;
    return j;
}

Json to_json(const HarnessTable& table) {
    Json rows = Json::array();
    for (const auto& row : table.rows) {
        Json cells = Json::array();
        for (const auto& cell : row.cells) {
            Json c;
            c["seed"] = cell.seed;
            c["final_loss"] = cell.final_loss;
            c["eval"] = to_json(cell.eval);
            cells.push_back(c);
        }
        rows.push_back({{"name", row.name},
                        {"median_nmi", row.median_nmi},
                        {"median_margin", row.median_margin},
                        {"median_bcubed", row.median_bcubed},
                        {"cells", cells}});
    }
    Json j;
    j["rows"] = rows;
    return j;
}

Json to_json(const IterationRecord& r) {
    Json j;
    j["type"] = "iteration";
    j["iter"] = r.iter;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["loss_total"] = r.loss_total;
    j["loss_cg"] = r.loss_cg;
    j["loss_con"] = r.loss_con;
    j["loss_ali"] = r.loss_ali;
    return j;
}

Json to_json(const EpochRecord& r) {
    Json j;
    j["type"] = "epoch";
    j["epoch"] = r.epoch;
    j["mean_total"] = r.mean_total;
    j["wall_ms"] = r.wall_ms;
    if (r.has_metrics) j["metrics"] = to_json(r.metrics);
    return j;
}

Json to_json(const ClusterDebugRecord& r) {
    Json phi = Json::object();
    for (const auto& [k, value] : r.phi) phi[std::to_string(k)] = value;
    Json norms = Json::object();
    for (const auto& [k, value] : r.bank_center_norms) norms[std::to_string(k)] = value;
    Json j;
    j["epoch"] = r.epoch;
    j["queue_size"] = r.queue_size;
    j["phi_min"] = r.phi_min;
    j["phi_max"] = r.phi_max;
    j["phi"] = phi;
    j["bank_center_norms"] = norms;
    return j;
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return j;
}

void write_json_file(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace cml
