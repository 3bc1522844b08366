#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cml/cluster.hpp"
#include "cml/datagen.hpp"
#include "cml/encoder.hpp"
#include "cml/eval.hpp"
#include "cml/losses.hpp"

namespace cml {

// Contents of the contrastive slot when it is enabled.
enum class ContrastiveSlot { CluCon, Center, Triplet };

enum class TempMode { Adaptive, Fixed };

struct TrainConfig {
    std::string profile = "desk";  // "desk" or "paper"

    std::size_t embedding_dim = 64;
    std::size_t batch_size = 64;
    std::size_t queue_capacity = 1024;
    double momentum_encoder = 0.999;  // m_e
    double momentum_center = 0.9;     // m_c
    double alpha = 10.0;              // concentration smoothing
    std::size_t num_sampled_classes = 32;  // M; clipped to the classes available
    double margin = 0.5;
    double scale = 64.0;
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double base_lr = 1e-3;
    std::vector<std::size_t> lr_milestones = {8, 16, 24};
    std::size_t epochs = 30;
    long long warmup_iters = -1;  // -1: two epochs' worth
    std::uint64_t seed = 1;

    // Loss toggles; the ablation settings map onto these.
    std::string ablation = "baseline";
    bool cg_margin = false;    // margin scaling by concentration
    bool contrastive = false;  // lambda1 term
    bool aligning = false;     // lambda2 term
    ContrastiveSlot contrastive_slot = ContrastiveSlot::CluCon;
    TempMode temp_mode = TempMode::Adaptive;

    double tau_init = 0.07;
    double triplet_margin = 0.2;
    std::vector<std::size_t> hidden_dims = {96};
    double train_frac = 0.8;
    std::size_t threads = 1;
    std::size_t eval_every = 0;       // epochs between held-out evals; 0 = final only
    std::size_t checkpoint_every = 0; // epochs between checkpoint callbacks; 0 = never

    static TrainConfig desk_profile();
    static TrainConfig paper_profile();
    void validate() const;  // throws ConfigInvalidError
};

// Maps "baseline" / "setting1".."setting6" / "1".."6" onto the loss toggles.
void apply_ablation_setting(TrainConfig& config, const std::string& setting);

// True while the margin scale must be forced to 1 (concentration statistics
// not yet trustworthy).
bool warmup_policy(std::size_t iter, long long resolved_warmup_iters);
long long resolve_warmup_iters(const TrainConfig& config, std::size_t iters_per_epoch);

struct IterationRecord {
    std::size_t iter = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_cg = 0.0;
    double loss_con = 0.0;
    double loss_ali = 0.0;
};

struct EvalSummary {
    double kmeans_nmi = 0.0;
    double bcubed_f = 0.0;
    double bcubed_p = 0.0;
    double bcubed_r = 0.0;
    double margin = 0.0;
    double best_accuracy = 0.0;
    std::vector<TarAtFar> tar_at_far;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_total = 0.0;
    double wall_ms = 0.0;
    bool has_metrics = false;
    EvalSummary metrics;
};

// Concentration table, bank norms, and queue fill snapshot per epoch.
struct ClusterDebugRecord {
    std::size_t epoch = 0;
    std::size_t queue_size = 0;
    double phi_min = 0.0;
    double phi_max = 0.0;
    std::map<int, double> phi;
    std::map<int, double> bank_center_norms;
};

struct TrainLog {
    std::uint64_t seed = 0;
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    std::vector<ClusterDebugRecord> cluster_debug;
};

struct TrainResult {
    MlpModel model;
    MlpModel momentum_model;
    Classifier classifier;
    TempParam tau;   // aligning temperature
    TempParam tau0;  // shared learnable temperature of the fixed-temp variant
    TrainLog log;
};

struct TrainCallbacks {
    // Called after every epoch (checkpointing, log flushing).
    std::function<void(std::size_t epoch, const MlpModel& model)> on_checkpoint;
};

// Full training loop: batch -> encoders -> queue/bank/concentrations ->
// class sampling -> configured losses -> Adam + weight renormalization ->
// momentum update. Deterministic given (config, dataset, seed).
TrainResult train(const TrainConfig& config, const Dataset& train_data,
                  const Dataset* eval_data = nullptr,
                  const TrainCallbacks* callbacks = nullptr);

// Embeds the eval split and reports clustering + verification metrics.
// k for k-means is the ground-truth class count.
EvalSummary evaluate_model(const MlpModel& model, const Dataset& eval_data,
                           std::uint64_t seed, std::size_t num_pos = 2000,
                           std::size_t num_neg = 2000);

// Supplies the (train, eval) split for one seed of a harness run.
using DatasetProvider = std::function<SplitResult(std::uint64_t seed)>;

struct HarnessCell {
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    EvalSummary eval;
};

struct HarnessRow {
    std::string name;  // setting or variant id
    std::vector<HarnessCell> cells;
    double median_nmi = 0.0;
    double median_margin = 0.0;
    double median_bcubed = 0.0;
};

struct HarnessTable {
    std::vector<HarnessRow> rows;
};

double median(std::vector<double> values);

// Ablation grid: one row per setting, shared seeds and datasets across
// settings. jobs bounds concurrent training runs.
HarnessTable ablation_run(const TrainConfig& base, const std::vector<std::string>& settings,
                          std::size_t num_seeds, const DatasetProvider& provider,
                          std::size_t jobs = 1);

// Loss comparison: identical pipelines differing only in the contrastive
// slot. Variants: clu_con, clu_con_fixed, center, triplet.
HarnessTable compare_losses(const TrainConfig& base, const std::vector<std::string>& variants,
                            std::size_t num_seeds, const DatasetProvider& provider,
                            std::size_t jobs = 1);

}  // namespace cml
