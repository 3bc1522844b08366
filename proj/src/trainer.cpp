#include "cml/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>
#include <thread>

namespace cml {

TrainConfig TrainConfig::desk_profile() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_profile() {
    TrainConfig config;
    config.profile = "paper";
    config.batch_size = 512;
    config.queue_capacity = 8192;
    config.num_sampled_classes = 2048;
    config.epochs = 80;
    config.lr_milestones = {20, 40, 60};
    return config;
}

void TrainConfig::validate() const {
    const auto fail = [](const std::string& what) { throw ConfigInvalidError(what); };
    if (profile != "desk" && profile != "paper") fail("config: unknown profile");
    if (embedding_dim == 0) fail("config: embedding_dim must be positive");
    if (batch_size == 0) fail("config: batch_size must be positive");
    if (queue_capacity == 0) fail("config: queue_capacity must be positive");
    if (momentum_encoder < 0.0 || momentum_encoder > 1.0) fail("config: m_e outside [0,1]");
    if (momentum_center < 0.0 || momentum_center > 1.0) fail("config: m_c outside [0,1]");
    if (!(alpha > 0.0)) fail("config: alpha must be positive");
    if (num_sampled_classes == 0) fail("config: M must be positive");
    if (margin < 0.0 || margin >= std::numbers::pi / 2.0) fail("config: margin outside [0, pi/2)");
    if (!(scale > 0.0)) fail("config: scale must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) fail("config: negative loss weight");
    if (!(base_lr > 0.0)) fail("config: base_lr must be positive");
    if (epochs == 0) fail("config: epochs must be positive");
    if (!(tau_init > 0.0)) fail("config: tau_init must be positive");
    if (triplet_margin < 0.0) fail("config: negative triplet margin");
    if (!(train_frac > 0.0 && train_frac < 1.0)) fail("config: train_frac outside (0,1)");
    for (std::size_t h : hidden_dims)
        if (h == 0) fail("config: zero hidden dim");
}

void apply_ablation_setting(TrainConfig& config, const std::string& setting) {
    std::string name = setting;
    if (name.size() == 1 && name[0] >= '1' && name[0] <= '6') name = "setting" + name;

    if (name == "baseline") {
        config.cg_margin = false;
        config.contrastive = false;
        config.aligning = false;
    } else if (name == "setting1") {
        config.cg_margin = true;
        config.contrastive = false;
        config.aligning = false;
    } else if (name == "setting2") {
        config.cg_margin = false;
        config.contrastive = true;
        config.aligning = false;
    } else if (name == "setting3") {
        config.cg_margin = false;
        config.contrastive = false;
        config.aligning = true;
    } else if (name == "setting4") {
        config.cg_margin = true;
        config.contrastive = true;
        config.aligning = false;
    } else if (name == "setting5") {
        config.cg_margin = true;
        config.contrastive = false;
        config.aligning = true;
    } else if (name == "setting6") {
        config.cg_margin = true;
        config.contrastive = true;
        config.aligning = true;
    } else {
        throw UnknownSettingError("unknown ablation setting: " + setting);
    }
    config.ablation = name;
}

bool warmup_policy(std::size_t iter, long long resolved_warmup_iters) {
    return static_cast<long long>(iter) < resolved_warmup_iters;
}

long long resolve_warmup_iters(const TrainConfig& config, std::size_t iters_per_epoch) {
    if (config.warmup_iters >= 0) return config.warmup_iters;
    return static_cast<long long>(2 * iters_per_epoch);
}

namespace {

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            try {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= count) return;
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void renormalize_rows(Mat& weights) {
    for (std::size_t r = 0; r < weights.rows; ++r) {
        std::span<double> row{weights.row(r), weights.cols};
        const double n = norm2(row);
        if (n <= kNormEps) continue;
        for (double& x : row) x /= n;
    }
}

void adam_scalar_step(AdamState& state, double& param, double grad) {
    Vec p{param};
    const Vec g{grad};
    adam_step(state, p, g);
    param = p[0];
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data,
                  const Dataset* eval_data, const TrainCallbacks* callbacks) {
    config.validate();
    const std::size_t n = train_data.size();
    if (n < 2) throw DatasetTooSmallError("train: dataset too small");
    const int num_classes = train_data.num_classes();
    if (num_classes < 2) throw DatasetTooSmallError("train: need at least 2 classes");

    const std::size_t batch = config.batch_size;
    const std::size_t iters_per_epoch = std::max<std::size_t>(1, n / batch);
    const long long warmup = resolve_warmup_iters(config, iters_per_epoch);

    Rng init_rng(config.seed, 7);
    Rng batch_rng(config.seed, 11);
    Rng sampler_rng(config.seed, 13);
    Rng triplet_rng(config.seed, 19);

    std::vector<std::size_t> dims{train_data.input_dim()};
    dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    dims.push_back(config.embedding_dim);

    TrainResult result;
    result.model = make_mlp(dims, init_rng);
    result.momentum_model = result.model;  // momentum encoder starts as a copy
    result.classifier = make_classifier(static_cast<std::size_t>(num_classes),
                                        config.embedding_dim, config.scale, config.margin,
                                        init_rng);
    result.tau = TempParam::from_tau(config.tau_init);
    result.tau0 = TempParam::from_tau(config.tau_init);
    result.log.seed = config.seed;

    AdamState adam_model(result.model.num_params(), config.base_lr);
    AdamState adam_w(result.classifier.weights.data.size(), config.base_lr);
    AdamState adam_tau(1, config.base_lr);
    AdamState adam_tau0(1, config.base_lr);

    FeatureQueue queue(config.queue_capacity);
    ClusterCenterBank bank(config.momentum_center);
    ConcentrationTable empty_table;
    empty_table.alpha = config.alpha;

    const bool slot_is_clu_con =
        config.contrastive && config.contrastive_slot == ContrastiveSlot::CluCon;
    const bool need_sample = slot_is_clu_con || config.aligning;
    const double lambda1 = config.lambda1;
    const double lambda2 = config.lambda2;

    std::vector<std::size_t> indices(batch);
    std::vector<int> labels(batch);
    std::vector<Vec> features(batch);
    std::vector<ForwardTape> tapes(batch);
    std::vector<LabeledFeature> momentum_batch(batch);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr = lr_schedule(epoch, config.base_lr, config.lr_milestones);
        adam_model.lr = adam_w.lr = adam_tau.lr = adam_tau0.lr = lr;

        double epoch_loss_sum = 0.0;
        ConcentrationTable table;

        for (std::size_t it = 0; it < iters_per_epoch; ++it) {
            const std::size_t global_iter = epoch * iters_per_epoch + it;

            for (std::size_t i = 0; i < batch; ++i) {
                indices[i] = static_cast<std::size_t>(batch_rng.uniform_below(n));
                labels[i] = train_data.labels[indices[i]];
            }

            parallel_for(batch, config.threads, [&](std::size_t i) {
                features[i] = forward(result.model, train_data.inputs[indices[i]], tapes[i]);
                momentum_batch[i] = {forward(result.momentum_model, train_data.inputs[indices[i]]),
                                     labels[i]};
            });

            queue.enqueue(momentum_batch);
            for (const auto& [k, center_q] : queue.class_centers()) bank.update(k, center_q);
            table = refresh_concentrations(queue, bank, config.alpha);

            std::vector<int> unique_labels(labels.begin(), labels.end());
            std::sort(unique_labels.begin(), unique_labels.end());
            unique_labels.erase(std::unique(unique_labels.begin(), unique_labels.end()),
                                unique_labels.end());

            const bool in_warmup = warmup_policy(global_iter, warmup);

            // Classes whose concentration is numerically zero (typically a
            // single queue entry) cannot serve as contrastive temperatures;
            // they stay out of the sampling pool until their statistics fill in.
            ConcentrationTable sampling_table;
            sampling_table.alpha = table.alpha;
            for (const auto& [k, p] : table.phi)
                if (p > kTempEps) sampling_table.phi[k] = p;
            if (!sampling_table.phi.empty()) {
                sampling_table.phi_min = sampling_table.phi.begin()->second;
                sampling_table.phi_max = sampling_table.phi_min;
                for (const auto& [k, p] : sampling_table.phi) {
                    sampling_table.phi_min = std::min(sampling_table.phi_min, p);
                    sampling_table.phi_max = std::max(sampling_table.phi_max, p);
                }
            }

            ClassSample sample;
            if (need_sample && !in_warmup && !sampling_table.phi.empty()) {
                std::vector<int> required_valid;
                for (int k : unique_labels)
                    if (sampling_table.has(k)) required_valid.push_back(k);
                sample = sample_classes(bank, sampling_table, required_valid,
                                        config.num_sampled_classes, sampler_rng);
            }

            const bool plain_margin = !config.cg_margin || in_warmup;
            LossBundle cg = cg_arcface(features, labels, result.classifier,
                                       plain_margin ? empty_table : table);

            double loss_con = 0.0;
            double loss_ali = 0.0;
            std::vector<Vec> grad_features = std::move(cg.grad_features);
            Mat grad_w = std::move(cg.grad_weights);
            double grad_log_tau = 0.0;
            double grad_log_tau0 = 0.0;

            bool stepped_tau0 = false;
            if (config.contrastive && !in_warmup) {
                if (config.contrastive_slot == ContrastiveSlot::CluCon) {
                    // Samples whose class was filtered out above sit this
                    // term out; they still contribute to the margin loss.
                    std::vector<Vec> con_features;
                    std::vector<int> con_labels;
                    std::vector<std::size_t> con_index;
                    for (std::size_t i = 0; i < batch; ++i) {
                        if (!sampling_table.has(labels[i])) continue;
                        con_features.push_back(features[i]);
                        con_labels.push_back(labels[i]);
                        con_index.push_back(i);
                    }
                    if (!con_features.empty()) {
                        LossBundle con =
                            (config.temp_mode == TempMode::Adaptive)
                                ? clu_con(con_features, con_labels, sample)
                                : clu_con_fixed_temp(con_features, con_labels, sample,
                                                     result.tau0);
                        loss_con = con.value;
                        for (std::size_t t = 0; t < con_index.size(); ++t)
                            axpy(lambda1, con.grad_features[t], grad_features[con_index[t]]);
                        if (config.temp_mode == TempMode::Fixed) {
                            grad_log_tau0 = lambda1 * con.grad_tau * result.tau0.tau();
                            stepped_tau0 = true;
                        }
                    }
                } else if (config.contrastive_slot == ContrastiveSlot::Center) {
                    LossBundle con = center_loss(features, labels, bank.centers());
                    loss_con = con.value;
                    for (std::size_t i = 0; i < batch; ++i)
                        axpy(lambda1, con.grad_features[i], grad_features[i]);
                } else {
                    // Triplets drawn within the batch: positive from the same
                    // class, negative from any other.
                    std::vector<std::size_t> tri_a, tri_p, tri_n;
                    for (std::size_t i = 0; i < batch; ++i) {
                        std::vector<std::size_t> same;
                        std::vector<std::size_t> diff;
                        for (std::size_t j = 0; j < batch; ++j) {
                            if (j == i) continue;
                            (labels[j] == labels[i] ? same : diff).push_back(j);
                        }
                        if (same.empty() || diff.empty()) continue;
                        tri_a.push_back(i);
                        tri_p.push_back(same[triplet_rng.uniform_below(same.size())]);
                        tri_n.push_back(diff[triplet_rng.uniform_below(diff.size())]);
                    }
                    if (!tri_a.empty()) {
                        std::vector<Vec> anchors, positives, negatives;
                        for (std::size_t t = 0; t < tri_a.size(); ++t) {
                            anchors.push_back(features[tri_a[t]]);
                            positives.push_back(features[tri_p[t]]);
                            negatives.push_back(features[tri_n[t]]);
                        }
                        LossBundle con = triplet_loss(anchors, positives, negatives,
                                                      config.triplet_margin);
                        loss_con = con.value;
                        const std::size_t m = tri_a.size();
                        for (std::size_t t = 0; t < m; ++t) {
                            axpy(lambda1, con.grad_features[t], grad_features[tri_a[t]]);
                            axpy(lambda1, con.grad_features[m + t], grad_features[tri_p[t]]);
                            axpy(lambda1, con.grad_features[2 * m + t], grad_features[tri_n[t]]);
                        }
                    }
                }
            }

            bool stepped_tau = false;
            if (config.aligning && !in_warmup && sample.size() > 0) {
                LossBundle ali = clu_ali(sample, result.classifier, result.tau);
                loss_ali = ali.value;
                for (std::size_t i = 0; i < grad_w.data.size(); ++i)
                    grad_w.data[i] += lambda2 * ali.grad_weights.data[i];
                grad_log_tau = lambda2 * ali.grad_tau * result.tau.tau();
                stepped_tau = true;
            }

            ParamGrads grads = zero_grads(result.model);
            if (config.threads <= 1) {
                for (std::size_t i = 0; i < batch; ++i)
                    backward(result.model, tapes[i], grad_features[i], grads);
            } else {
                // Per-sample gradients reduced in sample order so the result
                // does not depend on the thread count.
                std::vector<ParamGrads> per_sample(batch, zero_grads(result.model));
                parallel_for(batch, config.threads, [&](std::size_t i) {
                    backward(result.model, tapes[i], grad_features[i], per_sample[i]);
                });
                for (std::size_t i = 0; i < batch; ++i) grads.add_scaled(per_sample[i], 1.0);
            }

            Vec flat_params = flatten_params(result.model);
            const Vec flat_grads = flatten_grads(grads);
            adam_step(adam_model, flat_params, flat_grads);
            unflatten_params(result.model, flat_params);

            adam_step(adam_w, result.classifier.weights.data, grad_w.data);
            renormalize_rows(result.classifier.weights);

            if (stepped_tau) {
                double log_tau = result.tau.log_tau;
                adam_scalar_step(adam_tau, log_tau, grad_log_tau);
                result.tau.set_log_tau(log_tau);
            }
            if (stepped_tau0) {
                double log_tau0 = result.tau0.log_tau;
                adam_scalar_step(adam_tau0, log_tau0, grad_log_tau0);
                result.tau0.set_log_tau(log_tau0);
            }

            ema_update(result.momentum_model, result.model, config.momentum_encoder);

            IterationRecord record;
            record.iter = global_iter;
            record.epoch = epoch;
            record.lr = lr;
            record.loss_cg = cg.value;
            record.loss_con = loss_con;
            record.loss_ali = loss_ali;
            record.loss_total = cg.value + lambda1 * loss_con + lambda2 * loss_ali;
            epoch_loss_sum += record.loss_total;
            result.log.iterations.push_back(record);
        }

        EpochRecord epoch_record;
        epoch_record.epoch = epoch;
        epoch_record.mean_total = epoch_loss_sum / static_cast<double>(iters_per_epoch);

        ClusterDebugRecord debug;
        debug.epoch = epoch;
        debug.queue_size = queue.size();
        debug.phi = table.phi;
        debug.phi_min = table.phi_min;
        debug.phi_max = table.phi_max;
        for (const auto& [k, center] : bank.centers())
            debug.bank_center_norms[k] = norm2(center);
        result.log.cluster_debug.push_back(std::move(debug));

        const bool last_epoch = (epoch + 1 == config.epochs);
        if (eval_data &&
            (last_epoch || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0))) {
            epoch_record.has_metrics = true;
            epoch_record.metrics = evaluate_model(result.model, *eval_data, config.seed);
        }
        if (callbacks && callbacks->on_checkpoint && config.checkpoint_every > 0 &&
            (epoch + 1) % config.checkpoint_every == 0) {
            callbacks->on_checkpoint(epoch, result.model);
        }

        epoch_record.wall_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - epoch_start)
                                   .count();
        result.log.epochs.push_back(std::move(epoch_record));
    }
    return result;
}

EvalSummary evaluate_model(const MlpModel& model, const Dataset& eval_data,
                           std::uint64_t seed, std::size_t num_pos, std::size_t num_neg) {
    const std::size_t n = eval_data.size();
    if (n == 0) throw DatasetTooSmallError("evaluate_model: empty eval split");

    std::vector<Vec> embeddings(n);
    for (std::size_t i = 0; i < n; ++i) embeddings[i] = forward(model, eval_data.inputs[i]);

    EvalSummary summary;
    const auto k = static_cast<std::size_t>(eval_data.num_classes());
    Rng kmeans_rng(seed, 31);
    const ClusteringResult clusters = kmeans(embeddings, k, 100, kmeans_rng);
    summary.kmeans_nmi = nmi(clusters, eval_data.labels);
    const BCubedScore bc = bcubed_f(clusters, eval_data.labels);
    summary.bcubed_f = bc.f;
    summary.bcubed_p = bc.precision;
    summary.bcubed_r = bc.recall;

    // Clamp the pair counts to what the split can actually provide.
    std::map<int, std::uint64_t> class_sizes;
    for (int label : eval_data.labels) class_sizes[label] += 1;
    std::uint64_t total_pos = 0;
    for (const auto& [label, size] : class_sizes) total_pos += size * (size - 1) / 2;
    const std::uint64_t total_all = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    num_pos = std::min<std::uint64_t>(num_pos, total_pos);
    num_neg = std::min<std::uint64_t>(num_neg, total_all - total_pos);

    Rng pair_rng(seed, 37);
    const auto pairs = make_pairs(eval_data.labels, num_pos, num_neg, pair_rng);
    const VerificationReport report = verification_eval_embeddings(embeddings, pairs);
    summary.margin = report.margin;
    summary.best_accuracy = report.best_accuracy;
    summary.tar_at_far = report.tar_at_far;
    return summary;
}

double median(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("median: no values");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

HarnessTable run_grid(const TrainConfig& base, const std::vector<std::string>& row_names,
                      const std::function<TrainConfig(const TrainConfig&, const std::string&)>&
                          configure,
                      std::size_t num_seeds, const DatasetProvider& provider, std::size_t jobs) {
    if (num_seeds == 0) throw InvalidParamsError("harness: need at least one seed");

    HarnessTable table;
    table.rows.resize(row_names.size());
    for (std::size_t r = 0; r < row_names.size(); ++r) {
        table.rows[r].name = row_names[r];
        table.rows[r].cells.resize(num_seeds);
    }

    struct Job {
        std::size_t row = 0;
        std::size_t seed_index = 0;
    };
    std::vector<Job> queue;
    for (std::size_t r = 0; r < row_names.size(); ++r)
        for (std::size_t s = 0; s < num_seeds; ++s) queue.push_back({r, s});

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    const auto worker = [&]() {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= queue.size()) return;
            const Job job = queue[j];
            try {
                const std::uint64_t run_seed = base.seed + job.seed_index;
                TrainConfig config = configure(base, row_names[job.row]);
                config.seed = run_seed;
                config.threads = 1;  // parallelism lives at the job level here
                const SplitResult data = provider(run_seed);
                const TrainResult trained = train(config, data.train);
                HarnessCell& cell = table.rows[job.row].cells[job.seed_index];
                cell.seed = run_seed;
                cell.final_loss = trained.log.epochs.back().mean_total;
                cell.eval = evaluate_model(trained.model, data.eval, run_seed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, queue.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    for (auto& row : table.rows) {
        std::vector<double> nmis, margins, bcubeds;
        for (const auto& cell : row.cells) {
            nmis.push_back(cell.eval.kmeans_nmi);
            margins.push_back(cell.eval.margin);
            bcubeds.push_back(cell.eval.bcubed_f);
        }
        row.median_nmi = median(nmis);
        row.median_margin = median(margins);
        row.median_bcubed = median(bcubeds);
    }
    return table;
}

}  // namespace

HarnessTable ablation_run(const TrainConfig& base, const std::vector<std::string>& settings,
                          std::size_t num_seeds, const DatasetProvider& provider,
                          std::size_t jobs) {
    std::vector<std::string> names;
    for (const std::string& s : settings) {
        TrainConfig probe = base;
        apply_ablation_setting(probe, s);  // validates and normalizes
        names.push_back(probe.ablation);
    }
    return run_grid(
        base, names,
        [](const TrainConfig& b, const std::string& setting) {
            TrainConfig config = b;
            apply_ablation_setting(config, setting);
            return config;
        },
        num_seeds, provider, jobs);
}

HarnessTable compare_losses(const TrainConfig& base, const std::vector<std::string>& variants,
                            std::size_t num_seeds, const DatasetProvider& provider,
                            std::size_t jobs) {
    const auto configure = [](const TrainConfig& b, const std::string& variant) {
        TrainConfig config = b;
        // Full pipeline with the margin and aligning losses on; only the
        // contrastive slot is swapped.
        apply_ablation_setting(config, "setting6");
        config.ablation = "compare:" + variant;
        if (variant == "clu_con") {
            config.contrastive_slot = ContrastiveSlot::CluCon;
            config.temp_mode = TempMode::Adaptive;
        } else if (variant == "clu_con_fixed") {
            config.contrastive_slot = ContrastiveSlot::CluCon;
            config.temp_mode = TempMode::Fixed;
        } else if (variant == "center") {
            config.contrastive_slot = ContrastiveSlot::Center;
        } else if (variant == "triplet") {
            config.contrastive_slot = ContrastiveSlot::Triplet;
        } else {
            throw UnknownSettingError("unknown loss variant: " + variant);
        }
        return config;
    };
    for (const std::string& v : variants) configure(base, v);  // fail fast
    return run_grid(base, variants, configure, num_seeds, provider, jobs);
}

}  // namespace cml
