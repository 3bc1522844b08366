#include "cml/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cml/encoder.hpp"
#include "cml/losses.hpp"

namespace cml {

GradCheckReport gradcheck(const std::function<double()>& value_fn,
                          std::span<GradBlock> blocks, double h) {
    if (h < 1e-7 || h > 1e-3)
        throw InvalidParamsError("gradcheck: h outside [1e-7, 1e-3]");

    const double v1 = value_fn();
    const double v2 = value_fn();
    if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
        throw NonDeterministicLossError("gradcheck: loss not deterministic");

    GradCheckReport report;
    for (const GradBlock& block : blocks) {
        GradBlockReport br;
        br.name = block.name;
        for (std::size_t i = 0; i < block.size; ++i) {
            const double saved = block.values[i];
            block.values[i] = saved + h;
            const double plus = value_fn();
            block.values[i] = saved - h;
            const double minus = value_fn();
            block.values[i] = saved;

            const double numeric = (plus - minus) / (2.0 * h);
            const double analytic = block.analytic[i];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > br.max_rel_err) {
                br.max_rel_err = rel;
                br.worst_index = i;
                br.analytic_at_worst = analytic;
                br.numeric_at_worst = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, br.max_rel_err);
        report.blocks.push_back(std::move(br));
    }
    return report;
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "arcface") return LossKind::Arcface;
    if (name == "cg-arcface") return LossKind::CgArcface;
    if (name == "clu-con") return LossKind::CluCon;
    if (name == "clu-con-fixed") return LossKind::CluConFixedTemp;
    if (name == "clu-ali") return LossKind::CluAli;
    if (name == "center") return LossKind::Center;
    if (name == "triplet") return LossKind::Triplet;
    throw InvalidParamsError("unknown loss name: " + name);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::Arcface: return "arcface";
        case LossKind::CgArcface: return "cg-arcface";
        case LossKind::CluCon: return "clu-con";
        case LossKind::CluConFixedTemp: return "clu-con-fixed";
        case LossKind::CluAli: return "clu-ali";
        case LossKind::Center: return "center";
        case LossKind::Triplet: return "triplet";
    }
    throw InvalidParamsError("unknown loss kind");
}

namespace {

Vec random_unit(std::size_t dim, Rng& rng) {
    Vec v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = norm2(v);
    } while (n <= kNormEps);
    for (double& x : v) x /= n;
    return v;
}

struct LossInstance {
    std::vector<Vec> features;
    std::vector<int> labels;
    Classifier clf;
    ConcentrationTable table;
    ClassSample sample;
    TempParam tau;
    std::map<int, Vec> class_means;
    std::vector<Vec> positives;
    std::vector<Vec> negatives;
    double triplet_margin = 0.2;
};

// Central differences break down where the loss is not smooth: at the
// margin fallback switch, and wherever a cosine sits against its [-1, 1]
// clamp (near-duplicate vectors). Retry with fresh features in those cases.
bool margins_safe(const LossInstance& inst, const std::vector<double>& margins) {
    for (std::size_t i = 0; i < inst.features.size(); ++i) {
        const std::size_t target = static_cast<std::size_t>(inst.labels[i] - 1);
        for (std::size_t j = 0; j < inst.clf.num_classes(); ++j) {
            const double c =
                cosine(inst.features[i], {inst.clf.weights.row(j), inst.clf.dim()});
            if (std::abs(c) > 0.99) return false;
            if (j == target && std::abs(c + std::cos(margins[i])) < 1e-2) return false;
        }
    }
    return true;
}

LossInstance make_instance(LossKind kind, std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed, 17 + attempt);
        LossInstance inst;
        const std::size_t dim = 2 + rng.uniform_below(4);        // 2..5
        const std::size_t batch = 2 + rng.uniform_below(3);      // 2..4
        const std::size_t num_classes = 2 + rng.uniform_below(5);  // 2..6

        inst.clf = make_classifier(num_classes, dim, 4.0 + 60.0 * rng.uniform(),
                                   0.1 + 0.4 * rng.uniform(), rng);
        for (std::size_t i = 0; i < batch; ++i) {
            inst.features.push_back(random_unit(dim, rng));
            inst.labels.push_back(1 + static_cast<int>(rng.uniform_below(num_classes)));
        }

        inst.table.alpha = 10.0;
        for (std::size_t k = 1; k <= num_classes; ++k)
            inst.table.phi[static_cast<int>(k)] = 0.1 + 0.9 * rng.uniform();
        inst.table.phi_min = inst.table.phi.begin()->second;
        inst.table.phi_max = inst.table.phi_min;
        for (const auto& [k, p] : inst.table.phi) {
            inst.table.phi_min = std::min(inst.table.phi_min, p);
            inst.table.phi_max = std::max(inst.table.phi_max, p);
        }

        // Sampled centers cover all classes so every batch label has its
        // positive; temperatures in a well-conditioned range.
        for (std::size_t k = 1; k <= num_classes; ++k) {
            inst.sample.center_ids.push_back(static_cast<int>(k));
            inst.sample.centers.push_back(random_unit(dim, rng));
            inst.sample.temps.push_back(0.2 + rng.uniform());
        }
        inst.tau = TempParam::from_tau(0.05 + 0.45 * rng.uniform());

        for (std::size_t k = 1; k <= num_classes; ++k) {
            Vec mean(dim);
            for (double& x : mean) x = rng.normal() * 0.5;
            inst.class_means[static_cast<int>(k)] = mean;
        }

        for (std::size_t i = 0; i < batch; ++i) {
            inst.positives.push_back(random_unit(dim, rng));
            inst.negatives.push_back(random_unit(dim, rng));
        }
        inst.triplet_margin = 0.1 + 0.3 * rng.uniform();

        if (kind == LossKind::Arcface || kind == LossKind::CgArcface) {
            std::vector<double> margins(batch, inst.clf.margin);
            if (kind == LossKind::CgArcface) {
                for (std::size_t i = 0; i < batch; ++i)
                    margins[i] = margin_scale(inst.table.phi.at(inst.labels[i]),
                                              inst.table.phi_min, inst.table.phi_max) *
                                 inst.clf.margin;
            }
            if (!margins_safe(inst, margins)) continue;
        }
        if (kind == LossKind::Triplet) {
            bool safe = true;
            for (std::size_t i = 0; i < batch; ++i) {
                const double term = squared_distance(inst.features[i], inst.positives[i]) -
                                    squared_distance(inst.features[i], inst.negatives[i]) +
                                    inst.triplet_margin;
                if (std::abs(term) < 1e-3) safe = false;
            }
            if (!safe) continue;
        }
        return inst;
    }
}

}  // namespace

GradCheckReport gradcheck_loss_instance(LossKind kind, std::uint64_t seed, double h) {
    LossInstance inst = make_instance(kind, seed);
    const std::size_t batch = inst.features.size();

    const auto eval = [&]() -> LossBundle {
        switch (kind) {
            case LossKind::Arcface:
                return arcface(inst.features, inst.labels, inst.clf);
            case LossKind::CgArcface:
                return cg_arcface(inst.features, inst.labels, inst.clf, inst.table);
            case LossKind::CluCon:
                return clu_con(inst.features, inst.labels, inst.sample);
            case LossKind::CluConFixedTemp:
                return clu_con_fixed_temp(inst.features, inst.labels, inst.sample, inst.tau);
            case LossKind::CluAli:
                return clu_ali(inst.sample, inst.clf, inst.tau);
            case LossKind::Center:
                return center_loss(inst.features, inst.labels, inst.class_means);
            case LossKind::Triplet:
                return triplet_loss(inst.features, inst.positives, inst.negatives,
                                    inst.triplet_margin);
        }
        throw InvalidParamsError("gradcheck: unknown loss kind");
    };

    const LossBundle at_x0 = eval();

    // tau is perturbed through its positive value; the bundle's grad_tau is
    // dL/d(tau) so the block maps one-to-one.
    double tau_value = inst.tau.tau();
    const auto value_fn = [&]() -> double {
        inst.tau = TempParam::from_tau(tau_value);
        return eval().value;
    };

    std::vector<GradBlock> blocks;
    const bool features_checked =
        kind != LossKind::CluAli;
    if (features_checked) {
        for (std::size_t i = 0; i < batch; ++i)
            blocks.push_back({"features[" + std::to_string(i) + "]", inst.features[i].data(),
                              inst.features[i].size(), at_x0.grad_features[i].data()});
    }
    if (kind == LossKind::Triplet) {
        for (std::size_t i = 0; i < batch; ++i)
            blocks.push_back({"positives[" + std::to_string(i) + "]", inst.positives[i].data(),
                              inst.positives[i].size(), at_x0.grad_features[batch + i].data()});
        for (std::size_t i = 0; i < batch; ++i)
            blocks.push_back({"negatives[" + std::to_string(i) + "]", inst.negatives[i].data(),
                              inst.negatives[i].size(),
                              at_x0.grad_features[2 * batch + i].data()});
    }
    if (kind == LossKind::Arcface || kind == LossKind::CgArcface || kind == LossKind::CluAli) {
        blocks.push_back({"W", inst.clf.weights.data.data(), inst.clf.weights.data.size(),
                          at_x0.grad_weights.data.data()});
    }
    if (kind == LossKind::CluConFixedTemp || kind == LossKind::CluAli) {
        blocks.push_back({"tau", &tau_value, 1, &at_x0.grad_tau});
    }

    return gradcheck(value_fn, blocks, h);
}

GradCheckReport gradcheck_encoder(std::uint64_t seed, double h) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed, 23 + attempt);
        const std::size_t d_in = 3 + rng.uniform_below(3);
        const std::size_t hidden = 4 + rng.uniform_below(5);
        const std::size_t d_out = 2 + rng.uniform_below(3);
        MlpModel model = make_mlp({d_in, hidden, d_out}, rng);

        Vec input(d_in);
        for (double& x : input) x = rng.normal();
        Vec probe = random_unit(d_out, rng);

        // Keep all pre-activations away from the ReLU kink so central
        // differences see a smooth function.
        ForwardTape tape;
        Vec embedding;
        try {
            embedding = forward(model, input, tape);
        } catch (const ZeroVectorError&) {
            continue;
        }
        bool safe = tape.prenorm_norm > 1e-3;
        for (double z : tape.preacts.front())
            if (std::abs(z) < 1e-3) safe = false;
        if (!safe) continue;

        ParamGrads grads = zero_grads(model);
        backward(model, tape, probe, grads);
        const Vec flat_grads = flatten_grads(grads);
        Vec flat_params = flatten_params(model);

        const auto value_fn = [&]() -> double {
            unflatten_params(model, flat_params);
            return dot(probe, forward(model, input));
        };

        std::vector<GradBlock> blocks{
            {"params", flat_params.data(), flat_params.size(), flat_grads.data()}};
        return gradcheck(value_fn, blocks, h);
    }
}

}  // namespace cml
