#include "cml/losses.hpp"

#include <algorithm>
#include <cmath>

namespace cml {

Classifier make_classifier(std::size_t num_classes, std::size_t dim,
                           double scale, double margin, Rng& rng) {
    Classifier clf;
    clf.weights = Mat(num_classes, dim);
    clf.scale = scale;
    clf.margin = margin;
    for (std::size_t k = 0; k < num_classes; ++k) {
        std::span<double> row{clf.weights.row(k), dim};
        double n = 0.0;
        do {
            for (double& x : row) x = rng.normal();
            n = norm2(row);
        } while (n <= kNormEps);
        for (double& x : row) x /= n;
    }
    return clf;
}

TempParam TempParam::from_tau(double tau_value) {
    if (tau_value <= 0.0)
        throw DegenerateTemperatureError("TempParam: tau must be positive");
    TempParam t;
    t.log_tau = std::log(tau_value);
    t.tau_value_ = tau_value;
    return t;
}

namespace {

// Margin transform of the target cosine. Past theta + mu = pi the usual
// cos(theta + mu) turns back upward, so the standard fallback
// cos(theta) - mu*sin(mu) keeps the penalty monotone.
struct MarginTransform {
    double value;
    double dvalue_dcos;
};

MarginTransform margin_target(double cos_theta, double mu) {
    if (mu == 0.0) return {cos_theta, 1.0};
    const double cos_mu = std::cos(mu);
    const double sin_mu = std::sin(mu);
    if (cos_theta > -cos_mu) {
        const double sin_theta = std::sqrt(std::max(1.0 - cos_theta * cos_theta, 0.0));
        const double value = cos_theta * cos_mu - sin_theta * sin_mu;
        const double dvalue = cos_mu + cos_theta * sin_mu / std::max(sin_theta, 1e-12);
        return {value, dvalue};
    }
    return {cos_theta - mu * sin_mu, 1.0};
}

// Shared margin-softmax core: per-sample additive angular margins.
LossBundle margin_softmax(const std::vector<Vec>& features, const std::vector<int>& labels,
                          const Classifier& clf, const std::vector<double>& margins) {
    const std::size_t batch = features.size();
    const std::size_t num_classes = clf.num_classes();
    const std::size_t dim = clf.dim();
    if (labels.size() != batch || margins.size() != batch)
        throw LengthMismatchError("margin softmax: batch size mismatch");

    LossBundle bundle;
    bundle.grad_features.assign(batch, Vec(dim, 0.0));
    bundle.grad_weights = Mat(num_classes, dim);
    if (batch == 0) return bundle;

    const double inv_batch = 1.0 / static_cast<double>(batch);
    Vec logits(num_classes);
    for (std::size_t i = 0; i < batch; ++i) {
        const int label = labels[i];
        if (label < 1 || static_cast<std::size_t>(label) > num_classes)
            throw InvalidLabelError("margin softmax: label outside [1, K]");
        const std::size_t target = static_cast<std::size_t>(label - 1);
        if (features[i].size() != dim)
            throw DimensionMismatchError("margin softmax: feature dim mismatch");

        for (std::size_t j = 0; j < num_classes; ++j)
            logits[j] = cosine(features[i], {clf.weights.row(j), dim});

        const double cos_target = logits[target];
        const MarginTransform mt = margin_target(cos_target, margins[i]);
        logits[target] = mt.value;
        for (double& z : logits) z *= clf.scale;

        const double lse = log_sum_exp(logits);
        bundle.value += (lse - logits[target]) * inv_batch;

        const Vec probs = stable_softmax(logits);
        for (std::size_t j = 0; j < num_classes; ++j) {
            // dL_i/dcos_j, with the margin transform folded into the target.
            double dcos = probs[j] - (j == target ? 1.0 : 0.0);
            dcos *= clf.scale;
            if (j == target) dcos *= mt.dvalue_dcos;
            const double g = dcos * inv_batch;
            axpy(g, {clf.weights.row(j), dim}, bundle.grad_features[i]);
            axpy(g, features[i], {bundle.grad_weights.row(j), dim});
        }
    }
    return bundle;
}

}  // namespace

LossBundle arcface(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const Classifier& clf) {
    const std::vector<double> margins(features.size(), clf.margin);
    return margin_softmax(features, labels, clf, margins);
}

double margin_scale(double phi_y, double phi_min, double phi_max) {
    const double span = phi_max - phi_min;
    if (span < 1e-12) return 1.0;
    constexpr double tol = 1e-9;
    if (phi_y < phi_min - tol || phi_y > phi_max + tol)
        throw OutOfRangeError("margin_scale: phi outside [phi_min, phi_max]");
    const double lambda = (phi_y - phi_min) / span;
    return std::clamp(lambda, 0.0, 1.0);
}

LossBundle cg_arcface(const std::vector<Vec>& features, const std::vector<int>& labels,
                      const Classifier& clf, const ConcentrationTable& table) {
    std::vector<double> margins(features.size(), clf.margin);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = table.phi.find(labels[i]);
        if (it == table.phi.end()) continue;  // warm-up default: lambda = 1
        margins[i] = margin_scale(it->second, table.phi_min, table.phi_max) * clf.margin;
    }
    return margin_softmax(features, labels, clf, margins);
}

namespace {

// Shared contrast core: per-sample logits f.C_j / temp_j with exactly one
// positive among the sampled centers.
LossBundle cluster_contrast(const std::vector<Vec>& features, const std::vector<int>& labels,
                            const ClassSample& sample, const std::vector<double>& temps,
                            bool with_tau_grad, double tau) {
    const std::size_t batch = features.size();
    const std::size_t m = sample.size();
    if (labels.size() != batch)
        throw LengthMismatchError("clu_con: batch size mismatch");
    for (double t : temps)
        if (t <= kTempEps) throw DegenerateTemperatureError("clu_con: temperature underflow");

    LossBundle bundle;
    bundle.grad_features.assign(batch, {});
    if (batch == 0) return bundle;
    const std::size_t dim = features.front().size();
    for (auto& g : bundle.grad_features) g.assign(dim, 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch);
    Vec logits(m);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t positive = m;
        for (std::size_t j = 0; j < m; ++j) {
            if (sample.center_ids[j] == labels[i]) positive = j;
            logits[j] = dot(features[i], sample.centers[j]) / temps[j];
        }
        if (positive == m)
            throw MissingPositiveCenterError("clu_con: batch label not among sampled centers");

        const double lse = log_sum_exp(logits);
        bundle.value += (lse - logits[positive]) * inv_batch;

        const Vec probs = stable_softmax(logits);
        double tau_acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double dlogit = probs[j] - (j == positive ? 1.0 : 0.0);
            axpy(dlogit / temps[j] * inv_batch, sample.centers[j], bundle.grad_features[i]);
            if (with_tau_grad) tau_acc += dlogit * (-logits[j] / tau);
        }
        bundle.grad_tau += tau_acc * inv_batch;
    }
    return bundle;
}

}  // namespace

LossBundle clu_con(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const ClassSample& sample) {
    return cluster_contrast(features, labels, sample, sample.temps, false, 0.0);
}

LossBundle clu_con_fixed_temp(const std::vector<Vec>& features, const std::vector<int>& labels,
                              const ClassSample& sample, const TempParam& tau0) {
    const double tau = tau0.tau();
    const std::vector<double> temps(sample.size(), tau);
    return cluster_contrast(features, labels, sample, temps, true, tau);
}

LossBundle clu_ali(const ClassSample& sample, const Classifier& clf, const TempParam& tau_param) {
    const double tau = tau_param.tau();
    if (tau <= kTempEps) throw DegenerateTemperatureError("clu_ali: temperature underflow");
    const std::size_t m = sample.size();
    const std::size_t num_classes = clf.num_classes();
    const std::size_t dim = clf.dim();

    LossBundle bundle;
    bundle.grad_weights = Mat(num_classes, dim);
    if (m == 0) return bundle;

    const double inv_m = 1.0 / static_cast<double>(m);
    Vec logits(num_classes);
    for (std::size_t i = 0; i < m; ++i) {
        const int label = sample.center_ids[i];
        if (label < 1 || static_cast<std::size_t>(label) > num_classes)
            throw InvalidLabelError("clu_ali: sampled class outside classifier range");
        const std::size_t target = static_cast<std::size_t>(label - 1);

        for (std::size_t j = 0; j < num_classes; ++j)
            logits[j] = dot(sample.centers[i], {clf.weights.row(j), dim}) / tau;

        const double lse = log_sum_exp(logits);
        bundle.value += (lse - logits[target]) * inv_m;

        const Vec probs = stable_softmax(logits);
        double tau_acc = 0.0;
        for (std::size_t j = 0; j < num_classes; ++j) {
            const double dlogit = probs[j] - (j == target ? 1.0 : 0.0);
            axpy(dlogit / tau * inv_m, sample.centers[i], {bundle.grad_weights.row(j), dim});
            tau_acc += dlogit * (-logits[j] / tau);
        }
        bundle.grad_tau += tau_acc * inv_m;
    }
    return bundle;
}

LossBundle overall(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const Classifier& clf, const ConcentrationTable& table,
                   const ClassSample& sample, const TempParam& tau,
                   double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw InvalidParamsError("overall: negative loss weight");

    LossBundle bundle = cg_arcface(features, labels, clf, table);
    if (lambda1 > 0.0) {
        const LossBundle con = clu_con(features, labels, sample);
        bundle.value += lambda1 * con.value;
        for (std::size_t i = 0; i < bundle.grad_features.size(); ++i)
            axpy(lambda1, con.grad_features[i], bundle.grad_features[i]);
    }
    if (lambda2 > 0.0) {
        const LossBundle ali = clu_ali(sample, clf, tau);
        bundle.value += lambda2 * ali.value;
        for (std::size_t i = 0; i < bundle.grad_weights.data.size(); ++i)
            bundle.grad_weights.data[i] += lambda2 * ali.grad_weights.data[i];
        bundle.grad_tau += lambda2 * ali.grad_tau;
    }
    return bundle;
}

LossBundle center_loss(const std::vector<Vec>& features, const std::vector<int>& labels,
                       const std::map<int, Vec>& class_means) {
    if (features.size() != labels.size())
        throw LengthMismatchError("center_loss: batch size mismatch");

    LossBundle bundle;
    bundle.grad_features.assign(features.size(), {});
    if (features.empty()) return bundle;

    const double inv_batch = 1.0 / static_cast<double>(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto it = class_means.find(labels[i]);
        if (it == class_means.end())
            throw MissingClassMeanError("center_loss: no mean for batch label");
        const Vec& mean = it->second;
        bundle.value += squared_distance(features[i], mean) * inv_batch;
        Vec& g = bundle.grad_features[i];
        g.assign(features[i].size(), 0.0);
        for (std::size_t t = 0; t < g.size(); ++t)
            g[t] = 2.0 * (features[i][t] - mean[t]) * inv_batch;
    }
    return bundle;
}

LossBundle triplet_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                        const std::vector<Vec>& negatives, double margin_t) {
    if (anchors.size() != positives.size() || anchors.size() != negatives.size())
        throw LengthMismatchError("triplet_loss: list lengths differ");
    if (margin_t < 0.0) throw InvalidParamsError("triplet_loss: negative margin");

    const std::size_t n = anchors.size();
    LossBundle bundle;
    bundle.grad_features.assign(3 * n, {});
    if (n == 0) return bundle;
    const std::size_t dim = anchors.front().size();
    for (auto& g : bundle.grad_features) g.assign(dim, 0.0);

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double term = squared_distance(anchors[i], positives[i]) -
                            squared_distance(anchors[i], negatives[i]) + margin_t;
        if (term <= 0.0) continue;  // inactive hinge, subgradient 0 at the kink
        bundle.value += term * inv_n;
        Vec& ga = bundle.grad_features[i];
        Vec& gp = bundle.grad_features[n + i];
        Vec& gn = bundle.grad_features[2 * n + i];
        for (std::size_t t = 0; t < dim; ++t) {
            ga[t] = 2.0 * (negatives[i][t] - positives[i][t]) * inv_n;
            gp[t] = 2.0 * (positives[i][t] - anchors[i][t]) * inv_n;
            gn[t] = 2.0 * (anchors[i][t] - negatives[i][t]) * inv_n;
        }
    }
    return bundle;
}

}  // namespace cml
