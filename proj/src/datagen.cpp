#include "cml/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace cml {

void SynthSpec::validate() const {
    if (num_classes < 2) throw InvalidSpecError("SynthSpec: need at least 2 classes");
    if (samples_per_class < 2) throw InvalidSpecError("SynthSpec: need at least 2 samples per class");
    if (input_dim == 0) throw InvalidSpecError("SynthSpec: zero input dim");
    if (sigma.size() != num_classes)
        throw InvalidSpecError("SynthSpec: sigma size must equal num_classes");
    for (double s : sigma)
        if (!(s > 0.0)) throw InvalidSpecError("SynthSpec: sigma must be positive");
}

std::vector<double> ramped_sigma(std::size_t num_classes, double lo, double hi) {
    std::vector<double> sigma(num_classes);
    if (num_classes == 1) {
        sigma[0] = lo;
        return sigma;
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(num_classes - 1);
        sigma[k] = lo + t * (hi - lo);
    }
    return sigma;
}

int Dataset::num_classes() const {
    int max_label = 0;
    for (int label : labels) max_label = std::max(max_label, label);
    return max_label;
}

Dataset generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed, 3);

    Dataset ds;
    ds.inputs.reserve(spec.num_classes * spec.samples_per_class);
    ds.labels.reserve(spec.num_classes * spec.samples_per_class);

    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        Vec mean(spec.input_dim);
        double n = 0.0;
        do {
            for (double& x : mean) x = rng.normal();
            n = norm2(mean);
        } while (n <= kNormEps);
        for (double& x : mean) x /= n;

        const double sigma = spec.sigma[k];
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            Vec sample(spec.input_dim);
            for (std::size_t t = 0; t < spec.input_dim; ++t)
                sample[t] = mean[t] + sigma * rng.normal();
            ds.inputs.push_back(std::move(sample));
            ds.labels.push_back(static_cast<int>(k + 1));
        }
    }
    return ds;
}

namespace {

constexpr char kDatasetMagic[4] = {'C', 'M', 'L', 'B'};
constexpr std::uint8_t kDatasetVersion = 1;

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_dataset: cannot open " + path);
    out.write(kDatasetMagic, 4);
    out.write(reinterpret_cast<const char*>(&kDatasetVersion), 1);
    const std::uint32_t n = static_cast<std::uint32_t>(dataset.size());
    const std::uint32_t d = static_cast<std::uint32_t>(dataset.input_dim());
    const std::uint32_t k = static_cast<std::uint32_t>(dataset.num_classes());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&k), 4);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::uint32_t label = static_cast<std::uint32_t>(dataset.labels[i]);
        out.write(reinterpret_cast<const char*>(&label), 4);
        out.write(reinterpret_cast<const char*>(dataset.inputs[i].data()),
                  static_cast<std::streamsize>(d * sizeof(double)));
    }
    if (!out) throw IoError("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_dataset: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw FormatError("dataset: bad magic");
    std::uint8_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 1);
    if (!in || version != kDatasetVersion) throw FormatError("dataset: unsupported version");
    std::uint32_t n = 0, d = 0, k = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    in.read(reinterpret_cast<char*>(&k), 4);
    if (!in || d == 0) throw FormatError("dataset: bad header");

    Dataset ds;
    ds.inputs.reserve(n);
    ds.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t label = 0;
        in.read(reinterpret_cast<char*>(&label), 4);
        Vec sample(d);
        in.read(reinterpret_cast<char*>(sample.data()),
                static_cast<std::streamsize>(d * sizeof(double)));
        if (!in) throw FormatError("dataset: truncated file");
        if (label == 0 || label > k) throw FormatError("dataset: label out of range");
        ds.labels.push_back(static_cast<int>(label));
        ds.inputs.push_back(std::move(sample));
    }
    return ds;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_dataset_csv: cannot open " + path);
    out << "label";
    for (std::size_t t = 1; t <= dataset.input_dim(); ++t) out << ",x" << t;
    out << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << dataset.labels[i];
        for (double x : dataset.inputs[i]) out << ',' << x;
        out << "\n";
    }
    if (!out) throw IoError("write_dataset_csv: write failed for " + path);
}

SplitResult split(const Dataset& dataset, double train_frac, Rng& rng) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw InvalidParamsError("split: train_frac outside (0, 1)");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset.labels[i]].push_back(i);

    SplitResult result;
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 2)
            throw ClassTooSmallError("split: class with fewer than 2 samples");
        rng.shuffle(indices);
        std::size_t n_train = static_cast<std::size_t>(
            std::floor(train_frac * static_cast<double>(indices.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, indices.size() - 1);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            Dataset& side = (i < n_train) ? result.train : result.eval;
            side.inputs.push_back(dataset.inputs[indices[i]]);
            side.labels.push_back(label);
        }
    }
    return result;
}

}  // namespace cml
