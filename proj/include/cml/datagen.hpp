#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cml/numeric.hpp"
#include "cml/rng.hpp"

namespace cml {

// Synthetic labeled-embedding dataset: per class, a random unit mean
// direction plus isotropic Gaussian noise of per-class spread sigma_k.
// Classes with larger sigma are harder to separate and to cluster.
struct SynthSpec {
    std::size_t num_classes = 50;
    std::size_t samples_per_class = 200;
    std::size_t input_dim = 16;
    std::vector<double> sigma;  // one entry per class; see ramped_sigma()
    std::uint64_t seed = 1;

    void validate() const;
};

// Linear ramp over classes; default range [0.1, 0.8].
std::vector<double> ramped_sigma(std::size_t num_classes, double lo, double hi);

struct Dataset {
    std::vector<Vec> inputs;
    std::vector<int> labels;  // 1-based class ids

    std::size_t size() const { return inputs.size(); }
    std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
    int num_classes() const;
};

Dataset generate(const SynthSpec& spec);

// Binary format: magic "CMLB", version byte, u32 N, u32 d_in, u32 K, then
// one u32 label + d_in f64 values per row. Little-endian throughout.
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

// CSV export: header "label,x1,...,xd", one row per sample.
void write_dataset_csv(const Dataset& dataset, const std::string& path);

// Stratified split; every class keeps at least one sample on each side.
// Throws ClassTooSmallError when a class has fewer than two samples.
struct SplitResult {
    Dataset train;
    Dataset eval;
};
SplitResult split(const Dataset& dataset, double train_frac, Rng& rng);

}  // namespace cml
