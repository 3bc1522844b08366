#include "cml/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace cml {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset IO assume a little-endian host");

std::size_t MlpModel::num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].data.size() + biases[l].size();
    return n;
}

MlpModel make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
    if (layer_dims.size() < 2) throw InvalidSpecError("make_mlp: need at least two layer dims");
    for (std::size_t d : layer_dims)
        if (d == 0) throw InvalidSpecError("make_mlp: zero layer dim");

    MlpModel model;
    model.layer_dims = layer_dims;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        Mat w(fan_out, fan_in);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& x : w.data) x = (2.0 * rng.uniform() - 1.0) * limit;
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(fan_out, 0.0);
    }
    return model;
}

Vec forward(const MlpModel& model, std::span<const double> x, ForwardTape& tape) {
    if (x.size() != model.input_dim())
        throw DimensionMismatchError("forward: input dim mismatch");

    const std::size_t L = model.num_layers();
    tape.inputs.assign(L, {});
    tape.preacts.assign(L, {});

    Vec act(x.begin(), x.end());
    for (std::size_t l = 0; l < L; ++l) {
        tape.inputs[l] = act;
        const Mat& w = model.weights[l];
        const Vec& b = model.biases[l];
        Vec z(w.rows);
        for (std::size_t r = 0; r < w.rows; ++r)
            z[r] = b[r] + dot({w.row(r), w.cols}, act);
        tape.preacts[l] = z;
        if (l + 1 < L) {
            for (double& v : z)
                if (v < 0.0) v = 0.0;
        }
        act = std::move(z);
    }

    tape.prenorm = act;
    tape.prenorm_norm = norm2(act);
    tape.embedding = l2_normalize(act);
    return tape.embedding;
}

Vec forward(const MlpModel& model, std::span<const double> x) {
    ForwardTape tape;
    return forward(model, x, tape);
}

ParamGrads zero_grads(const MlpModel& model) {
    ParamGrads g;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        g.weights.emplace_back(model.weights[l].rows, model.weights[l].cols);
        g.biases.emplace_back(model.biases[l].size(), 0.0);
    }
    return g;
}

void ParamGrads::add_scaled(const ParamGrads& other, double factor) {
    if (weights.size() != other.weights.size())
        throw ShapeMismatchError("ParamGrads::add_scaled: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].same_shape(other.weights[l]) ||
            biases[l].size() != other.biases[l].size())
            throw ShapeMismatchError("ParamGrads::add_scaled: shape mismatch");
        for (std::size_t i = 0; i < weights[l].data.size(); ++i)
            weights[l].data[i] += factor * other.weights[l].data[i];
        for (std::size_t i = 0; i < biases[l].size(); ++i)
            biases[l][i] += factor * other.biases[l][i];
    }
}

Vec backward(const MlpModel& model, const ForwardTape& tape,
             std::span<const double> grad_embedding, ParamGrads& grads) {
    const std::size_t L = model.num_layers();
    if (tape.inputs.size() != L || tape.preacts.size() != L)
        throw TapeMismatchError("backward: tape layer count mismatch");
    if (grad_embedding.size() != model.output_dim())
        throw TapeMismatchError("backward: grad dim mismatch");
    if (grads.weights.size() != L)
        throw ShapeMismatchError("backward: grads not sized for model");

    // Through y = z / ||z||: dz = (g - (g.y) y) / ||z||.
    const Vec& y = tape.embedding;
    const double gy = dot(grad_embedding, y);
    Vec grad(y.size());
    const double inv_norm = 1.0 / tape.prenorm_norm;
    for (std::size_t i = 0; i < y.size(); ++i)
        grad[i] = (grad_embedding[i] - gy * y[i]) * inv_norm;

    for (std::size_t l = L; l-- > 0;) {
        const Mat& w = model.weights[l];
        if (tape.inputs[l].size() != w.cols || tape.preacts[l].size() != w.rows)
            throw TapeMismatchError("backward: tape shape mismatch");

        Vec gz = std::move(grad);
        if (l + 1 < L) {
            const Vec& z = tape.preacts[l];
            for (std::size_t r = 0; r < gz.size(); ++r)
                if (z[r] <= 0.0) gz[r] = 0.0;
        }

        const Vec& in = tape.inputs[l];
        Mat& gw = grads.weights[l];
        for (std::size_t r = 0; r < w.rows; ++r) {
            axpy(gz[r], in, {gw.row(r), gw.cols});
            grads.biases[l][r] += gz[r];
        }

        grad.assign(w.cols, 0.0);
        for (std::size_t r = 0; r < w.rows; ++r)
            axpy(gz[r], {w.row(r), w.cols}, grad);
    }
    return grad;
}

void ema_update(MlpModel& momentum_model, const MlpModel& model, double m_e) {
    if (m_e < 0.0 || m_e > 1.0)
        throw InvalidParamsError("ema_update: m_e outside [0, 1]");
    if (momentum_model.layer_dims != model.layer_dims)
        throw ShapeMismatchError("ema_update: model shapes differ");
    const double w_new = 1.0 - m_e;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto& md = momentum_model.weights[l].data;
        const auto& fd = model.weights[l].data;
        for (std::size_t i = 0; i < md.size(); ++i)
            md[i] = m_e * md[i] + w_new * fd[i];
        auto& mb = momentum_model.biases[l];
        const auto& fb = model.biases[l];
        for (std::size_t i = 0; i < mb.size(); ++i)
            mb[i] = m_e * mb[i] + w_new * fb[i];
    }
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatchError("adam_step: size mismatch");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

Vec flatten_params(const MlpModel& model) {
    Vec flat;
    flat.reserve(model.num_params());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        flat.insert(flat.end(), model.weights[l].data.begin(), model.weights[l].data.end());
        flat.insert(flat.end(), model.biases[l].begin(), model.biases[l].end());
    }
    return flat;
}

Vec flatten_grads(const ParamGrads& grads) {
    Vec flat;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        flat.insert(flat.end(), grads.weights[l].data.begin(), grads.weights[l].data.end());
        flat.insert(flat.end(), grads.biases[l].begin(), grads.biases[l].end());
    }
    return flat;
}

void unflatten_params(MlpModel& model, std::span<const double> flat) {
    if (flat.size() != model.num_params())
        throw ShapeMismatchError("unflatten_params: size mismatch");
    std::size_t off = 0;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto& wd = model.weights[l].data;
        std::copy(flat.begin() + off, flat.begin() + off + wd.size(), wd.begin());
        off += wd.size();
        auto& b = model.biases[l];
        std::copy(flat.begin() + off, flat.begin() + off + b.size(), b.begin());
        off += b.size();
    }
}

double lr_schedule(std::size_t epoch, double base_lr, std::span<const std::size_t> milestones) {
    double lr = base_lr;
    for (std::size_t ms : milestones)
        if (epoch >= ms) lr *= 0.1;
    return lr;
}

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'M', 'L', 'M'};
constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_le(std::ifstream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated file");
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 4);
    write_le(out, kCheckpointVersion);
    write_le(out, static_cast<std::uint32_t>(model.layer_dims.size()));
    for (std::size_t d : model.layer_dims)
        write_le(out, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        out.write(reinterpret_cast<const char*>(model.weights[l].data.data()),
                  static_cast<std::streamsize>(model.weights[l].data.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(model.biases[l].data()),
                  static_cast<std::streamsize>(model.biases[l].size() * sizeof(double)));
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

MlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic");
    std::uint8_t version = 0;
    read_le(in, version);
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    std::uint32_t num_dims = 0;
    read_le(in, num_dims);
    if (num_dims < 2) throw FormatError("checkpoint: bad layer count");
    std::vector<std::size_t> dims(num_dims);
    for (auto& d : dims) {
        std::uint32_t v = 0;
        read_le(in, v);
        if (v == 0) throw FormatError("checkpoint: zero layer dim");
        d = v;
    }
    MlpModel model;
    model.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Mat w(dims[l + 1], dims[l]);
        in.read(reinterpret_cast<char*>(w.data.data()),
                static_cast<std::streamsize>(w.data.size() * sizeof(double)));
        Vec b(dims[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw FormatError("checkpoint: truncated file");
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

}  // namespace cml
