#pragma once

// Feedforward network with tanh hidden units and a linear output layer,
// manual (batched) backpropagation, the two weight initializers used by the
// experiments, Adam, and a binary checkpoint format.
//
// Parameters live in one flat vector so that gradients, optimizer state and
// checkpoints all share a single layout: for each layer l, the weight matrix
// W_l (out x in, column-major) followed by the bias b_l (out).

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpg {

namespace detail {

// tanh through the vectorised exponential; std::tanh is scalar-only for double.
inline void tanh_inplace(Eigen::MatrixXd& m) {
    auto a = m.array();
    const auto clamped = a.max(-20.0).min(20.0);
    const Eigen::ArrayXXd e = (2.0 * clamped).exp();
    a = (e - 1.0) / (e + 1.0);
}

} // namespace detail

class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least an input and an output layer");
        Eigen::Index offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw std::invalid_argument("layer sizes must be positive");
            weight_offsets_.push_back(offset);
            offset += Eigen::Index{sizes_[l]} * sizes_[l + 1];
            bias_offsets_.push_back(offset);
            offset += sizes_[l + 1];
        }
        params_ = Eigen::VectorXd::Zero(offset);
    }

    const std::vector<int>& sizes() const { return sizes_; }
    int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    Eigen::Index num_params() const { return params_.size(); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    Eigen::Map<Eigen::MatrixXd> weight(int l) {
        return {params_.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(int l) const {
        return {params_.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]};
    }
    Eigen::Map<Eigen::VectorXd> bias(int l) { return {params_.data() + bias_offsets_[l], sizes_[l + 1]}; }
    Eigen::Map<const Eigen::VectorXd> bias(int l) const {
        return {params_.data() + bias_offsets_[l], sizes_[l + 1]};
    }

    Eigen::Index weight_offset(int l) const { return weight_offsets_[l]; }
    Eigen::Index bias_offset(int l) const { return bias_offsets_[l]; }

    // Activations of every layer for one batch (one column per sample).
    struct Tape {
        std::vector<Eigen::MatrixXd> layers;
    };

    // Without a tape, columns are processed in cache-sized chunks.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const {
        check_input(inputs.rows());
        constexpr Eigen::Index chunk = 512;
        Eigen::MatrixXd out(output_size(), inputs.cols());
        Eigen::MatrixXd a, z;
        for (Eigen::Index c0 = 0; c0 < inputs.cols(); c0 += chunk) {
            const Eigen::Index n = std::min(chunk, inputs.cols() - c0);
            a = inputs.middleCols(c0, n);
            for (int l = 0; l < num_layers(); ++l) {
                z.noalias() = weight(l) * a;
                z.colwise() += bias(l);
                if (l + 1 < num_layers()) detail::tanh_inplace(z);
                a.swap(z);
            }
            out.middleCols(c0, n) = a;
        }
        return out;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape& tape) const {
        check_input(inputs.rows());
        tape.layers.resize(sizes_.size());
        tape.layers[0] = inputs;
        for (int l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd z = weight(l) * tape.layers[l];
            z.colwise() += bias(l);
            if (l + 1 < num_layers()) detail::tanh_inplace(z);
            tape.layers[l + 1] = std::move(z);
        }
        return tape.layers.back();
    }

    Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const {
        return forward(Eigen::MatrixXd(input)).col(0);
    }

    // Accumulates d(sum_n output_n . output_grad_n)/d(params) into `grad`.
    void backward(const Tape& tape, const Eigen::MatrixXd& output_grad, Eigen::Ref<Eigen::VectorXd> grad) const {
        if (output_grad.rows() != output_size() || output_grad.cols() != tape.layers.back().cols())
            throw std::invalid_argument("backward: output gradient shape mismatch");
        if (grad.size() != num_params()) throw std::invalid_argument("backward: gradient size mismatch");
        Eigen::MatrixXd delta = output_grad;
        for (int l = num_layers() - 1; l >= 0; --l) {
            const auto& below = tape.layers[l];
            Eigen::Map<Eigen::MatrixXd> dw(grad.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]);
            Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_offsets_[l], sizes_[l + 1]);
            dw.noalias() += delta * below.transpose();
            db += delta.rowwise().sum();
            if (l == 0) break;
            Eigen::MatrixXd next = weight(l).transpose() * delta;
            next.array() *= 1.0 - below.array().square();
            delta = std::move(next);
        }
    }

    Eigen::VectorXd backward(const Eigen::VectorXd& input, const Eigen::VectorXd& output_grad) const {
        Tape tape;
        forward(Eigen::MatrixXd(input), tape);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(num_params());
        backward(tape, Eigen::MatrixXd(output_grad), grad);
        return grad;
    }

private:
    void check_input(Eigen::Index rows) const {
        if (sizes_.empty()) throw std::logic_error("mlp has no layers");
        if (rows != input_size())
            throw std::invalid_argument("mlp input has " + std::to_string(rows) + " rows, expected " +
                                        std::to_string(input_size()));
    }

    std::vector<int> sizes_;
    std::vector<Eigen::Index> weight_offsets_;
    std::vector<Eigen::Index> bias_offsets_;
    Eigen::VectorXd params_;
};

// Weights ~ N(0, sigma^2), redrawn while |w| > 2 sigma; biases zero.
inline Mlp init_gaussian_truncated(std::vector<int> sizes, std::mt19937_64& rng, double sigma = 0.01) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    Mlp net(std::move(sizes));
    std::normal_distribution<double> normal(0.0, sigma);
    for (int l = 0; l < net.num_layers(); ++l) {
        auto w = net.weight(l);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            double x;
            do x = normal(rng);
            while (std::abs(x) > 2.0 * sigma);
            w.data()[i] = x;
        }
    }
    return net;
}

// Weights ~ N(0, 1 / fan_in); biases zero.
inline Mlp init_variance_scaling(std::vector<int> sizes, std::mt19937_64& rng) {
    Mlp net(std::move(sizes));
    for (int l = 0; l < net.num_layers(); ++l) {
        auto w = net.weight(l);
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(w.cols())));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    }
    return net;
}

// Minimises; callers pass the negated gradient for ascent.
class Adam {
public:
    explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    }

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        if (params.size() != grad.size()) throw std::invalid_argument("adam: gradient size mismatch");
        if (m_.size() == 0) {
            m_ = Eigen::VectorXd::Zero(params.size());
            v_ = Eigen::VectorXd::Zero(params.size());
        } else if (m_.size() != params.size()) {
            throw std::invalid_argument("adam: parameter size changed");
        }
        ++steps_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

    double learning_rate() const { return lr_; }
    long steps() const { return steps_; }
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }

private:
    double lr_, beta1_, beta2_, eps_;
    Eigen::VectorXd m_, v_;
    long steps_ = 0;
};

// Checkpoint layout (all little-endian):
//   8 bytes   magic "HPGMLP01"
//   u32       number of layer sizes n
//   n x u32   layer sizes, input first
//   u64       parameter count P
//   P x f64   parameters in the flat layout described above
namespace checkpoint {

inline constexpr char magic[8] = {'H', 'P', 'G', 'M', 'L', 'P', '0', '1'};

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <class T>
T get_le(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        int c = in.get();
        if (c == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
        bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

} // namespace detail

inline void write(std::ostream& out, const Mlp& net) {
    out.write(magic, sizeof magic);
    detail::put_le(out, static_cast<std::uint32_t>(net.sizes().size()));
    for (int s : net.sizes()) detail::put_le(out, static_cast<std::uint32_t>(s));
    detail::put_le(out, static_cast<std::uint64_t>(net.num_params()));
    for (Eigen::Index i = 0; i < net.num_params(); ++i) detail::put_le(out, net.params()[i]);
}

inline Mlp read(std::istream& in) {
    char header[sizeof magic];
    if (!in.read(header, sizeof header) || !std::equal(header, header + sizeof header, magic))
        throw std::runtime_error("checkpoint: bad magic");
    const auto n = detail::get_le<std::uint32_t>(in);
    if (n < 2 || n > 64) throw std::runtime_error("checkpoint: implausible layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = static_cast<int>(detail::get_le<std::uint32_t>(in));
    Mlp net(sizes);
    const auto count = detail::get_le<std::uint64_t>(in);
    if (count != static_cast<std::uint64_t>(net.num_params()))
        throw std::runtime_error("checkpoint: parameter count does not match layer sizes");
    for (Eigen::Index i = 0; i < net.num_params(); ++i) net.params()[i] = detail::get_le<double>(in);
    return net;
}

inline void save(const std::filesystem::path& path, const Mlp& net) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        write(out, net);
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Mlp load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read(in);
}

} // namespace checkpoint
} // namespace hpg
