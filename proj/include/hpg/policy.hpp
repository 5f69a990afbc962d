#pragma once

// Goal-conditional softmax policy p(a | s, g, theta) over discrete actions.

#include "hpg/env.hpp"
#include "hpg/nnet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace hpg {

struct StateGoal {
    State state;
    Goal goal;
    friend bool operator==(StateGoal, StateGoal) = default;
    std::uint64_t key() const { return (std::uint64_t{state.code} << 32) | goal.code; }
};

// `features`: network input is [encode(s), encode(g)].
// `tabular`: one-hot over (state, goal) pairs, i.e. a linear softmax with one
// logit per (state, goal, action). Used by the oracle tests.
enum class Encoding { features, tabular };

struct ActionDistribution {
    std::vector<double> probs;
    std::vector<double> log_probs;
};

// Deduplicated set of (state, goal) pairs, in first-insertion order.
class PairIndex {
public:
    std::size_t insert(StateGoal sg) {
        auto [it, fresh] = index_.try_emplace(sg.key(), pairs_.size());
        if (fresh) pairs_.push_back(sg);
        return it->second;
    }
    std::size_t at(StateGoal sg) const { return index_.at(sg.key()); }
    std::size_t size() const { return pairs_.size(); }
    std::span<const StateGoal> pairs() const { return pairs_; }
    void reserve(std::size_t n) {
        index_.reserve(n);
        pairs_.reserve(n);
    }

private:
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::vector<StateGoal> pairs_;
};

// Per-(state, goal) coefficients c_a on grad log p(a | s, g). Summing the
// coefficient of every (s, g, a) occurrence lets one backward pass per
// distinct (s, g) pair serve the whole batch.
class ScoreTable {
public:
    explicit ScoreTable(int num_actions) : num_actions_(num_actions) {}

    void add(State s, Goal g, Action a, double coefficient) {
        const auto col = pairs_.insert({s, g});
        if (col * num_actions_ >= coefs_.size()) coefs_.resize((col + 1) * num_actions_, 0.0);
        coefs_[col * num_actions_ + a] += coefficient;
    }

    int num_actions() const { return num_actions_; }
    const PairIndex& pairs() const { return pairs_; }
    std::span<const double> coefficients(std::size_t col) const {
        return {coefs_.data() + col * num_actions_, static_cast<std::size_t>(num_actions_)};
    }
    bool empty() const { return pairs_.size() == 0; }

private:
    int num_actions_;
    PairIndex pairs_;
    std::vector<double> coefs_;
};

class Policy {
public:
    Policy(EnvSpec spec, Mlp net, Encoding encoding = Encoding::features)
        : spec_(std::move(spec)), net_(std::move(net)), encoding_(encoding) {
        if (net_.input_size() != input_size(spec_, encoding_))
            throw std::invalid_argument("policy network input size does not match the encoding");
        if (net_.output_size() != env::num_actions(spec_))
            throw std::invalid_argument("policy network output size must equal the number of actions");
    }

    static int input_size(const EnvSpec& spec, Encoding encoding) {
        if (encoding == Encoding::tabular) {
            const auto n = env::num_states(spec);
            return static_cast<int>(n * n);
        }
        return 2 * env::feature_size(spec);
    }

    // Network with the given hidden widths, truncated-Gaussian initialised.
    static Policy make(const EnvSpec& spec, Rng& rng, const std::vector<int>& hidden = {256, 256}) {
        std::vector<int> sizes{input_size(spec, Encoding::features)};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(env::num_actions(spec));
        return Policy(spec, init_gaussian_truncated(sizes, rng), Encoding::features);
    }

    // Linear softmax over one-hot (state, goal) indices; all logits zero.
    static Policy tabular(const EnvSpec& spec) {
        return Policy(spec, Mlp({input_size(spec, Encoding::tabular), env::num_actions(spec)}), Encoding::tabular);
    }

    const EnvSpec& spec() const { return spec_; }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    Encoding encoding() const { return encoding_; }
    int num_actions() const { return net_.output_size(); }
    Eigen::Index num_params() const { return net_.num_params(); }

    void encode(State s, Goal g, std::span<double> out) const {
        if (encoding_ == Encoding::tabular) {
            std::fill(out.begin(), out.end(), 0.0);
            out[std::size_t{s.code} * env::num_states(spec_) + g.code] = 1.0;
            return;
        }
        const auto f = static_cast<std::size_t>(env::feature_size(spec_));
        env::encode(spec_, s, out.subspan(0, f));
        env::encode(spec_, g, out.subspan(f, f));
    }

    Eigen::MatrixXd encode_batch(std::span<const StateGoal> pairs) const {
        Eigen::MatrixXd x(net_.input_size(), static_cast<Eigen::Index>(pairs.size()));
        for (std::size_t i = 0; i < pairs.size(); ++i)
            encode(pairs[i].state, pairs[i].goal, {x.col(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(x.rows())});
        return x;
    }

    // Column-wise log-softmax of the logits; one column per pair.
    Eigen::MatrixXd log_probs(std::span<const StateGoal> pairs) const {
        Eigen::MatrixXd z = net_.forward(encode_batch(pairs));
        log_softmax_inplace(z);
        return z;
    }

    ActionDistribution distribution(State s, Goal g) const {
        StateGoal pair{s, g};
        Eigen::VectorXd lp = log_probs({&pair, 1}).col(0);
        ActionDistribution d;
        d.log_probs.assign(lp.data(), lp.data() + lp.size());
        d.probs.resize(d.log_probs.size());
        for (std::size_t a = 0; a < d.probs.size(); ++a) d.probs[a] = std::exp(d.log_probs[a]);
        return d;
    }

    double log_prob(State s, Goal g, Action a) const { return distribution(s, g).log_probs.at(a); }

    Eigen::VectorXd grad_log_prob(State s, Goal g, Action a) const {
        ScoreTable table(num_actions());
        table.add(s, g, a, 1.0);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(num_params());
        accumulate(table, grad);
        return grad;
    }

    // grad += sum over entries of c_a * grad log p(a | s, g).
    void accumulate(const ScoreTable& table, Eigen::VectorXd& grad) const {
        if (table.empty()) return;
        const auto pairs = table.pairs().pairs();
        Mlp::Tape tape;
        Eigen::MatrixXd z = net_.forward(encode_batch(pairs), tape);
        log_softmax_inplace(z);
        // d/dz of sum_a c_a log softmax(z)_a = c - (sum_a c_a) p
        Eigen::MatrixXd dz(z.rows(), z.cols());
        for (Eigen::Index col = 0; col < z.cols(); ++col) {
            auto c = table.coefficients(static_cast<std::size_t>(col));
            Eigen::Map<const Eigen::VectorXd> cv(c.data(), static_cast<Eigen::Index>(c.size()));
            dz.col(col) = cv - cv.sum() * z.col(col).array().exp().matrix();
        }
        net_.backward(tape, dz, grad);
    }

    static void log_softmax_inplace(Eigen::MatrixXd& z) {
        for (Eigen::Index col = 0; col < z.cols(); ++col) {
            auto c = z.col(col);
            const double m = c.maxCoeff();
            const double lse = m + std::log((c.array() - m).exp().sum());
            c.array() -= lse;
        }
    }

private:
    EnvSpec spec_;
    Mlp net_;
    Encoding encoding_;
};

inline ActionDistribution action_distribution(const Policy& policy, State s, Goal g) {
    return policy.distribution(s, g);
}

inline Action sample_action(std::span<const double> probs, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng);
    for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
        if (u < probs[a]) return static_cast<Action>(a);
        u -= probs[a];
    }
    return static_cast<Action>(probs.size() - 1);
}

inline Action sample_action(const ActionDistribution& dist, Rng& rng) { return sample_action(dist.probs, rng); }

// Ties go to the lowest action index.
inline Action greedy_action(std::span<const double> values) {
    return static_cast<Action>(std::max_element(values.begin(), values.end()) - values.begin());
}

inline Action greedy_action(const ActionDistribution& dist) { return greedy_action(dist.probs); }

} // namespace hpg
