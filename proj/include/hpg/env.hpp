#pragma once

// Goal-conditional episodic environments: bit flipping, 11x11 grid worlds
// (empty room, four rooms) and a two-state chain used by the oracle tests.
//
// Episodes have at most `horizon` actions, so at most horizon + 1 time steps
// counting the initial state: k + 1 time steps for k bits, 32 on the grids.
//
// States and goals share one compact integer code per environment:
//   bitflip    bit i of the code is bit i of the state
//   grid       row * 11 + column
//   chain      0 or 1

#include <bitset>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpg {

using Rng = std::mt19937_64;

struct State {
    std::uint32_t code = 0;
    friend bool operator==(State, State) = default;
    friend auto operator<=>(State, State) = default;
};

using Goal = State;
using Action = int;

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(Cell, Cell) = default;
};

enum class EnvKind { bitflip, empty_room, four_rooms, chain };

inline constexpr int grid_side = 11;
inline constexpr int grid_cells = grid_side * grid_side;
inline constexpr int grid_horizon = 31;

// Grid moves, in action-id order.
enum GridMove : Action { north = 0, south = 1, east = 2, west = 3 };

struct EnvSpec {
    EnvKind kind = EnvKind::bitflip;
    int bits = 0;      // bitflip only
    int horizon = 0;   // maximum number of actions per episode
    double noise_prob = 0.0;
    std::bitset<grid_cells> walls;
    // When false, episodes always run for `horizon` actions and the reward is
    // paid at every visit of the goal. The fixed-length gradient identities
    // hold verbatim for this variant.
    bool terminate_on_goal = true;

    static EnvSpec bitflip(int k);
    static EnvSpec empty_room();
    static EnvSpec four_rooms();
    static EnvSpec chain();

    EnvSpec without_termination() const {
        EnvSpec copy = *this;
        copy.terminate_on_goal = false;
        return copy;
    }

    bool is_grid() const { return kind == EnvKind::empty_room || kind == EnvKind::four_rooms; }
};

// Door cells in the four-rooms layout. Walls occupy row 5 and column 5.
inline const std::vector<Cell>& four_rooms_doors() {
    static const std::vector<Cell> doors{{5, 2}, {5, 8}, {2, 5}, {8, 5}};
    return doors;
}

inline std::bitset<grid_cells> four_rooms_walls() {
    std::bitset<grid_cells> walls;
    for (int i = 0; i < grid_side; ++i) {
        walls.set(5 * grid_side + i);
        walls.set(i * grid_side + 5);
    }
    for (Cell door : four_rooms_doors()) walls.reset(door.row * grid_side + door.col);
    return walls;
}

inline EnvSpec EnvSpec::bitflip(int k) {
    if (k < 1 || k > 30) throw std::invalid_argument("bitflip: k must lie in [1, 30]");
    EnvSpec spec;
    spec.kind = EnvKind::bitflip;
    spec.bits = k;
    spec.horizon = k;
    return spec;
}

inline EnvSpec EnvSpec::empty_room() {
    EnvSpec spec;
    spec.kind = EnvKind::empty_room;
    spec.horizon = grid_horizon;
    return spec;
}

inline EnvSpec EnvSpec::four_rooms() {
    EnvSpec spec;
    spec.kind = EnvKind::four_rooms;
    spec.horizon = grid_horizon;
    spec.noise_prob = 0.2;
    spec.walls = four_rooms_walls();
    return spec;
}

// Two states, two actions, stochastic transitions, H = 3.
inline EnvSpec EnvSpec::chain() {
    EnvSpec spec;
    spec.kind = EnvKind::chain;
    spec.horizon = 3;
    return spec;
}

inline constexpr double chain_switch_prob[2] = {0.1, 0.75};

inline std::string env_name(EnvKind kind) {
    switch (kind) {
    case EnvKind::bitflip: return "bitflip";
    case EnvKind::empty_room: return "empty-room";
    case EnvKind::four_rooms: return "four-rooms";
    case EnvKind::chain: return "chain";
    }
    return "unknown";
}

inline EnvKind parse_env_kind(const std::string& name) {
    if (name == "bitflip") return EnvKind::bitflip;
    if (name == "empty-room") return EnvKind::empty_room;
    if (name == "four-rooms") return EnvKind::four_rooms;
    if (name == "chain") return EnvKind::chain;
    throw std::invalid_argument("unknown environment: " + name);
}

namespace env {

inline Cell to_cell(State s) {
    return {static_cast<int>(s.code) / grid_side, static_cast<int>(s.code) % grid_side};
}

inline State from_cell(Cell c) { return State{static_cast<std::uint32_t>(c.row * grid_side + c.col)}; }

inline std::vector<int> to_bits(const EnvSpec& spec, State s) {
    std::vector<int> bits(spec.bits);
    for (int i = 0; i < spec.bits; ++i) bits[i] = (s.code >> i) & 1u;
    return bits;
}

inline State from_bits(std::span<const int> bits) {
    std::uint32_t code = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) code |= 1u << i;
    return State{code};
}

inline int num_actions(const EnvSpec& spec) {
    switch (spec.kind) {
    case EnvKind::bitflip: return spec.bits;
    case EnvKind::chain: return 2;
    default: return 4;
    }
}

// Size of the state (and goal) code space.
inline std::size_t num_states(const EnvSpec& spec) {
    switch (spec.kind) {
    case EnvKind::bitflip: return std::size_t{1} << spec.bits;
    case EnvKind::chain: return 2;
    default: return grid_cells;
    }
}

inline bool is_wall(const EnvSpec& spec, Cell c) { return spec.walls.test(c.row * grid_side + c.col); }

inline bool in_bounds(Cell c) { return c.row >= 0 && c.row < grid_side && c.col >= 0 && c.col < grid_side; }

inline bool achieved(State s, Goal g) { return s == g; }

// Reward after `u` completed actions (1 <= u <= H).
inline double reward(const EnvSpec& spec, State s, Goal g, int u) {
    return achieved(s, g) ? static_cast<double>(spec.horizon - u + 1) : 0.0;
}

inline std::vector<State> initial_states(const EnvSpec& spec) {
    switch (spec.kind) {
    case EnvKind::four_rooms:
        return {from_cell({0, 0}), from_cell({0, 10}), from_cell({10, 0}), from_cell({10, 10})};
    default: return {State{0}};
    }
}

inline State initial_state(const EnvSpec& spec, Rng& rng) {
    if (spec.kind != EnvKind::four_rooms) return State{0};
    const auto corners = initial_states(spec);
    std::uniform_int_distribution<std::size_t> pick(0, corners.size() - 1);
    return corners[pick(rng)];
}

inline bool is_valid_goal(const EnvSpec& spec, State initial, Goal g) {
    if (g.code >= num_states(spec)) return false;
    if (!spec.is_grid()) return true;
    return g != initial && !is_wall(spec, to_cell(g));
}

inline std::vector<Goal> valid_goals(const EnvSpec& spec, State initial) {
    std::vector<Goal> goals;
    const auto n = num_states(spec);
    for (std::uint32_t code = 0; code < n; ++code)
        if (is_valid_goal(spec, initial, State{code})) goals.push_back(State{code});
    return goals;
}

// p(g); uniform over valid goals. Every four-rooms corner is open, so the
// number of valid goals does not depend on the initial corner.
inline double goal_probability(const EnvSpec& spec) {
    const auto initial = initial_states(spec).front();
    return 1.0 / static_cast<double>(valid_goals(spec, initial).size());
}

inline Goal sample_goal(const EnvSpec& spec, State initial, Rng& rng) {
    if (spec.kind == EnvKind::bitflip) {
        std::uniform_int_distribution<std::uint32_t> pick(0, (1u << spec.bits) - 1);
        return State{pick(rng)};
    }
    if (spec.kind == EnvKind::chain) {
        std::uniform_int_distribution<std::uint32_t> pick(0, 1);
        return State{pick(rng)};
    }
    // Rejection sampling over the grid: uniform over valid cells.
    std::uniform_int_distribution<std::uint32_t> pick(0, grid_cells - 1);
    for (;;) {
        State g{pick(rng)};
        if (is_valid_goal(spec, initial, g)) return g;
    }
}

inline State grid_move(const EnvSpec& spec, State s, Action a) {
    static constexpr int dr[4] = {-1, 1, 0, 0};
    static constexpr int dc[4] = {0, 0, 1, -1};
    Cell c = to_cell(s);
    Cell next{c.row + dr[a], c.col + dc[a]};
    if (!in_bounds(next) || is_wall(spec, next)) return s;
    return from_cell(next);
}

inline State transition(const EnvSpec& spec, State s, Action a, Rng& rng) {
    switch (spec.kind) {
    case EnvKind::bitflip: return State{s.code ^ (1u << a)};
    case EnvKind::chain: {
        std::bernoulli_distribution flip(chain_switch_prob[a]);
        return flip(rng) ? State{1u - s.code} : s;
    }
    default: {
        if (spec.noise_prob > 0.0) {
            std::bernoulli_distribution replace(spec.noise_prob);
            if (replace(rng)) {
                std::uniform_int_distribution<Action> any(0, 3);
                a = any(rng);
            }
        }
        return grid_move(spec, s, a);
    }
    }
}

// Exact successor distribution p(s' | s, a); duplicate successors merged.
inline std::vector<std::pair<State, double>> transition_distribution(const EnvSpec& spec, State s, Action a) {
    std::vector<std::pair<State, double>> out;
    auto add = [&out](State next, double p) {
        if (p == 0.0) return;
        for (auto& [state, prob] : out)
            if (state == next) {
                prob += p;
                return;
            }
        out.emplace_back(next, p);
    };
    switch (spec.kind) {
    case EnvKind::bitflip: add(State{s.code ^ (1u << a)}, 1.0); break;
    case EnvKind::chain:
        add(s, 1.0 - chain_switch_prob[a]);
        add(State{1u - s.code}, chain_switch_prob[a]);
        break;
    default:
        add(grid_move(spec, s, a), 1.0 - spec.noise_prob);
        for (Action other = 0; other < 4; ++other) add(grid_move(spec, s, other), spec.noise_prob / 4.0);
        break;
    }
    return out;
}

// Number of real-valued features encoding one state (and one goal).
inline int feature_size(const EnvSpec& spec) {
    switch (spec.kind) {
    case EnvKind::bitflip: return spec.bits;
    case EnvKind::chain: return 2;
    default: return 2;
    }
}

inline void encode(const EnvSpec& spec, State s, std::span<double> out) {
    switch (spec.kind) {
    case EnvKind::bitflip:
        for (int i = 0; i < spec.bits; ++i) out[i] = static_cast<double>((s.code >> i) & 1u);
        break;
    case EnvKind::chain:
        out[0] = s.code == 0 ? 1.0 : 0.0;
        out[1] = s.code == 1 ? 1.0 : 0.0;
        break;
    default: {
        Cell c = to_cell(s);
        out[0] = c.row;
        out[1] = c.col;
        break;
    }
    }
}

inline void validate(const EnvSpec& spec) {
    if (spec.horizon < 1) throw std::invalid_argument("horizon must be positive");
    if (spec.noise_prob < 0.0 || spec.noise_prob > 1.0) throw std::invalid_argument("noise_prob must lie in [0, 1]");
    if (spec.kind == EnvKind::bitflip && (spec.bits < 1 || spec.bits > 30))
        throw std::invalid_argument("bitflip: k must lie in [1, 30]");
    for (State s : initial_states(spec))
        if (spec.is_grid() && is_wall(spec, to_cell(s))) throw std::invalid_argument("initial cell is a wall");
}

} // namespace env
} // namespace hpg

template <>
struct std::hash<hpg::State> {
    std::size_t operator()(hpg::State s) const noexcept { return std::hash<std::uint32_t>{}(s.code); }
};
