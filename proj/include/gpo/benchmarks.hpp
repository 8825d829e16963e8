#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gpo/pomdp.hpp"

namespace gpo {

/// The mining-robot POMDP: an ore deposit of unknown type (t1 likely), a
/// safe mining mode ms that succeeds with probability 3/5, type-specific
/// modes m1/m2 that fail catastrophically on the wrong type, and a sense
/// action that reveals the type at the cost of one step. Reaching mnd pays
/// a lump sum of 100. Discount 1/2.
inline PomdpModel gen_tiger_mining() {
    PomdpModel m;
    m.state_names = {"t1", "t2", "t1p", "t2p", "mnd", "fail", "fin"};
    m.action_names = {"m1", "m2", "ms", "sense"};
    m.observation_names = {"o_t", "o_t1p", "o_t2p", "o_mnd", "o_fail", "o_fin"};
    m.discount = 0.5;
    m.resize_tables();

    const int t1 = 0, t2 = 1, t1p = 2, t2p = 3, mnd = 4, fail = 5, fin = 6;
    const int m1 = 0, m2 = 1, ms = 2, sense = 3;

    m.obs_map = {0, 0, 1, 2, 3, 4, 5};  // t1 and t2 share o_t
    m.initial_belief[t1] = 0.9;
    m.initial_belief[t2] = 0.1;

    m.transition_row_mut(t1, m1) = {{mnd, 1.0}};
    m.transition_row_mut(t1, m2) = {{fail, 1.0}};
    m.transition_row_mut(t1, ms) = {{mnd, 0.6}, {t1, 0.4}};
    m.transition_row_mut(t1, sense) = {{t1p, 1.0}};

    m.transition_row_mut(t2, m1) = {{fail, 1.0}};
    m.transition_row_mut(t2, m2) = {{mnd, 1.0}};
    m.transition_row_mut(t2, ms) = {{mnd, 0.6}, {t2, 0.4}};
    m.transition_row_mut(t2, sense) = {{t2p, 1.0}};

    for (int a = 0; a < 4; ++a) {
        m.transition_row_mut(t1p, a) = {{mnd, 1.0}};
        m.transition_row_mut(t2p, a) = {{mnd, 1.0}};
        m.transition_row_mut(mnd, a) = {{fin, 1.0}};
        m.transition_row_mut(fail, a) = {{fail, 1.0}};
        m.transition_row_mut(fin, a) = {{fin, 1.0}};
        m.reward_mut(mnd, a) = 100.0;
    }
    return m;
}

enum class TrapKind { Damage, Spin };

struct HallwayParams {
    int width = 0;
    int height = 0;
    std::vector<std::pair<int, int>> traps;
    TrapKind trap_kind = TrapKind::Spin;
    double discount = 0.95;
    double goal_reward = 100.0;
};

// Hallway gridworld. The robot's pose (cell, heading) is hidden; it
// observes the 4-bit pattern of boundary walls around it, rotated into its
// own frame, plus distinct goal/trap/done observations. Actions are
// forward, turn-left, turn-right; forward into a wall is a no-op. The goal
// is the cell (width-1, height-1): standing on it pays goal_reward once and
// absorbs into `done`. Damage traps swallow the robot into `done` with no
// reward; spin traps randomize the heading on entry. The initial belief is
// uniform over all non-goal, non-trap poses.
inline PomdpModel gen_hallway(const HallwayParams& p) {
    const int w = p.width, h = p.height;
    if (w <= 0 || h <= 0) throw Error("hallway: grid must be nonempty");
    const int goal_x = w - 1, goal_y = h - 1;
    std::set<std::pair<int, int>> traps(p.traps.begin(), p.traps.end());
    for (const auto& [x, y] : traps) {
        if (x < 0 || x >= w || y < 0 || y >= h)
            throw Error("hallway: trap outside the grid");
        if (x == goal_x && y == goal_y) throw Error("hallway: trap on the goal cell");
    }
    const bool spin = p.trap_kind == TrapKind::Spin;

    // Headings n, e, s, w; dx/dy per heading, y grows north.
    const int dx[4] = {0, 1, 0, -1};
    const int dy[4] = {1, 0, -1, 0};
    const char* hdg = "nesw";

    auto in_grid = [&](int x, int y) { return x >= 0 && x < w && y >= 0 && y < h; };
    auto is_trap = [&](int x, int y) { return traps.count({x, y}) > 0; };
    auto is_goal = [&](int x, int y) { return x == goal_x && y == goal_y; };
    // Damage traps have no poses of their own; spin traps do.
    auto has_pose = [&](int x, int y) { return !(is_trap(x, y) && !spin); };

    PomdpModel m;
    m.action_names = {"forward", "turn-left", "turn-right"};
    for (int bits = 0; bits < 16; ++bits) {
        std::string name = "w";
        for (int i = 3; i >= 0; --i) name += (bits >> i) & 1 ? '1' : '0';
        m.observation_names.push_back(name);
    }
    m.observation_names.push_back("goal");
    if (spin) m.observation_names.push_back("trap");
    m.observation_names.push_back("done");
    const int obs_goal = 16;
    const int obs_trap = spin ? 17 : -1;
    const int obs_done = spin ? 18 : 17;

    std::map<std::pair<std::pair<int, int>, int>, int> pose_idx;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!has_pose(x, y)) continue;
            for (int d = 0; d < 4; ++d) {
                pose_idx[{{x, y}, d}] = static_cast<int>(m.state_names.size());
                m.state_names.push_back("x" + std::to_string(x) + "y" + std::to_string(y) +
                                        "h" + hdg[d]);
            }
        }
    const int done = static_cast<int>(m.state_names.size());
    m.state_names.push_back("done");
    m.discount = p.discount;
    m.resize_tables();

    // front, right, back, left wall bits relative to the heading.
    auto wall_pattern = [&](int x, int y, int d) {
        int bits = 0;
        for (int i = 0; i < 4; ++i) {
            const int dir = (d + i) % 4;
            if (!in_grid(x + dx[dir], y + dy[dir])) bits |= 1 << (3 - i);
        }
        return bits;
    };

    int start_poses = 0;
    for (const auto& [pose, idx] : pose_idx) {
        const auto [x, y] = pose.first;
        if (!is_goal(x, y) && !is_trap(x, y)) ++start_poses;
        (void)idx;
    }
    if (start_poses == 0) throw Error("hallway: no cell left to start from");

    for (const auto& [pose, idx] : pose_idx) {
        const auto [x, y] = pose.first;
        const int d = pose.second;
        if (is_goal(x, y))
            m.obs_map[idx] = obs_goal;
        else if (is_trap(x, y))
            m.obs_map[idx] = obs_trap;
        else
            m.obs_map[idx] = wall_pattern(x, y, d);

        if (!is_goal(x, y) && !is_trap(x, y)) m.initial_belief[idx] = 1.0 / start_poses;

        if (is_goal(x, y)) {
            for (int a = 0; a < 3; ++a) {
                m.reward_mut(idx, a) = p.goal_reward;
                m.transition_row_mut(idx, a) = {{done, 1.0}};
            }
            continue;
        }
        // forward
        {
            int nx = x + dx[d], ny = y + dy[d];
            if (!in_grid(nx, ny)) {
                nx = x;
                ny = y;
            }
            auto& row = m.transition_row_mut(idx, 0);
            if (is_trap(nx, ny)) {
                if (spin)
                    for (int d2 = 0; d2 < 4; ++d2)
                        row.push_back({pose_idx.at({{nx, ny}, d2}), 0.25});
                else
                    row = {{done, 1.0}};
            } else {
                row = {{pose_idx.at({{nx, ny}, d}), 1.0}};
            }
        }
        m.transition_row_mut(idx, 1) = {{pose_idx.at({{x, y}, (d + 3) % 4}), 1.0}};
        m.transition_row_mut(idx, 2) = {{pose_idx.at({{x, y}, (d + 1) % 4}), 1.0}};
    }
    m.obs_map[done] = obs_done;
    for (int a = 0; a < 3; ++a) m.transition_row_mut(done, a) = {{done, 1.0}};
    return m;
}

inline PomdpModel gen_hallway(int width, int height,
                              const std::vector<std::pair<int, int>>& traps,
                              TrapKind trap_kind, double discount) {
    return gen_hallway({width, height, traps, trap_kind, discount});
}

struct RockSampleParams {
    int grid_n = 0;
    int rocks_k = 0;
    double sensor_accuracy = 0.85;
    double discount = 0.95;
};

// RockSample(n, k) with a single imprecise check action. The agent's
// position is part of the observation; rock qualities are hidden. `check`
// senses the rock at the agent's cell and reports good/bad correctly with
// probability sensor_accuracy; the outcome is carried in the state as a
// channel so the observation map stays deterministic. `sample` on a good
// rock pays +10 and spoils it, on anything else it costs 10. `exit` at the
// east column pays +10 and ends the episode. Only reachable states are
// emitted. Rock placement is a deterministic function of (n, k).
inline PomdpModel gen_rocksample(const RockSampleParams& p) {
    const int n = p.grid_n, k = p.rocks_k;
    if (n < 1) throw Error("rocksample: grid_n must be at least 1");
    if (k < 1) throw Error("rocksample: rocks_k must be at least 1");
    if (k > n * n) throw Error("rocksample: more rocks than cells");
    if (k > 20) throw Error("rocksample: rocks_k too large");
    if (!(p.sensor_accuracy > 0.5 && p.sensor_accuracy <= 1.0))
        throw Error("rocksample: sensor_accuracy must lie in (0.5, 1]");

    std::vector<std::pair<int, int>> rocks;
    {
        Rng rng(0x524f434bull * 1315423911ull + static_cast<std::uint64_t>(n) * 131 + k);
        std::set<std::pair<int, int>> used;
        while (static_cast<int>(rocks.size()) < k) {
            int x = static_cast<int>(rng.below(n)), y = static_cast<int>(rng.below(n));
            if (used.insert({x, y}).second) rocks.emplace_back(x, y);
        }
    }
    auto rock_at = [&](int x, int y) {
        for (int r = 0; r < k; ++r)
            if (rocks[r] == std::pair<int, int>{x, y}) return r;
        return -1;
    };

    const int start_x = 0, start_y = n / 2;
    const int configs = 1 << k;

    // channel: 0 none, 1 good, 2 bad (result of the check just performed)
    struct Key {
        int x, y, cfg, ch;
        bool operator<(const Key& o) const {
            return std::tie(x, y, cfg, ch) < std::tie(o.x, o.y, o.cfg, o.ch);
        }
    };

    PomdpModel m;
    m.action_names = {"north", "south", "east", "west", "sample", "check", "exit"};
    m.discount = p.discount;

    std::map<Key, int> state_of;
    std::vector<Key> keys;
    auto intern = [&](Key key) {
        auto [it, inserted] = state_of.try_emplace(key, static_cast<int>(keys.size()));
        if (inserted) keys.push_back(key);
        return it->second;
    };
    std::map<std::pair<std::pair<int, int>, int>, int> obs_of;  // ((x, y), ch) -> index
    std::vector<std::string> obs_names;
    auto obs_intern = [&](int x, int y, int ch) {
        auto [it, inserted] =
            obs_of.try_emplace({{x, y}, ch}, static_cast<int>(obs_names.size()));
        if (inserted) {
            static const char* suffix[3] = {"", "g", "b"};
            obs_names.push_back("x" + std::to_string(x) + "y" + std::to_string(y) +
                                suffix[ch]);
        }
        return it->second;
    };

    // Reachability pass over the rules; transitions are filled afterwards.
    std::size_t cursor = 0;
    auto reach = [&](Key k) { intern(k); };
    for (int cfg = 0; cfg < configs; ++cfg) reach({start_x, start_y, cfg, 0});
    const int dxs[4] = {0, 0, 1, -1}, dys[4] = {1, -1, 0, 0};
    while (cursor < keys.size()) {
        const Key key = keys[cursor++];
        for (int a = 0; a < 4; ++a) {
            int nx = key.x + dxs[a], ny = key.y + dys[a];
            if (nx < 0 || nx >= n || ny < 0 || ny >= n) {
                nx = key.x;
                ny = key.y;
            }
            reach({nx, ny, key.cfg, 0});
        }
        const int rock = rock_at(key.x, key.y);
        if (rock >= 0) {
            reach({key.x, key.y, key.cfg & ~(1 << rock), 0});  // sample
            const bool good = (key.cfg >> rock) & 1;
            for (int ch = 1; ch <= 2; ++ch) {  // check outcomes
                const double prob = (ch == 1) == good ? p.sensor_accuracy
                                                      : 1.0 - p.sensor_accuracy;
                if (prob > 0.0) reach({key.x, key.y, key.cfg, ch});
            }
        } else {
            reach({key.x, key.y, key.cfg, 0});  // sample/check no-ops
        }
    }

    for (const Key& key : keys) {
        static const char* suffix[3] = {"", "g", "b"};
        m.state_names.push_back("x" + std::to_string(key.x) + "y" + std::to_string(key.y) +
                                "c" + std::to_string(key.cfg) + suffix[key.ch]);
    }
    const int done = static_cast<int>(m.state_names.size());
    m.state_names.push_back("done");
    for (const Key& key : keys) obs_intern(key.x, key.y, key.ch);
    m.observation_names = obs_names;
    m.observation_names.push_back("done");
    const int obs_done = static_cast<int>(m.observation_names.size()) - 1;
    m.resize_tables();

    for (int i = 0; i < static_cast<int>(keys.size()); ++i) {
        const Key& key = keys[i];
        m.obs_map[i] = obs_intern(key.x, key.y, key.ch);
        const int rock = rock_at(key.x, key.y);
        for (int a = 0; a < 4; ++a) {
            int nx = key.x + dxs[a], ny = key.y + dys[a];
            if (nx < 0 || nx >= n || ny < 0 || ny >= n) {
                nx = key.x;
                ny = key.y;
            }
            m.transition_row_mut(i, a) = {{state_of.at({nx, ny, key.cfg, 0}), 1.0}};
        }
        if (rock >= 0 && ((key.cfg >> rock) & 1)) {
            m.reward_mut(i, 4) = 10.0;
            m.transition_row_mut(i, 4) = {
                {state_of.at({key.x, key.y, key.cfg & ~(1 << rock), 0}), 1.0}};
        } else {
            m.reward_mut(i, 4) = -10.0;
            m.transition_row_mut(i, 4) = {{state_of.at({key.x, key.y, key.cfg, 0}), 1.0}};
        }
        if (rock >= 0) {
            const bool good = (key.cfg >> rock) & 1;
            auto& row = m.transition_row_mut(i, 5);
            const double acc = p.sensor_accuracy;
            if (acc < 1.0) {
                row = {{state_of.at({key.x, key.y, key.cfg, good ? 1 : 2}), acc},
                       {state_of.at({key.x, key.y, key.cfg, good ? 2 : 1}), 1.0 - acc}};
            } else {
                row = {{state_of.at({key.x, key.y, key.cfg, good ? 1 : 2}), 1.0}};
            }
        } else {
            m.transition_row_mut(i, 5) = {{state_of.at({key.x, key.y, key.cfg, 0}), 1.0}};
        }
        if (key.x == n - 1) {
            m.reward_mut(i, 6) = 10.0;
            m.transition_row_mut(i, 6) = {{done, 1.0}};
        } else {
            m.transition_row_mut(i, 6) = {{state_of.at({key.x, key.y, key.cfg, 0}), 1.0}};
        }
    }
    m.obs_map[done] = obs_done;
    for (int a = 0; a < 7; ++a) m.transition_row_mut(done, a) = {{done, 1.0}};
    for (int cfg = 0; cfg < configs; ++cfg)
        m.initial_belief[state_of.at({start_x, start_y, cfg, 0})] = 1.0 / configs;
    return m;
}

inline PomdpModel gen_rocksample(int grid_n, int rocks_k, double sensor_accuracy,
                                 double discount) {
    return gen_rocksample({grid_n, rocks_k, sensor_accuracy, discount});
}

}  // namespace gpo
