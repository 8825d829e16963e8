#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gpo/common.hpp"

namespace gpo {

struct TransitionEntry {
    int state;
    double prob;
    bool operator==(const TransitionEntry&) const = default;
};

/// Finite POMDP with a deterministic per-state observation map. States,
/// actions and observations are dense integer indices; the name tables are
/// kept only for I/O and diagnostics. Transition rows are sparse.
///
/// Immutable by convention once built: nothing in the library mutates a
/// model after construction, so instances can be shared across threads.
struct PomdpModel {
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> observation_names;

    // Row for (s, a) lives at index s * num_actions() + a.
    std::vector<std::vector<TransitionEntry>> transitions;
    std::vector<double> rewards;      // indexed like transitions
    std::vector<int> obs_map;         // state -> observation, -1 if unset
    std::vector<double> initial_belief;
    double discount = 0.0;

    int num_states() const { return static_cast<int>(state_names.size()); }
    int num_actions() const { return static_cast<int>(action_names.size()); }
    int num_observations() const { return static_cast<int>(observation_names.size()); }

    std::span<const TransitionEntry> transition_row(int s, int a) const {
        return transitions[static_cast<std::size_t>(s) * num_actions() + a];
    }
    std::vector<TransitionEntry>& transition_row_mut(int s, int a) {
        return transitions[static_cast<std::size_t>(s) * num_actions() + a];
    }
    double reward(int s, int a) const {
        return rewards[static_cast<std::size_t>(s) * num_actions() + a];
    }
    double& reward_mut(int s, int a) {
        return rewards[static_cast<std::size_t>(s) * num_actions() + a];
    }

    void resize_tables() {
        transitions.assign(static_cast<std::size_t>(num_states()) * num_actions(), {});
        rewards.assign(static_cast<std::size_t>(num_states()) * num_actions(), 0.0);
        obs_map.assign(num_states(), -1);
        initial_belief.assign(num_states(), 0.0);
    }

    int find_state(const std::string& name) const { return find(state_names, name); }
    int find_action(const std::string& name) const { return find(action_names, name); }
    int find_observation(const std::string& name) const {
        return find(observation_names, name);
    }

    double max_abs_reward() const {
        double m = 0.0;
        for (double r : rewards) m = std::max(m, std::abs(r));
        return m;
    }
    double min_reward() const {
        double m = 0.0;
        for (double r : rewards) m = std::min(m, r);
        return m;
    }
    double max_reward() const {
        double m = 0.0;
        for (double r : rewards) m = std::max(m, r);
        return m;
    }

  private:
    static int find(const std::vector<std::string>& names, const std::string& name) {
        auto it = std::find(names.begin(), names.end(), name);
        return it == names.end() ? -1 : static_cast<int>(it - names.begin());
    }
};

/// A probability distribution over states.
struct Belief {
    std::vector<double> probs;

    std::vector<int> support() const {
        std::vector<int> out;
        for (int s = 0; s < static_cast<int>(probs.size()); ++s)
            if (probs[s] > 0.0) out.push_back(s);
        return out;
    }
};

struct Violation {
    std::string message;
    int state = -1;   // offending state, if any
    int action = -1;  // offending action, if any
};

/// Checks every model invariant and reports all violations found. The empty
/// report means the model is valid.
inline std::vector<Violation> validate_model(const PomdpModel& m) {
    std::vector<Violation> out;
    const int S = m.num_states(), A = m.num_actions(), Z = m.num_observations();
    if (S == 0) out.push_back({"model has no states"});
    if (A == 0) out.push_back({"model has no actions"});
    if (Z == 0) out.push_back({"model has no observations"});
    if (!(m.discount >= 0.0 && m.discount < 1.0))
        out.push_back({"discount must lie in [0, 1), got " + std::to_string(m.discount)});

    if (static_cast<int>(m.obs_map.size()) != S) {
        out.push_back({"obs_map does not cover all states"});
    } else {
        for (int s = 0; s < S; ++s)
            if (m.obs_map[s] < 0 || m.obs_map[s] >= Z)
                out.push_back({"state " + m.state_names[s] + " has no observation", s});
    }

    if (static_cast<int>(m.transitions.size()) != S * A ||
        static_cast<int>(m.rewards.size()) != S * A) {
        out.push_back({"transition/reward tables have wrong size"});
        return out;
    }
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto row = m.transition_row(s, a);
            if (row.empty()) {
                out.push_back({"no transitions declared for (" + m.state_names[s] + ", " +
                                   m.action_names[a] + ")",
                               s, a});
                continue;
            }
            double sum = 0.0;
            std::vector<char> seen(S, 0);
            bool bad = false;
            for (const auto& e : row) {
                if (e.state < 0 || e.state >= S) {
                    out.push_back({"transition target out of range", s, a});
                    bad = true;
                    break;
                }
                if (seen[e.state]) {
                    out.push_back({"duplicate transition target for (" + m.state_names[s] +
                                       ", " + m.action_names[a] + ")",
                                   s, a});
                    bad = true;
                    break;
                }
                seen[e.state] = 1;
                if (e.prob < 0.0) {
                    out.push_back({"negative transition probability for (" +
                                       m.state_names[s] + ", " + m.action_names[a] + ")",
                                   s, a});
                    bad = true;
                    break;
                }
                sum += e.prob;
            }
            if (!bad && std::abs(sum - 1.0) > kProbTolerance)
                out.push_back({"transition probabilities for (" + m.state_names[s] + ", " +
                                   m.action_names[a] + ") sum to " + std::to_string(sum),
                               s, a});
        }
    }

    if (static_cast<int>(m.initial_belief.size()) != S) {
        out.push_back({"initial belief has wrong size"});
    } else {
        double sum = 0.0;
        bool neg = false, nonempty = false;
        for (int s = 0; s < S; ++s) {
            if (m.initial_belief[s] < 0.0) neg = true;
            if (m.initial_belief[s] > 0.0) nonempty = true;
            sum += m.initial_belief[s];
        }
        if (neg) out.push_back({"initial belief has a negative entry"});
        if (!nonempty) out.push_back({"initial belief has empty support"});
        if (std::abs(sum - 1.0) > kProbTolerance)
            out.push_back({"initial belief sums to " + std::to_string(sum)});
    }
    return out;
}

/// Bayes posterior after playing `action` and observing `obs`.
/// Throws ObservationImpossibleError when the pair has probability zero
/// from `b`; a zero-probability observation during a real update indicates
/// a model/trace mismatch and is never silently renormalized.
inline Belief belief_update(const PomdpModel& m, const Belief& b, int action, int obs) {
    std::vector<double> post(m.num_states(), 0.0);
    for (int s = 0; s < m.num_states(); ++s) {
        const double p = b.probs[s];
        if (p <= 0.0) continue;
        for (const auto& e : m.transition_row(s, action)) {
            if (m.obs_map[e.state] != obs) continue;
            post[e.state] += p * e.prob;
        }
    }
    double total = 0.0;
    for (double v : post) total += v;
    if (total <= 0.0)
        throw ObservationImpossibleError("observation " + m.observation_names[obs] +
                                         " has probability zero after action " +
                                         m.action_names[action]);
    for (double& v : post) v /= total;
    return Belief{std::move(post)};
}

/// Discounted payoff of a finite reward sequence: sum of gamma^i * r_i.
inline double discounted_prefix(std::span<const double> rewards, double gamma) {
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) acc = rewards[i] + gamma * acc;
    return acc;
}

struct StepResult {
    int state;
    int observation;
    double reward;
};

/// Draws a successor from delta(s, a). Deterministic given the rng state.
inline StepResult sample_step(const PomdpModel& m, int s, int a, Rng& rng) {
    const auto row = m.transition_row(s, a);
    double u = rng.uniform();
    int next = row.back().state;
    for (const auto& e : row) {
        if (u < e.prob) {
            next = e.state;
            break;
        }
        u -= e.prob;
    }
    return {next, m.obs_map[next], m.reward(s, a)};
}

/// One simulated path prefix: start state plus per-step
/// (action, reward, successor, observation).
struct PathTrace {
    struct Step {
        int action;
        double reward;
        int next_state;
        int observation;
    };
    int start_state = -1;
    std::vector<Step> steps;
};

/// True iff every step of the trace has positive transition probability,
/// the recorded rewards match the model and observations match obs_map.
inline bool trace_is_consistent(const PomdpModel& m, const PathTrace& trace) {
    int s = trace.start_state;
    if (s < 0 || s >= m.num_states()) return false;
    for (const auto& step : trace.steps) {
        if (step.action < 0 || step.action >= m.num_actions()) return false;
        if (step.reward != m.reward(s, step.action)) return false;
        bool found = false;
        for (const auto& e : m.transition_row(s, step.action))
            if (e.state == step.next_state && e.prob > 0.0) found = true;
        if (!found) return false;
        if (m.obs_map[step.next_state] != step.observation) return false;
        s = step.next_state;
    }
    return true;
}

/// A model whose observation function is still probabilistic:
/// obs_probs[s] is a sparse distribution over observations.
struct RawObsModel {
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> observation_names;
    std::vector<std::vector<TransitionEntry>> transitions;  // [s*A + a]
    std::vector<double> rewards;                            // [s*A + a]
    std::vector<std::vector<std::pair<int, double>>> obs_probs;  // per state
    std::vector<double> initial_belief;
    double discount = 0.0;

    int num_states() const { return static_cast<int>(state_names.size()); }
    int num_actions() const { return static_cast<int>(action_names.size()); }
};

/// Folds a probabilistic observation function into the state space: the
/// result ranges over reachable (state, observation) pairs and carries a
/// deterministic observation map while preserving the distribution over
/// histories. When every state's observation distribution is already a
/// point mass the model is converted directly, keeping its state names.
inline PomdpModel determinize_observations(const RawObsModel& raw) {
    const int S = raw.num_states(), A = raw.num_actions();

    bool all_dirac = true;
    for (const auto& dist : raw.obs_probs)
        if (dist.size() != 1 || dist[0].second != 1.0) all_dirac = false;

    if (all_dirac) {
        PomdpModel m;
        m.state_names = raw.state_names;
        m.action_names = raw.action_names;
        m.observation_names = raw.observation_names;
        m.transitions = raw.transitions;
        m.rewards = raw.rewards;
        m.initial_belief = raw.initial_belief;
        m.discount = raw.discount;
        m.obs_map.resize(S);
        for (int s = 0; s < S; ++s) m.obs_map[s] = raw.obs_probs[s][0].first;
        return m;
    }

    // Product states are (s, z) pairs with O(z|s) > 0, restricted to the
    // ones reachable from the initial pairs.
    auto pair_key = [S](int s, int z) { return static_cast<std::int64_t>(z) * S + s; };
    std::unordered_map<std::int64_t, int> index;
    std::vector<std::pair<int, int>> pairs;
    std::queue<int> frontier;
    auto intern = [&](int s, int z) {
        auto [it, inserted] = index.try_emplace(pair_key(s, z), static_cast<int>(pairs.size()));
        if (inserted) {
            pairs.emplace_back(s, z);
            frontier.push(it->second);
        }
        return it->second;
    };

    for (int s = 0; s < S; ++s)
        if (raw.initial_belief[s] > 0.0)
            for (const auto& [z, pz] : raw.obs_probs[s])
                if (pz > 0.0) intern(s, z);

    while (!frontier.empty()) {
        const auto [s, z] = pairs[frontier.front()];
        frontier.pop();
        (void)z;
        for (int a = 0; a < A; ++a)
            for (const auto& e : raw.transitions[static_cast<std::size_t>(s) * A + a])
                if (e.prob > 0.0)
                    for (const auto& [z2, pz2] : raw.obs_probs[e.state])
                        if (pz2 > 0.0) intern(e.state, z2);
    }

    PomdpModel m;
    m.action_names = raw.action_names;
    m.observation_names = raw.observation_names;
    m.discount = raw.discount;
    m.state_names.reserve(pairs.size());
    for (const auto& [s, z] : pairs)
        m.state_names.push_back(raw.state_names[s] + "@" + raw.observation_names[z]);
    m.resize_tables();

    for (int i = 0; i < static_cast<int>(pairs.size()); ++i) {
        const auto [s, z] = pairs[i];
        m.obs_map[i] = z;
        if (raw.initial_belief[s] > 0.0) {
            double pz = 0.0;
            for (const auto& [zz, p] : raw.obs_probs[s])
                if (zz == z) pz = p;
            m.initial_belief[i] = raw.initial_belief[s] * pz;
        }
        for (int a = 0; a < A; ++a) {
            m.reward_mut(i, a) = raw.rewards[static_cast<std::size_t>(s) * A + a];
            auto& row = m.transition_row_mut(i, a);
            for (const auto& e : raw.transitions[static_cast<std::size_t>(s) * A + a]) {
                if (e.prob <= 0.0) continue;
                for (const auto& [z2, pz2] : raw.obs_probs[e.state]) {
                    if (pz2 <= 0.0) continue;
                    row.push_back({index.at(pair_key(e.state, z2)), e.prob * pz2});
                }
            }
        }
    }
    return m;
}

}  // namespace gpo
