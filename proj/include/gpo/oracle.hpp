#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "gpo/guard.hpp"
#include "gpo/pomdp.hpp"
#include "gpo/support_game.hpp"

namespace gpo {

/// A finite decision tree over observations. Interior nodes play `action`
/// and descend into the child keyed by the next observation; when an
/// observation has no child the node degenerates into a leaf that repeats
/// `action` forever. A node with a nonempty `stationary` map is a leaf that
/// switches to the memoryless rule observation -> action for good.
struct PolicyTree {
    int action = -1;
    std::map<int, PolicyTree> children;
    std::map<int, int> stationary;
};

struct PolicyValue {
    double eval = 0.0;  // expected discounted payoff from the initial belief
    double wval = 0.0;  // infimum over all consistent plays, including
                        // probability-zero limits
};

namespace oracle_detail {

struct Position {
    const PolicyTree* node;  // null: repeat `repeat_action` forever
    int repeat_action;
    bool operator<(const Position& o) const {
        return std::tie(node, repeat_action) < std::tie(o.node, o.repeat_action);
    }
};

inline int position_action(const Position& pos, int state_obs) {
    if (!pos.node) return pos.repeat_action;
    if (!pos.node->stationary.empty()) {
        auto it = pos.node->stationary.find(state_obs);
        if (it == pos.node->stationary.end())
            throw Error("stationary rule has no action for an observation it reaches");
        return it->second;
    }
    return pos.node->action;
}

inline Position position_after(const Position& pos, int obs) {
    if (!pos.node) return pos;
    if (!pos.node->stationary.empty()) return pos;
    auto it = pos.node->children.find(obs);
    if (it != pos.node->children.end()) return {&it->second, -1};
    return {nullptr, pos.node->action};
}

}  // namespace oracle_detail

/// Exact (eVal, wVal) of a policy tree, evaluated on the product of model
/// states and policy positions. eVal solves the linear fixpoint of the
/// expectation recursion; wVal solves the min fixpoint, which accounts for
/// probability-zero limit plays (an infinite self-loop shows up as a cycle
/// of the product graph, not as a sampled event). Both are iterated from
/// zero; `horizon` caps the sweeps, and 0 picks the smallest horizon whose
/// truncation error is below 1e-12. Absorbing models hit their exact
/// fixpoint earlier and stop there.
inline PolicyValue policy_eval(const PomdpModel& m, const PolicyTree& policy,
                               int horizon = 0, long node_budget = 1000000) {
    using oracle_detail::Position;
    if (policy.action < 0 && policy.stationary.empty())
        throw Error("policy root must carry an action");

    struct ProductNode {
        double reward;
        std::vector<std::pair<int, double>> succ;  // (product node, probability)
    };
    std::map<std::pair<int, Position>, int> ids;
    std::vector<std::pair<int, Position>> keys;
    std::vector<ProductNode> nodes;
    auto intern = [&](int s, Position pos) {
        auto [it, inserted] = ids.try_emplace({s, pos}, static_cast<int>(keys.size()));
        if (inserted) {
            keys.push_back({s, pos});
            if (static_cast<long>(keys.size()) > node_budget)
                throw BudgetExceededError("policy evaluation graph too large");
        }
        return it->second;
    };

    const Position root{&policy, -1};
    std::vector<int> start_nodes(m.num_states(), -1);
    for (int s = 0; s < m.num_states(); ++s)
        if (m.initial_belief[s] > 0.0) start_nodes[s] = intern(s, root);

    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto [s, pos] = keys[i];
        const int a = oracle_detail::position_action(pos, m.obs_map[s]);
        if (a < 0 || a >= m.num_actions()) throw Error("policy plays an invalid action");
        ProductNode node;
        node.reward = m.reward(s, a);
        for (const auto& e : m.transition_row(s, a)) {
            if (e.prob <= 0.0) continue;
            const Position next = oracle_detail::position_after(pos, m.obs_map[e.state]);
            node.succ.emplace_back(intern(e.state, next), e.prob);
        }
        nodes.push_back(std::move(node));
    }

    const double gamma = m.discount;
    long sweeps = horizon;
    if (sweeps <= 0) {
        const double max_r = m.max_abs_reward();
        sweeps = 1;
        if (gamma > 0.0 && max_r > 0.0) {
            double tail = max_r / (1.0 - gamma);
            while (tail >= 1e-12 && sweeps < 10000) {
                tail *= gamma;
                ++sweeps;
            }
        }
    }

    const std::size_t N = nodes.size();
    std::vector<double> ecur(N, 0.0), enext(N), wcur(N, 0.0), wnext(N);
    for (long it = 0; it < sweeps; ++it) {
        double delta = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double e = 0.0;
            double w = std::numeric_limits<double>::infinity();
            for (const auto& [j, p] : nodes[i].succ) {
                e += p * ecur[j];
                w = std::min(w, wcur[j]);
            }
            if (nodes[i].succ.empty()) w = 0.0;  // cannot happen for valid models
            enext[i] = nodes[i].reward + gamma * e;
            wnext[i] = nodes[i].reward + gamma * w;
            delta = std::max(delta, std::abs(enext[i] - ecur[i]));
            delta = std::max(delta, std::abs(wnext[i] - wcur[i]));
        }
        ecur.swap(enext);
        wcur.swap(wnext);
        if (delta == 0.0) break;
    }

    PolicyValue out;
    out.wval = std::numeric_limits<double>::infinity();
    for (int s = 0; s < m.num_states(); ++s) {
        if (start_nodes[s] < 0) continue;
        out.eval += m.initial_belief[s] * ecur[start_nodes[s]];
        out.wval = std::min(out.wval, wcur[start_nodes[s]]);
    }
    return out;
}

struct GvalResult {
    bool feasible = false;
    double gval = -std::numeric_limits<double>::infinity();
    PolicyTree witness;
    PolicyValue witness_value;
    double tail_bound = 0.0;  // discounted mass beyond the search depth
    long candidates = 0;      // safe policies evaluated
};

namespace oracle_detail {

// Allowed actions at the guard, with behaviorally identical actions
// collapsed to the lowest index: two actions are interchangeable when they
// have equal rewards and equal transition rows on every support state.
inline std::vector<int> representative_actions(const PomdpModel& m,
                                               const SupportGame& game,
                                               const FutureValueTable& table,
                                               const GuardState& g) {
    const auto allowed = allowed_actions(game, table, g);
    const auto members = game.supports[g.support].members();
    std::vector<int> reps;
    for (int a : allowed) {
        bool duplicate = false;
        for (int b : reps) {
            bool same = true;
            for (int s : members) {
                if (m.reward(s, a) != m.reward(s, b)) {
                    same = false;
                    break;
                }
                auto ra = m.transition_row(s, a);
                auto rb = m.transition_row(s, b);
                std::vector<std::pair<int, double>> va, vb;
                for (const auto& e : ra)
                    if (e.prob > 0.0) va.emplace_back(e.state, e.prob);
                for (const auto& e : rb)
                    if (e.prob > 0.0) vb.emplace_back(e.state, e.prob);
                std::sort(va.begin(), va.end());
                std::sort(vb.begin(), vb.end());
                if (va != vb) {
                    same = false;
                    break;
                }
            }
            if (same) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) reps.push_back(a);
    }
    return reps;
}

inline void enumerate_policies(const PomdpModel& m, const SupportGame& game,
                               const FutureValueTable& table, const GuardState& g,
                               int depth, long budget, long& produced,
                               std::vector<PolicyTree>& out) {
    const auto reps = representative_actions(m, game, table, g);
    for (int a : reps) {
        // The bare leaf: repeat `a` forever from here.
        out.push_back(PolicyTree{a, {}, {}});
        if (++produced > budget) throw BudgetExceededError("policy enumeration budget");
        if (depth == 0 || game.zero_terminal[g.support]) continue;

        const auto& edges = game.edges_for(g.support, a);
        std::vector<std::vector<PolicyTree>> child_options;
        bool dead = false;
        for (const auto& e : edges) {
            std::vector<PolicyTree> options;
            enumerate_policies(m, game, table, advance_guard(game, g, a, e.obs),
                               depth - 1, budget, produced, options);
            if (options.empty()) {
                dead = true;
                break;
            }
            child_options.push_back(std::move(options));
        }
        if (dead) continue;

        // Cartesian product over the observation branches, skipping the
        // all-bare-leaves combination (it duplicates the leaf above only
        // when every branch repeats `a`; cheaper to keep duplicates than
        // to special-case, except for this first one).
        std::vector<std::size_t> pick(child_options.size(), 0);
        while (true) {
            PolicyTree node{a, {}, {}};
            for (std::size_t i = 0; i < edges.size(); ++i)
                node.children.emplace(edges[i].obs, child_options[i][pick[i]]);
            out.push_back(std::move(node));
            if (++produced > budget) throw BudgetExceededError("policy enumeration budget");
            std::size_t i = 0;
            while (i < pick.size() && ++pick[i] == child_options[i].size()) {
                pick[i] = 0;
                ++i;
            }
            if (i == pick.size()) break;
        }
    }
}

}  // namespace oracle_detail

/// Exhaustive search for the best expected value among policies whose every
/// action is fVal-allowed — exactly the policies with wVal >= t. Candidate
/// trees are generated to the given depth with repeat-forever leaves, then
/// scored exactly with policy_eval; candidates whose leaves stray below the
/// threshold are rejected by the exact wVal check. A test fixture, not a
/// solver: hard caps of 10 states, depth 8 and 10^6 candidates.
inline GvalResult gval_search(const PomdpModel& m, const SupportGame& game,
                              const FutureValueTable& table, double t, int depth = 8,
                              long policy_budget = 1000000) {
    if (m.num_states() > 10)
        throw BudgetExceededError("gval_search is capped at 10 states");
    if (depth > 8) throw BudgetExceededError("gval_search is capped at depth 8");
    if (game.roots.size() != 1)
        throw Error("gval_search requires a single initial observation class");

    GvalResult result;
    result.tail_bound = std::pow(m.discount, depth) * m.max_abs_reward() /
                        (1.0 - m.discount);

    std::vector<PolicyTree> candidates;
    long produced = 0;
    oracle_detail::enumerate_policies(m, game, table, initial_guard(game, t), depth,
                                      policy_budget, produced, candidates);
    for (auto& tree : candidates) {
        const PolicyValue value = policy_eval(m, tree);
        if (value.wval < t) continue;
        ++result.candidates;
        if (!result.feasible || value.eval > result.gval) {
            result.feasible = true;
            result.gval = value.eval;
            result.witness = tree;
            result.witness_value = value;
        }
    }
    return result;
}

}  // namespace gpo
