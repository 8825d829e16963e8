#pragma once

#include <limits>
#include <vector>

#include "gpo/support_game.hpp"

namespace gpo {

/// The online sufficient statistic for the worst-case half of the problem:
/// the current belief support (as an index into the game) and the remaining
/// requirement rem, i.e. the payoff that must still be guaranteed from here
/// on, rescaled to the current step. A run is on track as long as
/// rem <= Psi(support).
struct GuardState {
    int support = -1;
    double rem = 0.0;
    int depth = 0;
};

inline GuardState initial_guard(const SupportGame& game, double t, int observation) {
    const int root = game.root_for_observation(observation);
    if (root < 0)
        throw GuardDesyncError("no initial support for observation index " +
                               std::to_string(observation));
    return {root, t, 0};
}

/// Initial guard for games with a single root. Split-root games (initial
/// belief spanning several observation classes) need the overload taking
/// the initial observation.
inline GuardState initial_guard(const SupportGame& game, double t) {
    if (game.roots.size() != 1)
        throw Error("initial belief spans several observation classes; pass the "
                    "initial observation to pick the root");
    return {game.roots.front().second, t, 0};
}

/// One step of the statistic: support' = Delta(B, a, o) and
/// rem' = (rem - r(B, a)) / gamma.
inline GuardState advance_guard(const SupportGame& game, const GuardState& g, int action,
                                int obs) {
    const auto succ = successor_support(game, g.support, action, obs);
    if (!succ)
        throw GuardDesyncError("observation index " + std::to_string(obs) +
                               " is impossible for this support and action");
    const double owed = g.rem - game.reward(g.support, action);
    double rem;
    if (game.discount > 0.0) {
        rem = owed / game.discount;
    } else {
        // With gamma = 0 nothing after this step counts: the requirement is
        // either settled for good or unmeetable.
        rem = owed <= 0.0 ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
    }
    return {*succ, rem, g.depth + 1};
}

/// True iff action `a` is Psi-allowed at guard `g`: every possible next
/// support keeps the remaining requirement coverable,
///
///   r(B, a) + gamma * Psi(Delta(B, a, o)) >= rem   for all possible o.
///
/// The comparison is exact; soundness comes from Psi being an
/// under-approximation of fVal, so rounding can only drop marginal actions,
/// never admit unsafe ones.
inline bool is_action_allowed(const SupportGame& game, const FutureValueTable& table,
                              const GuardState& g, int action) {
    const double r = game.reward(g.support, action);
    for (const auto& e : game.edges_for(g.support, action))
        if (r + game.discount * table.values[e.successor] < g.rem) return false;
    return true;
}

/// All Psi-allowed actions at `g`, in action-index order. May be empty;
/// callers treat an empty set reached through allowed play as an
/// infeasibility fault.
inline std::vector<int> allowed_actions(const SupportGame& game,
                                        const FutureValueTable& table,
                                        const GuardState& g) {
    std::vector<int> out;
    for (int a = 0; a < game.num_actions; ++a)
        if (is_action_allowed(game, table, g, a)) out.push_back(a);
    return out;
}

/// True iff the threshold is guaranteeable from the start: Psi(root) >= t
/// for every observation-class root.
inline bool check_feasible(const SupportGame& game, const FutureValueTable& table,
                           double t) {
    for (const auto& [obs, root] : game.roots) {
        (void)obs;
        if (table.values[root] < t) return false;
    }
    return true;
}

}  // namespace gpo
