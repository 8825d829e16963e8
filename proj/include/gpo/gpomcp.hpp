#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gpo/guard.hpp"
#include "gpo/pomdp.hpp"
#include "gpo/support_game.hpp"

namespace gpo {

struct PlannerConfig {
    int simulations = 4096;
    /// UCB exploration constant; negative picks max|r| / (1 - gamma).
    double ucb_constant = -1.0;
    /// Simulation depth cutoff; 0 derives it from depth_precision.
    int max_depth = 0;
    /// Auto depth cutoff: smallest d with gamma^d * max|r| / (1 - gamma)
    /// below this fraction of the payoff range.
    double depth_precision = 1e-3;
    int particle_count = 1024;
    std::uint64_t seed = 1;
    /// Optimality slack the online planner aims for; recorded for the
    /// caller, not a tuning knob of the search itself.
    double epsilon = 0.0;
};

/// G-POMCP: POMCP with every action choice (tree policy, rollouts and the
/// final recommendation) restricted to the Psi-allowed set of the node's
/// guard. Nodes carry the belief support and remaining requirement next to
/// the particle belief; the guard is advanced by pure set operations and
/// never depends on the particles, so threshold guarantees survive
/// arbitrarily bad belief approximations.
class GpomcpPlanner {
  public:
    struct ActionEdge {
        int visits = 0;
        double value_sum = 0.0;
        std::vector<std::pair<int, int>> children;  // (observation, node index)
    };

    struct Node {
        GuardState guard;
        int visits = 0;
        std::vector<int> particles;
        std::vector<int> allowed;  // cached Psi-allowed actions
        std::vector<ActionEdge> edges;  // indexed by action
    };

    GpomcpPlanner(const PomdpModel& model, const SupportGame& game,
                  const FutureValueTable& table, PlannerConfig cfg, double threshold)
        : model_(model),
          game_(game),
          table_(table),
          cfg_(cfg),
          threshold_(threshold),
          rng_(cfg.seed) {
        const double gamma = model.discount;
        ucb_c_ = cfg.ucb_constant >= 0.0
                     ? cfg.ucb_constant
                     : model.max_abs_reward() / (1.0 - gamma);
        if (cfg.max_depth > 0) {
            depth_cutoff_ = cfg.max_depth;
        } else {
            double range = (model.max_reward() - model.min_reward()) / (1.0 - gamma);
            if (range <= 0.0) range = std::max(1.0, model.max_abs_reward() / (1.0 - gamma));
            const double target = cfg.depth_precision * range;
            double tail = model.max_abs_reward() / (1.0 - gamma);
            int d = 1;
            while (gamma > 0.0 && tail * gamma >= target && d < 10000) {
                tail *= gamma;
                ++d;
            }
            depth_cutoff_ = d;
        }
    }

    /// Resets the search tree for a fresh episode. Split-root games need
    /// the initial observation to select their root support; the particle
    /// belief starts as the initial belief conditioned on that class.
    void start_episode(std::uint64_t seed, int initial_observation = -1) {
        rng_ = Rng(seed);
        nodes_.clear();
        const GuardState g = initial_observation >= 0
                                 ? initial_guard(game_, threshold_, initial_observation)
                                 : initial_guard(game_, threshold_);
        root_ = new_node(g);
        auto& particles = nodes_[root_].particles;
        const SupportSet& support = game_.supports[g.support];
        for (int i = 0; i < cfg_.particle_count; ++i) {
            for (int tries = 0; tries < 1000; ++tries) {
                const int s = sample_initial_state();
                if (support.test(s)) {
                    particles.push_back(s);
                    break;
                }
            }
        }
        if (particles.empty()) reseed_uniform(root_);
    }

    int sample_initial_state() {
        double u = rng_.uniform();
        int last = 0;
        for (int s = 0; s < model_.num_states(); ++s) {
            const double p = model_.initial_belief[s];
            if (p <= 0.0) continue;
            last = s;
            if (u < p) return s;
            u -= p;
        }
        return last;
    }

    /// Runs the configured number of simulations from the root and returns
    /// the allowed action with the best mean value estimate (ties: lowest
    /// action index). The returned action is Psi-allowed by construction.
    int plan_action() {
        Node& root = nodes_[root_];
        if (root.allowed.empty())
            throw InfeasibilityFault("no allowed action at the search root");
        if (root.particles.empty()) reseed_uniform(root_);
        for (int i = 0; i < cfg_.simulations; ++i) {
            const auto& particles = nodes_[root_].particles;
            const int s = particles[rng_.below(particles.size())];
            simulate(root_, s, 0);
        }
        int best = nodes_[root_].allowed.front();
        double best_mean = -std::numeric_limits<double>::infinity();
        for (int a : nodes_[root_].allowed) {
            const auto& e = nodes_[root_].edges[a];
            if (e.visits == 0) continue;
            const double mean = e.value_sum / e.visits;
            if (mean > best_mean) {
                best_mean = mean;
                best = a;
            }
        }
        return best;
    }

    /// Plays (action, observation) for real: reroots the tree at that
    /// child, advances the guard, and refreshes root particles by stepping
    /// old particles through the action and keeping the ones consistent
    /// with the observation. Particle deprivation falls back to a uniform
    /// reseed over the guard support, which cannot affect the guarantee.
    void commit(int action, int observation) {
        const GuardState g = advance_guard(game_, nodes_[root_].guard, action, observation);
        int child = find_child(root_, action, observation);
        if (child < 0) {
            child = new_node(g);
            nodes_[root_].edges[action].children.emplace_back(observation, child);
        }

        std::vector<int> fresh;
        const SupportSet& support = game_.supports[g.support];
        for (int s : nodes_[child].particles)
            if (support.test(s)) fresh.push_back(s);
        const auto& old = nodes_[root_].particles;
        if (!old.empty()) {
            const long max_tries = 64L * cfg_.particle_count;
            for (long tries = 0;
                 static_cast<int>(fresh.size()) < cfg_.particle_count && tries < max_tries;
                 ++tries) {
                const int s = old[rng_.below(old.size())];
                const StepResult step = sample_step(model_, s, action, rng_);
                if (step.observation == observation) fresh.push_back(step.state);
            }
        }
        if (static_cast<int>(fresh.size()) > cfg_.particle_count) {
            std::vector<int> sampled;
            sampled.reserve(cfg_.particle_count);
            for (int i = 0; i < cfg_.particle_count; ++i)
                sampled.push_back(fresh[rng_.below(fresh.size())]);
            fresh = std::move(sampled);
        }
        nodes_[child].particles = std::move(fresh);
        if (nodes_[child].particles.empty()) reseed_uniform(child);
        root_ = child;
    }

    const GuardState& root_guard() const { return nodes_[root_].guard; }
    const Node& node(int idx) const { return nodes_[idx]; }
    int root_index() const { return root_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int depth_cutoff() const { return depth_cutoff_; }
    double ucb_constant() const { return ucb_c_; }

    /// Mean value estimate of the best allowed root action.
    double root_value_estimate() const {
        const Node& root = nodes_[root_];
        double best = -std::numeric_limits<double>::infinity();
        for (int a : root.allowed) {
            const auto& e = root.edges[a];
            if (e.visits > 0) best = std::max(best, e.value_sum / e.visits);
        }
        return best;
    }

    /// Belief-injection hook: replaces the root particle multiset. Used by
    /// tests to corrupt the belief approximation; guarantees must not care.
    std::vector<int>& root_particles() { return nodes_[root_].particles; }

    /// Uniform random allowed play from (state, guard); returns the
    /// discounted payoff of the generated suffix up to the depth cutoff.
    /// The guard is advanced with Delta only. When `trace` is given, the
    /// chosen (action, observation) steps are appended to it.
    double rollout(int state, GuardState guard, int depth,
                   std::vector<std::pair<int, int>>* trace = nullptr) {
        double total = 0.0, scale = 1.0;
        int s = state;
        for (int d = depth; d < depth_cutoff_; ++d) {
            if (game_.zero_terminal[guard.support]) break;
            scratch_allowed_.clear();
            for (int a = 0; a < game_.num_actions; ++a)
                if (is_action_allowed(game_, table_, guard, a)) scratch_allowed_.push_back(a);
            if (scratch_allowed_.empty())
                throw InfeasibilityFault("no allowed action during rollout");
            const int a = scratch_allowed_[rng_.below(scratch_allowed_.size())];
            const StepResult step = sample_step(model_, s, a, rng_);
            total += scale * step.reward;
            scale *= model_.discount;
            guard = advance_guard(game_, guard, a, step.observation);
            s = step.state;
            if (trace) trace->emplace_back(a, step.observation);
        }
        return total;
    }

    static double ucb_score(double mean, double c, int parent_visits, int edge_visits) {
        return mean + c * std::sqrt(std::log(static_cast<double>(parent_visits)) /
                                    edge_visits);
    }

  private:
    int new_node(const GuardState& g) {
        Node node;
        node.guard = g;
        node.allowed = allowed_actions(game_, table_, g);
        node.edges.resize(game_.num_actions);
        nodes_.push_back(std::move(node));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int find_child(int node, int action, int obs) const {
        for (const auto& [o, child] : nodes_[node].edges[action].children)
            if (o == obs) return child;
        return -1;
    }

    void reseed_uniform(int node) {
        const auto members = game_.supports[nodes_[node].guard.support].members();
        auto& particles = nodes_[node].particles;
        particles.clear();
        for (int i = 0; i < cfg_.particle_count; ++i)
            particles.push_back(members[rng_.below(members.size())]);
    }

    /// One UCT descent from `node` with the simulation in `state`. Chooses
    /// among allowed actions only: unvisited ones first (lowest index),
    /// otherwise the argmax of mean + c * sqrt(ln N_h / N_child). Expands
    /// one node on leaving the tree, finishes with a rollout and backs the
    /// discounted return up the path.
    double simulate(int node_idx, int state, int depth) {
        if (depth >= depth_cutoff_) return 0.0;
        if (game_.zero_terminal[nodes_[node_idx].guard.support]) return 0.0;
        if (nodes_[node_idx].allowed.empty())
            throw InfeasibilityFault("no allowed action in the search tree");

        if (node_idx != root_) {
            // Grow the particle belief of internal nodes as simulations
            // pass through; never past the configured size.
            auto& particles = nodes_[node_idx].particles;
            if (static_cast<int>(particles.size()) < cfg_.particle_count &&
                game_.supports[nodes_[node_idx].guard.support].test(state))
                particles.push_back(state);
        }

        int action = -1;
        for (int a : nodes_[node_idx].allowed) {
            if (nodes_[node_idx].edges[a].visits == 0) {
                action = a;
                break;
            }
        }
        if (action < 0) {
            const double logn = std::log(static_cast<double>(nodes_[node_idx].visits));
            double best = -std::numeric_limits<double>::infinity();
            for (int a : nodes_[node_idx].allowed) {
                const auto& e = nodes_[node_idx].edges[a];
                const double score =
                    e.value_sum / e.visits + ucb_c_ * std::sqrt(logn / e.visits);
                if (score > best) {
                    best = score;
                    action = a;
                }
            }
        }

        const StepResult step = sample_step(model_, state, action, rng_);
        int child = find_child(node_idx, action, step.observation);
        double future;
        if (child < 0) {
            const GuardState g =
                advance_guard(game_, nodes_[node_idx].guard, action, step.observation);
            child = new_node(g);  // may reallocate nodes_
            nodes_[node_idx].edges[action].children.emplace_back(step.observation, child);
            if (game_.supports[g.support].test(step.state))
                nodes_[child].particles.push_back(step.state);
            future = rollout(step.state, g, depth + 1);
        } else {
            future = simulate(child, step.state, depth + 1);
        }

        const double ret = step.reward + model_.discount * future;
        Node& node = nodes_[node_idx];
        node.visits += 1;
        node.edges[action].visits += 1;
        node.edges[action].value_sum += ret;
        return ret;
    }

    const PomdpModel& model_;
    const SupportGame& game_;
    const FutureValueTable& table_;
    PlannerConfig cfg_;
    double threshold_;
    Rng rng_;
    double ucb_c_ = 0.0;
    int depth_cutoff_ = 1;
    std::vector<Node> nodes_;
    int root_ = -1;
    std::vector<int> scratch_allowed_;
};

}  // namespace gpo
