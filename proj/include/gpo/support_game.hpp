#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpo/pomdp.hpp"

namespace gpo {

/// A set of state indices stored as a bitset. Belief supports are pure set
/// algebra, so all successor computations reduce to word-wise operations.
class SupportSet {
  public:
    SupportSet() = default;
    explicit SupportSet(int num_bits)
        : num_bits_(num_bits), words_((num_bits + 63) / 64, 0) {}

    static SupportSet of(int num_bits, std::initializer_list<int> members) {
        SupportSet s(num_bits);
        for (int i : members) s.set(i);
        return s;
    }

    int size_bits() const { return num_bits_; }
    void set(int i) { words_[i >> 6] |= 1ull << (i & 63); }
    bool test(int i) const { return (words_[i >> 6] >> (i & 63)) & 1; }

    bool empty() const {
        for (auto w : words_)
            if (w) return false;
        return true;
    }

    int count() const {
        int n = 0;
        for (auto w : words_) n += __builtin_popcountll(w);
        return n;
    }

    int first() const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i]) return static_cast<int>(i * 64 + __builtin_ctzll(words_[i]));
        return -1;
    }

    SupportSet& operator|=(const SupportSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
        return *this;
    }
    SupportSet& operator&=(const SupportSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
        return *this;
    }

    bool intersects(const SupportSet& o) const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & o.words_[i]) return true;
        return false;
    }

    bool is_subset_of(const SupportSet& o) const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & ~o.words_[i]) return false;
        return true;
    }

    bool operator==(const SupportSet& o) const {
        return num_bits_ == o.num_bits_ && words_ == o.words_;
    }

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < words_.size(); ++i) {
            std::uint64_t w = words_[i];
            while (w) {
                f(static_cast<int>(i * 64 + __builtin_ctzll(w)));
                w &= w - 1;
            }
        }
    }

    std::vector<int> members() const {
        std::vector<int> out;
        out.reserve(count());
        for_each([&](int i) { out.push_back(i); });
        return out;
    }

    std::size_t hash() const {
        std::size_t h = 1469598103934665603ull;
        for (auto w : words_) {
            h ^= w;
            h *= 1099511628211ull;
        }
        return h;
    }

    /// Big-endian hex rendering of the bit words, fixed width for the
    /// state count; used by the value cache file format.
    std::string to_hex() const {
        static const char* digits = "0123456789abcdef";
        const int nibbles = (num_bits_ + 3) / 4;
        std::string out(nibbles, '0');
        for (int i = 0; i < nibbles; ++i) {
            const int word = i / 16, shift = (i % 16) * 4;
            out[nibbles - 1 - i] = digits[(words_[word] >> shift) & 0xf];
        }
        return out;
    }

    static std::optional<SupportSet> from_hex(int num_bits, const std::string& hex) {
        SupportSet s(num_bits);
        const int nibbles = (num_bits + 3) / 4;
        if (static_cast<int>(hex.size()) != nibbles) return std::nullopt;
        for (int i = 0; i < nibbles; ++i) {
            const char c = hex[nibbles - 1 - i];
            int v;
            if (c >= '0' && c <= '9')
                v = c - '0';
            else if (c >= 'a' && c <= 'f')
                v = c - 'a' + 10;
            else
                return std::nullopt;
            s.words_[i / 16] |= static_cast<std::uint64_t>(v) << ((i % 16) * 4);
        }
        return s;
    }

  private:
    int num_bits_ = 0;
    std::vector<std::uint64_t> words_;
};

struct SupportSetHash {
    std::size_t operator()(const SupportSet& s) const { return s.hash(); }
};

struct ObservableRewardsReport {
    bool observable = true;
    // counterexample when not observable
    int state_a = -1;
    int state_b = -1;
    int action = -1;
};

/// Rewards are observable when states sharing an observation have exactly
/// equal rewards under every action.
inline ObservableRewardsReport check_observable_rewards(const PomdpModel& m) {
    const int S = m.num_states(), A = m.num_actions();
    std::vector<int> first_of_class(m.num_observations(), -1);
    for (int s = 0; s < S; ++s) {
        int& rep = first_of_class[m.obs_map[s]];
        if (rep < 0) {
            rep = s;
            continue;
        }
        for (int a = 0; a < A; ++a)
            if (m.reward(rep, a) != m.reward(s, a)) return {false, rep, s, a};
    }
    return {};
}

enum class RewardRule {
    RequireObservable,  // error out when rewards are not observable
    PessimisticMin,     // r(B, a) = min over states in B; sound lower bound
    Auto,               // observable if it holds, pessimistic otherwise
};

struct SupportEdge {
    int obs;
    int successor;
};

/// The belief-support game: all valid supports reachable from the initial
/// belief, the successor map Delta as explicit edges and the per-support
/// reward. This is the weighted arena the worst-case analysis is played
/// on, restricted to reachable states.
struct SupportGame {
    int num_states = 0;
    int num_actions = 0;
    int num_observations = 0;
    double discount = 0.0;
    bool pessimistic = false;

    std::vector<SupportSet> supports;
    std::unordered_map<SupportSet, int, SupportSetHash> index;
    std::vector<std::vector<SupportEdge>> edges;  // [support * num_actions + a]
    std::vector<double> support_reward;           // [support * num_actions + a]
    std::vector<std::pair<int, int>> roots;       // (observation, support), sorted by obs
    std::vector<char> zero_terminal;  // no nonzero reward reachable from here

    int find(const SupportSet& s) const {
        auto it = index.find(s);
        return it == index.end() ? -1 : it->second;
    }
    const std::vector<SupportEdge>& edges_for(int support, int action) const {
        return edges[static_cast<std::size_t>(support) * num_actions + action];
    }
    double reward(int support, int action) const {
        return support_reward[static_cast<std::size_t>(support) * num_actions + action];
    }
    int root_for_observation(int obs) const {
        for (const auto& [z, b] : roots)
            if (z == obs) return b;
        return -1;
    }
};

/// Breadth-first closure of the valid belief supports from Supp(lambda)
/// under Delta(B, a, o) = o intersected with the union of transition
/// supports out of B. When the initial belief spans several observation
/// classes it is split into one root per class: the first observation
/// reveals the class, and every support ever tracked online shares one
/// observation.
inline SupportGame enumerate_valid_supports(const PomdpModel& m,
                                            RewardRule rule = RewardRule::RequireObservable) {
    const int S = m.num_states(), A = m.num_actions(), Z = m.num_observations();
    const auto report = check_observable_rewards(m);
    bool pessimistic;
    switch (rule) {
        case RewardRule::RequireObservable:
            if (!report.observable)
                throw RewardAmbiguityError(
                    "rewards not observable: r(" + m.state_names[report.state_a] + ", " +
                    m.action_names[report.action] + ") != r(" +
                    m.state_names[report.state_b] + ", " + m.action_names[report.action] +
                    ") though both states emit " +
                    m.observation_names[m.obs_map[report.state_a]]);
            pessimistic = false;
            break;
        case RewardRule::PessimisticMin:
            pessimistic = true;
            break;
        case RewardRule::Auto:
            pessimistic = !report.observable;
            break;
    }

    SupportGame game;
    game.num_states = S;
    game.num_actions = A;
    game.num_observations = Z;
    game.discount = m.discount;
    game.pessimistic = pessimistic;

    // Per-observation membership masks and per-(s, a) successor masks.
    std::vector<SupportSet> obs_mask(Z, SupportSet(S));
    for (int s = 0; s < S; ++s) obs_mask[m.obs_map[s]].set(s);
    std::vector<SupportSet> succ_mask(static_cast<std::size_t>(S) * A, SupportSet(S));
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            for (const auto& e : m.transition_row(s, a))
                if (e.prob > 0.0) succ_mask[static_cast<std::size_t>(s) * A + a].set(e.state);

    auto intern = [&](const SupportSet& b) {
        auto [it, inserted] = game.index.try_emplace(b, static_cast<int>(game.supports.size()));
        if (inserted) game.supports.push_back(b);
        return it->second;
    };

    // Roots: the initial support split per observation class.
    SupportSet init(S);
    for (int s = 0; s < S; ++s)
        if (m.initial_belief[s] > 0.0) init.set(s);
    for (int z = 0; z < Z; ++z) {
        SupportSet b = init;
        b &= obs_mask[z];
        if (!b.empty()) game.roots.emplace_back(z, intern(b));
    }

    for (std::size_t next = 0; next < game.supports.size(); ++next) {
        const SupportSet b = game.supports[next];  // copy: game.supports may grow
        for (int a = 0; a < A; ++a) {
            SupportSet reach(S);
            b.for_each([&](int s) { reach |= succ_mask[static_cast<std::size_t>(s) * A + a]; });
            std::vector<SupportEdge> row;
            for (int z = 0; z < Z; ++z) {
                if (!reach.intersects(obs_mask[z])) continue;
                SupportSet succ = reach;
                succ &= obs_mask[z];
                row.push_back({z, intern(succ)});
            }
            game.edges.push_back(std::move(row));
        }
    }

    game.support_reward.resize(game.supports.size() * A);
    for (std::size_t i = 0; i < game.supports.size(); ++i) {
        for (int a = 0; a < A; ++a) {
            double r;
            if (pessimistic) {
                r = std::numeric_limits<double>::infinity();
                game.supports[i].for_each([&](int s) { r = std::min(r, m.reward(s, a)); });
            } else {
                r = m.reward(game.supports[i].first(), a);
            }
            game.support_reward[i * A + a] = r;
        }
    }

    // Supports whose whole forward closure carries exact reward zero; used
    // to certify finished episodes.
    {
        const std::size_t N = game.supports.size();
        game.zero_terminal.assign(N, 1);
        std::vector<std::vector<int>> pred(N);
        std::vector<int> queue;
        for (std::size_t i = 0; i < N; ++i) {
            bool nonzero = false;
            game.supports[i].for_each([&](int s) {
                for (int a = 0; a < A; ++a)
                    if (m.reward(s, a) != 0.0) nonzero = true;
            });
            if (nonzero && game.zero_terminal[i]) {
                game.zero_terminal[i] = 0;
                queue.push_back(static_cast<int>(i));
            }
            for (int a = 0; a < A; ++a)
                for (const auto& e : game.edges_for(static_cast<int>(i), a))
                    if (e.successor != static_cast<int>(i))
                        pred[e.successor].push_back(static_cast<int>(i));
        }
        for (std::size_t qi = 0; qi < queue.size(); ++qi)
            for (int p : pred[queue[qi]])
                if (game.zero_terminal[p]) {
                    game.zero_terminal[p] = 0;
                    queue.push_back(p);
                }
    }
    return game;
}

/// Delta(B, a, o); empty optional when the successor is impossible.
inline std::optional<int> successor_support(const SupportGame& game, int support,
                                            int action, int obs) {
    for (const auto& e : game.edges_for(support, action))
        if (e.obs == obs) return e.successor;
    return std::nullopt;
}

struct ViStop {
    enum class Mode { Fixpoint, MaxIters, Residual };
    Mode mode = Mode::Fixpoint;
    int max_iters = 0;     // Mode::MaxIters
    double epsilon = 0.0;  // Mode::Residual
    double init_value = 0.0;
    // Hard cap for Mode::Fixpoint; reaching it degrades to an early stop.
    long safety_cap = 1000000;

    static ViStop fixpoint() { return {}; }
    static ViStop iterations(int n, double init = 0.0) {
        return {Mode::MaxIters, n, 0.0, init};
    }
    static ViStop residual(double eps, double init = 0.0) {
        return {Mode::Residual, 0, eps, init};
    }
};

/// The value table produced by game value iteration. `values` is fVal when
/// `exact` is set, and a certified under-approximation of fVal otherwise.
struct FutureValueTable {
    std::vector<double> values;
    double residual = 0.0;
    long iterations = 0;
    bool exact = false;
    // Maximizing actions per support in the final sweep, for diagnostics.
    std::vector<std::vector<int>> best_actions;
};

/// Game value iteration for the max-min system over belief supports:
///
///   f(B) = max_a min_{o : Delta(B,a,o) nonempty} r(B, a) + gamma * f(Delta(B,a,o))
///
/// Jacobi sweeps from a constant initialization. Stopping at the exact
/// fixpoint yields fVal itself. On an early stop the table is corrected by
/// -residual * gamma / (1 - gamma) so that it never exceeds fVal; the
/// correction is skipped when the iteration provably climbs towards the
/// fixpoint from below (zero initialization and no negative support
/// rewards), in which case the raw iterate is already an
/// under-approximation.
inline FutureValueTable value_iteration(const SupportGame& game, ViStop stop = {}) {
    const std::size_t N = game.supports.size();
    const int A = game.num_actions;
    const double gamma = game.discount;

    FutureValueTable table;
    std::vector<double> cur(N, stop.init_value), next(N);
    double delta = std::numeric_limits<double>::infinity();
    long iters = 0;
    bool exact = false;

    auto backup = [&](int b, const std::vector<double>& f) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            const auto& row = game.edges_for(b, a);
            if (row.empty()) continue;  // cannot happen for well-formed models
            const double r = game.reward(b, a);
            double worst = std::numeric_limits<double>::infinity();
            for (const auto& e : row) worst = std::min(worst, r + gamma * f[e.successor]);
            best = std::max(best, worst);
        }
        return best;
    };

    const long cap = stop.mode == ViStop::Mode::MaxIters ? stop.max_iters : stop.safety_cap;
    while (iters < cap) {
        delta = 0.0;
        for (std::size_t b = 0; b < N; ++b) {
            next[b] = backup(static_cast<int>(b), cur);
            delta = std::max(delta, std::abs(next[b] - cur[b]));
        }
        std::swap(cur, next);
        ++iters;
        if (delta == 0.0) {
            exact = true;
            break;
        }
        if (stop.mode == ViStop::Mode::Residual && delta <= stop.epsilon) break;
    }

    table.values = std::move(cur);
    table.residual = delta;
    table.iterations = iters;
    table.exact = exact;

    if (!exact) {
        double min_reward = 0.0;
        for (double r : game.support_reward) min_reward = std::min(min_reward, r);
        const bool monotone_from_below = stop.init_value == 0.0 && min_reward >= 0.0;
        if (!monotone_from_below && gamma > 0.0) {
            const double correction = delta * gamma / (1.0 - gamma);
            for (double& v : table.values) v -= correction;
        }
    }

    table.best_actions.resize(N);
    for (std::size_t b = 0; b < N; ++b) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            const auto& row = game.edges_for(static_cast<int>(b), a);
            if (row.empty()) continue;
            const double r = game.reward(static_cast<int>(b), a);
            double worst = std::numeric_limits<double>::infinity();
            for (const auto& e : row)
                worst = std::min(worst, r + gamma * table.values[e.successor]);
            if (worst > best) {
                best = worst;
                table.best_actions[b].clear();
            }
            if (worst == best) table.best_actions[b].push_back(a);
        }
    }
    return table;
}

inline double fval_lookup(const FutureValueTable& table, const SupportGame& game,
                          const SupportSet& b) {
    const int idx = game.find(b);
    if (idx < 0)
        throw UnknownSupportError("support " + b.to_hex() +
                                  " was never enumerated; valid supports are closed "
                                  "under Delta, so this indicates a reachability bug");
    return table.values[idx];
}

/// Upper bound on the number of sweeps needed to reach the fixpoint:
/// ceil(3 + log2(max |r|) + (|S|+3)^2 / 2 * log2(den(gamma)) / (1 - gamma)),
/// where den(gamma) is the reduced-form denominator. Requires gamma to be
/// recognizably rational.
inline long iteration_bound(const PomdpModel& m) {
    // Rational reconstruction by continued fractions. Only a fraction that
    // reproduces the discount exactly (as a double, with a small reduced
    // denominator) counts as a known rational form.
    const double gamma = m.discount;
    long den = -1;
    {
        double x = gamma;
        long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
        for (int iter = 0; iter < 64; ++iter) {
            const double a = std::floor(x);
            const long ai = static_cast<long>(a);
            const long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
            if (q2 > 1000000L) break;
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
            if (static_cast<double>(p1) / static_cast<double>(q1) == gamma) {
                den = q1;
                break;
            }
            const double frac = x - a;
            if (frac < 1e-15) break;
            x = 1.0 / frac;
        }
    }
    if (den <= 0)
        throw BoundUnavailableError("discount has no small rational form");
    double max_r = m.max_abs_reward();
    if (max_r <= 0.0) max_r = 1.0;
    const double s3 = m.num_states() + 3.0;
    const double bound = 3.0 + std::log2(max_r) +
                         0.5 * s3 * s3 * std::log2(static_cast<double>(den)) /
                             (1.0 - gamma);
    return static_cast<long>(std::ceil(bound));
}

/// Cache file: a short header keyed by the model hash followed by one
/// `<support-hex>\t<value>` line per support. A cache is only accepted when
/// the model hash, discount and support set all match.
inline void save_value_cache(std::ostream& out, const SupportGame& game,
                             const FutureValueTable& table, std::uint64_t model_hash) {
    char buf[64];
    out << "gpo-fval-cache v1\n";
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(model_hash));
    out << "model_hash " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", game.discount);
    out << "gamma " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", table.residual);
    out << "residual " << buf << "\n";
    out << "iterations " << table.iterations << "\n";
    out << "exact " << (table.exact ? 1 : 0) << "\n";
    out << "supports " << game.supports.size() << "\n";
    for (std::size_t i = 0; i < game.supports.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", table.values[i]);
        out << game.supports[i].to_hex() << "\t" << buf << "\n";
    }
}

inline std::optional<FutureValueTable> load_value_cache(std::istream& in,
                                                        const SupportGame& game,
                                                        std::uint64_t model_hash) {
    std::string line;
    if (!std::getline(in, line) || line != "gpo-fval-cache v1") return std::nullopt;
    std::uint64_t hash = 0;
    double gamma = -1.0;
    FutureValueTable table;
    std::size_t count = 0;
    for (int i = 0; i < 6; ++i) {
        if (!std::getline(in, line)) return std::nullopt;
        std::istringstream iss(line);
        std::string key;
        iss >> key;
        if (key == "model_hash") {
            std::string hex;
            iss >> hex;
            if (!iss) return std::nullopt;
            hash = std::stoull(hex, nullptr, 16);
        } else if (key == "gamma") {
            iss >> gamma;
        } else if (key == "residual") {
            iss >> table.residual;
        } else if (key == "iterations") {
            iss >> table.iterations;
        } else if (key == "exact") {
            int v = 0;
            iss >> v;
            table.exact = v != 0;
        } else if (key == "supports") {
            iss >> count;
        } else {
            return std::nullopt;
        }
        if (!iss) return std::nullopt;
    }
    if (hash != model_hash || gamma != game.discount) return std::nullopt;
    if (count != game.supports.size()) return std::nullopt;

    table.values.assign(game.supports.size(), 0.0);
    std::vector<char> seen(game.supports.size(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) return std::nullopt;
        std::istringstream iss(line);
        std::string hex;
        double value;
        if (!(iss >> hex >> value)) return std::nullopt;
        auto set = SupportSet::from_hex(game.num_states, hex);
        if (!set) return std::nullopt;
        const int idx = game.find(*set);
        if (idx < 0 || seen[idx]) return std::nullopt;
        seen[idx] = 1;
        table.values[idx] = value;
    }
    return table;
}

}  // namespace gpo
