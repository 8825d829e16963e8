#pragma once

#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gpo/pomdp.hpp"

namespace gpo {

// The `pomdp v1` text format. Line based, `#` starts a comment, tokens are
// whitespace separated:
//
//   pomdp v1
//   discount <g>
//   states <name> ...
//   actions <name> ...
//   observations <name> ...
//   init <state> <p>
//   obs <state> <observation> [<p>]
//   T <state> <action> <state'> <p>
//   R <state> <action> <value>
//
// Unlisted (s, a, s') transitions have probability zero, but every declared
// (s, a) pair must carry at least one T line. Missing R lines default to
// reward zero. Probabilistic obs lines (with an explicit probability, or
// several lines for one state) make the parser run determinize_observations
// on the result.

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) {
        if (tok[0] == '#') break;
        out.push_back(tok);
    }
    return out;
}

inline double parse_number(const std::string& tok, int line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line_no, "expected a number, got '" + tok + "'");
    }
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline PomdpModel parse_model(std::istream& in) {
    struct Line {
        int number;
        std::vector<std::string> tokens;
    };
    std::vector<Line> lines;
    {
        std::string text;
        int n = 0;
        while (std::getline(in, text)) {
            ++n;
            auto tokens = detail::tokenize(text);
            if (!tokens.empty()) lines.push_back({n, std::move(tokens)});
        }
    }
    if (lines.empty()) throw ParseError(0, "empty model file");
    if (lines[0].tokens.size() != 2 || lines[0].tokens[0] != "pomdp" ||
        lines[0].tokens[1] != "v1")
        throw ParseError(lines[0].number, "expected header 'pomdp v1'");

    // First pass: declarations.
    std::vector<std::string> states, actions, observations;
    std::unordered_map<std::string, int> state_idx, action_idx, obs_idx;
    auto declare = [](const Line& line, std::vector<std::string>& names,
                      std::unordered_map<std::string, int>& index) {
        for (std::size_t i = 1; i < line.tokens.size(); ++i) {
            const auto& name = line.tokens[i];
            if (!index.try_emplace(name, static_cast<int>(names.size())).second)
                throw ParseError(line.number, "duplicate declaration of '" + name + "'");
            names.push_back(name);
        }
    };
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& kw = lines[i].tokens[0];
        if (kw == "states")
            declare(lines[i], states, state_idx);
        else if (kw == "actions")
            declare(lines[i], actions, action_idx);
        else if (kw == "observations")
            declare(lines[i], observations, obs_idx);
    }
    if (states.empty()) throw ParseError(lines[0].number, "no states declared");
    if (actions.empty()) throw ParseError(lines[0].number, "no actions declared");
    if (observations.empty()) throw ParseError(lines[0].number, "no observations declared");

    const int S = static_cast<int>(states.size());
    const int A = static_cast<int>(actions.size());

    RawObsModel raw;
    raw.state_names = states;
    raw.action_names = actions;
    raw.observation_names = observations;
    raw.transitions.assign(static_cast<std::size_t>(S) * A, {});
    raw.rewards.assign(static_cast<std::size_t>(S) * A, 0.0);
    raw.obs_probs.assign(S, {});
    raw.initial_belief.assign(S, 0.0);

    auto lookup = [](const std::unordered_map<std::string, int>& index,
                     const std::string& name, const char* kind, int line_no) {
        auto it = index.find(name);
        if (it == index.end())
            throw ParseError(line_no, std::string("undeclared ") + kind + " '" + name + "'");
        return it->second;
    };

    bool have_discount = false;
    std::vector<char> init_seen(S, 0);
    std::vector<char> reward_seen(static_cast<std::size_t>(S) * A, 0);
    std::unordered_set<std::int64_t> transition_seen;
    std::vector<char> det_obs(S, 0);  // state has a deterministic obs line

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& line = lines[i];
        const auto& toks = line.tokens;
        const auto& kw = toks[0];
        if (kw == "states" || kw == "actions" || kw == "observations") continue;
        if (kw == "discount") {
            if (toks.size() != 2) throw ParseError(line.number, "discount takes one value");
            if (have_discount) throw ParseError(line.number, "duplicate discount line");
            raw.discount = detail::parse_number(toks[1], line.number);
            if (!(raw.discount >= 0.0 && raw.discount < 1.0))
                throw ParseError(line.number, "discount must lie in [0, 1)");
            have_discount = true;
        } else if (kw == "init") {
            if (toks.size() != 3)
                throw ParseError(line.number, "expected 'init <state> <p>'");
            int s = lookup(state_idx, toks[1], "state", line.number);
            if (init_seen[s])
                throw ParseError(line.number, "duplicate init line for '" + toks[1] + "'");
            init_seen[s] = 1;
            raw.initial_belief[s] = detail::parse_number(toks[2], line.number);
            if (raw.initial_belief[s] < 0.0)
                throw ParseError(line.number, "negative initial probability");
        } else if (kw == "obs") {
            if (toks.size() != 3 && toks.size() != 4)
                throw ParseError(line.number, "expected 'obs <state> <observation> [<p>]'");
            int s = lookup(state_idx, toks[1], "state", line.number);
            int z = lookup(obs_idx, toks[2], "observation", line.number);
            double p = toks.size() == 4 ? detail::parse_number(toks[3], line.number) : 1.0;
            if (toks.size() == 3) {
                if (!raw.obs_probs[s].empty())
                    throw ParseError(line.number,
                                     "conflicting obs lines for '" + toks[1] + "'");
                det_obs[s] = 1;
            } else if (det_obs[s]) {
                throw ParseError(line.number, "conflicting obs lines for '" + toks[1] + "'");
            }
            if (p < 0.0) throw ParseError(line.number, "negative observation probability");
            for (const auto& [zz, pp] : raw.obs_probs[s]) {
                (void)pp;
                if (zz == z)
                    throw ParseError(line.number,
                                     "duplicate obs line for '" + toks[1] + "'");
            }
            raw.obs_probs[s].emplace_back(z, p);
        } else if (kw == "T") {
            if (toks.size() != 5)
                throw ParseError(line.number, "expected 'T <s> <a> <s2> <p>'");
            int s = lookup(state_idx, toks[1], "state", line.number);
            int a = lookup(action_idx, toks[2], "action", line.number);
            int s2 = lookup(state_idx, toks[3], "state", line.number);
            double p = detail::parse_number(toks[4], line.number);
            if (p < 0.0) throw ParseError(line.number, "negative transition probability");
            const std::int64_t key =
                (static_cast<std::int64_t>(s) * A + a) * S + s2;
            if (!transition_seen.insert(key).second)
                throw ParseError(line.number, "duplicate T line for (" + toks[1] + ", " +
                                                  toks[2] + ", " + toks[3] + ")");
            raw.transitions[static_cast<std::size_t>(s) * A + a].push_back({s2, p});
        } else if (kw == "R") {
            if (toks.size() != 4)
                throw ParseError(line.number, "expected 'R <s> <a> <value>'");
            int s = lookup(state_idx, toks[1], "state", line.number);
            int a = lookup(action_idx, toks[2], "action", line.number);
            auto& seen = reward_seen[static_cast<std::size_t>(s) * A + a];
            if (seen)
                throw ParseError(line.number,
                                 "duplicate R line for (" + toks[1] + ", " + toks[2] + ")");
            seen = 1;
            raw.rewards[static_cast<std::size_t>(s) * A + a] =
                detail::parse_number(toks[3], line.number);
        } else {
            throw ParseError(line.number, "unknown directive '" + kw + "'");
        }
    }
    if (!have_discount) throw ParseError(lines[0].number, "missing discount line");

    // Distribution checks, with the offending names in the message.
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto& row = raw.transitions[static_cast<std::size_t>(s) * A + a];
            if (row.empty())
                throw ParseError(0, "no T lines for (" + states[s] + ", " + actions[a] + ")");
            double sum = 0.0;
            for (const auto& e : row) sum += e.prob;
            if (std::abs(sum - 1.0) > kProbTolerance)
                throw ParseError(0, "transition probabilities for (" + states[s] + ", " +
                                        actions[a] + ") sum to " +
                                        detail::format_double(sum));
        }
        if (raw.obs_probs[s].empty())
            throw ParseError(0, "no obs line for state " + states[s]);
        double sum = 0.0;
        for (const auto& [z, p] : raw.obs_probs[s]) {
            (void)z;
            sum += p;
        }
        if (std::abs(sum - 1.0) > kProbTolerance)
            throw ParseError(0, "observation probabilities for state " + states[s] +
                                    " sum to " + detail::format_double(sum));
    }
    {
        double sum = 0.0;
        for (double p : raw.initial_belief) sum += p;
        if (std::abs(sum - 1.0) > kProbTolerance)
            throw ParseError(0,
                             "initial belief sums to " + detail::format_double(sum));
    }

    return determinize_observations(raw);
}

inline PomdpModel parse_model(const std::string& text) {
    std::istringstream in(text);
    return parse_model(in);
}

/// Canonical serialization: declarations and data lines sorted by name,
/// probabilities with 17 significant digits, zero-reward R lines omitted,
/// '\n' newlines. Equal models serialize to byte-identical text.
inline std::string serialize_model(const PomdpModel& m) {
    const int S = m.num_states(), A = m.num_actions();

    auto sorted_order = [](const std::vector<std::string>& names) {
        std::vector<int> order(names.size());
        for (std::size_t i = 0; i < names.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return names[a] < names[b]; });
        return order;
    };
    const auto s_order = sorted_order(m.state_names);
    const auto a_order = sorted_order(m.action_names);
    const auto z_order = sorted_order(m.observation_names);

    std::string out = "pomdp v1\n";
    out += "discount " + detail::format_double(m.discount) + "\n";
    auto emit_decl = [&](const char* kw, const std::vector<std::string>& names,
                         const std::vector<int>& order) {
        out += kw;
        for (int i : order) out += " " + names[i];
        out += "\n";
    };
    emit_decl("states", m.state_names, s_order);
    emit_decl("actions", m.action_names, a_order);
    emit_decl("observations", m.observation_names, z_order);

    for (int s : s_order)
        if (m.initial_belief[s] > 0.0)
            out += "init " + m.state_names[s] + " " +
                   detail::format_double(m.initial_belief[s]) + "\n";
    for (int s : s_order)
        out += "obs " + m.state_names[s] + " " + m.observation_names[m.obs_map[s]] + "\n";
    for (int s : s_order) {
        for (int a : a_order) {
            std::vector<int> targets;
            std::map<std::string, double> by_name;
            for (const auto& e : m.transition_row(s, a))
                if (e.prob > 0.0) by_name[m.state_names[e.state]] = e.prob;
            for (const auto& [name, p] : by_name)
                out += "T " + m.state_names[s] + " " + m.action_names[a] + " " + name +
                       " " + detail::format_double(p) + "\n";
        }
    }
    for (int s : s_order)
        for (int a : a_order)
            if (m.reward(s, a) != 0.0)
                out += "R " + m.state_names[s] + " " + m.action_names[a] + " " +
                       detail::format_double(m.reward(s, a)) + "\n";
    return out;
}

/// Structural equality up to index permutation: models are equal when their
/// canonical serializations coincide.
inline bool models_equal(const PomdpModel& a, const PomdpModel& b) {
    return serialize_model(a) == serialize_model(b);
}

/// FNV-1a over the canonical serialization; used to key value caches.
inline std::uint64_t model_hash(const PomdpModel& m) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize_model(m)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace gpo
