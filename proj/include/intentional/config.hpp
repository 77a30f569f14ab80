#pragma once

// Run configuration: a flat `section.key = value` text format with typed
// values, and the RunConfig it maps to.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "intentional/agents.hpp"
#include "intentional/envs.hpp"
#include "intentional/errors.hpp"

namespace intentional {

// ---------------------------------------------------------------------------
// Typed key-value layer

using ConfigList = std::vector<std::string>;
using ConfigValue = std::variant<std::int64_t, double, bool, std::string, ConfigList>;
using ConfigMap = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline bool parse_int(std::string_view s, std::int64_t& out)
{
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [p, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline bool parse_real(std::string_view s, double& out)
{
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [p, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

/// Shortest round-trip text; always carries a '.' or exponent so it reads back as real.
inline std::string format_real(double x)
{
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    std::string s(buf, p);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline bool valid_key(const std::string& key)
{
    if (key.empty() || key.front() == '.' || key.back() == '.') return false;
    char prev = '.';
    for (char c : key) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
        if (!ok || (c == '.' && prev == '.')) return false;
        prev = c;
    }
    return true;
}

} // namespace detail

inline ConfigValue parse_value(const std::string& raw)
{
    const std::string s = detail::trim(raw);
    if (s.find(',') != std::string::npos) {
        ConfigList items;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) items.push_back(detail::trim(item));
        // a trailing comma marks a list; `,` alone is the empty list
        if (s.back() == ',' && !items.empty() && items.back().empty()) items.pop_back();
        return items;
    }
    if (s == "true") return true;
    if (s == "false") return false;
    std::int64_t i = 0;
    if (detail::parse_int(s, i)) return i;
    double d = 0.0;
    if (detail::parse_real(s, d)) return d;
    return s;
}

inline std::string format_value(const ConfigValue& v)
{
    struct Visitor {
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(double d) const { return detail::format_real(d); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(const ConfigList& l) const
        {
            std::string out;
            for (std::size_t i = 0; i < l.size(); ++i) out += (i ? ", " : "") + l[i];
            // a single-element list keeps a trailing comma so it stays a list
            if (l.size() <= 1) out += ",";
            return out;
        }
    };
    return std::visit(Visitor{}, v);
}

inline void apply_assignment(ConfigMap& map, const std::string& line, bool allow_overwrite, const std::string& where)
{
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected `key = value`");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    if (!detail::valid_key(key)) throw ConfigError(where + "invalid key '" + key + "'");
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (value.empty()) throw ConfigError(where + key + ": missing value");
    if (!allow_overwrite && map.count(key)) throw ConfigError(where + key + ": assigned twice");
    map[key] = parse_value(value);
}

inline ConfigMap parse_config_text(const std::string& text)
{
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        apply_assignment(map, line, false, "line " + std::to_string(n) + ": ");
    }
    return map;
}

inline std::string serialize_config_map(const ConfigMap& map)
{
    std::string out;
    for (const auto& [k, v] : map) out += k + " = " + format_value(v) + "\n";
    return out;
}

/// `key=value` overrides, applied after the file is read.
inline void apply_override(ConfigMap& map, const std::string& assignment)
{
    apply_assignment(map, assignment, true, "override '" + assignment + "': ");
}

// ---------------------------------------------------------------------------
// RunConfig

enum class Experiment {
    td_prediction,
    q_control,
    pg_bandit,
    ac_control,
    ablation_naive,
    ablation_constant,
    fidelity,
    bias_demo,
    flops,
};

inline const std::vector<std::pair<Experiment, std::string>>& experiment_names()
{
    static const std::vector<std::pair<Experiment, std::string>> names{
        {Experiment::td_prediction, "td_prediction"},
        {Experiment::q_control, "q_control"},
        {Experiment::pg_bandit, "pg_bandit"},
        {Experiment::ac_control, "ac_control"},
        {Experiment::ablation_naive, "ablation_naive"},
        {Experiment::ablation_constant, "ablation_constant"},
        {Experiment::fidelity, "fidelity"},
        {Experiment::bias_demo, "bias_demo"},
        {Experiment::flops, "flops"},
    };
    return names;
}

inline std::string to_string(Experiment e)
{
    for (const auto& [k, n] : experiment_names())
        if (k == e) return n;
    return "?";
}

struct NetConfig {
    bool mlp = false;
    std::vector<std::size_t> hidden{32, 32};
    bool layernorm = true;
    double sparsity = 0.9;

    bool operator==(const NetConfig&) const = default;
};

struct RunConfig {
    Experiment experiment = Experiment::td_prediction;
    EnvSpec env;
    LearnerConfig agent;       ///< value, Q or critic learner
    double eta_actor = 0.05;   ///< policy learner; shares the other agent settings
    double xi = 0.01;          ///< entropy coefficient of the policy learner
    double explore_fraction = 0.05;
    double explore_start = 1.0;
    double explore_end = 0.01;
    std::size_t warmup_steps = 0; ///< critic-only steps before the actor starts learning
    NetConfig net;
    std::vector<std::uint64_t> seeds{0};
    std::size_t total_steps = 100000;
    std::size_t episodes = 0; ///< td_prediction family: episode budget instead of steps when > 0
    std::size_t log_every = 1000;
    std::string output_dir = "runs";
    std::size_t threads = 0;
    std::vector<double> ablation_alphas{0.001, 0.003, 0.01, 0.03, 0.1};
    double ablation_feature_scale = 10.0;

    bool operator==(const RunConfig&) const = default;

    LearnerConfig actor_config() const
    {
        LearnerConfig c = agent;
        c.eta = eta_actor;
        c.xi = xi;
        return c;
    }

    void validate() const;
};

namespace detail {

inline const char* kind_name(const EnvKind& k)
{
    switch (k.index()) {
    case 0: return "random_walk";
    case 1: return "gridworld";
    case 2: return "bandit";
    default: return "point_mass";
    }
}

inline std::string cell_text(const Cell& c) { return std::to_string(c.col) + ":" + std::to_string(c.row); }

/// Reads typed fields out of a ConfigMap, tracking which keys were used.
class Reader {
public:
    explicit Reader(const ConfigMap& m) : map_(m) {}

    bool has(const std::string& key) const { return map_.count(key) > 0; }

    const ConfigValue* find(const std::string& key)
    {
        const auto it = map_.find(key);
        if (it == map_.end()) return nullptr;
        used_.push_back(key);
        return &it->second;
    }

    void real(const std::string& key, double& out)
    {
        const auto* v = find(key);
        if (!v) return;
        if (const auto* d = std::get_if<double>(v)) out = *d;
        else if (const auto* i = std::get_if<std::int64_t>(v)) out = static_cast<double>(*i);
        else fail(key, "expected a real number");
    }

    void integer(const std::string& key, std::size_t& out)
    {
        const auto* v = find(key);
        if (!v) return;
        const auto* i = std::get_if<std::int64_t>(v);
        if (!i) fail(key, "expected an integer");
        if (*i < 0) fail(key, "must be non-negative");
        out = static_cast<std::size_t>(*i);
    }

    void boolean(const std::string& key, bool& out)
    {
        const auto* v = find(key);
        if (!v) return;
        const auto* b = std::get_if<bool>(v);
        if (!b) fail(key, "expected true or false");
        out = *b;
    }

    void text(const std::string& key, std::string& out)
    {
        const auto* v = find(key);
        if (!v) return;
        out = format_value(*v);
        if (std::holds_alternative<ConfigList>(*v)) fail(key, "expected a single value, not a list");
    }

    /// Scalars are accepted as one-element lists.
    bool list(const std::string& key, ConfigList& out)
    {
        const auto* v = find(key);
        if (!v) return false;
        if (const auto* l = std::get_if<ConfigList>(v)) out = *l;
        else out = {format_value(*v)};
        return true;
    }

    void real_list(const std::string& key, std::vector<double>& out)
    {
        ConfigList items;
        if (!list(key, items)) return;
        out.clear();
        for (const auto& s : items) {
            double d = 0.0;
            if (!parse_real(s, d)) fail(key, "'" + s + "' is not a real number");
            out.push_back(d);
        }
    }

    template <class T>
    void integer_list(const std::string& key, std::vector<T>& out)
    {
        ConfigList items;
        if (!list(key, items)) return;
        out.clear();
        for (const auto& s : items) {
            std::int64_t i = 0;
            if (!parse_int(s, i) || i < 0) fail(key, "'" + s + "' is not a non-negative integer");
            out.push_back(static_cast<T>(i));
        }
    }

    Cell cell(const std::string& key, const std::string& s)
    {
        const auto colon = s.find(':');
        std::int64_t c = 0;
        std::int64_t r = 0;
        if (colon == std::string::npos || !parse_int(s.substr(0, colon), c) || !parse_int(s.substr(colon + 1), r) ||
            c < 0 || r < 0)
            fail(key, "'" + s + "' is not a cell `col:row`");
        return Cell{static_cast<std::size_t>(c), static_cast<std::size_t>(r)};
    }

    void unused_keys_check() const
    {
        for (const auto& [k, v] : map_)
            if (std::find(used_.begin(), used_.end(), k) == used_.end())
                throw ConfigError(k + ": unknown key (or not applicable to the chosen env.kind)");
    }

    [[noreturn]] static void fail(const std::string& key, const std::string& what)
    {
        throw ConfigError(key + ": " + what);
    }

private:
    const ConfigMap& map_;
    std::vector<std::string> used_;
};

} // namespace detail

inline RunConfig run_config_from_map(const ConfigMap& map)
{
    RunConfig c;
    detail::Reader rd(map);
    using detail::Reader;

    std::string s;
    if (rd.has("experiment")) {
        rd.text("experiment", s);
        bool found = false;
        for (const auto& [e, n] : experiment_names())
            if (n == s) {
                c.experiment = e;
                found = true;
            }
        if (!found) Reader::fail("experiment", "unknown experiment '" + s + "'");
    }

    s = "random_walk";
    rd.text("env.kind", s);
    if (s == "random_walk") {
        RandomWalkSpec k;
        rd.integer("env.n_states", k.n_states);
        rd.boolean("env.zero_one_rewards", k.zero_one_rewards);
        c.env.kind = k;
    } else if (s == "gridworld") {
        GridworldSpec k;
        rd.integer("env.width", k.width);
        rd.integer("env.height", k.height);
        ConfigList goals;
        if (rd.list("env.goals", goals)) {
            k.goals.clear();
            for (const auto& g : goals) k.goals.push_back(rd.cell("env.goals", g));
        }
        std::string start;
        rd.text("env.start", start);
        if (!start.empty()) k.start = rd.cell("env.start", start);
        rd.real("env.goal_reward", k.goal_reward);
        rd.real("env.step_cost", k.step_cost);
        c.env.kind = k;
    } else if (s == "bandit") {
        BanditSpec k;
        rd.real_list("env.arm_means", k.arm_means);
        if (!rd.has("env.arm_stds")) k.arm_stds.assign(k.arm_means.size(), 0.0);
        rd.real_list("env.arm_stds", k.arm_stds);
        c.env.kind = k;
    } else if (s == "point_mass") {
        PointMassSpec k;
        rd.real("env.dt", k.dt);
        rd.real("env.noise_std", k.noise_std);
        rd.real("env.position_limit", k.position_limit);
        c.env.kind = k;
    } else {
        Reader::fail("env.kind", "unknown environment '" + s + "'");
    }
    std::size_t limit = 0;
    rd.integer("env.time_limit", limit);
    if (limit > 0) c.env.time_limit = limit;
    rd.boolean("env.append_time_feature", c.env.append_time_feature);
    rd.real("env.feature_scale", c.env.feature_scale);

    auto& a = c.agent;
    rd.real("agent.eta", a.eta);
    rd.real("agent.eta_actor", c.eta_actor);
    rd.real("agent.lambda", a.lambda);
    rd.real("agent.gamma", a.gamma);
    rd.real("agent.xi", c.xi);
    rd.real("agent.beta_nu", a.beta_nu);
    rd.real("agent.beta_clip", a.beta_clip);
    rd.real("agent.beta_norm", a.beta_norm);
    rd.real("agent.beta_guard", a.beta_guard);
    rd.real("agent.epsilon", a.epsilon);
    rd.real("agent.clip_C", a.clip_C);
    if (const auto* v = rd.find("agent.alpha_cap")) {
        if (std::holds_alternative<std::string>(*v) && std::get<std::string>(*v) == "none") {
            a.alpha_cap.reset();
        } else {
            double cap = 0.0;
            rd.real("agent.alpha_cap", cap);
            a.alpha_cap = cap;
        }
    }
    s = "adaptive";
    rd.text("agent.clip_mode", s);
    if (s == "adaptive") a.clip_mode = ClipMode::adaptive;
    else if (s == "range") a.clip_mode = ClipMode::range;
    else if (s == "off") a.clip_mode = ClipMode::off;
    else Reader::fail("agent.clip_mode", "expected adaptive, range or off");
    rd.boolean("agent.rmsprop", a.rmsprop);
    rd.boolean("agent.guard", a.guard);
    s = "intentional";
    rd.text("agent.alpha_rule", s);
    if (s == "intentional") a.alpha_rule = AlphaRule::intentional;
    else if (s == "naive_trace") a.alpha_rule = AlphaRule::naive_trace;
    else if (s == "constant") a.alpha_rule = AlphaRule::constant;
    else Reader::fail("agent.alpha_rule", "expected intentional, naive_trace or constant");
    rd.real("agent.constant_alpha", a.constant_alpha);
    s = "running_average";
    rd.text("agent.sigma_bar", s);
    if (s == "running_average") a.sigma_bar_mode = SigmaBarMode::running_average;
    else if (s == "discounted_sum") a.sigma_bar_mode = SigmaBarMode::discounted_sum;
    else Reader::fail("agent.sigma_bar", "expected running_average or discounted_sum");
    rd.real("agent.explore_fraction", c.explore_fraction);
    rd.real("agent.explore_start", c.explore_start);
    rd.real("agent.explore_end", c.explore_end);
    rd.integer("agent.warmup_steps", c.warmup_steps);

    s = "linear";
    rd.text("net.kind", s);
    if (s == "mlp") c.net.mlp = true;
    else if (s != "linear") Reader::fail("net.kind", "expected linear or mlp");
    rd.integer_list("net.hidden", c.net.hidden);
    rd.boolean("net.layernorm", c.net.layernorm);
    rd.real("net.sparsity", c.net.sparsity);

    rd.integer_list("run.seeds", c.seeds);
    rd.integer("run.total_steps", c.total_steps);
    rd.integer("run.episodes", c.episodes);
    rd.integer("run.log_every", c.log_every);
    rd.text("run.output_dir", c.output_dir);
    rd.integer("run.threads", c.threads);
    rd.real_list("ablation.alphas", c.ablation_alphas);
    rd.real("ablation.feature_scale", c.ablation_feature_scale);

    rd.unused_keys_check();
    return c;
}

inline ConfigMap run_config_to_map(const RunConfig& c)
{
    ConfigMap m;
    auto real = [&](const std::string& k, double v) { m[k] = v; };
    auto integer = [&](const std::string& k, std::size_t v) { m[k] = static_cast<std::int64_t>(v); };
    auto list = [&](const std::string& k, const auto& values, auto fmt) {
        ConfigList l;
        for (const auto& v : values) l.push_back(fmt(v));
        m[k] = l;
    };
    auto real_text = [](double v) { return detail::format_real(v); };
    auto int_text = [](auto v) { return std::to_string(v); };

    m["experiment"] = to_string(c.experiment);
    m["env.kind"] = std::string(detail::kind_name(c.env.kind));
    if (const auto* k = std::get_if<RandomWalkSpec>(&c.env.kind)) {
        integer("env.n_states", k->n_states);
        m["env.zero_one_rewards"] = k->zero_one_rewards;
    } else if (const auto* k = std::get_if<GridworldSpec>(&c.env.kind)) {
        integer("env.width", k->width);
        integer("env.height", k->height);
        list("env.goals", k->goals, detail::cell_text);
        m["env.start"] = detail::cell_text(k->start);
        real("env.goal_reward", k->goal_reward);
        real("env.step_cost", k->step_cost);
    } else if (const auto* k = std::get_if<BanditSpec>(&c.env.kind)) {
        list("env.arm_means", k->arm_means, real_text);
        list("env.arm_stds", k->arm_stds, real_text);
    } else {
        const auto& p = std::get<PointMassSpec>(c.env.kind);
        real("env.dt", p.dt);
        real("env.noise_std", p.noise_std);
        real("env.position_limit", p.position_limit);
    }
    integer("env.time_limit", c.env.time_limit.value_or(0));
    m["env.append_time_feature"] = c.env.append_time_feature;
    real("env.feature_scale", c.env.feature_scale);

    const auto& a = c.agent;
    real("agent.eta", a.eta);
    real("agent.eta_actor", c.eta_actor);
    real("agent.lambda", a.lambda);
    real("agent.gamma", a.gamma);
    real("agent.xi", c.xi);
    real("agent.beta_nu", a.beta_nu);
    real("agent.beta_clip", a.beta_clip);
    real("agent.beta_norm", a.beta_norm);
    real("agent.beta_guard", a.beta_guard);
    real("agent.epsilon", a.epsilon);
    real("agent.clip_C", a.clip_C);
    if (a.alpha_cap) real("agent.alpha_cap", *a.alpha_cap);
    else m["agent.alpha_cap"] = std::string("none");
    m["agent.clip_mode"] = std::string(a.clip_mode == ClipMode::adaptive ? "adaptive"
                                       : a.clip_mode == ClipMode::range  ? "range"
                                                                         : "off");
    m["agent.rmsprop"] = a.rmsprop;
    m["agent.guard"] = a.guard;
    m["agent.alpha_rule"] = std::string(a.alpha_rule == AlphaRule::intentional   ? "intentional"
                                        : a.alpha_rule == AlphaRule::naive_trace ? "naive_trace"
                                                                                 : "constant");
    real("agent.constant_alpha", a.constant_alpha);
    m["agent.sigma_bar"] =
        std::string(a.sigma_bar_mode == SigmaBarMode::running_average ? "running_average" : "discounted_sum");
    real("agent.explore_fraction", c.explore_fraction);
    real("agent.explore_start", c.explore_start);
    real("agent.explore_end", c.explore_end);
    integer("agent.warmup_steps", c.warmup_steps);

    m["net.kind"] = std::string(c.net.mlp ? "mlp" : "linear");
    list("net.hidden", c.net.hidden, int_text);
    m["net.layernorm"] = c.net.layernorm;
    real("net.sparsity", c.net.sparsity);

    list("run.seeds", c.seeds, int_text);
    integer("run.total_steps", c.total_steps);
    integer("run.episodes", c.episodes);
    integer("run.log_every", c.log_every);
    m["run.output_dir"] = c.output_dir;
    integer("run.threads", c.threads);
    list("ablation.alphas", c.ablation_alphas, real_text);
    real("ablation.feature_scale", c.ablation_feature_scale);
    return m;
}

inline std::string serialize_run_config(const RunConfig& c) { return serialize_config_map(run_config_to_map(c)); }

inline void RunConfig::validate() const
{
    using detail::Reader;
    auto need = [](bool ok, const std::string& key, const std::string& what) {
        if (!ok) Reader::fail(key, what);
    };
    need(!seeds.empty(), "run.seeds", "at least one seed is required");
    need(total_steps > 0, "run.total_steps", "must be positive");
    need(log_every > 0, "run.log_every", "must be positive");
    need(!output_dir.empty(), "run.output_dir", "must not be empty");
    {
        auto sorted = seeds;
        std::sort(sorted.begin(), sorted.end());
        need(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "run.seeds", "seeds must be distinct");
    }
    need(agent.eta > 0.0, "agent.eta", "must be positive");
    need(eta_actor > 0.0, "agent.eta_actor", "must be positive");
    need(agent.lambda >= 0.0 && agent.lambda < 1.0, "agent.lambda", "must lie in [0, 1)");
    need(agent.gamma >= 0.0 && agent.gamma <= 1.0, "agent.gamma", "must lie in [0, 1]");
    need(xi >= 0.0, "agent.xi", "must be non-negative");
    need(agent.epsilon > 0.0, "agent.epsilon", "must be positive");
    need(agent.clip_C > 0.0, "agent.clip_C", "must be positive");
    need(!agent.alpha_cap || *agent.alpha_cap > 0.0, "agent.alpha_cap", "must be positive or none");
    need(agent.constant_alpha >= 0.0, "agent.constant_alpha", "must be non-negative");
    const std::pair<const char*, double> betas[] = {{"agent.beta_nu", agent.beta_nu},
                                                    {"agent.beta_clip", agent.beta_clip},
                                                    {"agent.beta_norm", agent.beta_norm},
                                                    {"agent.beta_guard", agent.beta_guard}};
    for (const auto& [k, b] : betas) need(b >= 0.0 && b < 1.0, k, "must lie in [0, 1)");
    need(explore_fraction > 0.0 && explore_fraction <= 1.0, "agent.explore_fraction", "must lie in (0, 1]");
    need(explore_start >= 0.0 && explore_start <= 1.0, "agent.explore_start", "must lie in [0, 1]");
    need(explore_end >= 0.0 && explore_end <= 1.0, "agent.explore_end", "must lie in [0, 1]");
    need(net.sparsity >= 0.0 && net.sparsity < 1.0, "net.sparsity", "must lie in [0, 1)");
    if (net.mlp) {
        need(!net.hidden.empty(), "net.hidden", "an mlp needs at least one hidden layer");
        for (auto h : net.hidden) need(h > 0, "net.hidden", "layer widths must be positive");
    }
    try {
        env.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()).rfind("env.", 0) == 0 ? e.what() : std::string("env: ") + e.what());
    }

    const bool tabular = is_tabular(env);
    switch (experiment) {
    case Experiment::td_prediction:
    case Experiment::ablation_naive:
    case Experiment::ablation_constant:
        need(tabular, "env.kind", to_string(experiment) + " needs random_walk or gridworld");
        need(!net.mlp, "net.kind", to_string(experiment) + " uses linear features");
        need(!env.append_time_feature, "env.append_time_feature", "analytic values ignore the time feature");
        if (std::holds_alternative<GridworldSpec>(env.kind))
            need(agent.gamma < 1.0, "agent.gamma", "gridworld prediction under a random policy needs gamma < 1");
        if (experiment == Experiment::ablation_constant) {
            need(!ablation_alphas.empty(), "ablation.alphas", "at least one step size is required");
            for (double x : ablation_alphas) need(x > 0.0, "ablation.alphas", "step sizes must be positive");
            need(ablation_feature_scale > 0.0, "ablation.feature_scale", "must be positive");
        }
        break;
    case Experiment::q_control:
        need(tabular, "env.kind", "q_control needs random_walk or gridworld");
        need(!net.mlp, "net.kind", "q_control uses linear features");
        need(agent.gamma < 1.0, "agent.gamma", "q_control compares against value iteration, which needs gamma < 1");
        need(!env.append_time_feature, "env.append_time_feature", "q_control compares against tabular optimal values");
        break;
    case Experiment::pg_bandit:
        need(std::holds_alternative<BanditSpec>(env.kind), "env.kind", "pg_bandit needs bandit");
        break;
    case Experiment::ac_control:
    case Experiment::fidelity:
        need(!std::holds_alternative<BanditSpec>(env.kind), "env.kind", to_string(experiment) + " needs a sequential task");
        if (experiment == Experiment::fidelity) need(agent.lambda == 0.0, "agent.lambda", "fidelity is measured at lambda = 0");
        break;
    case Experiment::bias_demo:
    case Experiment::flops:
        break;
    }
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {})
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto map = parse_config_text(ss.str());
    for (const auto& o : overrides) apply_override(map, o);
    auto cfg = run_config_from_map(map);
    cfg.validate();
    return cfg;
}

} // namespace intentional
