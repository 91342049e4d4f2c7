#include "opal/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "opal/split.hpp"

namespace opal {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("bad_value", key, "config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
    T out{};
    const auto* first = value.data();
    const auto* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) bad_value(key, value, expected);
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    return parse_number<double>(key, value, "a number");
}

int parse_int(const std::string& key, const std::string& value) { return parse_number<int>(key, value, "an integer"); }

std::size_t parse_size(const std::string& key, const std::string& value) {
    return parse_number<std::size_t>(key, value, "a non-negative integer");
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value, "true or false");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += fmt(values[i]);
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define OPAL_DOUBLE(name, member)                                                                    \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); },       \
          [](const RunConfig& c) { return fmt_double(c.member); }}
#define OPAL_INT(name, member)                                                                       \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_int(name, v); },          \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define OPAL_SIZE(name, member)                                                                      \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_size(name, v); },         \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define OPAL_BOOL(name, member)                                                                      \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); },         \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
              [](const RunConfig& c) { return c.dataset; }},
        Field{"format",
              [](RunConfig& c, const std::string& v) {
                  try {
                      c.format = format_from_string(v);
                  } catch (const DatasetError&) {
                      bad_value("format", v, "feature-csv or binary-matrix");
                  }
              },
              [](const RunConfig& c) { return to_string(c.format); }},
        OPAL_INT("folds", folds),
        Field{"run_folds",
              [](RunConfig& c, const std::string& v) {
                  c.run_folds.clear();
                  if (v == "all") return;
                  for (const auto& item : split_list(v)) c.run_folds.push_back(parse_int("run_folds", item));
              },
              [](const RunConfig& c) {
                  if (c.run_folds.empty()) return std::string("all");
                  return join(c.run_folds, [](int f) { return std::to_string(f); });
              }},
        OPAL_DOUBLE("labeled_frac", labeled_frac),
        Field{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v, "an integer"); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        OPAL_INT("n_epochs", n_epochs),
        OPAL_INT("w_epochs", w_epochs),
        OPAL_INT("e_int", e_int),
        OPAL_SIZE("k_active", k_active),
        Field{"n_active",
              [](RunConfig& c, const std::string& v) {
                  if (!v.empty() && v.back() == '%') {
                      const double pct = parse_double("n_active", v.substr(0, v.size() - 1));
                      if (pct < 0.0) bad_value("n_active", v, "a non-negative percentage");
                      c.n_active = Budget{0, pct / 100.0};
                  } else {
                      c.n_active = Budget{parse_size("n_active", v), std::nullopt};
                  }
              },
              [](const RunConfig& c) { return c.n_active.to_string(); }},
        OPAL_SIZE("batch_size", batch_size),
        OPAL_DOUBLE("lr0", lr0),
        OPAL_DOUBLE("momentum", momentum),
        OPAL_DOUBLE("weight_decay", weight_decay),
        OPAL_BOOL("nesterov", nesterov),
        OPAL_DOUBLE("grad_clip", grad_clip),
        OPAL_DOUBLE("margin", margin),
        Field{"encoder",
              [](RunConfig& c, const std::string& v) {
                  c.encoder.clear();
                  for (const auto& item : split_list(v)) c.encoder.push_back(parse_size("encoder", item));
              },
              [](const RunConfig& c) { return join(c.encoder, [](std::size_t s) { return std::to_string(s); }); }},
        Field{"contrastive_head",
              [](RunConfig& c, const std::string& v) {
                  c.contrastive_head.clear();
                  for (const auto& item : split_list(v)) {
                      c.contrastive_head.push_back(parse_size("contrastive_head", item));
                  }
              },
              [](const RunConfig& c) {
                  return join(c.contrastive_head, [](std::size_t s) { return std::to_string(s); });
              }},
        OPAL_DOUBLE("weak_jitter", weak.jitter_sigma),
        OPAL_DOUBLE("weak_mask", weak.mask_frac),
        OPAL_DOUBLE("weak_scale", weak.scale_range),
        OPAL_DOUBLE("strong_jitter", strong.jitter_sigma),
        OPAL_DOUBLE("strong_mask", strong.mask_frac),
        OPAL_DOUBLE("strong_scale", strong.scale_range),
        OPAL_DOUBLE("perplexity", tsne.perplexity),
        OPAL_INT("tsne_iters", tsne.iters),
        OPAL_DOUBLE("tsne_learning_rate", tsne.learning_rate),
        OPAL_DOUBLE("tsne_exaggeration", tsne.early_exaggeration),
        OPAL_INT("tsne_exaggeration_iters", tsne.exaggeration_iters),
        OPAL_INT("tsne_momentum_switch", tsne.momentum_switch),
        OPAL_DOUBLE("pl_frac", pl_frac),
        Field{"runner_up",
              [](RunConfig& c, const std::string& v) {
                  try {
                      c.runner_up = runner_up_mode_from_string(v);
                  } catch (const std::invalid_argument&) {
                      bad_value("runner_up", v, "prototype or class");
                  }
              },
              [](const RunConfig& c) { return to_string(c.runner_up); }},
        OPAL_BOOL("cross_training", cross_training),
        OPAL_INT("checkpoint_every", checkpoint_every),
        Field{"checkpoint_fractions",
              [](RunConfig& c, const std::string& v) {
                  c.checkpoint_fractions.clear();
                  for (const auto& item : split_list(v)) {
                      c.checkpoint_fractions.push_back(parse_double("checkpoint_fractions", item));
                  }
              },
              [](const RunConfig& c) { return join(c.checkpoint_fractions, fmt_double); }},
        OPAL_BOOL("snapshots", snapshots),
        OPAL_BOOL("baseline", baseline),
        OPAL_DOUBLE("oracle_timeout", oracle_timeout),
        OPAL_INT("halt_after_epoch", halt_after_epoch),
        OPAL_INT("halt_fold", halt_fold),
    };
    return table;
}

#undef OPAL_DOUBLE
#undef OPAL_INT
#undef OPAL_SIZE
#undef OPAL_BOOL

[[noreturn]] void invalid(const std::string& key, const std::string& what) {
    throw ConfigError("invalid_value", key, "config key '" + key + "': " + what);
}

} // namespace

std::size_t Budget::resolve(std::size_t dataset_size) const {
    if (fraction) return ceil_fraction(*fraction, dataset_size);
    return count;
}

std::string Budget::to_string() const {
    if (fraction) return fmt_double(*fraction * 100.0) + "%";
    return std::to_string(count);
}

void RunConfig::validate() const {
    if (folds < 2) invalid("folds", "need at least 2 folds");
    for (int f : run_folds) {
        if (f < 0 || f >= folds) invalid("run_folds", "fold index out of range");
    }
    if (!(labeled_frac > 0.0 && labeled_frac < 1.0)) invalid("labeled_frac", "must lie in (0, 1)");
    if (n_epochs < 1) invalid("n_epochs", "must be positive");
    if (w_epochs < 0 || w_epochs >= n_epochs) invalid("w_epochs", "must satisfy 0 <= w_epochs < n_epochs");
    if (e_int < 1) invalid("e_int", "must be at least 1");
    if (batch_size < 1) invalid("batch_size", "must be at least 1");
    if (!(lr0 > 0.0)) invalid("lr0", "must be positive");
    if (momentum < 0.0 || momentum >= 1.0) invalid("momentum", "must lie in [0, 1)");
    if (weight_decay < 0.0) invalid("weight_decay", "must be non-negative");
    if (!(margin > 0.0)) invalid("margin", "must be positive");
    for (auto s : encoder) {
        if (s == 0) invalid("encoder", "layer sizes must be positive");
    }
    for (auto s : contrastive_head) {
        if (s == 0) invalid("contrastive_head", "layer sizes must be positive");
    }
    if (contrastive_head.empty()) invalid("contrastive_head", "needs at least one layer");
    try {
        weak.validate();
    } catch (const std::exception& e) {
        invalid("weak_jitter", e.what());
    }
    try {
        strong.validate();
    } catch (const std::exception& e) {
        invalid("strong_jitter", e.what());
    }
    if (!(tsne.perplexity > 0.0)) invalid("perplexity", "must be positive");
    if (tsne.iters < 1) invalid("tsne_iters", "must be positive");
    if (!(pl_frac > 0.0 && pl_frac <= 1.0)) invalid("pl_frac", "must lie in (0, 1]");
    if (checkpoint_every < 0) invalid("checkpoint_every", "must be non-negative");
    for (double f : checkpoint_fractions) {
        if (!(f > 0.0 && f <= 1.0)) invalid("checkpoint_fractions", "fractions must lie in (0, 1]");
    }
    if (grad_clip < 0.0) invalid("grad_clip", "must be non-negative");
    if (oracle_timeout < 0.0) invalid("oracle_timeout", "must be non-negative");
    if (halt_after_epoch < 0) invalid("halt_after_epoch", "must be non-negative");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : fields()) j[f.key] = f.get(*this);
    return j;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(config, value);
            return;
        }
    }
    throw ConfigError("unknown_key", key, "unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("syntax", "", "config line " + std::to_string(lineno) + " is not 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("duplicate_key", key, "config key '" + key + "' repeated");
        set_config_value(config, key, value);
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing_file", "", "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto config = parse_config(ss.str());
    // relative dataset paths are resolved against the config's directory
    if (!config.dataset.empty() && std::filesystem::path(config.dataset).is_relative() && path.has_parent_path()) {
        config.dataset = (path.parent_path() / config.dataset).lexically_normal().string();
    }
    return config;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

} // namespace opal
