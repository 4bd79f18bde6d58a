#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/dataset.hpp"
#include "advkit/defenses.hpp"
#include "advkit/errors.hpp"
#include "advkit/models.hpp"
#include "advkit/rng.hpp"

namespace advkit {

/// Sectioned key-value configuration, TOML syntax subset: `[section]`
/// headers, `key = value` lines, `#` comments, quoted strings, integers,
/// floats, booleans. Keys before any header live in the "" section.
class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::string& origin = "<config>") {
        KvConfig cfg;
        std::string section;
        std::size_t line_no = 0, pos = 0;
        while (pos <= text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;

            strip_comment(line);
            trim(line);
            if (line.empty()) continue;

            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(line_no) +
                                      ": malformed section header");
                section = line.substr(1, line.size() - 2);
                trim(section);
                continue;
            }
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            trim(key);
            trim(value);
            if (key.empty() || value.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": empty key or value");
            if (value.size() >= 2 && value.front() == '"') {
                if (value.back() != '"')
                    throw ConfigError(origin + ":" + std::to_string(line_no) +
                                      ": unterminated string");
                value = value.substr(1, value.size() - 2);
            }
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text, path);
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    /// Inject or override a value (CLI flags take precedence over the file).
    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section + "." + key] = value;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        return it->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        try {
            std::size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + it->first + "' is not a number: '" + it->second + "'");
        }
    }

    long long get_int(const std::string& section, const std::string& key,
                      long long fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        try {
            std::size_t used = 0;
            long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + it->first + "' is not an integer: '" + it->second + "'");
        }
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        try {
            std::size_t used = 0;
            std::uint64_t v = std::stoull(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + it->first + "' is not an unsigned integer: '" +
                              it->second + "'");
        }
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw ConfigError("key '" + it->first + "' is not a boolean: '" + it->second + "'");
    }

    /// Keys that were present but never read by the schema; nonempty means
    /// the file contains typos or unknown settings.
    std::vector<std::string> unconsumed() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) out.push_back(k);
        return out;
    }

private:
    static void trim(std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    static void strip_comment(std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) {
                s.resize(i);
                return;
            }
        }
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

/// The whole experiment in one serializable record. `workers` and
/// `out_dir` are execution details and deliberately excluded from the
/// canonical form and hash: they must not change any produced number.
struct ExperimentConfig {
    DatasetSpec dataset;
    Architecture architecture = Architecture::convnet;
    std::size_t width_factor = 1;
    std::uint64_t model_seed = 0;
    TrainConfig train;   // mode == standard
    AttackConfig attack; // evaluation attack
    TrainConfig defense; // mode nat/pat with nested attack
    std::size_t max_candidates = 0; // 0 = unlimited
    std::uint64_t seed = 0;

    // execution details
    std::string out_dir = "run";
    int workers = 1;

    static ExperimentConfig from_kv(const KvConfig& kv);
    static ExperimentConfig from_file(const std::string& path) {
        return from_kv(KvConfig::parse_file(path));
    }

    std::string canonical() const;
    std::string hash_hex() const {
        std::string c = canonical();
        return hex64(fnv1a64(c.data(), c.size()));
    }
};

namespace detail {

inline AttackConfig attack_from_kv(const KvConfig& kv, const std::string& section,
                                   const AttackConfig& fallback) {
    AttackConfig a = fallback;
    a.epsilon = kv.get_double(section, "epsilon", fallback.epsilon);
    a.step_size = kv.get_double(section, "step_size", fallback.step_size);
    a.steps = static_cast<int>(kv.get_int(section, "steps", fallback.steps));
    a.random_start = kv.get_bool(section, "random_start", fallback.random_start);
    std::string mode = kv.get_string(section, "mode", fallback.targeted ? "targeted" : "untargeted");
    if (mode == "untargeted")
        a.targeted = false;
    else if (mode == "targeted")
        a.targeted = true;
    else
        throw ConfigError("attack mode must be 'untargeted' or 'targeted', got '" + mode + "'");
    a.target_class = static_cast<int>(kv.get_int(section, "target_class", fallback.target_class));
    std::string scale = kv.get_string(section, "epsilon_scale", "normalized");
    if (scale == "pixel255") {
        // the paper-style 0..255 convention; radius and step share units
        a.epsilon /= 255.0;
        a.step_size /= 255.0;
    } else if (scale != "normalized") {
        throw ConfigError("epsilon_scale must be 'normalized' or 'pixel255', got '" + scale + "'");
    }
    a.seed = kv.get_u64(section, "seed", fallback.seed);
    return a;
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
    ExperimentConfig c;
    c.seed = kv.get_u64("", "seed", 0);
    c.workers = static_cast<int>(kv.get_int("", "workers", 1));
    c.out_dir = kv.get_string("", "out_dir", "run");

    // dataset
    c.dataset.kind = dataset_kind_from_name(kv.get_string("dataset", "kind", "synthetic"));
    c.dataset.train_images = kv.get_string("dataset", "train_images", "");
    c.dataset.train_labels = kv.get_string("dataset", "train_labels", "");
    c.dataset.test_images = kv.get_string("dataset", "test_images", "");
    c.dataset.test_labels = kv.get_string("dataset", "test_labels", "");
    std::string train_files = kv.get_string("dataset", "train_files", "");
    if (!train_files.empty()) {
        std::size_t pos = 0;
        while (pos < train_files.size()) {
            std::size_t sep = train_files.find(';', pos);
            if (sep == std::string::npos) sep = train_files.size();
            if (sep > pos) c.dataset.train_files.push_back(train_files.substr(pos, sep - pos));
            pos = sep + 1;
        }
    }
    c.dataset.test_file = kv.get_string("dataset", "test_file", "");
    c.dataset.classes = static_cast<std::size_t>(kv.get_int("dataset", "classes", 2));
    c.dataset.train_count = static_cast<std::size_t>(kv.get_int("dataset", "train_count", 200));
    c.dataset.test_count = static_cast<std::size_t>(kv.get_int("dataset", "test_count", 100));
    c.dataset.channels = static_cast<std::size_t>(kv.get_int("dataset", "channels", 1));
    c.dataset.height = static_cast<std::size_t>(kv.get_int("dataset", "height", 8));
    c.dataset.width = static_cast<std::size_t>(kv.get_int("dataset", "width", 8));
    c.dataset.noise = kv.get_double("dataset", "noise", 0.1);
    c.dataset.train_limit = static_cast<std::size_t>(kv.get_int("dataset", "train_limit", 0));
    c.dataset.test_limit = static_cast<std::size_t>(kv.get_int("dataset", "test_limit", 0));
    c.dataset.seed = kv.get_u64("dataset", "seed", derive_seed(c.seed, 1));

    // model
    c.architecture = architecture_from_name(kv.get_string("model", "architecture", "convnet"));
    c.width_factor = static_cast<std::size_t>(kv.get_int("model", "width_factor", 1));
    c.model_seed = kv.get_u64("model", "seed", derive_seed(c.seed, 2));

    // raw training
    c.train.mode = TrainMode::standard;
    c.train.epochs = static_cast<int>(kv.get_int("train", "epochs", 10));
    c.train.batch_size = static_cast<int>(kv.get_int("train", "batch_size", 32));
    c.train.learning_rate = kv.get_double("train", "learning_rate", 0.1);
    c.train.seed = kv.get_u64("train", "seed", derive_seed(c.seed, 3));
    c.train.workers = c.workers;

    // evaluation attack
    AttackConfig attack_defaults;
    attack_defaults.seed = derive_seed(c.seed, 4);
    c.attack = detail::attack_from_kv(kv, "attack", attack_defaults);

    // defense (its attack defaults to the evaluation attack)
    c.defense.mode = train_mode_from_name(kv.get_string("defense", "mode", "pat"));
    c.defense.pat_style = pat_style_from_name(
        kv.get_string("defense", "pat_style", "augment_static"));
    c.defense.epochs = static_cast<int>(kv.get_int("defense", "epochs", c.train.epochs));
    c.defense.batch_size =
        static_cast<int>(kv.get_int("defense", "batch_size", c.train.batch_size));
    c.defense.learning_rate =
        kv.get_double("defense", "learning_rate", c.train.learning_rate);
    c.defense.seed = kv.get_u64("defense", "seed", derive_seed(c.seed, 5));
    c.defense.workers = c.workers;
    AttackConfig defense_attack_defaults = c.attack;
    defense_attack_defaults.seed = derive_seed(c.seed, 6);
    c.defense.attack = detail::attack_from_kv(kv, "defense.attack", defense_attack_defaults);

    c.max_candidates = static_cast<std::size_t>(kv.get_int("pipeline", "max_candidates", 0));

    auto unknown = kv.unconsumed();
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " '" + k + "'";
        throw ConfigError(msg);
    }
    return c;
}

/// Deterministic full serialization of everything that defines the
/// experiment's numbers. Feeds the config hash and is persisted verbatim.
inline std::string ExperimentConfig::canonical() const {
    using detail::fmt_double;
    std::string s;
    s += "seed = " + std::to_string(seed) + "\n\n";
    s += "[dataset]\n";
    s += "kind = \"" + std::string(dataset_kind_name(dataset.kind)) + "\"\n";
    if (dataset.kind == DatasetKind::idx) {
        s += "train_images = \"" + dataset.train_images + "\"\n";
        s += "train_labels = \"" + dataset.train_labels + "\"\n";
        s += "test_images = \"" + dataset.test_images + "\"\n";
        s += "test_labels = \"" + dataset.test_labels + "\"\n";
    } else if (dataset.kind == DatasetKind::cifar_binary) {
        std::string joined;
        for (const auto& f : dataset.train_files) {
            if (!joined.empty()) joined += ";";
            joined += f;
        }
        s += "train_files = \"" + joined + "\"\n";
        s += "test_file = \"" + dataset.test_file + "\"\n";
    } else {
        s += "classes = " + std::to_string(dataset.classes) + "\n";
        s += "train_count = " + std::to_string(dataset.train_count) + "\n";
        s += "test_count = " + std::to_string(dataset.test_count) + "\n";
        s += "channels = " + std::to_string(dataset.channels) + "\n";
        s += "height = " + std::to_string(dataset.height) + "\n";
        s += "width = " + std::to_string(dataset.width) + "\n";
        s += "noise = " + fmt_double(dataset.noise) + "\n";
    }
    s += "train_limit = " + std::to_string(dataset.train_limit) + "\n";
    s += "test_limit = " + std::to_string(dataset.test_limit) + "\n";
    s += "seed = " + std::to_string(dataset.seed) + "\n\n";

    s += "[model]\n";
    s += "architecture = \"" + std::string(architecture_name(architecture)) + "\"\n";
    s += "width_factor = " + std::to_string(width_factor) + "\n";
    s += "seed = " + std::to_string(model_seed) + "\n\n";

    auto train_block = [&](const char* name, const TrainConfig& t) {
        s += std::string("[") + name + "]\n";
        if (std::string(name) == "defense") {
            s += "mode = \"" + std::string(train_mode_name(t.mode)) + "\"\n";
            s += "pat_style = \"" + std::string(pat_style_name(t.pat_style)) + "\"\n";
        }
        s += "epochs = " + std::to_string(t.epochs) + "\n";
        s += "batch_size = " + std::to_string(t.batch_size) + "\n";
        s += "learning_rate = " + fmt_double(t.learning_rate) + "\n";
        s += "seed = " + std::to_string(t.seed) + "\n";
    };
    auto attack_block = [&](const AttackConfig& a) {
        s += "epsilon = " + fmt_double(a.epsilon) + "\n";
        s += "step_size = " + fmt_double(a.step_size) + "\n";
        s += "steps = " + std::to_string(a.steps) + "\n";
        s += "random_start = " + std::string(a.random_start ? "true" : "false") + "\n";
        s += "mode = \"" + std::string(a.targeted ? "targeted" : "untargeted") + "\"\n";
        s += "target_class = " + std::to_string(a.target_class) + "\n";
        s += "seed = " + std::to_string(a.seed) + "\n";
    };

    train_block("train", train);
    s += "\n[attack]\n";
    attack_block(attack);
    s += "\n";
    train_block("defense", defense);
    s += "\n[defense.attack]\n";
    attack_block(defense.attack);
    s += "\n[pipeline]\n";
    s += "max_candidates = " + std::to_string(max_candidates) + "\n";
    return s;
}

} // namespace advkit
