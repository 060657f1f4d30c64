#include "experiment_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace clidmu::cli {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
    throw ConfigError("config: " + key + " = '" + value + "': expected " + want);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    if (!parse_double(v, out)) bad_value(key, v, "a finite number");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v, "true or false");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(xs[i]);
        } else {
            out += std::to_string(xs[i]);
        }
    }
    return out;
}

struct Key {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define CLIDMU_SIZE_KEY(name, member)                                                                        \
    {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_size(k, v); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define CLIDMU_U64_KEY(name, member)                                                                        \
    {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_u64(k, v); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define CLIDMU_DOUBLE_KEY(name, member)                                                                        \
    {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
            [](const ExperimentConfig& c) { return format_double(c.member); }}}

const std::map<std::string, Key>& keys() {
    static const std::map<std::string, Key> table = {
        {"train_csv", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.train_csv = v; },
                       [](const ExperimentConfig& c) { return c.train_csv.string(); }}},
        {"test_csv", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.test_csv = v; },
                      [](const ExperimentConfig& c) { return c.test_csv.string(); }}},
        {"out_dir", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                     [](const ExperimentConfig& c) { return c.out_dir.string(); }}},
        CLIDMU_SIZE_KEY("n", n),
        CLIDMU_SIZE_KEY("test_n", test_n),
        CLIDMU_SIZE_KEY("dim", dim),
        CLIDMU_SIZE_KEY("classes", classes),
        CLIDMU_DOUBLE_KEY("class_sep", class_sep),
        CLIDMU_U64_KEY("data_seed", data_seed),
        {"noise", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       auto kind = parse_noise_kind(v);
                       if (!kind) bad_value(k, v, "symmetric, asymmetric or instance");
                       c.noise = *kind;
                   },
                   [](const ExperimentConfig& c) { return std::string(to_string(c.noise)); }}},
        CLIDMU_DOUBLE_KEY("noise_rate", noise_rate),
        CLIDMU_U64_KEY("noise_seed", noise_seed),
        CLIDMU_DOUBLE_KEY("idn_std", idn_std),
        CLIDMU_U64_KEY("meta_seed", meta_seed),
        CLIDMU_DOUBLE_KEY("alpha", train.alpha),
        CLIDMU_DOUBLE_KEY("gamma", train.gamma),
        CLIDMU_DOUBLE_KEY("tau", train.tau),
        CLIDMU_SIZE_KEY("batch_size", train.batch_size),
        CLIDMU_SIZE_KEY("meta_batch_size", train.meta_batch_size),
        {"max_iterations",
         {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v.empty() || v == "auto") {
                  c.train.max_iterations.reset();
              } else {
                  c.train.max_iterations = to_size(k, v);
              }
          },
          [](const ExperimentConfig& c) {
              return c.train.max_iterations ? std::to_string(*c.train.max_iterations) : std::string("auto");
          }}},
        CLIDMU_SIZE_KEY("snapshots", train.snapshots),
        CLIDMU_SIZE_KEY("epochs", train.epochs),
        {"meta_objective", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                auto o = parse_meta_objective(v);
                                if (!o) bad_value(k, v, "clid, ce, mae or none");
                                c.train.meta_objective = *o;
                            },
                            [](const ExperimentConfig& c) { return std::string(to_string(c.train.meta_objective)); }}},
        {"meta_set", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          auto s = parse_meta_strategy(v);
                          if (!s) bad_value(k, v, "random, balanced, pseudo-clean or oracle-clean");
                          c.train.meta_strategy = *s;
                      },
                      [](const ExperimentConfig& c) { return std::string(to_string(c.train.meta_strategy)); }}},
        CLIDMU_SIZE_KEY("meta_set_size", train.meta_set_size),
        CLIDMU_SIZE_KEY("warmup_epochs", train.warmup_epochs),
        {"sg", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                    auto s = parse_stop_gradient(v);
                    if (!s) bad_value(k, v, "target-q, target-e or none");
                    c.train.sg = *s;
                },
                [](const ExperimentConfig& c) { return std::string(to_string(c.train.sg)); }}},
        CLIDMU_U64_KEY("seed", train.seed),
        {"hidden", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                        c.train.hidden.clear();
                        for (const auto& item : split_list(v)) c.train.hidden.push_back(to_size(k, item));
                    },
                    [](const ExperimentConfig& c) { return join(c.train.hidden); }}},
        CLIDMU_SIZE_KEY("meta_width", train.meta_width),
        CLIDMU_SIZE_KEY("clid_eval_cap", train.clid_eval_cap),
        {"setting", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.setting = v; },
                     [](const ExperimentConfig& c) { return c.train.setting; }}},
        {"rates", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       c.rates.clear();
                       for (const auto& item : split_list(v)) c.rates.push_back(to_double(k, item));
                   },
                   [](const ExperimentConfig& c) { return join(c.rates); }}},
        CLIDMU_DOUBLE_KEY("test_fraction", test_fraction),
        {"parallel", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.parallel = to_bool(k, v); },
                      [](const ExperimentConfig& c) { return std::string(c.parallel ? "true" : "false"); }}},
    };
    return table;
}

#undef CLIDMU_SIZE_KEY
#undef CLIDMU_U64_KEY
#undef CLIDMU_DOUBLE_KEY

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const auto it = keys().find(key);
    if (it == keys().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(*this, key, value);
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, key] : keys()) out[name] = key.get(*this);
    return out;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (train_csv.empty()) {
        if (n < classes) fail("n must be at least classes");
        if (dim < 2) fail("dim must be >= 2");
        if (classes < 1) fail("classes must be >= 1");
        if (!(class_sep >= 0.0)) fail("class_sep must be >= 0");
    } else if (!test_csv.empty() && test_csv == train_csv) {
        fail("test_csv must differ from train_csv");
    }
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise_rate must lie in [0, 1], got " + format_double(noise_rate));
    if (noise_rate > 0.0 && classes < 2 && train_csv.empty()) fail("noise needs at least 2 classes");
    if (!(idn_std >= 0.0)) fail("idn_std must be >= 0");
    for (double r : rates) {
        if (!(r >= 0.0 && r <= 1.0)) fail("rates must lie in [0, 1]");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
    if (out_dir.empty()) fail("out_dir must be set");
    try {
        train.validate();
    } catch (const NumericError& e) {
        throw ConfigError(e.what());
    }
}

void load_config_file(const std::filesystem::path& path, ExperimentConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_overrides(const std::vector<std::string>& assignments, ExperimentConfig& cfg) {
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override '" + a + "' is not key=value");
        cfg.set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
    }
}

}  // namespace clidmu::cli
