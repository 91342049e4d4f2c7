#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/augment.hpp"
#include "opal/dataset.hpp"
#include "opal/opf.hpp"
#include "opal/tsne.hpp"

namespace opal {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string kind, std::string key, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)), key_(std::move(key)) {}
    const std::string& kind() const { return kind_; }
    const std::string& key() const { return key_; }

private:
    std::string kind_;
    std::string key_;
};

// Either an absolute count or a fraction of the dataset size ("4%").
struct Budget {
    std::size_t count = 0;
    std::optional<double> fraction;

    std::size_t resolve(std::size_t dataset_size) const;
    std::string to_string() const;
    bool operator==(const Budget&) const = default;
};

struct RunConfig {
    // data
    std::string dataset;
    DatasetFormat format = DatasetFormat::FeatureCsv;
    int folds = 3;
    std::vector<int> run_folds;        // empty: all folds
    double labeled_frac = 0.01;
    std::uint64_t seed = 1;

    // schedule
    int n_epochs = 120;
    int w_epochs = 15;
    int e_int = 5;
    std::size_t k_active = 2;
    Budget n_active{0, 0.04};
    std::size_t batch_size = 32;

    // optimizer
    double lr0 = 3e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool nesterov = true;
    double grad_clip = 0.0;            // max global gradient norm, 0 = off

    // losses and networks
    double margin = 2.0;
    std::vector<std::size_t> encoder{256, 64};
    std::vector<std::size_t> contrastive_head{32};
    AugmentPolicy weak{0.05, 0.0, 0.0};
    AugmentPolicy strong{0.3, 0.25, 0.2};

    // projection and propagation
    TsneOptions tsne;
    double pl_frac = 0.10;
    RunnerUpMode runner_up = RunnerUpMode::Prototype;
    bool cross_training = true;

    // bookkeeping
    int checkpoint_every = 5;
    std::vector<double> checkpoint_fractions{0.02, 0.03, 0.04, 0.05};
    bool snapshots = true;
    bool baseline = false;
    double oracle_timeout = 600.0;   // seconds
    int halt_after_epoch = 0;        // 0: never
    int halt_fold = 0;

    void validate() const;
    bool operator==(const RunConfig&) const = default;

    // Canonical key = value text, parseable by parse_config.
    std::string to_text() const;
    nlohmann::json to_json() const;
};

// key = value lines, '#' starts a comment. Unknown keys and malformed values
// throw ConfigError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Applies one override on top of an existing config.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

std::vector<std::string> config_keys();

} // namespace opal
