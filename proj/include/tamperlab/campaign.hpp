#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperlab/forensics.hpp"
#include "tamperlab/model.hpp"

namespace tamperlab {

struct CampaignConfig {
    std::string preset = "desk";
    int trials_per_mode = 5;
    std::vector<TamperMode> modes{kAllModes.begin(), kAllModes.end()};
    std::string architecture = "narrow";  // "narrow" | "vgg10"
    TrainConfig train;
    BatteryConfig battery;  // access is overridden per battery
    AccessMode scoring_access = AccessMode::Grey;
    std::uint64_t master_seed = 2020;
    int workers = 1;
    std::filesystem::path output_dir = "campaign";
    std::filesystem::path cache_dir;  // empty: <output_dir>/cache

    /// 5 trials per mode, narrow network, synthetic-corpus training schedule.
    static CampaignConfig desk();
    /// 30 trials per mode, full-width network, 60-epoch schedule.
    static CampaignConfig paper();
    static CampaignConfig preset_named(const std::string &name);

    void validate() const;
    std::filesystem::path effective_cache_dir() const;
    std::uint64_t trial_seed(int trial) const;
    ArchitectureSpec architecture_for(int num_outputs, ImageShape input) const;

    nlohmann::json to_json() const;
    static CampaignConfig from_json(const nlohmann::json &j);
};

/// Content key of a trained suspect: SHA-256 over the training set digest,
/// the architecture and the training configuration.
std::string checkpoint_cache_key(const TrainingSet &training_set, const ArchitectureSpec &arch, const TrainConfig &cfg);

struct TrialResult {
    TamperMode mode = TamperMode::NT;
    int index = 0;
    std::uint64_t seed = 0;
    std::string status = "pending";  // "done" | "failed"
    std::string error;
    std::string cache_key;
    bool trained = false;  // false when the checkpoint came from the cache or a previous run
    std::map<std::string, std::string> roles;  // anonymous tag -> "zeta_O" | "zeta_A" | "zeta_R"
    std::optional<ForensicReport> direct;  // Grey=N (white box, single layer)
    std::optional<ForensicReport> grey;    // Grey=Y (grey box, 3-layer window)

    std::string name() const;
    std::optional<std::string> tag_of(const std::string &role) const;
    const ForensicReport *report(AccessMode access) const;
    nlohmann::json to_json() const;  // without the reports
    static TrialResult from_json(const nlohmann::json &j);
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t count = 0;
};
Summary summarize(const std::vector<double> &values);

struct RankSummary {
    double median = 0.0;
    double stddev = 0.0;
    std::vector<double> samples;
};
RankSummary summarize_ranks(const std::vector<double> &values);

struct FeatureAggregate {
    Summary size_O, inter_O, size_R, inter_R, size_A, inter_A, action;
};

struct ModeAggregate {
    TamperMode mode = TamperMode::NT;
    std::size_t trials = 0;
    Summary err_L, err_LA, miss_O, miss_A, miss_R;
    RankSummary rank_O, rank_A, rank_R;
    FeatureAggregate direct, grey;
};

struct VerdictScore {
    std::array<std::array<int, 3>, 3> confusion{};  // [truth][estimate]
    std::size_t scored = 0;
    std::size_t correct = 0;
    std::size_t et_trials = 0;
    std::size_t et_identified = 0;
    std::size_t skipped = 0;  // no ground truth
    std::vector<std::string> warnings;

    double accuracy() const { return scored ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0; }
    double identification_rate() const
    {
        return et_trials ? static_cast<double>(et_identified) / static_cast<double>(et_trials) : 0.0;
    }
    nlohmann::json to_json() const;
};

VerdictScore score_verdicts(const std::vector<TrialResult> &trials, AccessMode access);

struct CampaignResult {
    CampaignConfig config;
    std::vector<TrialResult> trials;
    std::map<TamperMode, ModeAggregate> aggregates;
    VerdictScore score_direct;
    VerdictScore score_grey;
    std::optional<WelchResult> rank_test;  // Rk(zeta_A) vs Rk(zeta_R) over ET trials
    std::size_t failed = 0;

    const VerdictScore &score(AccessMode access) const { return access == AccessMode::White ? score_direct : score_grey; }
    nlohmann::json to_json() const;
};

CampaignResult aggregate(const CampaignConfig &config, std::vector<TrialResult> trials);

using ProgressCallback = std::function<void(const std::string &)>;

/// Runs (or resumes) every mode x trial job, persisting each trial as it
/// completes. Throws when more than half of the trials fail.
CampaignResult run_campaign(const CampaignConfig &config, const Corpus &corpus, const ProgressCallback &progress = {});

/// Rebuilds the result from a campaign directory without touching models.
CampaignResult load_campaign(const std::filesystem::path &dir);

/// campaign.json plus table2.csv, table3.csv and table4.csv.
void write_campaign_outputs(const CampaignResult &result, const std::filesystem::path &dir);
std::string table2_csv(const CampaignResult &result);
std::string table3_csv(const CampaignResult &result);
std::string table4_csv(const CampaignResult &result);

} // namespace tamperlab
