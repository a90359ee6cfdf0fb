#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperlab/access.hpp"
#include "tamperlab/datasets.hpp"

namespace tamperlab {

// ---------------------------------------------------------------------------
// Error analysis

struct ErrorStats {
    int action_class = -1;
    double err_overall = 0.0;
    std::vector<double> err_per_class;     // index == output class
    std::vector<std::size_t> class_sizes;  // samples behind each entry
    std::map<std::string, double> miss_rate;         // C(zeta, A)
    std::map<std::string, double> trigger_fraction;  // 1 - C(zeta, A)
    std::map<std::string, std::size_t> set_sizes;

    double err_action() const { return err_per_class.at(static_cast<std::size_t>(action_class)); }
    /// Population std of err(L_i) across classes.
    double err_class_std() const;

    nlohmann::json to_json() const;
    static ErrorStats from_json(const nlohmann::json &j);
};

/// Pure core: predictions for each labeled set (label == output index of the
/// set) and each unlabeled set.
ErrorStats error_stats_from_predictions(std::span<const std::vector<int>> labeled_predictions,
                                        std::span<const int> labeled_classes,
                                        const std::map<std::string, std::vector<int>> &unlabeled_predictions,
                                        int action_class);

ErrorStats error_analysis(const BlackBoxHandle &handle, std::span<const SampleSet> labeled,
                          std::span<const SampleSet> unlabeled, int action_class);

struct RtPolicy {
    double sigma_multiplier = 3.0;
    double absolute_floor = 0.8;

    nlohmann::json to_json() const;
    static RtPolicy from_json(const nlohmann::json &j);
};

struct RtDecision {
    bool fired = false;
    double err_action = 0.0;
    double err_overall = 0.0;
    double sigma = 0.0;
    double margin_threshold = 0.0;
};

RtDecision rt_decision(const ErrorStats &stats, const RtPolicy &policy = {});
inline bool rt_flag(const ErrorStats &stats, const RtPolicy &policy = {}) { return rt_decision(stats, policy).fired; }

// ---------------------------------------------------------------------------
// Rank analysis

/// 1-based position of `action_class` among classes sorted by descending
/// prediction count, ties by ascending class index.
int rank_from_predictions(std::span<const int> predictions, int action_class, int num_classes);
int rank(const BlackBoxHandle &handle, const SampleSet &set, int action_class);

struct EliminationPolicy {
    int cutoff = 8;  // Rk > cutoff is eliminated

    nlohmann::json to_json() const;
    static EliminationPolicy from_json(const nlohmann::json &j);
};

struct Elimination {
    std::vector<std::string> candidates;
    std::vector<std::string> eliminated;
};

Elimination eliminate_unrelated(const std::map<std::string, int> &ranks, const EliminationPolicy &policy = {});

// ---------------------------------------------------------------------------
// Feature analysis

struct FeatureBaseline {
    std::string access;
    LayerWindow window;
    std::vector<std::uint32_t> cell_ids;
    std::vector<bool> eligible;
    std::vector<double> mean;
    std::vector<double> stddev;  // population
};

FeatureBaseline baseline_stats(const CellReadings &reference);

struct FeatureSet {
    std::string access;
    LayerWindow window;
    std::vector<std::uint32_t> cells;  // sorted ids

    std::size_t size() const noexcept { return cells.size(); }
};

/// F = {c : mean over zeta > baseline mean + baseline std}. Cells flagged
/// ineligible are skipped unless `include_ineligible`.
FeatureSet activated_features(const CellReadings &zeta, const FeatureBaseline &baseline,
                              bool include_ineligible = false);

struct FeatureComparison {
    std::size_t size = 0;
    std::size_t intersection = 0;
    std::size_t residual = 0;
};

std::map<std::string, FeatureComparison> feature_comparison(const std::map<std::string, FeatureSet> &sets,
                                                            const FeatureSet &action_features);

// ---------------------------------------------------------------------------
// Significance

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool degenerate = false;  // both groups constant
};

/// Two-sided Welch t-test. Needs at least two samples per group.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Verdict

struct VerdictPolicy {
    RtPolicy rt;
    EliminationPolicy elimination;
    double relative_separation = 0.25;
    double absolute_separation = 0.5;
    /// A flagged set must trigger A more often than this; negative means
    /// chance level 1/num_classes.
    double min_trigger_fraction = -1.0;

    nlohmann::json to_json() const;
    static VerdictPolicy from_json(const nlohmann::json &j);
};

struct FeatureEvidence {
    std::size_t action_features = 0;  // |F_{L_A}|
    std::map<std::string, FeatureComparison> sets;
};

struct Verdict {
    TamperMode mode = TamperMode::NT;
    std::optional<std::string> flagged_set;
    bool low_confidence = false;
    std::vector<std::string> trace;
    nlohmann::json evidence = nlohmann::json::object();

    nlohmann::json to_json() const;
    static Verdict from_json(const nlohmann::json &j);
};

Verdict verdict(const ErrorStats &errors, const std::optional<std::map<std::string, int>> &ranks,
                const std::optional<FeatureEvidence> &features, int num_classes, const VerdictPolicy &policy = {});

// ---------------------------------------------------------------------------
// The full battery and its report

enum class AccessMode : std::uint8_t { Black = 0, Grey = 1, White = 2 };
std::string to_string(AccessMode mode);
AccessMode parse_access(const std::string &text);

struct BatteryConfig {
    AccessMode access = AccessMode::Grey;
    int probe_layer = -1;  // -1: last conv layer
    std::uint64_t permutation_seed = 0x5EED;
    VerdictPolicy policy;

    int resolved_layer(const ArchitectureSpec &arch) const;
    nlohmann::json to_json() const;
    static BatteryConfig from_json(const nlohmann::json &j);
};

struct ForensicReport {
    static constexpr int kSchemaVersion = 1;

    BatteryConfig config;
    int num_classes = 0;
    int action_class = -1;
    ErrorStats errors;
    RtDecision rt;
    std::map<std::string, int> ranks;
    Elimination elimination;
    bool features_collected = false;
    std::optional<LayerWindow> window;
    FeatureEvidence features;
    Verdict verdict;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
    static ForensicReport from_json(const nlohmann::json &j);
};

ForensicReport run_battery(const SuspectModel &model, const PublicSets &sets, int action_class,
                           const BatteryConfig &config);

/// Human-readable summary: verdict, flagged set and the rule trace.
std::string render_summary(const ForensicReport &report);

} // namespace tamperlab
