#include "tamperlab/forensics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "tamperlab/errors.hpp"

namespace tamperlab {

// ---------------------------------------------------------------------------
// Error analysis

double ErrorStats::err_class_std() const
{
    double sum = 0.0;
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < err_per_class.size(); ++i) {
        if (class_sizes[i] == 0) continue;
        sum += err_per_class[i];
        sq += err_per_class[i] * err_per_class[i];
        ++n;
    }
    if (n == 0) return 0.0;
    const double mean = sum / static_cast<double>(n);
    return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
}

nlohmann::json ErrorStats::to_json() const
{
    return {{"action_class", action_class},   {"err_overall", err_overall},
            {"err_action", err_per_class.empty() ? 0.0 : err_action()},
            {"err_class_std", err_class_std()}, {"err_per_class", err_per_class},
            {"class_sizes", class_sizes},      {"miss_rate", miss_rate},
            {"trigger_fraction", trigger_fraction}, {"set_sizes", set_sizes}};
}

ErrorStats ErrorStats::from_json(const nlohmann::json &j)
{
    ErrorStats s;
    s.action_class = j.at("action_class").get<int>();
    s.err_overall = j.at("err_overall").get<double>();
    s.err_per_class = j.at("err_per_class").get<std::vector<double>>();
    s.class_sizes = j.at("class_sizes").get<std::vector<std::size_t>>();
    s.miss_rate = j.at("miss_rate").get<std::map<std::string, double>>();
    s.trigger_fraction = j.at("trigger_fraction").get<std::map<std::string, double>>();
    s.set_sizes = j.at("set_sizes").get<std::map<std::string, std::size_t>>();
    return s;
}

ErrorStats error_stats_from_predictions(std::span<const std::vector<int>> labeled_predictions,
                                        std::span<const int> labeled_classes,
                                        const std::map<std::string, std::vector<int>> &unlabeled_predictions,
                                        int action_class)
{
    if (labeled_predictions.size() != labeled_classes.size()) {
        throw UndefinedStatisticError("labeled predictions and classes differ in length");
    }
    if (labeled_predictions.empty()) throw UndefinedStatisticError("no labeled sets");
    const int max_class = *std::ranges::max_element(labeled_classes);
    if (action_class < 0 || action_class > max_class) {
        throw UndefinedStatisticError("action class " + std::to_string(action_class) + " has no labeled set");
    }
    ErrorStats s;
    s.action_class = action_class;
    s.err_per_class.assign(static_cast<std::size_t>(max_class) + 1, 0.0);
    s.class_sizes.assign(s.err_per_class.size(), 0);
    std::vector<std::size_t> wrong(s.err_per_class.size(), 0);
    std::size_t total = 0;
    std::size_t total_wrong = 0;
    for (std::size_t i = 0; i < labeled_predictions.size(); ++i) {
        const int cls = labeled_classes[i];
        if (cls < 0) throw UndefinedStatisticError("negative class label");
        const auto c = static_cast<std::size_t>(cls);
        for (int p : labeled_predictions[i]) {
            ++s.class_sizes[c];
            if (p != cls) ++wrong[c];
        }
        total += labeled_predictions[i].size();
    }
    for (std::size_t c = 0; c < wrong.size(); ++c) {
        total_wrong += wrong[c];
        if (s.class_sizes[c] > 0) {
            s.err_per_class[c] = static_cast<double>(wrong[c]) / static_cast<double>(s.class_sizes[c]);
        }
    }
    if (total == 0) throw UndefinedStatisticError("labeled sets are empty");
    if (s.class_sizes[static_cast<std::size_t>(action_class)] == 0) {
        throw UndefinedStatisticError("labeled set of the action class is empty");
    }
    s.err_overall = static_cast<double>(total_wrong) / static_cast<double>(total);

    for (const auto &[name, preds] : unlabeled_predictions) {
        if (preds.empty()) throw UndefinedStatisticError("unlabeled set '" + name + "' is empty");
        const auto hits = static_cast<std::size_t>(std::ranges::count(preds, action_class));
        const double n = static_cast<double>(preds.size());
        s.trigger_fraction[name] = static_cast<double>(hits) / n;
        s.miss_rate[name] = static_cast<double>(preds.size() - hits) / n;
        s.set_sizes[name] = preds.size();
    }
    return s;
}

ErrorStats error_analysis(const BlackBoxHandle &handle, std::span<const SampleSet> labeled,
                          std::span<const SampleSet> unlabeled, int action_class)
{
    std::vector<std::vector<int>> preds;
    std::vector<int> classes;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const auto &set = labeled[i];
        if (!set.labels) throw UndefinedStatisticError("labeled set '" + set.name + "' carries no labels");
        if (set.size() == 0) throw UndefinedStatisticError("labeled set '" + set.name + "' is empty");
        // every sample of a labeled set shares one label
        classes.push_back(set.labels->front());
        preds.push_back(handle.predict(set.images));
    }
    std::map<std::string, std::vector<int>> upreds;
    for (const auto &set : unlabeled) {
        if (set.size() == 0) throw UndefinedStatisticError("unlabeled set '" + set.name + "' is empty");
        upreds[set.name] = handle.predict(set.images);
    }
    return error_stats_from_predictions(preds, classes, upreds, action_class);
}

nlohmann::json RtPolicy::to_json() const
{
    return {{"sigma_multiplier", sigma_multiplier}, {"absolute_floor", absolute_floor}};
}

RtPolicy RtPolicy::from_json(const nlohmann::json &j)
{
    RtPolicy p;
    p.sigma_multiplier = j.value("sigma_multiplier", p.sigma_multiplier);
    p.absolute_floor = j.value("absolute_floor", p.absolute_floor);
    return p;
}

RtDecision rt_decision(const ErrorStats &stats, const RtPolicy &policy)
{
    RtDecision d;
    d.err_action = stats.err_action();
    d.err_overall = stats.err_overall;
    d.sigma = stats.err_class_std();
    d.margin_threshold = d.err_overall + policy.sigma_multiplier * d.sigma;
    d.fired = d.err_action > d.margin_threshold && d.err_action > policy.absolute_floor;
    return d;
}

// ---------------------------------------------------------------------------
// Rank analysis

int rank_from_predictions(std::span<const int> predictions, int action_class, int num_classes)
{
    if (predictions.empty()) throw UndefinedStatisticError("rank of an empty set");
    if (action_class < 0 || action_class >= num_classes) {
        throw UndefinedStatisticError("action class outside the label space");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int p : predictions) {
        if (p < 0 || p >= num_classes) throw UndefinedStatisticError("prediction outside the label space");
        ++counts[static_cast<std::size_t>(p)];
    }
    // Classes ahead of A: more votes, or equal votes and a smaller index.
    const std::size_t a = counts[static_cast<std::size_t>(action_class)];
    int ahead = 0;
    for (int c = 0; c < num_classes; ++c) {
        const std::size_t k = counts[static_cast<std::size_t>(c)];
        if (k > a || (k == a && c < action_class)) ++ahead;
    }
    return ahead + 1;
}

int rank(const BlackBoxHandle &handle, const SampleSet &set, int action_class)
{
    if (set.size() == 0) throw UndefinedStatisticError("rank of empty set '" + set.name + "'");
    return rank_from_predictions(handle.predict(set.images), action_class, handle.num_classes());
}

nlohmann::json EliminationPolicy::to_json() const { return {{"cutoff", cutoff}}; }

EliminationPolicy EliminationPolicy::from_json(const nlohmann::json &j)
{
    EliminationPolicy p;
    p.cutoff = j.value("cutoff", p.cutoff);
    return p;
}

Elimination eliminate_unrelated(const std::map<std::string, int> &ranks, const EliminationPolicy &policy)
{
    Elimination e;
    for (const auto &[name, r] : ranks) (r > policy.cutoff ? e.eliminated : e.candidates).push_back(name);
    return e;
}

// ---------------------------------------------------------------------------
// Feature analysis

FeatureBaseline baseline_stats(const CellReadings &reference)
{
    if (reference.inputs() == 0) throw UndefinedStatisticError("empty reference data");
    FeatureBaseline b;
    b.access = reference.access;
    b.window = reference.window;
    b.cell_ids = reference.cell_ids;
    b.eligible = reference.eligible;
    const auto n = static_cast<double>(reference.inputs());
    b.mean.resize(reference.cells());
    b.stddev.resize(reference.cells());
    for (std::size_t c = 0; c < reference.cells(); ++c) {
        const auto row = reference.values.row(static_cast<Eigen::Index>(c)).cast<double>();
        const double mean = row.sum() / n;
        const double var = (row.array() - mean).square().sum() / n;
        b.mean[c] = mean;
        b.stddev[c] = std::sqrt(var);
    }
    return b;
}

FeatureSet activated_features(const CellReadings &zeta, const FeatureBaseline &baseline, bool include_ineligible)
{
    if (zeta.access != baseline.access || !(zeta.window == baseline.window) || zeta.cell_ids != baseline.cell_ids) {
        throw WindowMismatchError("readings and baseline come from different windows or access tiers");
    }
    if (zeta.inputs() == 0) throw UndefinedStatisticError("feature set of an empty sample set");
    FeatureSet f;
    f.access = zeta.access;
    f.window = zeta.window;
    const auto n = static_cast<double>(zeta.inputs());
    for (std::size_t c = 0; c < zeta.cells(); ++c) {
        if (!include_ineligible && !baseline.eligible[c]) continue;
        const double mean = zeta.values.row(static_cast<Eigen::Index>(c)).cast<double>().sum() / n;
        if (mean > baseline.mean[c] + baseline.stddev[c]) f.cells.push_back(zeta.cell_ids[c]);
    }
    std::ranges::sort(f.cells);
    return f;
}

std::map<std::string, FeatureComparison> feature_comparison(const std::map<std::string, FeatureSet> &sets,
                                                            const FeatureSet &action_features)
{
    std::map<std::string, FeatureComparison> out;
    for (const auto &[name, f] : sets) {
        if (f.access != action_features.access || !(f.window == action_features.window)) {
            throw WindowMismatchError("feature set '" + name + "' uses a different window");
        }
        std::vector<std::uint32_t> common;
        std::ranges::set_intersection(f.cells, action_features.cells, std::back_inserter(common));
        out[name] = {f.size(), common.size(), f.size() - common.size()};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Significance

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b)
{
    if (a.size() < 2 || b.size() < 2) throw UndefinedStatisticError("Welch test needs two samples per group");
    auto moments = [](std::span<const double> x) {
        const double n = static_cast<double>(x.size());
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        return std::pair{mean, ss / (n - 1.0)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double qa = va / na;
    const double qb = vb / nb;
    const double se2 = qa + qb;

    WelchResult r;
    if (se2 == 0.0) {
        r.degenerate = true;
        if (ma == mb) {
            r.p = 1.0;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        r.df = na + nb - 2.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
    return r;
}

// ---------------------------------------------------------------------------
// Verdict

nlohmann::json VerdictPolicy::to_json() const
{
    return {{"rt", rt.to_json()},
            {"elimination", elimination.to_json()},
            {"relative_separation", relative_separation},
            {"absolute_separation", absolute_separation},
            {"min_trigger_fraction", min_trigger_fraction}};
}

VerdictPolicy VerdictPolicy::from_json(const nlohmann::json &j)
{
    VerdictPolicy p;
    if (j.contains("rt")) p.rt = RtPolicy::from_json(j.at("rt"));
    if (j.contains("elimination")) p.elimination = EliminationPolicy::from_json(j.at("elimination"));
    p.relative_separation = j.value("relative_separation", p.relative_separation);
    p.absolute_separation = j.value("absolute_separation", p.absolute_separation);
    p.min_trigger_fraction = j.value("min_trigger_fraction", p.min_trigger_fraction);
    return p;
}

nlohmann::json Verdict::to_json() const
{
    nlohmann::json j{{"mode", std::string(to_string(mode))},
                     {"flagged_set", flagged_set ? nlohmann::json(*flagged_set) : nlohmann::json(nullptr)},
                     {"low_confidence", low_confidence},
                     {"trace", trace},
                     {"evidence", evidence}};
    return j;
}

Verdict Verdict::from_json(const nlohmann::json &j)
{
    Verdict v;
    v.mode = parse_mode(j.at("mode").get<std::string>());
    if (!j.at("flagged_set").is_null()) v.flagged_set = j.at("flagged_set").get<std::string>();
    v.low_confidence = j.value("low_confidence", false);
    v.trace = j.value("trace", std::vector<std::string>{});
    v.evidence = j.value("evidence", nlohmann::json::object());
    return v;
}

namespace {

std::string fmt(double v)
{
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

} // namespace

Verdict verdict(const ErrorStats &errors, const std::optional<std::map<std::string, int>> &ranks,
                const std::optional<FeatureEvidence> &features, int num_classes, const VerdictPolicy &policy)
{
    Verdict v;
    const RtDecision rt = rt_decision(errors, policy.rt);
    v.evidence["err_L"] = errors.err_overall;
    v.evidence["err_L_A"] = rt.err_action;
    v.evidence["sigma_err_L_i"] = rt.sigma;
    v.evidence["rt_threshold"] = rt.margin_threshold;
    v.evidence["rt_absolute_floor"] = policy.rt.absolute_floor;
    v.evidence["rt_flag"] = rt.fired;

    if (rt.fired) {
        v.mode = TamperMode::RT;
        v.trace.push_back("rule 1: err(L_A)=" + fmt(rt.err_action) + " > err(L)+" + fmt(policy.rt.sigma_multiplier) +
                          "*sigma=" + fmt(rt.margin_threshold) + " and > " + fmt(policy.rt.absolute_floor) + " -> RT");
        return v;
    }
    v.trace.push_back("rule 1: err(L_A)=" + fmt(rt.err_action) + " vs threshold " + fmt(rt.margin_threshold) +
                      " (floor " + fmt(policy.rt.absolute_floor) + ") -> not RT");

    if (!ranks || !features) {
        v.mode = TamperMode::NT;
        v.low_confidence = true;
        v.trace.push_back(std::string("rule 2 skipped: ") + (ranks ? "no feature evidence" : "no rank evidence") +
                          " -> NT (low confidence)");
        return v;
    }

    const Elimination elim = eliminate_unrelated(*ranks, policy.elimination);
    v.evidence["ranks"] = *ranks;
    v.evidence["candidates"] = elim.candidates;
    v.evidence["eliminated"] = elim.eliminated;
    v.evidence["F_LA"] = features->action_features;
    nlohmann::json inter = nlohmann::json::object();
    for (const auto &[name, c] : features->sets) inter[name] = c.intersection;
    v.evidence["intersections"] = inter;
    v.evidence["trigger_fraction"] = errors.trigger_fraction;

    const double min_trigger =
        policy.min_trigger_fraction >= 0.0 ? policy.min_trigger_fraction : 1.0 / std::max(1, num_classes);
    v.evidence["min_trigger_fraction"] = min_trigger;

    auto intersection_of = [&](const std::string &name) -> std::optional<double> {
        const auto it = features->sets.find(name);
        if (it == features->sets.end()) return std::nullopt;
        return static_cast<double>(it->second.intersection);
    };

    std::vector<std::string> usable;
    for (const auto &name : elim.candidates) {
        if (intersection_of(name)) usable.push_back(name);
    }
    if (usable.size() < 2) {
        v.mode = TamperMode::NT;
        v.trace.push_back("rule 2: " + std::to_string(usable.size()) + " candidate(s) survive rank elimination (cutoff " +
                          std::to_string(policy.elimination.cutoff) + ") -> NT");
        return v;
    }

    // Best candidate: largest intersection, then better rank, then name.
    auto better = [&](const std::string &x, const std::string &y) {
        const double ix = *intersection_of(x);
        const double iy = *intersection_of(y);
        if (ix != iy) return ix > iy;
        if (ranks->at(x) != ranks->at(y)) return ranks->at(x) < ranks->at(y);
        return x < y;
    };
    const std::string best = *std::ranges::min_element(usable, better);
    const double best_inter = *intersection_of(best);
    const bool best_high = best_inter >= policy.absolute_separation && best_inter > 0.0;

    std::optional<std::string> flagged;
    for (const auto &name : usable) {
        if (name == best) continue;
        const double i = *intersection_of(name);
        const bool low = i < policy.relative_separation * best_inter || i < policy.absolute_separation;
        const double trig = errors.trigger_fraction.contains(name) ? errors.trigger_fraction.at(name) : 0.0;
        if (!low) continue;
        if (trig <= min_trigger) {
            v.trace.push_back("rule 2: " + name + " separates (|F n F_LA|=" + fmt(i) + ") but triggers A at " +
                              fmt(trig) + " <= " + fmt(min_trigger) + ", ignored");
            continue;
        }
        if (!flagged || i < *intersection_of(*flagged) ||
            (i == *intersection_of(*flagged) && ranks->at(name) < ranks->at(*flagged))) {
            flagged = name;
        }
    }

    if (best_high && flagged) {
        v.mode = TamperMode::ET;
        v.flagged_set = flagged;
        v.trace.push_back("rule 2: " + *flagged + " (Rk=" + std::to_string(ranks->at(*flagged)) +
                          ", |F n F_LA|=" + fmt(*intersection_of(*flagged)) + ") separates from " + best +
                          " (|F n F_LA|=" + fmt(best_inter) + ") -> ET");
        return v;
    }
    v.mode = TamperMode::NT;
    v.trace.push_back("rule 2: no surviving candidate separates from " + best + " (|F n F_LA|=" + fmt(best_inter) +
                      ") -> NT");
    return v;
}

// ---------------------------------------------------------------------------
// Battery

std::string to_string(AccessMode mode)
{
    switch (mode) {
    case AccessMode::Black: return "black";
    case AccessMode::Grey: return "grey";
    case AccessMode::White: return "white";
    }
    return "?";
}

AccessMode parse_access(const std::string &text)
{
    if (text == "black") return AccessMode::Black;
    if (text == "grey" || text == "gray") return AccessMode::Grey;
    if (text == "white") return AccessMode::White;
    throw ConfigError("unknown access mode '" + text + "' (expected black, grey or white)");
}

int BatteryConfig::resolved_layer(const ArchitectureSpec &arch) const
{
    const int layer = probe_layer < 0 ? arch.conv_layers() - 1 : probe_layer;
    (void)arch.cells_in_layer(layer);
    return layer;
}

nlohmann::json BatteryConfig::to_json() const
{
    return {{"access", to_string(access)},
            {"probe_layer", probe_layer},
            {"permutation_seed", permutation_seed},
            {"policy", policy.to_json()}};
}

BatteryConfig BatteryConfig::from_json(const nlohmann::json &j)
{
    BatteryConfig c;
    if (j.contains("access")) c.access = parse_access(j.at("access").get<std::string>());
    c.probe_layer = j.value("probe_layer", c.probe_layer);
    c.permutation_seed = j.value("permutation_seed", c.permutation_seed);
    if (j.contains("policy")) c.policy = VerdictPolicy::from_json(j.at("policy"));
    return c;
}

nlohmann::json ForensicReport::to_json() const
{
    nlohmann::json feats = nlohmann::json::object();
    for (const auto &[name, c] : features.sets) {
        feats[name] = {{"size", c.size}, {"intersection", c.intersection}, {"residual", c.residual}};
    }
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"config", config.to_json()},
                     {"num_classes", num_classes},
                     {"action_class", action_class},
                     {"errors", errors.to_json()},
                     {"rt", {{"fired", rt.fired},
                             {"err_action", rt.err_action},
                             {"err_overall", rt.err_overall},
                             {"sigma", rt.sigma},
                             {"threshold", rt.margin_threshold}}},
                     {"ranks", ranks},
                     {"elimination", {{"candidates", elimination.candidates}, {"eliminated", elimination.eliminated}}},
                     {"features_collected", features_collected},
                     {"window", window ? nlohmann::json{window->first, window->last} : nlohmann::json(nullptr)},
                     {"features", {{"action_features", features.action_features}, {"sets", feats}}},
                     {"verdict", verdict.to_json()},
                     {"provenance", provenance},
                     {"notes", notes}};
    return j;
}

ForensicReport ForensicReport::from_json(const nlohmann::json &j)
{
    if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("unsupported report schema version");
    ForensicReport r;
    r.config = BatteryConfig::from_json(j.at("config"));
    r.num_classes = j.at("num_classes").get<int>();
    r.action_class = j.at("action_class").get<int>();
    r.errors = ErrorStats::from_json(j.at("errors"));
    const auto &rt = j.at("rt");
    r.rt = {rt.at("fired").get<bool>(), rt.at("err_action").get<double>(), rt.at("err_overall").get<double>(),
            rt.at("sigma").get<double>(), rt.at("threshold").get<double>()};
    r.ranks = j.at("ranks").get<std::map<std::string, int>>();
    r.elimination.candidates = j.at("elimination").at("candidates").get<std::vector<std::string>>();
    r.elimination.eliminated = j.at("elimination").at("eliminated").get<std::vector<std::string>>();
    r.features_collected = j.at("features_collected").get<bool>();
    if (!j.at("window").is_null()) r.window = LayerWindow{j.at("window")[0].get<int>(), j.at("window")[1].get<int>()};
    r.features.action_features = j.at("features").at("action_features").get<std::size_t>();
    for (const auto &[name, c] : j.at("features").at("sets").items()) {
        r.features.sets[name] = {c.at("size").get<std::size_t>(), c.at("intersection").get<std::size_t>(),
                                 c.at("residual").get<std::size_t>()};
    }
    r.verdict = Verdict::from_json(j.at("verdict"));
    r.provenance = j.value("provenance", nlohmann::json::object());
    r.notes = j.value("notes", std::vector<std::string>{});
    return r;
}

namespace {

ImageBatch concat(std::span<const SampleSet> sets)
{
    ImageBatch all(sets.front().images.shape());
    for (const auto &s : sets) all.append(s.images);
    return all;
}

CellReadings columns(const CellReadings &r, std::size_t begin, std::size_t count)
{
    CellReadings out = r;
    out.values = r.values.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    return out;
}

} // namespace

ForensicReport run_battery(const SuspectModel &model, const PublicSets &sets, int action_class,
                           const BatteryConfig &config)
{
    if (sets.labeled.empty()) throw UndefinedStatisticError("no labeled sets");
    if (action_class < 0 || action_class >= static_cast<int>(sets.labeled.size())) {
        throw UndefinedStatisticError("action class has no labeled set");
    }
    ForensicReport report;
    report.config = config;
    report.num_classes = model.architecture().num_classes;
    report.action_class = action_class;

    const BlackBoxHandle black(model);
    std::vector<std::vector<int>> lpreds;
    std::vector<int> lclasses;
    for (const auto &s : sets.labeled) {
        if (!s.labels || s.size() == 0) throw UndefinedStatisticError("labeled set '" + s.name + "' is unusable");
        lclasses.push_back(s.labels->front());
        lpreds.push_back(black.predict(s.images));
    }
    std::map<std::string, std::vector<int>> upreds;
    for (const auto &s : sets.unlabeled) {
        if (s.size() == 0) throw UndefinedStatisticError("unlabeled set '" + s.name + "' is empty");
        upreds[s.name] = black.predict(s.images);
    }
    report.errors = error_stats_from_predictions(lpreds, lclasses, upreds, action_class);
    report.rt = rt_decision(report.errors, config.policy.rt);
    for (const auto &[name, preds] : upreds) {
        report.ranks[name] = rank_from_predictions(preds, action_class, report.num_classes);
    }
    report.elimination = eliminate_unrelated(report.ranks, config.policy.elimination);

    std::optional<FeatureEvidence> evidence;
    if (config.access == AccessMode::Black) {
        report.notes.push_back("feature analysis skipped: black-box access collects no activations");
    } else {
        const int layer = config.resolved_layer(model.architecture());
        const ImageBatch reference = concat(sets.labeled);
        std::size_t action_offset = 0;
        for (int i = 0; i < action_class; ++i) action_offset += sets.labeled[static_cast<std::size_t>(i)].size();
        const std::size_t action_count = sets.labeled[static_cast<std::size_t>(action_class)].size();

        auto read = [&](const ImageBatch &images) {
            if (config.access == AccessMode::White) return WhiteBoxHandle(model).read_layer(images, layer);
            return GreyBoxHandle(model, config.permutation_seed).probe(images, layer);
        };
        const CellReadings ref = read(reference);
        const FeatureBaseline baseline = baseline_stats(ref);
        const FeatureSet f_la = activated_features(columns(ref, action_offset, action_count), baseline);
        std::map<std::string, FeatureSet> fsets;
        for (const auto &s : sets.unlabeled) fsets[s.name] = activated_features(read(s.images), baseline);

        report.features_collected = true;
        report.window = ref.window;
        report.features.action_features = f_la.size();
        report.features.sets = feature_comparison(fsets, f_la);
        evidence = report.features;
    }
    report.verdict = verdict(report.errors, report.ranks, evidence, report.num_classes, config.policy);
    report.provenance["battery"] = config.to_json();
    return report;
}

std::string render_summary(const ForensicReport &report)
{
    std::ostringstream out;
    out << "verdict: " << to_string(report.verdict.mode);
    if (report.verdict.flagged_set) out << " (flagged " << *report.verdict.flagged_set << ")";
    if (report.verdict.low_confidence) out << " [low confidence]";
    out << "\naccess: " << to_string(report.config.access) << "\n";
    out << "err(L)=" << fmt(report.errors.err_overall) << " err(L_A)=" << fmt(report.errors.err_action()) << "\n";
    for (const auto &[name, c] : report.errors.miss_rate) {
        out << name << ": C=" << fmt(c) << " Rk=" << report.ranks.at(name);
        if (report.features_collected) {
            const auto &f = report.features.sets.at(name);
            out << " |F|=" << f.size << " |F n F_LA|=" << f.intersection;
        }
        out << "\n";
    }
    if (report.features_collected) out << "|F_LA|=" << report.features.action_features << "\n";
    for (const auto &line : report.verdict.trace) out << "  " << line << "\n";
    for (const auto &note : report.notes) out << "note: " << note << "\n";
    return out.str();
}

} // namespace tamperlab
