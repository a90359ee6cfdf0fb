#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "tamperlab/access.hpp"
#include "tamperlab/errors.hpp"
#include "tamperlab/forensics.hpp"
#include "tamperlab/hashing.hpp"
#include "tamperlab/model.hpp"

namespace tamperlab::testing {

namespace {

class Recorder {
public:
    explicit Recorder(std::string name) { r_.name = std::move(name); }

    void expect(bool ok, const std::string &what)
    {
        if (ok) return;
        if (r_.failures == 0) r_.first_failure = what;
        ++r_.failures;
    }
    void next_case() { ++r_.cases; }
    PropertyResult done() { return r_; }

private:
    PropertyResult r_;
};

int uniform_int(std::mt19937_64 &rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Random prediction multiset: skewed class weights, sometimes concentrated on a few classes.
std::vector<int> random_predictions(std::mt19937_64 &rng, int classes, int count)
{
    std::vector<double> w(static_cast<std::size_t>(classes));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &x : w) x = u(rng) < 0.3 ? 0.0 : std::pow(u(rng), 3.0);
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
    std::discrete_distribution<int> d(w.begin(), w.end());
    std::vector<int> p(static_cast<std::size_t>(count));
    for (auto &x : p) x = d(rng);
    return p;
}

// Tally, full stable sort by (count desc, class asc), linear scan.
int brute_force_rank(const std::vector<int> &preds, int action, int classes)
{
    std::vector<std::pair<int, int>> tally;
    for (int c = 0; c < classes; ++c) tally.emplace_back(static_cast<int>(std::count(preds.begin(), preds.end(), c)), c);
    std::sort(tally.begin(), tally.end(), [](auto a, auto b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < tally.size(); ++i) {
        if (tally[i].second == action) return static_cast<int>(i) + 1;
    }
    return -1;
}

std::string describe(const std::vector<int> &v)
{
    std::ostringstream out;
    out << "{";
    for (std::size_t i = 0; i < v.size() && i < 20; ++i) out << (i ? "," : "") << v[i];
    if (v.size() > 20) out << ",...";
    out << "}";
    return out.str();
}

int random_layer(std::mt19937_64 &rng, const ArchitectureSpec &arch)
{
    return uniform_int(rng, 0, arch.weight_layers() - 1);
}

CellReadings binarized(CellReadings r)
{
    r.values = (r.values.array() != 0.0F).cast<float>();
    return r;
}

// Labeled sets one per output class, three unlabeled sets, each tinted differently.
PublicSets stub_sets(std::mt19937_64 &rng, const ArchitectureSpec &arch)
{
    PublicSets p;
    for (int c = 0; c < arch.num_classes; ++c) {
        SampleSet s;
        s.name = "L_" + std::to_string(c);
        const auto n = static_cast<std::size_t>(uniform_int(rng, 4, 10));
        s.images = random_images(rng, arch.input, n, c % 4 - 1);
        s.labels = std::vector<int>(n, c);
        p.labeled.push_back(std::move(s));
    }
    for (int k = 1; k <= 3; ++k) {
        SampleSet s;
        s.name = "set-" + std::to_string(k);
        s.images = random_images(rng, arch.input, static_cast<std::size_t>(uniform_int(rng, 3, 12)), k - 1);
        p.unlabeled.push_back(std::move(s));
    }
    return p;
}

} // namespace

PropertyResult check_rank_oracle(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("rank equals brute-force oracle");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        const int classes = uniform_int(rng, 1, 10);
        const int count = uniform_int(rng, 1, 1000);
        const auto preds = random_predictions(rng, classes, count);
        const int action = uniform_int(rng, 0, classes - 1);
        const int got = rank_from_predictions(preds, action, classes);
        const int want = brute_force_rank(preds, action, classes);
        rec.expect(got == want, "classes=" + std::to_string(classes) + " A=" + std::to_string(action) +
                                    " preds=" + describe(preds) + " got " + std::to_string(got) + " want " +
                                    std::to_string(want));
    }
    return rec.done();
}

PropertyResult check_rank_append_monotone(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("appending A-predicted samples never raises the rank");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        const int classes = uniform_int(rng, 1, 10);
        auto preds = random_predictions(rng, classes, uniform_int(rng, 1, 300));
        const int action = uniform_int(rng, 0, classes - 1);
        int before = rank_from_predictions(preds, action, classes);
        for (int step = 0; step < 5; ++step) {
            preds.insert(preds.end(), static_cast<std::size_t>(uniform_int(rng, 1, 40)), action);
            const int after = rank_from_predictions(preds, action, classes);
            rec.expect(after <= before, "rank rose from " + std::to_string(before) + " to " + std::to_string(after));
            before = after;
        }
    }
    return rec.done();
}

PropertyResult check_grey_white_consistency(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("grey probe equals permuted binarized white readings");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        const SuspectModel model = stub_model(rng(), uniform_int(rng, 0, 1) == 1);
        const auto &arch = model.architecture();
        const int layer = random_layer(rng, arch);
        const auto images = random_images(rng, arch.input, static_cast<std::size_t>(uniform_int(rng, 1, 9)));
        const GreyBoxHandle grey(model, rng());
        const WhiteBoxHandle white(model);

        const CellReadings g = grey.probe(images, layer);
        const LayerWindow w = observation_window(arch, layer);
        const CellReadings raw = white.read_window(images, w);
        const auto perm = grey.permutation(w);
        const std::string where = "case " + std::to_string(i) + " layer " + std::to_string(layer);

        std::vector<std::uint32_t> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::uint32_t> identity(perm.size());
        std::iota(identity.begin(), identity.end(), 0U);
        rec.expect(sorted == identity, where + ": permutation is not a bijection");
        rec.expect(g.window == w && g.cells() == raw.cells() && g.inputs() == raw.inputs(), where + ": shape");
        if (g.cells() != raw.cells() || g.inputs() != raw.inputs() || perm.size() != raw.cells()) continue;

        bool values_ok = true;
        bool tags_ok = true;
        for (std::size_t j = 0; j < raw.cells(); ++j) {
            const auto k = static_cast<Eigen::Index>(perm[j]);
            const auto jj = static_cast<Eigen::Index>(j);
            for (Eigen::Index c = 0; c < raw.values.cols(); ++c) {
                const float want = raw.values(jj, c) != 0.0F ? 1.0F : 0.0F;
                values_ok = values_ok && g.values(k, c) == want;
            }
            tags_ok = tags_ok && g.tags[perm[j]] == raw.tags[j] && g.eligible[perm[j]] == raw.eligible[j];
        }
        rec.expect(values_ok, where + ": readings differ");
        rec.expect(tags_ok, where + ": coarse tags differ");
    }
    return rec.done();
}

PropertyResult check_grey_white_features(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("grey feature sets equal binarized white feature sets");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        const SuspectModel model = stub_model(rng());
        const auto &arch = model.architecture();
        const int layer = random_layer(rng, arch);
        const LayerWindow w = observation_window(arch, layer);
        const GreyBoxHandle grey(model, rng());
        const WhiteBoxHandle white(model);
        const auto reference = random_images(rng, arch.input, 24);
        const auto zeta = random_images(rng, arch.input, 8, uniform_int(rng, 0, 2));

        const auto gbase = baseline_stats(grey.probe(reference, layer));
        const FeatureSet fg = activated_features(grey.probe(zeta, layer), gbase);
        const auto wbase = baseline_stats(binarized(white.read_window(reference, w)));
        const FeatureSet fw = activated_features(binarized(white.read_window(zeta, w)), wbase);

        std::uint32_t first_id = 0;
        for (int l = 0; l < w.first; ++l) first_id += static_cast<std::uint32_t>(arch.cells_in_layer(l));
        const auto perm = grey.permutation(w);
        std::vector<std::uint32_t> mapped;
        for (auto id : fw.cells) mapped.push_back(perm.at(id - first_id));
        std::sort(mapped.begin(), mapped.end());
        rec.expect(mapped == fg.cells, "case " + std::to_string(i) + ": |F_grey|=" + std::to_string(fg.size()) +
                                           " |F_white|=" + std::to_string(fw.size()));
    }
    return rec.done();
}

PropertyResult check_permutation_invariance(std::uint64_t seed, std::size_t pairs)
{
    Recorder rec("feature cardinalities invariant under permutation seed");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < pairs; ++i) {
        rec.next_case();
        const SuspectModel model = stub_model(rng());
        const auto &arch = model.architecture();
        const PublicSets sets = stub_sets(rng, arch);
        BatteryConfig a;
        a.access = AccessMode::Grey;
        a.probe_layer = random_layer(rng, arch);
        a.permutation_seed = rng();
        BatteryConfig b = a;
        do b.permutation_seed = rng();
        while (b.permutation_seed == a.permutation_seed);
        const int action = uniform_int(rng, 0, arch.num_classes - 1);

        const auto ra = run_battery(model, sets, action, a);
        const auto rb = run_battery(model, sets, action, b);
        bool same = ra.features.action_features == rb.features.action_features;
        for (const auto &[name, fa] : ra.features.sets) {
            const auto &fb = rb.features.sets.at(name);
            same = same && fa.size == fb.size && fa.intersection == fb.intersection && fa.residual == fb.residual;
        }
        rec.expect(same, "pair " + std::to_string(i) + ": triples differ");
    }
    return rec.done();
}

PropertyResult check_miss_trigger_complement(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("C(zeta,A) + trigger fraction = 1 and matches the count");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        const int classes = uniform_int(rng, 2, 10);
        std::vector<std::vector<int>> labeled;
        std::vector<int> labeled_classes;
        for (int c = 0; c < classes; ++c) {
            labeled.push_back(random_predictions(rng, classes, uniform_int(rng, 1, 50)));
            labeled_classes.push_back(c);
        }
        std::map<std::string, std::vector<int>> unlabeled;
        for (int k = 1; k <= 3; ++k) {
            unlabeled["set-" + std::to_string(k)] = random_predictions(rng, classes, uniform_int(rng, 1, 200));
        }
        const int action = uniform_int(rng, 0, classes - 1);
        const auto stats = error_stats_from_predictions(labeled, labeled_classes, unlabeled, action);
        for (const auto &[name, preds] : unlabeled) {
            const auto hits = std::count(preds.begin(), preds.end(), action);
            const double want = 1.0 - static_cast<double>(hits) / static_cast<double>(preds.size());
            const double c = stats.miss_rate.at(name);
            const double t = stats.trigger_fraction.at(name);
            rec.expect(std::abs(c - want) < 1e-12, name + ": C=" + std::to_string(c) + " want " + std::to_string(want));
            rec.expect(std::abs(c + t - 1.0) < 1e-12, name + ": C + trigger = " + std::to_string(c + t));
        }
    }
    return rec.done();
}

PropertyResult check_reference_features_empty(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("F of the reference data is empty when all stds > 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0F, 1.0F);
    for (std::size_t i = 0; i < cases; ++i) {
        const int cells = uniform_int(rng, 1, 40);
        const int inputs = uniform_int(rng, 2, 60);
        const bool binary = uniform_int(rng, 0, 1) == 1;
        CellReadings r;
        r.access = binary ? "grey" : "white";
        r.window = {0, 2};
        r.values.resize(cells, inputs);
        for (int c = 0; c < cells; ++c) {
            r.cell_ids.push_back(static_cast<std::uint32_t>(c));
            r.tags.push_back(CoarsePosition::Lower);
            r.eligible.push_back(true);
            for (int k = 0; k < inputs; ++k) r.values(c, k) = binary ? static_cast<float>(u(rng) < 0.5F) : u(rng);
            // force a nonzero std
            r.values(c, 0) = 0.0F;
            r.values(c, 1) = 1.0F;
        }
        rec.next_case();
        const auto base = baseline_stats(r);
        const auto f = activated_features(r, base, true);
        rec.expect(f.size() == 0, "case " + std::to_string(i) + ": " + std::to_string(f.size()) + " cells activated");
    }
    return rec.done();
}

PropertyResult check_welch_symmetry_translation(std::uint64_t seed, std::size_t cases)
{
    Recorder rec("Welch test symmetric and translation invariant");
    std::mt19937_64 rng(seed);
    auto sample = [&](int n, double loc, double scale) {
        std::normal_distribution<double> d(loc, scale);
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto &x : v) x = std::round(d(rng) * 4.0) / 4.0;  // coarse grid keeps ties and constants in play
        return v;
    };
    auto close = [](double x, double y) {
        if (std::isinf(x) || std::isinf(y)) return x == y;
        return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x));
    };
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        std::uniform_real_distribution<double> u(-20.0, 20.0);
        const double scale_a = uniform_int(rng, 0, 4) == 0 ? 0.0 : std::exp(u(rng) / 10.0);
        const double scale_b = uniform_int(rng, 0, 4) == 0 ? 0.0 : std::exp(u(rng) / 10.0);
        const auto a = sample(uniform_int(rng, 2, 30), u(rng), scale_a);
        const auto b = sample(uniform_int(rng, 2, 30), u(rng), scale_b);
        const double shift = std::round(u(rng) * 4.0) / 4.0;
        auto a2 = a;
        auto b2 = b;
        for (auto &x : a2) x += shift;
        for (auto &x : b2) x += shift;

        const auto ab = welch_t_test(a, b);
        const auto ba = welch_t_test(b, a);
        const auto shifted = welch_t_test(a2, b2);
        const std::string where = "case " + std::to_string(i);
        rec.expect(close(ab.p, ba.p) && close(ab.t, -ba.t) && close(ab.df, ba.df) && ab.degenerate == ba.degenerate,
                   where + ": asymmetric p " + std::to_string(ab.p) + " vs " + std::to_string(ba.p));
        rec.expect(std::abs(ab.p - shifted.p) <= 1e-6 && ab.degenerate == shifted.degenerate,
                   where + ": shift changed p " + std::to_string(ab.p) + " -> " + std::to_string(shifted.p));
        rec.expect(ab.p >= 0.0 && ab.p <= 1.0, where + ": p out of range");
    }
    return rec.done();
}

PropertyResult check_checkpoint_roundtrip(std::uint64_t seed, const std::filesystem::path &scratch, std::size_t cases)
{
    Recorder rec("checkpoint round trip keeps predictions");
    std::mt19937_64 rng(seed);
    std::filesystem::create_directories(scratch);
    for (std::size_t i = 0; i < cases; ++i) {
        rec.next_case();
        SuspectModel model = stub_model(rng());
        const auto &arch = model.architecture();
        Normalization n;
        for (int c = 0; c < arch.input.channels; ++c) {
            n.mean.push_back(0.4F + 0.01F * static_cast<float>(c));
            n.stddev.push_back(0.2F + 0.02F * static_cast<float>(c));
        }
        model.set_normalization(n);
        std::vector<int> map(static_cast<std::size_t>(arch.num_classes));
        std::iota(map.begin(), map.end(), 3);
        model.set_class_index_map(map);

        const auto file = scratch / ("roundtrip-" + std::to_string(i) + ".tlck");
        save_model(model, file);
        const SuspectModel back = load_model(file);
        const auto images = random_images(rng, arch.input, 32);
        const std::string where = "case " + std::to_string(i);
        rec.expect(back.predict(images) == model.predict(images), where + ": predictions differ");
        rec.expect(back.logits(images) == model.logits(images), where + ": logits differ");
        rec.expect(back.architecture() == arch && back.normalization() == n && back.class_index_map() == map,
                   where + ": metadata differs");
        std::filesystem::remove(file);
    }
    return rec.done();
}

std::vector<PropertyResult> run_all_properties(std::uint64_t seed, const std::filesystem::path &scratch)
{
    return {
        check_rank_oracle(derive_seed(seed, 1)),
        check_rank_append_monotone(derive_seed(seed, 2)),
        check_grey_white_consistency(derive_seed(seed, 3)),
        check_grey_white_features(derive_seed(seed, 4)),
        check_permutation_invariance(derive_seed(seed, 5)),
        check_miss_trigger_complement(derive_seed(seed, 6)),
        check_reference_features_empty(derive_seed(seed, 7)),
        check_welch_symmetry_translation(derive_seed(seed, 8)),
        check_checkpoint_roundtrip(derive_seed(seed, 9), scratch),
    };
}

} // namespace tamperlab::testing
