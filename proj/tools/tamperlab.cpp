// tamperlab command-line entry point.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tamperlab/access.hpp"
#include "tamperlab/campaign.hpp"
#include "tamperlab/errors.hpp"
#include "tamperlab/forensics.hpp"
#include "tamperlab/model.hpp"
#include "tamperlab/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tamperlab;

namespace {

int verbosity = 1;

void info(const std::string &msg)
{
    if (verbosity > 0) std::cerr << msg << '\n';
}

nlohmann::json read_json_file(const fs::path &file)
{
    std::ifstream in(file);
    if (!in) throw LoadError(file.string(), "cannot open");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path &file, const nlohmann::json &j)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw LoadError(file.string(), "cannot open for writing");
    out << j.dump(2) << '\n';
}

struct CorpusSource {
    std::string manifest;

    Corpus load() const
    {
        if (manifest.empty()) {
            info("corpus: built-in synthetic corpus");
            return generate_synthetic_corpus({});
        }
        return load_corpus(CorpusManifest::from_file(manifest));
    }
    nlohmann::json describe() const
    {
        if (manifest.empty()) return {{"format", "synthetic"}, {"options", SyntheticCorpusConfig{}.to_json()}};
        return CorpusManifest::from_file(manifest).to_json();
    }
};

// ---------------------------------------------------------------------------

struct ScenarioArgs {
    CorpusSource corpus;
    std::string mode = "NT";
    std::uint64_t seed = 1;
    std::string out = "scenario";
};

int cmd_scenario(const ScenarioArgs &a)
{
    const Corpus corpus = a.corpus.load();
    const Scenario s = build_scenario(corpus, parse_mode(a.mode), a.seed);
    const TrainingSet ts = build_training_set(corpus, s);
    const EvidenceManifest ev = evidence_manifest(corpus, s);
    fs::create_directories(a.out);
    nlohmann::json sj = s.to_json();
    sj["training_set_digest"] = ts.digest();
    sj["training_samples"] = ts.total();
    sj["provenance"] = {{"command", "scenario"}, {"corpus", a.corpus.describe()}, {"mode", a.mode}, {"seed", a.seed}};
    write_json_file(fs::path(a.out) / "scenario.json", sj);
    nlohmann::json ej = ev.to_json();
    ej["provenance"] = {{"command", "scenario"}, {"corpus", a.corpus.describe()}};
    write_json_file(fs::path(a.out) / "evidence.json", ej);

    auto name = [&](int fine) { return corpus.class_names.at(static_cast<std::size_t>(fine)); };
    std::cout << "mode: " << to_string(s.mode) << "\n"
              << "official trigger class (A): " << name(s.class_O) << " -> output " << s.action_class << "\n"
              << "attack trigger class: " << name(s.class_A_attack) << "\n"
              << "held out: zeta_O=" << name(s.heldout.zeta_O) << " zeta_A=" << name(s.heldout.zeta_A)
              << " zeta_R=" << name(s.heldout.zeta_R) << "\n"
              << "retained classes: " << s.num_outputs() << ", training samples: " << ts.total() << "\n"
              << "wrote " << (fs::path(a.out) / "scenario.json").string() << " and evidence.json\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    CorpusSource corpus;
    std::string scenario;
    std::string out = "model.tlck";
    std::string config;
    std::string arch = "narrow";
    std::optional<int> epochs;
    std::optional<int> batch;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs &a)
{
    const nlohmann::json sj = read_json_file(a.scenario);
    Scenario s;
    try {
        s = Scenario::from_json(sj);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(a.scenario + ": " + e.what());
    }
    TrainConfig cfg = CampaignConfig::desk().train;
    if (!a.config.empty()) {
        nlohmann::json merged = cfg.to_json();
        merged.update(read_json_file(a.config));
        cfg = TrainConfig::from_json(merged);
    }
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch) cfg.batch_size = *a.batch;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    if (a.arch != "narrow" && a.arch != "vgg10") throw ConfigError("--arch must be narrow or vgg10");

    const Corpus corpus = a.corpus.load();
    const TrainingSet ts = build_training_set(corpus, s);
    const ArchitectureSpec arch = a.arch == "vgg10" ? ArchitectureSpec::vgg10(s.num_outputs(), corpus.shape)
                                                    : ArchitectureSpec::vgg10_narrow(s.num_outputs(), corpus.shape);
    info("training " + std::to_string(ts.total()) + " samples, " + std::to_string(cfg.epochs) + " epochs");
    SuspectModel model = train_suspect(corpus, ts, arch, cfg, [](int e, double loss, double tr, double va) {
        if (verbosity > 0) {
            std::cerr << "epoch " << e + 1 << " loss " << loss << " train " << tr << " val " << va << '\n';
        }
    });
    model.set_class_index_map(s.retained_classes);
    save_model(model, a.out);
    save_sealed({s.mode, s.seed, s}, a.out);
    std::cout << "wrote " << a.out << " (train accuracy " << model.metrics().train_accuracy << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    CorpusSource corpus;
    std::string checkpoint;
    std::string evidence;
    std::string access = "grey";
    std::string config;
    std::optional<int> layer;
    std::optional<std::uint64_t> perm_seed;
    std::string out;
    std::string dump;
};

int cmd_analyze(const AnalyzeArgs &a)
{
    BatteryConfig bc;
    if (!a.config.empty()) bc = BatteryConfig::from_json(read_json_file(a.config));
    bc.access = parse_access(a.access);
    if (a.layer) bc.probe_layer = *a.layer;
    if (a.perm_seed) bc.permutation_seed = *a.perm_seed;

    const SuspectModel model = load_model(a.checkpoint);
    const nlohmann::json ej = read_json_file(a.evidence);
    EvidenceManifest ev;
    try {
        ev = EvidenceManifest::from_json(ej);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(a.evidence + ": " + e.what());
    }
    const Corpus corpus = a.corpus.load();
    const PublicSets sets = materialize(corpus, ev);
    ForensicReport report = run_battery(model, sets, ev.action_class, bc);
    report.provenance["command"] = "analyze";
    report.provenance["checkpoint"] = a.checkpoint;
    report.provenance["evidence"] = a.evidence;
    report.provenance["corpus"] = a.corpus.describe();
    report.provenance["train"] = model.train_config().to_json();

    if (!a.dump.empty()) {
        if (bc.access == AccessMode::Black) throw ConfigError("--dump needs grey or white access");
        const int layer = bc.resolved_layer(model.architecture());
        const ImageBatch &images = sets.unlabeled.front().images;
        const CellReadings r = bc.access == AccessMode::Grey
                                   ? GreyBoxHandle(model, bc.permutation_seed).probe(images, layer)
                                   : WhiteBoxHandle(model).read_layer(images, layer);
        write_observation_dump(a.dump, r);
        report.notes.push_back("observation dump of " + sets.unlabeled.front().name + " written to " + a.dump);
    }
    if (!a.out.empty()) write_json_file(a.out, report.to_json());
    std::cout << render_summary(report);
    return 0;
}

// ---------------------------------------------------------------------------

struct CampaignArgs {
    CorpusSource corpus;
    std::string preset = "desk";
    std::string config;
    std::string out = "campaign";
    std::optional<int> trials;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::string cache;
};

void print_result(const CampaignResult &r)
{
    std::cout << table2_csv(r) << '\n' << table3_csv(r) << '\n' << table4_csv(r) << '\n';
    for (AccessMode access : {AccessMode::White, AccessMode::Grey}) {
        const auto &s = r.score(access);
        std::cout << "verdicts (" << (access == AccessMode::White ? "Grey=N" : "Grey=Y") << "): " << s.correct << "/"
                  << s.scored << " correct, zeta_A identified in " << s.et_identified << "/" << s.et_trials
                  << " ET trials\n";
        for (const auto &w : s.warnings) std::cout << "warning: " << w << '\n';
    }
    if (r.rank_test) std::cout << "Welch Rk(zeta_A) vs Rk(zeta_R): p=" << r.rank_test->p << '\n';
    if (r.failed) std::cout << r.failed << " trial(s) failed\n";
}

int cmd_campaign(const CampaignArgs &a)
{
    CampaignConfig cfg = CampaignConfig::preset_named(a.preset);
    if (!a.config.empty()) {
        nlohmann::json j = cfg.to_json();
        j.erase("cache_dir");
        j.update(read_json_file(a.config));
        cfg = CampaignConfig::from_json(j);
    }
    cfg.output_dir = a.out;
    if (!a.cache.empty()) cfg.cache_dir = a.cache;
    if (a.trials) cfg.trials_per_mode = *a.trials;
    if (a.workers) cfg.workers = *a.workers;
    if (a.seed) cfg.master_seed = *a.seed;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    cfg.validate();

    const Corpus corpus = a.corpus.load();
    const CampaignResult r = run_campaign(cfg, corpus, info);
    print_result(r);
    std::cout << "wrote " << (fs::path(a.out) / "campaign.json").string() << " and table2/3/4.csv\n";
    return 0;
}

int cmd_report(const std::string &dir)
{
    const CampaignResult r = load_campaign(dir);
    write_campaign_outputs(r, dir);
    print_result(r);
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Forensic analysis of possibly tampered image classifiers"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only print results");

    ScenarioArgs sa;
    auto *scen = app.add_subcommand("scenario", "Draw a tampering scenario and its evidence sets");
    scen->add_option("--corpus", sa.corpus.manifest, "Corpus manifest (default: built-in synthetic corpus)");
    scen->add_option("--mode", sa.mode, "NT, RT or ET")->check(CLI::IsMember({"NT", "RT", "ET"}));
    scen->add_option("--seed", sa.seed, "Scenario seed");
    scen->add_option("--out", sa.out, "Output directory");

    TrainArgs ta;
    auto *train = app.add_subcommand("train", "Train a suspect model for a scenario");
    train->add_option("--corpus", ta.corpus.manifest, "Corpus manifest");
    train->add_option("--scenario", ta.scenario, "scenario.json")->required();
    train->add_option("--out", ta.out, "Checkpoint path");
    train->add_option("--config", ta.config, "TrainConfig JSON");
    train->add_option("--arch", ta.arch, "narrow or vgg10");
    train->add_option("--epochs", ta.epochs);
    train->add_option("--batch-size", ta.batch);
    train->add_option("--lr", ta.lr);
    train->add_option("--seed", ta.seed);

    AnalyzeArgs aa;
    auto *analyze = app.add_subcommand("analyze", "Run the forensic battery on a checkpoint");
    analyze->add_option("--corpus", aa.corpus.manifest, "Corpus manifest");
    analyze->add_option("--checkpoint", aa.checkpoint)->required();
    analyze->add_option("--evidence", aa.evidence, "evidence.json")->required();
    analyze->add_option("--access", aa.access, "black, grey or white")->check(CLI::IsMember({"black", "grey", "white"}));
    analyze->add_option("--config", aa.config, "BatteryConfig JSON");
    analyze->add_option("--layer", aa.layer, "Probe layer (default: last conv layer)");
    analyze->add_option("--perm-seed", aa.perm_seed, "Grey-box permutation seed");
    analyze->add_option("--out", aa.out, "Report JSON path");
    analyze->add_option("--dump", aa.dump, "Observation dump CSV for the first unlabeled set");

    CampaignArgs ca;
    auto *camp = app.add_subcommand("campaign", "Run a multi-trial campaign");
    camp->add_option("--corpus", ca.corpus.manifest, "Corpus manifest");
    camp->add_option("--preset", ca.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    camp->add_option("--config", ca.config, "CampaignConfig JSON");
    camp->add_option("--out", ca.out, "Campaign directory");
    camp->add_option("--cache", ca.cache, "Checkpoint cache directory");
    camp->add_option("--trials", ca.trials, "Trials per mode");
    camp->add_option("--workers", ca.workers, "Parallel trials");
    camp->add_option("--seed", ca.seed, "Master seed");
    camp->add_option("--epochs", ca.epochs);

    std::string report_dir;
    auto *rep = app.add_subcommand("report", "Re-aggregate a campaign directory into tables");
    rep->add_option("campaign", report_dir, "Campaign directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    verbosity = quiet ? 0 : 1;

    try {
        if (*scen) return cmd_scenario(sa);
        if (*train) return cmd_train(ta);
        if (*analyze) return cmd_analyze(aa);
        if (*camp) return cmd_campaign(ca);
        if (*rep) return cmd_report(report_dir);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const nlohmann::json::exception &e) {
        std::cerr << "error: malformed input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
