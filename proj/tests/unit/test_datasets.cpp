#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "tamperlab/datasets.hpp"
#include "tamperlab/errors.hpp"

using namespace tamperlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name)
{
    const fs::path p = fs::path(TAMPERLAB_TEST_SCRATCH) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<unsigned char> cifar_records(std::mt19937_64 &rng, int per_class)
{
    std::vector<unsigned char> bytes;
    std::uniform_int_distribution<int> px(0, 255);
    for (int k = 0; k < per_class; ++k) {
        for (int fine = 0; fine < 100; ++fine) {
            bytes.push_back(static_cast<unsigned char>(fine / 5));
            bytes.push_back(static_cast<unsigned char>(fine));
            for (int p = 0; p < 3072; ++p) bytes.push_back(static_cast<unsigned char>(px(rng)));
        }
    }
    return bytes;
}

void write_bytes(const fs::path &file, const std::vector<unsigned char> &bytes)
{
    std::ofstream out(file, std::ios::binary);
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path &file)
{
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_ppm(const fs::path &file, int side, unsigned char shade)
{
    std::ofstream out(file, std::ios::binary);
    out << "P6\n" << side << " " << side << "\n255\n";
    for (int i = 0; i < side * side * 3; ++i) out.put(static_cast<char>(shade + i % 7));
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v)
{
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

TEST_CASE("CIFAR-100 binary loads bit-exactly and writes back identical bytes")
{
    const fs::path dir = scratch("cifar");
    std::mt19937_64 rng(11);
    const auto train = cifar_records(rng, 2);
    const auto test = cifar_records(rng, 1);
    write_bytes(dir / "train.bin", train);
    write_bytes(dir / "test.bin", test);

    CorpusManifest m;
    m.path = dir;
    const Corpus c = load_corpus(m);
    CHECK(c.num_classes() == 100);
    CHECK(c.num_categories() == 20);
    CHECK(c.num_images() == 300);
    CHECK(c.shape == ImageShape{3, 32, 32});
    CHECK(c.category_of(37) == 7);
    CHECK(c.fine_labels[1] == 1);
    CHECK(c.image(0)[5] == static_cast<float>(train[2 + 5]) / 255.0F);
    CHECK(c.image(200)[0] == static_cast<float>(test[2]) / 255.0F);

    write_cifar100_binary(dir / "train2.bin", c, Split::Train);
    write_cifar100_binary(dir / "test2.bin", c, Split::Test);
    CHECK(read_bytes(dir / "train2.bin") == train);
    CHECK(read_bytes(dir / "test2.bin") == test);
}

TEST_CASE("missing CIFAR file is a load error naming the file")
{
    const fs::path dir = scratch("cifar-missing");
    CorpusManifest m;
    m.path = dir;
    try {
        (void)load_corpus(m);
        FAIL("expected LoadError");
    } catch (const LoadError &e) {
        CHECK(e.file().find("train.bin") != std::string::npos);
        CHECK(std::string(e.what()).find("train.bin") != std::string::npos);
        CHECK(e.exit_code() == 3);
    }
}

TEST_CASE("label 117 is a corrupt-corpus error")
{
    const fs::path dir = scratch("cifar-corrupt");
    std::mt19937_64 rng(3);
    auto bytes = cifar_records(rng, 1);
    bytes[3074 * 4 + 1] = 117;
    write_bytes(dir / "train.bin", bytes);
    write_bytes(dir / "test.bin", cifar_records(rng, 1));
    CorpusManifest m;
    m.path = dir;
    CHECK_THROWS_AS((void)load_corpus(m), CorruptCorpusError);
}

TEST_CASE("truncated record is rejected")
{
    const fs::path dir = scratch("cifar-truncated");
    std::mt19937_64 rng(4);
    auto bytes = cifar_records(rng, 1);
    bytes.pop_back();
    write_bytes(dir / "train.bin", bytes);
    Corpus c;
    CHECK_THROWS_AS(read_cifar100_binary(dir / "train.bin", Split::Train, c), CorruptCorpusError);
}

TEST_CASE("4-class toy manifest with 2 categories")
{
    const fs::path dir = scratch("toy");
    const std::vector<std::string> names{"ant", "bee", "oak", "elm"};
    for (const char *split : {"train", "test"}) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            fs::create_directories(dir / split / names[c]);
            for (int k = 0; k < 3; ++k) {
                write_ppm(dir / split / names[c] / ("img" + std::to_string(k) + ".ppm"), 8,
                          static_cast<unsigned char>(40 * c + k));
            }
        }
    }
    const nlohmann::json j = {{"format", "directory"},
                              {"path", dir.string()},
                              {"class_names", names},
                              {"category_map", {0, 0, 1, 1}},
                              {"category_names", {"insect", "tree"}}};
    std::ofstream(dir / "manifest.json") << j.dump();
    const Corpus c = load_corpus(CorpusManifest::from_file(dir / "manifest.json"));
    CHECK(c.num_classes() == 4);
    CHECK(c.num_categories() == 2);
    CHECK(c.num_images() == 24);
    CHECK(c.shape == ImageShape{3, 8, 8});
    CHECK(c.classes_in_category(1) == std::vector<int>{2, 3});
    CHECK(c.indices_of(2, Split::Test).size() == 3);

    SUBCASE("two categories cannot host a scenario")
    {
        CHECK_THROWS_AS((void)build_scenario(c, TamperMode::ET, 1), ScenarioInfeasibleError);
    }
    SUBCASE("downsampling by a factor of two averages 2x2 boxes")
    {
        const Corpus d = downsample(c, 4);
        CHECK(d.shape == ImageShape{3, 4, 4});
        const auto src = c.image(0);
        const float want = (src[0] + src[1] + src[8] + src[9]) / 4.0F;
        CHECK(d.image(0)[0] == doctest::Approx(want));
    }
}

TEST_CASE("unknown corpus format is a config error")
{
    CorpusManifest m;
    m.format = "tarball";
    CHECK_THROWS_AS((void)load_corpus(m), ConfigError);
}

TEST_CASE("scenario invariants hold by direct category lookup")
{
    const Corpus c = testing::toy_corpus(6, 2, 4, 3);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scenario s = build_scenario(c, TamperMode::ET, seed);
        const std::set<int> five{s.class_O, s.class_A_attack, s.heldout.zeta_O, s.heldout.zeta_A, s.heldout.zeta_R};
        CHECK(five.size() == 5);
        CHECK(c.category_of(s.class_O) == c.category_of(s.heldout.zeta_O));
        CHECK(c.category_of(s.class_A_attack) == c.category_of(s.heldout.zeta_A));
        CHECK(c.category_of(s.class_O) != c.category_of(s.class_A_attack));
        CHECK(c.category_of(s.heldout.zeta_R) != c.category_of(s.class_O));
        CHECK(c.category_of(s.heldout.zeta_R) != c.category_of(s.class_A_attack));
        CHECK(s.num_outputs() == c.num_classes() - 3);
        CHECK(s.retained_classes.at(static_cast<std::size_t>(s.action_class)) == s.class_O);
        CHECK(s.output_index_of(s.heldout.zeta_A) == -1);
        CHECK(s.output_index_of(s.class_A_attack) >= 0);
    }
}

TEST_CASE("scenario draw is deterministic and mode independent")
{
    const Corpus c = testing::toy_corpus(6, 2, 4, 3);
    const Scenario a = build_scenario(c, TamperMode::ET, 7);
    CHECK(a == build_scenario(c, TamperMode::ET, 7));
    Scenario nt = build_scenario(c, TamperMode::NT, 7);
    nt.mode = TamperMode::ET;
    CHECK(nt == a);
    CHECK(Scenario::from_json(a.to_json()) == a);
}

TEST_CASE("a full-size label space leaves 97 outputs")
{
    const Corpus c = testing::toy_corpus(20, 5, 1, 1);
    const Scenario s = build_scenario(c, TamperMode::ET, 7);
    CHECK(s.num_outputs() == 97);
}

TEST_CASE("training sets per mode")
{
    const Corpus c = testing::toy_corpus(5, 2, 6, 2);
    const std::uint64_t seed = 3;
    const Scenario nt = build_scenario(c, TamperMode::NT, seed);
    const auto s_o = c.indices_of(nt.class_O, Split::Train);
    const auto s_a = c.indices_of(nt.class_A_attack, Split::Train);
    const auto a = static_cast<std::size_t>(nt.action_class);
    const auto attack_slot = static_cast<std::size_t>(nt.output_index_of(nt.class_A_attack));

    const TrainingSet t_nt = build_training_set(c, nt);
    CHECK(t_nt.per_class[a] == s_o);
    CHECK(t_nt.per_class[attack_slot] == s_a);
    CHECK(t_nt.total() == static_cast<std::size_t>(nt.num_outputs()) * 6);

    const TrainingSet t_rt = build_training_set(c, build_scenario(c, TamperMode::RT, seed));
    std::vector<std::size_t> overlap;
    std::set_intersection(s_o.begin(), s_o.end(), t_rt.per_class[a].begin(), t_rt.per_class[a].end(),
                          std::back_inserter(overlap));
    CHECK(overlap.empty());
    CHECK(sorted(t_rt.per_class[a]) == s_a);
    CHECK(t_rt.per_class[attack_slot].empty());

    const TrainingSet t_et = build_training_set(c, build_scenario(c, TamperMode::ET, seed));
    std::vector<std::size_t> both;
    std::set_union(s_o.begin(), s_o.end(), s_a.begin(), s_a.end(), std::back_inserter(both));
    CHECK(sorted(t_et.per_class[a]) == both);
    CHECK(t_et.per_class[a].size() == 12);
    for (std::size_t k = 0; k < t_et.per_class.size(); ++k) {
        if (k != a && k != attack_slot) CHECK(t_et.per_class[k].size() == 6);
    }
    CHECK(t_et.digest() != t_nt.digest());
    CHECK(t_nt.digest() == build_training_set(c, nt).digest());
}

TEST_CASE("public sets expose labeled test splits and three anonymous sets")
{
    const Corpus c = testing::toy_corpus(5, 2, 6, 2);
    const Scenario s = build_scenario(c, TamperMode::ET, 9);
    const PublicSets p = public_sets(c, s);
    REQUIRE(p.labeled.size() == static_cast<std::size_t>(s.num_outputs()));
    for (std::size_t i = 0; i < p.labeled.size(); ++i) {
        CHECK(p.labeled[i].size() == 2);
        CHECK(p.labeled[i].labels->front() == static_cast<int>(i));
    }
    CHECK(p.action_set(s).name == "L_A");
    REQUIRE(p.unlabeled.size() == 3);
    std::multiset<std::string> truth(p.unlabeled_truth.begin(), p.unlabeled_truth.end());
    CHECK(truth == std::multiset<std::string>{"zeta_A", "zeta_O", "zeta_R"});
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(p.unlabeled[k].name == "set-" + std::to_string(k + 1));
        CHECK(p.unlabeled[k].size() == 8);  // train + test of the held-out class
        CHECK_FALSE(p.unlabeled[k].labels.has_value());
        CHECK(p.unlabeled[k].source_class == -1);
        const int held = p.unlabeled_truth[k] == "zeta_O"   ? s.heldout.zeta_O
                         : p.unlabeled_truth[k] == "zeta_A" ? s.heldout.zeta_A
                                                            : s.heldout.zeta_R;
        const auto first = c.indices_of(held).front();
        CHECK(std::equal(p.unlabeled[k].images.image(0).begin(), p.unlabeled[k].images.image(0).end(),
                         c.image(first).begin()));
    }

    const EvidenceManifest e = EvidenceManifest::from_json(evidence_manifest(c, s).to_json());
    const PublicSets again = materialize(c, e);
    CHECK(again.unlabeled[1].images.data().size() == p.unlabeled[1].images.data().size());
    CHECK(again.unlabeled_truth.empty());
}

TEST_CASE("channel statistics")
{
    const Corpus c = testing::toy_corpus(3, 2, 4, 1);
    const auto idx = c.indices_of(0, Split::Train);
    const Normalization n = channel_statistics(c, idx);
    REQUIRE(n.mean.size() == 3);
    ImageBatch b = c.gather(idx);
    n.apply(b);
    double sum = 0.0;
    const std::size_t hw = 16 * 16;
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t p = 0; p < hw; ++p) sum += b.image(i)[p];
    }
    CHECK(sum / static_cast<double>(b.size() * hw) == doctest::Approx(0.0).epsilon(1e-4));
}
