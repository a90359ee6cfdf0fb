#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "tamperlab/access.hpp"
#include "tamperlab/errors.hpp"

using namespace tamperlab;
namespace fs = std::filesystem;

namespace {

SuspectModel small_model(bool bias = true, bool bn = true)
{
    ArchitectureSpec a;
    a.input = {3, 8, 8};
    a.conv_blocks = {{4, 2}, {6, 2}};
    a.classifier_widths = {5};
    a.num_classes = 3;
    a.use_bias = bias;
    a.batch_norm = bn;
    TrainConfig c;
    c.seed = 21;
    return SuspectModel(a, c);
}

} // namespace

TEST_CASE("observation window stays inside the network")
{
    const auto arch = ArchitectureSpec::vgg10(97);
    CHECK(observation_window(arch, 7) == LayerWindow{6, 8});
    CHECK(observation_window(arch, 0) == LayerWindow{0, 2});
    CHECK(observation_window(arch, 9) == LayerWindow{7, 9});
    CHECK_THROWS_AS((void)observation_window(arch, 10), LayerOutOfRangeError);

    ArchitectureSpec two;
    two.conv_blocks = {{4, 1}};
    two.classifier_widths = {};
    two.num_classes = 2;
    CHECK(observation_window(two, 1) == LayerWindow{0, 1});
}

TEST_CASE("grey probe size is the sum of the three window layers")
{
    const SuspectModel m = small_model();
    const auto &arch = m.architecture();
    std::mt19937_64 rng(1);
    const auto images = testing::random_images(rng, arch.input, 2);
    const GreyBoxHandle grey(m, 5);
    for (int i = 1; i + 1 < arch.weight_layers(); ++i) {
        const auto r = grey.probe(images, i);
        const auto want = arch.cells_in_layer(i - 1) + arch.cells_in_layer(i) + arch.cells_in_layer(i + 1);
        CHECK(r.cells() == static_cast<std::size_t>(want));
        CHECK(r.access == "grey");
    }
}

TEST_CASE("bias-free stub network reads all zeros on a zero image")
{
    const SuspectModel m = small_model(false, false);
    const ImageBatch zero(m.architecture().input, std::vector<float>(m.architecture().input.size(), 0.0F));
    const GreyBoxHandle grey(m, 3);
    for (int layer = 0; layer < m.num_layers(); ++layer) {
        CHECK(grey.probe(zero, layer).values.isZero());
    }
}

TEST_CASE("permutation seeds relabel but never alter readings")
{
    const SuspectModel m = small_model();
    std::mt19937_64 rng(2);
    const auto images = testing::random_images(rng, m.architecture().input, 6);
    const auto a = GreyBoxHandle(m, 1).probe(images, 3);
    const auto b = GreyBoxHandle(m, 2).probe(images, 3);
    CHECK(GreyBoxHandle(m, 1).permutation(a.window) != GreyBoxHandle(m, 2).permutation(a.window));
    for (Eigen::Index c = 0; c < a.values.cols(); ++c) {
        std::vector<float> x(a.values.col(c).data(), a.values.col(c).data() + a.values.rows());
        std::vector<float> y(b.values.col(c).data(), b.values.col(c).data() + b.values.rows());
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        CHECK(x == y);
    }
    CHECK(GreyBoxHandle(m, 1).probe(images, 3).values == a.values);
}

TEST_CASE("grey readings are exactly 0 or 1")
{
    const SuspectModel m = small_model();
    std::mt19937_64 rng(3);
    const auto images = testing::random_images(rng, m.architecture().input, 4);
    const auto r = GreyBoxHandle(m, 9).probe(images, m.num_layers() - 1);
    CHECK((r.values.array() * (1.0F - r.values.array())).isZero());
    const auto obs = observations(r);
    REQUIRE(obs.size() == 4);
    for (const auto &o : obs) {
        CHECK(o.readings.size() == r.cells());
        for (const auto &[id, v] : o.readings) CHECK((v == 0 || v == 1));
    }
    // the output layer is not rectified and stays out of feature analysis
    CHECK(std::count(r.eligible.begin(), r.eligible.end(), false) == m.architecture().num_classes);
}

TEST_CASE("white box: raw, rectified, deterministic, true ids")
{
    const SuspectModel m = small_model();
    std::mt19937_64 rng(4);
    const auto images = testing::random_images(rng, m.architecture().input, 5);
    const WhiteBoxHandle white(m);
    const auto r = white.read_layer(images, 2);
    CHECK(r.values.minCoeff() >= 0.0F);
    CHECK(white.read_layer(images, 2).values == r.values);
    CHECK(r.cell_ids.front() == 8);  // 4 + 4 cells in layers 0 and 1
    CHECK(r.cells() == 6);
    CHECK_THROWS_AS((void)white.read_layer(images, 99), LayerOutOfRangeError);
    CHECK_THROWS_AS((void)GreyBoxHandle(m, 1).probe(images, -1), LayerOutOfRangeError);
}

TEST_CASE("black box predicts deterministically and checks shapes")
{
    const SuspectModel m = small_model();
    std::mt19937_64 rng(5);
    const auto images = testing::random_images(rng, m.architecture().input, 1);
    const BlackBoxHandle black(m);
    CHECK(black.predict(images) == black.predict(images));
    CHECK(black.num_classes() == 3);
    const ImageBatch wrong(ImageShape{1, 8, 8}, std::vector<float>(64, 0.0F));
    CHECK_THROWS_AS((void)black.predict(wrong), InputShapeError);
}

TEST_CASE("observation dump round trip")
{
    const SuspectModel m = small_model();
    std::mt19937_64 rng(6);
    const auto images = testing::random_images(rng, m.architecture().input, 3);
    const auto r = GreyBoxHandle(m, 4).probe(images, 2);
    const fs::path dir = TAMPERLAB_TEST_SCRATCH;
    fs::create_directories(dir);
    write_observation_dump(dir / "dump.csv", r);

    std::ifstream in(dir / "dump.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "input_id,cell_id,reading,coarse_tag");

    const auto back = read_observation_dump(dir / "dump.csv");
    CHECK(back.cell_ids == r.cell_ids);
    CHECK(back.tags == r.tags);
    CHECK(back.values == r.values);

    std::ofstream(dir / "bad.csv") << "nope\n";
    CHECK_THROWS_AS((void)read_observation_dump(dir / "bad.csv"), LoadError);
}
