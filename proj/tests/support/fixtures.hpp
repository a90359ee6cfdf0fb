#pragma once

#include <cstdint>
#include <random>

#include "tamperlab/datasets.hpp"
#include "tamperlab/model.hpp"
#include "tamperlab/synthetic.hpp"

namespace tamperlab::testing {

/// Small synthetic corpus: `categories` x `per_category` classes of 16x16 images.
inline Corpus toy_corpus(int categories = 3, int per_category = 2, int train = 12, int test = 6,
                         std::uint64_t seed = 5)
{
    SyntheticCorpusConfig c;
    c.categories = categories;
    c.classes_per_category = per_category;
    c.train_per_class = train;
    c.test_per_class = test;
    c.seed = seed;
    return generate_synthetic_corpus(c);
}

/// Random untrained network with a small random topology.
inline SuspectModel stub_model(std::uint64_t seed, bool bias = true)
{
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    ArchitectureSpec a;
    a.input = {3, 8, 8};
    a.conv_blocks.clear();
    const int blocks = pick(1, 3);
    for (int b = 0; b < blocks; ++b) a.conv_blocks.push_back({pick(2, 6), pick(1, 2)});
    a.classifier_widths.clear();
    for (int k = pick(0, 2); k > 0; --k) a.classifier_widths.push_back(pick(3, 9));
    a.num_classes = pick(2, 7);
    a.batch_norm = pick(0, 1) == 1;
    a.use_bias = bias;
    TrainConfig cfg;
    cfg.seed = seed;
    return SuspectModel(a, cfg);
}

/// `count` random images in [0,1]; `tint` shifts one channel to make sets differ.
inline ImageBatch random_images(std::mt19937_64 &rng, ImageShape shape, std::size_t count, int tint = -1)
{
    std::uniform_real_distribution<float> u(0.0F, 1.0F);
    std::vector<float> data(count * shape.size());
    const std::size_t hw = static_cast<std::size_t>(shape.height) * shape.width;
    for (std::size_t i = 0; i < data.size(); ++i) {
        float v = u(rng);
        const auto channel = static_cast<int>((i % shape.size()) / hw);
        if (channel == tint) v = 0.5F + 0.5F * v;
        data[i] = v;
    }
    return ImageBatch(shape, std::move(data));
}

} // namespace tamperlab::testing
