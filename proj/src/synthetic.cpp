#include "tamperlab/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "tamperlab/errors.hpp"
#include "tamperlab/hashing.hpp"

namespace tamperlab {

namespace {

using Image = std::vector<float>;  // CHW, 3 channels
using Rng = std::mt19937_64;

float uniform(Rng &rng, float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); }

// Saturated colours keep every class template equally far from grey.
std::array<float, 3> random_colour(Rng &rng)
{
    std::array<float, 3> c{};
    for (auto &v : c) {
        const bool high = std::bernoulli_distribution(0.5)(rng);
        v = high ? uniform(rng, 0.7F, 0.95F) : uniform(rng, 0.05F, 0.3F);
    }
    return c;
}

// Two-colour sinusoidal grating.
Image grating(Rng &rng, int size, float min_freq, float max_freq)
{
    const auto c1 = random_colour(rng);
    const auto c2 = random_colour(rng);
    const float theta = uniform(rng, 0.0F, std::numbers::pi_v<float>);
    const float freq = uniform(rng, min_freq, max_freq);
    const float phase = uniform(rng, 0.0F, 2.0F * std::numbers::pi_v<float>);
    const float kx = 2.0F * std::numbers::pi_v<float> * freq * std::cos(theta) / static_cast<float>(size);
    const float ky = 2.0F * std::numbers::pi_v<float> * freq * std::sin(theta) / static_cast<float>(size);
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    Image img(3 * hw);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float g = 0.5F + 0.5F * std::sin(kx * x + ky * y + phase);
            for (std::size_t c = 0; c < 3; ++c) img[c * hw + y * size + x] = c1[c] * g + c2[c] * (1.0F - g);
        }
    }
    return img;
}

// Gaussian blobs over a neutral background.
Image blobs(Rng &rng, int size, int count)
{
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    Image img(3 * hw, 0.5F);
    for (int b = 0; b < count; ++b) {
        const auto colour = random_colour(rng);
        const float cx = uniform(rng, 0.15F, 0.85F) * size;
        const float cy = uniform(rng, 0.15F, 0.85F) * size;
        const float r = uniform(rng, 0.12F, 0.28F) * size;
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const float d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const float w = std::exp(-d2 / (2.0F * r * r));
                for (std::size_t c = 0; c < 3; ++c) {
                    float &v = img[c * hw + y * size + x];
                    v = v * (1.0F - w) + colour[c] * w;
                }
            }
        }
    }
    return img;
}

void blend(Image &dst, const Image &src, float weight)
{
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
}

} // namespace

nlohmann::json SyntheticCorpusConfig::to_json() const
{
    return {{"categories", categories},
            {"classes_per_category", classes_per_category},
            {"train_per_class", train_per_class},
            {"test_per_class", test_per_class},
            {"image_size", image_size},
            {"category_weight", category_weight},
            {"class_weight", class_weight},
            {"clutter", clutter},
            {"pixel_noise", pixel_noise},
            {"max_shift", max_shift},
            {"seed", seed}};
}

SyntheticCorpusConfig SyntheticCorpusConfig::from_json(const nlohmann::json &j)
{
    SyntheticCorpusConfig c;
    c.categories = j.value("categories", c.categories);
    c.classes_per_category = j.value("classes_per_category", c.classes_per_category);
    c.train_per_class = j.value("train_per_class", c.train_per_class);
    c.test_per_class = j.value("test_per_class", c.test_per_class);
    c.image_size = j.value("image_size", c.image_size);
    c.category_weight = j.value("category_weight", c.category_weight);
    c.class_weight = j.value("class_weight", c.class_weight);
    c.clutter = j.value("clutter", c.clutter);
    c.pixel_noise = j.value("pixel_noise", c.pixel_noise);
    c.max_shift = j.value("max_shift", c.max_shift);
    c.seed = j.value("seed", c.seed);
    return c;
}

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig &cfg)
{
    if (cfg.categories < 1 || cfg.classes_per_category < 1 || cfg.train_per_class < 0 || cfg.test_per_class < 0 ||
        cfg.image_size < 4) {
        throw ConfigError("synthetic corpus: invalid size parameters");
    }
    const int size = cfg.image_size;
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    Rng rng(mix_seed(cfg.seed));

    Corpus corpus;
    corpus.shape = {3, size, size};
    std::vector<Image> templates;
    for (int g = 0; g < cfg.categories; ++g) {
        corpus.category_names.push_back("category_" + std::to_string(g));
        Image motif = grating(rng, size, 0.8F, 2.5F);
        blend(motif, blobs(rng, size, 1), 1.0F);
        for (auto &v : motif) v *= 0.5F;
        for (int k = 0; k < cfg.classes_per_category; ++k) {
            const int fine = g * cfg.classes_per_category + k;
            corpus.class_names.push_back("class_" + std::to_string(fine));
            corpus.coarse_map.push_back(g);
            Image own = blobs(rng, size, 3);
            blend(own, grating(rng, size, 1.5F, 4.0F), 1.0F);
            for (auto &v : own) v *= 0.5F;
            Image t(3 * hw, 0.0F);
            blend(t, motif, static_cast<float>(cfg.category_weight));
            blend(t, own, static_cast<float>(cfg.class_weight));
            templates.push_back(std::move(t));
        }
    }

    std::normal_distribution<float> noise(0.0F, static_cast<float>(cfg.pixel_noise));
    std::uniform_int_distribution<int> shift(-cfg.max_shift, cfg.max_shift);
    const int classes = cfg.categories * cfg.classes_per_category;
    for (const Split split : {Split::Train, Split::Test}) {
        const int per_class = split == Split::Train ? cfg.train_per_class : cfg.test_per_class;
        for (int fine = 0; fine < classes; ++fine) {
            const Image &t = templates[static_cast<std::size_t>(fine)];
            for (int n = 0; n < per_class; ++n) {
                const int dx = shift(rng);
                const int dy = shift(rng);
                const float contrast = uniform(rng, 0.7F, 1.3F);
                const float brightness = uniform(rng, -0.08F, 0.08F);
                const Image clutter = grating(rng, size, 0.5F, 3.0F);
                const bool flip = std::bernoulli_distribution(0.5)(rng);
                for (std::size_t c = 0; c < 3; ++c) {
                    for (int y = 0; y < size; ++y) {
                        for (int x = 0; x < size; ++x) {
                            const int sx0 = std::clamp(x + dx, 0, size - 1);
                            const int sx = flip ? size - 1 - sx0 : sx0;
                            const int sy = std::clamp(y + dy, 0, size - 1);
                            float v = 0.5F + contrast * (t[c * hw + sy * size + sx] - 0.5F) + brightness;
                            v = (1.0F - static_cast<float>(cfg.clutter)) * v +
                                static_cast<float>(cfg.clutter) * clutter[c * hw + y * size + x];
                            v += noise(rng);
                            corpus.pixels.push_back(std::clamp(v, 0.0F, 1.0F));
                        }
                    }
                }
                corpus.fine_labels.push_back(fine);
                corpus.split.push_back(split);
            }
        }
    }
    corpus.validate();
    return corpus;
}

} // namespace tamperlab
