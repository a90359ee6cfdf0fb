#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "tamperlab/datasets.hpp"

namespace tamperlab {

/// Procedural stand-in for a CIFAR-100-style corpus. Every category owns a
/// shared motif (colour palette plus oriented gratings); every class adds its
/// own blob pattern on top. Instances are jittered, contrast-scaled, cluttered
/// and noised, so siblings in a category look alike and the per-class error of
/// a small CNN lands in the CIFAR-100 regime.
struct SyntheticCorpusConfig {
    int categories = 50;
    int classes_per_category = 2;
    int train_per_class = 80;
    int test_per_class = 100;
    int image_size = 16;
    double category_weight = 0.8;  // share of the category motif in a class template
    double class_weight = 0.2;
    double clutter = 0.25;         // blend weight of a random background grating
    double pixel_noise = 0.06;
    int max_shift = 2;
    std::uint64_t seed = 20200101;

    nlohmann::json to_json() const;
    static SyntheticCorpusConfig from_json(const nlohmann::json &j);
};

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig &cfg);

} // namespace tamperlab
