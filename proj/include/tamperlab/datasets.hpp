#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tamperlab {

struct ImageShape {
    int channels = 3;
    int height = 32;
    int width = 32;

    std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(channels) * height * width;
    }
    bool operator==(const ImageShape &) const = default;
};

/// Owning batch of images, each stored as contiguous CHW planes in [0,1].
class ImageBatch {
public:
    ImageBatch() = default;
    explicit ImageBatch(ImageShape shape) : shape_(shape) {}
    ImageBatch(ImageShape shape, std::vector<float> data);

    const ImageShape &shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return shape_.size() ? data_.size() / shape_.size() : 0; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> image(std::size_t i) const;
    std::span<const float> data() const noexcept { return data_; }
    std::span<float> mutable_data() noexcept { return data_; }

    void append(std::span<const float> pixels);
    void append(const ImageBatch &other);
    ImageBatch slice(std::size_t begin, std::size_t end) const;

private:
    ImageShape shape_{};
    std::vector<float> data_;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

/// Labeled image corpus with a two-level class hierarchy: each fine class
/// belongs to exactly one coarse category.
struct Corpus {
    ImageShape shape{};
    std::vector<float> pixels;  // num_images() * shape.size()
    std::vector<int> fine_labels;
    std::vector<Split> split;
    std::vector<int> coarse_map;  // fine class -> category
    std::vector<std::string> class_names;
    std::vector<std::string> category_names;

    std::size_t num_images() const noexcept { return fine_labels.size(); }
    int num_classes() const noexcept { return static_cast<int>(coarse_map.size()); }
    int num_categories() const noexcept { return static_cast<int>(category_names.size()); }
    int category_of(int fine_class) const { return coarse_map.at(static_cast<std::size_t>(fine_class)); }

    std::span<const float> image(std::size_t index) const;

    /// Indices of one class's images, ascending by original index.
    std::vector<std::size_t> indices_of(int fine_class, std::optional<Split> which = std::nullopt) const;
    std::vector<int> classes_in_category(int category) const;

    ImageBatch gather(std::span<const std::size_t> indices) const;

    /// Throws CorruptCorpusError on any structural violation.
    void validate() const;
};

/// Corpus manifest. Keys: format ("cifar100" | "directory" | "synthetic"),
/// path, class_names, category_map, and format-specific options.
struct CorpusManifest {
    std::string format = "cifar100";
    std::filesystem::path path;
    std::vector<std::string> class_names;
    std::vector<int> category_map;
    std::vector<std::string> category_names;
    int image_size = 0;  // 0 keeps the native size; otherwise box-downsample to this size
    nlohmann::json options = nlohmann::json::object();

    static CorpusManifest from_json(const nlohmann::json &j);
    static CorpusManifest from_file(const std::filesystem::path &file);
    nlohmann::json to_json() const;
};

Corpus load_corpus(const std::filesystem::path &path, const CorpusManifest &manifest);
Corpus load_corpus(const CorpusManifest &manifest);

/// Reads one CIFAR-100 binary file (1 coarse byte, 1 fine byte, 3072 pixel
/// bytes per record) and appends it to `corpus`.
void read_cifar100_binary(const std::filesystem::path &file, Split split, Corpus &corpus);
void write_cifar100_binary(const std::filesystem::path &file, const Corpus &corpus, Split split);

/// Box-filter downsampling by an integer factor.
Corpus downsample(const Corpus &corpus, int target_size);

/// Per-channel mean and std over the given images.
struct Normalization {
    std::vector<float> mean;
    std::vector<float> stddev;

    void apply(ImageBatch &batch) const;
    nlohmann::json to_json() const;
    static Normalization from_json(const nlohmann::json &j);
    bool operator==(const Normalization &) const = default;
};

Normalization channel_statistics(const Corpus &corpus, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Forensic scenarios

enum class TamperMode : std::uint8_t { NT = 0, RT = 1, ET = 2 };

std::string_view to_string(TamperMode mode);
TamperMode parse_mode(std::string_view text);
inline constexpr std::array<TamperMode, 3> kAllModes{TamperMode::NT, TamperMode::RT, TamperMode::ET};

struct HeldOutClasses {
    int zeta_O = -1;
    int zeta_A = -1;
    int zeta_R = -1;
    bool operator==(const HeldOutClasses &) const = default;
};

struct Scenario {
    int class_O = -1;
    int class_A_attack = -1;
    HeldOutClasses heldout;
    int action_class = -1;  // output index (retained label space) of class_O's slot
    TamperMode mode = TamperMode::NT;
    std::uint64_t seed = 0;
    std::vector<int> retained_classes;  // output index -> fine class

    int num_outputs() const noexcept { return static_cast<int>(retained_classes.size()); }
    int output_index_of(int fine_class) const;  // -1 if not retained

    nlohmann::json to_json() const;
    static Scenario from_json(const nlohmann::json &j);
    bool operator==(const Scenario &) const = default;
};

/// Picks the five scenario classes as a pure function of (corpus, seed);
/// `mode` is recorded but does not affect the class draw, so trials with
/// the same seed pair up across modes.
Scenario build_scenario(const Corpus &corpus, TamperMode mode, std::uint64_t seed);

/// Per-output training lists of corpus indices (train split only).
struct TrainingSet {
    std::vector<std::vector<std::size_t>> per_class;

    int num_classes() const noexcept { return static_cast<int>(per_class.size()); }
    std::size_t total() const noexcept;
    /// Flattened (index, label) pairs in class order.
    std::vector<std::pair<std::size_t, int>> samples() const;
    /// SHA-256 over the index lists; changes whenever membership or labels do.
    std::string digest() const;
};

TrainingSet build_training_set(const Corpus &corpus, const Scenario &scenario);

struct SampleSet {
    std::string name;
    ImageBatch images;
    std::optional<std::vector<int>> labels;
    int source_class = -1;     // -1 when withheld from the investigator
    int source_category = -1;  // -1 when withheld

    std::size_t size() const noexcept { return images.size(); }
};

/// Investigator-side view: labeled test-split sets per retained class and
/// three anonymized unlabeled sets.
struct PublicSets {
    std::vector<SampleSet> labeled;  // index == output index
    std::vector<SampleSet> unlabeled;  // tags "set-1".."set-3", order shuffled by seed
    std::vector<std::string> unlabeled_truth;  // parallel to `unlabeled`: "zeta_O" / "zeta_A" / "zeta_R"

    const SampleSet &action_set(const Scenario &scenario) const
    {
        return labeled.at(static_cast<std::size_t>(scenario.action_class));
    }
};

PublicSets public_sets(const Corpus &corpus, const Scenario &scenario);

/// The anonymized set definitions without pixels, for evidence files.
struct EvidenceManifest {
    int action_class = -1;
    std::vector<int> retained_classes;
    std::vector<std::string> tags;
    std::vector<std::vector<std::size_t>> unlabeled_indices;

    nlohmann::json to_json() const;
    static EvidenceManifest from_json(const nlohmann::json &j);
};

EvidenceManifest evidence_manifest(const Corpus &corpus, const Scenario &scenario);
PublicSets materialize(const Corpus &corpus, const EvidenceManifest &evidence);

} // namespace tamperlab
