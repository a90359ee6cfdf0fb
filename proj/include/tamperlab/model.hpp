#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperlab/datasets.hpp"
#include "tamperlab/network.hpp"

namespace tamperlab {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 128;
    double learning_rate = 0.05;
    std::string schedule = "cosine";  // "cosine" | "step" | "constant"
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool random_crop = true;
    int crop_padding = 4;
    bool horizontal_flip = true;
    double validation_fraction = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
    double learning_rate_at(int epoch) const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json &j);
    bool operator==(const TrainConfig &) const = default;
};

struct TrainMetrics {
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
    std::vector<double> loss_curve;
    std::vector<double> validation_curve;

    nlohmann::json to_json() const;
    static TrainMetrics from_json(const nlohmann::json &j);
};

/// Ground truth about how a suspect was built. Stored next to, never inside,
/// the checkpoint so that analyses cannot read it.
struct SealedRecord {
    TamperMode mode = TamperMode::NT;
    std::uint64_t scenario_seed = 0;
    std::optional<Scenario> scenario;

    nlohmann::json to_json() const;
    static SealedRecord from_json(const nlohmann::json &j);
};

enum class CoarsePosition : std::uint8_t { Lower = 0, Upper = 1 };

struct CellInfo {
    int cell_id;
    int layer;
    CoarsePosition position;
};

/// A trained (or initialized) classifier plus its provenance.
class SuspectModel {
public:
    SuspectModel() = default;
    SuspectModel(ArchitectureSpec arch, TrainConfig cfg);

    const ArchitectureSpec &architecture() const noexcept { return network_.architecture(); }
    const TrainConfig &train_config() const noexcept { return train_config_; }
    const TrainMetrics &metrics() const noexcept { return metrics_; }
    TrainMetrics &metrics() noexcept { return metrics_; }
    const Normalization &normalization() const noexcept { return normalization_; }
    void set_normalization(Normalization n) { normalization_ = std::move(n); }
    const std::vector<int> &class_index_map() const noexcept { return class_index_map_; }
    void set_class_index_map(std::vector<int> m) { class_index_map_ = std::move(m); }

    Network &network() noexcept { return network_; }
    const Network &network() const noexcept { return network_; }

    int num_layers() const noexcept { return architecture().weight_layers(); }

    /// Raw [0,1] images in, logits (num_classes x batch) out.
    Matrix logits(const ImageBatch &images) const;
    Matrix probabilities(const ImageBatch &images) const;
    std::vector<int> predict(const ImageBatch &images) const;
    /// Per-layer cell readings, each (cells x batch).
    std::vector<Matrix> layer_cells(const ImageBatch &images, std::span<const int> layers) const;

    std::vector<float> parameter_payload() const;

private:
    ImageBatch normalized(const ImageBatch &images) const;

    Network network_;
    TrainConfig train_config_;
    TrainMetrics metrics_;
    Normalization normalization_;
    std::vector<int> class_index_map_;
};

using EpochCallback = std::function<void(int epoch, double loss, double train_acc, double val_acc)>;

/// Trains on `training_set` drawn from `corpus`. Throws TrainingFailedError
/// when validation accuracy stays below twice the chance level.
SuspectModel train_suspect(const Corpus &corpus, const TrainingSet &training_set, const ArchitectureSpec &arch,
                           const TrainConfig &cfg, const EpochCallback &on_epoch = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_model(const SuspectModel &model, const std::filesystem::path &file);
SuspectModel load_model(const std::filesystem::path &file);
/// Bytes of the tensor payload section exactly as written to disk.
std::vector<char> checkpoint_payload_bytes(const std::filesystem::path &file);

std::filesystem::path sealed_path_for(const std::filesystem::path &checkpoint);
void save_sealed(const SealedRecord &record, const std::filesystem::path &checkpoint);
std::optional<SealedRecord> load_sealed(const std::filesystem::path &checkpoint);

std::vector<CellInfo> enumerate_cells(const ArchitectureSpec &arch);
inline std::vector<CellInfo> enumerate_cells(const SuspectModel &model) { return enumerate_cells(model.architecture()); }
CoarsePosition coarse_position(const ArchitectureSpec &arch, int layer);

} // namespace tamperlab
