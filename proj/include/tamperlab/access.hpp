#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tamperlab/model.hpp"

namespace tamperlab {

/// Inclusive range of layer indices observed together.
struct LayerWindow {
    int first = 0;
    int last = 0;

    int size() const noexcept { return last - first + 1; }
    bool operator==(const LayerWindow &) const = default;
};

/// {layer-1, layer, layer+1}, shifted to stay inside the network. Networks
/// with fewer than three layers get the whole network.
LayerWindow observation_window(const ArchitectureSpec &arch, int layer);

/// Readings of one window, one row per cell and one column per input.
struct CellReadings {
    std::string access;  // "white" or "grey"
    LayerWindow window;
    std::vector<std::uint32_t> cell_ids;  // row labels; opaque under grey box
    std::vector<CoarsePosition> tags;
    std::vector<bool> eligible;  // false for cells behind the linear output layer
    Matrix values;

    std::size_t cells() const noexcept { return cell_ids.size(); }
    std::size_t inputs() const noexcept { return static_cast<std::size_t>(values.cols()); }
    bool same_layout(const CellReadings &other) const;
};

class BlackBoxHandle {
public:
    explicit BlackBoxHandle(const SuspectModel &model) : model_(&model) {}

    std::vector<int> predict(const ImageBatch &images) const { return model_->predict(images); }
    int num_classes() const noexcept { return model_->architecture().num_classes; }

private:
    const SuspectModel *model_;
};

class WhiteBoxHandle {
public:
    explicit WhiteBoxHandle(const SuspectModel &model) : model_(&model) {}

    const ArchitectureSpec &architecture() const noexcept { return model_->architecture(); }
    std::vector<int> predict(const ImageBatch &images) const { return model_->predict(images); }

    /// Raw readings labeled by true cell id.
    CellReadings read_layer(const ImageBatch &images, int layer) const;
    CellReadings read_window(const ImageBatch &images, LayerWindow window) const;

private:
    const SuspectModel *model_;
};

struct GreyBoxObservation {
    std::size_t input_id = 0;
    std::map<std::uint32_t, std::uint8_t> readings;
    std::map<std::uint32_t, CoarsePosition> tags;
};

class GreyBoxHandle {
public:
    GreyBoxHandle(const SuspectModel &model, std::uint64_t permutation_seed);

    std::vector<int> predict(const ImageBatch &images) const { return model_->predict(images); }
    int num_layers() const noexcept { return model_->num_layers(); }
    std::uint64_t permutation_seed() const noexcept { return seed_; }

    /// Binarized readings of the clipped window around `layer`. Row k holds
    /// the cell with opaque id k.
    CellReadings probe(const ImageBatch &images, int layer) const;

    /// The window-local bijection: true position j is reported as id perm[j].
    std::vector<std::uint32_t> permutation(LayerWindow window) const;

private:
    const SuspectModel *model_;
    std::uint64_t seed_;
};

std::vector<GreyBoxObservation> observations(const CellReadings &readings);

std::string to_string(CoarsePosition position);

/// Columnar dump: header `input_id,cell_id,reading,coarse_tag`, one row per
/// (input, cell), inputs outer.
void write_observation_dump(const std::filesystem::path &file, const CellReadings &readings);
/// Reads a dump back into a (cells x inputs) table; window and access are unknown.
CellReadings read_observation_dump(const std::filesystem::path &file);

} // namespace tamperlab
