#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "tamperlab/datasets.hpp"

namespace tamperlab {

struct ConvBlock {
    int channels = 64;
    int layers = 2;
    bool operator==(const ConvBlock &) const = default;
};

/// VGG-style topology: conv blocks (3x3 convs, optional batch norm, rectifier,
/// 2x2 max-pool after each block), global average pooling, rectified hidden
/// fully connected layers and a linear output layer.
struct ArchitectureSpec {
    ImageShape input{3, 32, 32};
    std::vector<ConvBlock> conv_blocks{{64, 2}, {128, 2}, {256, 2}, {512, 2}};
    std::vector<int> classifier_widths{512};
    int num_classes = 97;
    bool batch_norm = true;
    bool use_bias = true;  // linear layers, and convs when batch_norm is off

    int conv_layers() const noexcept;
    /// Conv plus fully connected layers; every one of them is a forensic layer.
    int weight_layers() const noexcept;
    int cells_in_layer(int layer) const;
    bool layer_is_rectified(int layer) const;

    void validate() const;

    /// 4 blocks x 2 convs + 1 hidden + output = 10 weight layers.
    static ArchitectureSpec vgg10(int num_classes, ImageShape input = {3, 32, 32});
    /// Same ten-layer topology with narrow channels for CPU-only campaigns.
    static ArchitectureSpec vgg10_narrow(int num_classes, ImageShape input);

    nlohmann::json to_json() const;
    static ArchitectureSpec from_json(const nlohmann::json &j);
    bool operator==(const ArchitectureSpec &) const = default;
};

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<float, Eigen::Dynamic, 1>;

/// Named parameter tensor. `trainable` is false for running statistics.
struct Parameter {
    std::string name;
    std::vector<float> value;
    bool trainable = true;
};

/// The suspect's compute graph with hand-written forward and backward passes.
/// Activations are stored column-major as (channels, batch*height*width).
class Network {
public:
    Network() = default;
    explicit Network(ArchitectureSpec arch);

    const ArchitectureSpec &architecture() const noexcept { return arch_; }

    /// He-normal weights, zero biases, unit gamma.
    void initialize(std::uint64_t seed);

    /// Inference-mode forward pass over normalized images.
    /// Returns logits as (num_classes, batch).
    Matrix logits(std::span<const float> images, std::size_t count) const;

    /// Inference-mode per-layer cell readings as (cells, batch). Conv cells
    /// are per-channel spatial means of the rectified feature map.
    std::vector<Matrix> layer_cells(std::span<const float> images, std::size_t count,
                                    std::span<const int> layers) const;

    /// One SGD step on a normalized batch; returns mean cross-entropy and
    /// writes the number of correct argmax predictions into `correct`.
    float train_step(std::span<const float> images, std::span<const int> labels, float learning_rate,
                     float momentum, float weight_decay, std::size_t *correct = nullptr);

    /// Mean cross-entropy and its gradient with respect to every parameter
    /// (batch statistics in the normalization layers). Entries for
    /// non-trainable parameters stay empty.
    float gradients(std::span<const float> images, std::span<const int> labels,
                    std::vector<std::vector<float>> &grads, std::size_t *correct = nullptr,
                    bool update_running_stats = false);

    /// Training-mode loss without side effects (finite-difference checks).
    float training_loss(std::span<const float> images, std::span<const int> labels) const;

    std::vector<Parameter> &parameters() noexcept { return params_; }
    const std::vector<Parameter> &parameters() const noexcept { return params_; }

private:
    struct ConvUnit {
        int in_channels, out_channels, height, width;
        int weight, bias, gamma, beta, running_mean, running_var;  // indices into params_, -1 if absent
        bool pool_after;
    };
    struct DenseUnit {
        int in_features, out_features;
        int weight, bias;
        bool rectified;
    };
    struct Tape;

    int add_param(std::string name, std::size_t size, bool trainable);
    Matrix input_matrix(std::span<const float> images, std::size_t count) const;
    Matrix forward(const Matrix &input, std::size_t count, bool training, Tape *tape,
                   std::vector<Matrix> *cells) const;

    ArchitectureSpec arch_;
    std::vector<ConvUnit> convs_;
    std::vector<DenseUnit> dense_;
    std::vector<Parameter> params_;
    std::vector<std::vector<float>> velocity_;
};

} // namespace tamperlab
