#include "tamperlab/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tamperlab/errors.hpp"

namespace tamperlab {

namespace {

constexpr float kBnEpsilon = 1e-5F;
constexpr float kBnMomentum = 0.1F;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;

// Column j of `input` holds the channel vector of pixel j = (n*H + y)*W + x.
// Column j of the result stacks the nine 3x3 neighbours (zero padded).
Matrix im2col(const Matrix &input, int channels, int height, int width, std::size_t count)
{
    const Eigen::Index pixels = static_cast<Eigen::Index>(count) * height * width;
    Matrix col = Matrix::Zero(9 * channels, pixels);
    for (std::size_t n = 0; n < count; ++n) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const Eigen::Index j = (static_cast<Eigen::Index>(n) * height + y) * width + x;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = x + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        const Eigen::Index src = (static_cast<Eigen::Index>(n) * height + sy) * width + sx;
                        col.col(j).segment((ky * 3 + kx) * channels, channels) = input.col(src);
                    }
                }
            }
        }
    }
    return col;
}

Matrix col2im(const Matrix &col, int channels, int height, int width, std::size_t count)
{
    Matrix out = Matrix::Zero(channels, static_cast<Eigen::Index>(count) * height * width);
    for (std::size_t n = 0; n < count; ++n) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const Eigen::Index j = (static_cast<Eigen::Index>(n) * height + y) * width + x;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = x + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        const Eigen::Index src = (static_cast<Eigen::Index>(n) * height + sy) * width + sx;
                        out.col(src) += col.col(j).segment((ky * 3 + kx) * channels, channels);
                    }
                }
            }
        }
    }
    return out;
}

Matrix spatial_mean(const Matrix &act, int pixels_per_image, std::size_t count)
{
    Matrix out(act.rows(), static_cast<Eigen::Index>(count));
    for (std::size_t n = 0; n < count; ++n) {
        out.col(static_cast<Eigen::Index>(n)) =
            act.middleCols(static_cast<Eigen::Index>(n) * pixels_per_image, pixels_per_image).rowwise().mean();
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// ArchitectureSpec

int ArchitectureSpec::conv_layers() const noexcept
{
    int total = 0;
    for (const auto &b : conv_blocks) total += b.layers;
    return total;
}

int ArchitectureSpec::weight_layers() const noexcept
{
    return conv_layers() + static_cast<int>(classifier_widths.size()) + 1;
}

int ArchitectureSpec::cells_in_layer(int layer) const
{
    if (layer < 0 || layer >= weight_layers()) {
        throw LayerOutOfRangeError("layer " + std::to_string(layer) + " outside [0, " +
                                   std::to_string(weight_layers()) + ")");
    }
    int index = layer;
    for (const auto &b : conv_blocks) {
        if (index < b.layers) return b.channels;
        index -= b.layers;
    }
    if (index < static_cast<int>(classifier_widths.size())) return classifier_widths[static_cast<std::size_t>(index)];
    return num_classes;
}

bool ArchitectureSpec::layer_is_rectified(int layer) const
{
    (void)cells_in_layer(layer);
    return layer < weight_layers() - 1;
}

void ArchitectureSpec::validate() const
{
    if (input.channels <= 0 || input.height <= 0 || input.width <= 0) {
        throw ConfigError("architecture: input shape must be positive");
    }
    if (conv_blocks.empty()) throw ConfigError("architecture: at least one conv block is required");
    const int reduction = 1 << conv_blocks.size();
    if (input.height % reduction != 0 || input.width % reduction != 0) {
        throw ConfigError("architecture: input size must be divisible by " + std::to_string(reduction));
    }
    for (const auto &b : conv_blocks) {
        if (b.channels <= 0 || b.layers <= 0) throw ConfigError("architecture: conv block sizes must be positive");
    }
    for (int w : classifier_widths) {
        if (w <= 0) throw ConfigError("architecture: classifier widths must be positive");
    }
    if (num_classes < 2) throw ConfigError("architecture: need at least two classes");
}

ArchitectureSpec ArchitectureSpec::vgg10(int num_classes, ImageShape input)
{
    ArchitectureSpec a;
    a.input = input;
    a.num_classes = num_classes;
    return a;
}

ArchitectureSpec ArchitectureSpec::vgg10_narrow(int num_classes, ImageShape input)
{
    ArchitectureSpec a;
    a.input = input;
    a.conv_blocks = {{16, 2}, {32, 2}, {64, 2}, {128, 2}};
    a.classifier_widths = {256};
    a.num_classes = num_classes;
    return a;
}

nlohmann::json ArchitectureSpec::to_json() const
{
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto &b : conv_blocks) blocks.push_back({{"channels", b.channels}, {"layers", b.layers}});
    return {{"input", {input.channels, input.height, input.width}},
            {"conv_blocks", blocks},
            {"classifier_widths", classifier_widths},
            {"num_classes", num_classes},
            {"batch_norm", batch_norm},
            {"use_bias", use_bias},
            {"activation", "relu"}};
}

ArchitectureSpec ArchitectureSpec::from_json(const nlohmann::json &j)
{
    ArchitectureSpec a;
    const auto in = j.at("input");
    a.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    a.conv_blocks.clear();
    for (const auto &b : j.at("conv_blocks")) a.conv_blocks.push_back({b.at("channels"), b.at("layers")});
    a.classifier_widths = j.at("classifier_widths").get<std::vector<int>>();
    a.num_classes = j.at("num_classes");
    a.batch_norm = j.value("batch_norm", true);
    a.use_bias = j.value("use_bias", true);
    return a;
}

// ---------------------------------------------------------------------------
// Network

struct Network::Tape {
    struct Conv {
        Matrix col;
        Matrix xhat;
        Vector inv_std;
        Vector batch_mean;
        Vector batch_var;
        Matrix act;
        std::vector<Eigen::Index> argmax;
    };
    std::vector<Conv> conv;
    std::vector<Matrix> dense_in;
    std::vector<Matrix> dense_out;
    int gap_pixels = 1;
};

Network::Network(ArchitectureSpec arch) : arch_(std::move(arch))
{
    arch_.validate();
    int channels = arch_.input.channels;
    int h = arch_.input.height;
    int w = arch_.input.width;
    int layer = 0;
    for (std::size_t b = 0; b < arch_.conv_blocks.size(); ++b) {
        const auto &block = arch_.conv_blocks[b];
        for (int l = 0; l < block.layers; ++l, ++layer) {
            const std::string p = "conv" + std::to_string(layer);
            ConvUnit u{};
            u.in_channels = channels;
            u.out_channels = block.channels;
            u.height = h;
            u.width = w;
            u.weight = add_param(p + ".weight", static_cast<std::size_t>(block.channels) * 9 * channels, true);
            u.bias = u.gamma = u.beta = u.running_mean = u.running_var = -1;
            if (arch_.batch_norm) {
                const auto c = static_cast<std::size_t>(block.channels);
                u.gamma = add_param(p + ".bn.gamma", c, true);
                u.beta = add_param(p + ".bn.beta", c, true);
                u.running_mean = add_param(p + ".bn.running_mean", c, false);
                u.running_var = add_param(p + ".bn.running_var", c, false);
            } else if (arch_.use_bias) {
                u.bias = add_param(p + ".bias", static_cast<std::size_t>(block.channels), true);
            }
            u.pool_after = (l == block.layers - 1);
            convs_.push_back(u);
            channels = block.channels;
        }
        h /= 2;
        w /= 2;
    }
    int features = channels;
    const int hidden = static_cast<int>(arch_.classifier_widths.size());
    for (int d = 0; d <= hidden; ++d, ++layer) {
        const int out = d < hidden ? arch_.classifier_widths[static_cast<std::size_t>(d)] : arch_.num_classes;
        const std::string p = "fc" + std::to_string(layer);
        DenseUnit u{};
        u.in_features = features;
        u.out_features = out;
        u.weight = add_param(p + ".weight", static_cast<std::size_t>(out) * features, true);
        u.bias = arch_.use_bias ? add_param(p + ".bias", static_cast<std::size_t>(out), true) : -1;
        u.rectified = d < hidden;
        dense_.push_back(u);
        features = out;
    }
    velocity_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].value.size(), 0.0F);
}

int Network::add_param(std::string name, std::size_t size, bool trainable)
{
    params_.push_back({std::move(name), std::vector<float>(size, 0.0F), trainable});
    return static_cast<int>(params_.size() - 1);
}

void Network::initialize(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (const auto &u : convs_) {
        std::normal_distribution<float> dist(0.0F, std::sqrt(2.0F / static_cast<float>(9 * u.in_channels)));
        for (auto &v : params_[static_cast<std::size_t>(u.weight)].value) v = dist(rng);
        if (u.gamma >= 0) {
            std::ranges::fill(params_[static_cast<std::size_t>(u.gamma)].value, 1.0F);
            std::ranges::fill(params_[static_cast<std::size_t>(u.beta)].value, 0.0F);
            std::ranges::fill(params_[static_cast<std::size_t>(u.running_mean)].value, 0.0F);
            std::ranges::fill(params_[static_cast<std::size_t>(u.running_var)].value, 1.0F);
        }
        if (u.bias >= 0) std::ranges::fill(params_[static_cast<std::size_t>(u.bias)].value, 0.0F);
    }
    for (const auto &u : dense_) {
        const float gain = u.rectified ? 2.0F : 1.0F;
        std::normal_distribution<float> dist(0.0F, std::sqrt(gain / static_cast<float>(u.in_features)));
        for (auto &v : params_[static_cast<std::size_t>(u.weight)].value) v = dist(rng);
        if (u.bias >= 0) std::ranges::fill(params_[static_cast<std::size_t>(u.bias)].value, 0.0F);
    }
    for (auto &v : velocity_) std::ranges::fill(v, 0.0F);
}

Matrix Network::input_matrix(std::span<const float> images, std::size_t count) const
{
    const auto &s = arch_.input;
    const std::size_t per_image = s.size();
    if (images.size() != per_image * count) {
        throw InputShapeError("expected " + std::to_string(count) + " images of " + std::to_string(s.channels) + "x" +
                              std::to_string(s.height) + "x" + std::to_string(s.width) + " (" +
                              std::to_string(per_image * count) + " values), got " + std::to_string(images.size()));
    }
    const int hw = s.height * s.width;
    Matrix x(s.channels, static_cast<Eigen::Index>(count) * hw);
    for (std::size_t n = 0; n < count; ++n) {
        const float *img = images.data() + n * per_image;
        for (int c = 0; c < s.channels; ++c) {
            for (int p = 0; p < hw; ++p) {
                x(c, static_cast<Eigen::Index>(n) * hw + p) = img[c * hw + p];
            }
        }
    }
    return x;
}

Matrix Network::forward(const Matrix &input, std::size_t count, bool training, Tape *tape,
                        std::vector<Matrix> *cells) const
{
    Matrix x = input;
    if (tape) tape->conv.resize(convs_.size());
    for (std::size_t li = 0; li < convs_.size(); ++li) {
        const auto &u = convs_[li];
        Matrix col = im2col(x, u.in_channels, u.height, u.width, count);
        const ConstMatrixMap weight(params_[static_cast<std::size_t>(u.weight)].value.data(), u.out_channels,
                                    9 * u.in_channels);
        Matrix z = weight * col;
        Matrix xhat;
        Vector inv_std;
        if (u.gamma >= 0) {
            const Eigen::Map<const Vector> gamma(params_[static_cast<std::size_t>(u.gamma)].value.data(),
                                                 u.out_channels);
            const Eigen::Map<const Vector> beta(params_[static_cast<std::size_t>(u.beta)].value.data(),
                                                u.out_channels);
            Vector mean;
            Vector var;
            if (training) {
                mean = z.rowwise().mean();
                var = (z.colwise() - mean).array().square().rowwise().mean();
            } else {
                mean = Eigen::Map<const Vector>(params_[static_cast<std::size_t>(u.running_mean)].value.data(),
                                                u.out_channels);
                var = Eigen::Map<const Vector>(params_[static_cast<std::size_t>(u.running_var)].value.data(),
                                               u.out_channels);
            }
            inv_std = (var.array() + kBnEpsilon).rsqrt().matrix();
            xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
            z = (xhat.array().colwise() * gamma.array()).colwise() + beta.array();
            if (tape) {
                tape->conv[li].xhat = std::move(xhat);
                tape->conv[li].inv_std = inv_std;
                tape->conv[li].batch_mean = mean;
                tape->conv[li].batch_var = var;
            }
        } else if (u.bias >= 0) {
            const Eigen::Map<const Vector> bias(params_[static_cast<std::size_t>(u.bias)].value.data(),
                                                u.out_channels);
            z.colwise() += bias;
        }
        Matrix act = z.cwiseMax(0.0F);
        if (cells) cells->push_back(spatial_mean(act, u.height * u.width, count));
        if (u.pool_after) {
            const int oh = u.height / 2;
            const int ow = u.width / 2;
            Matrix pooled(u.out_channels, static_cast<Eigen::Index>(count) * oh * ow);
            std::vector<Eigen::Index> argmax;
            if (tape) argmax.resize(static_cast<std::size_t>(pooled.size()));
            for (std::size_t n = 0; n < count; ++n) {
                for (int y = 0; y < oh; ++y) {
                    for (int xx = 0; xx < ow; ++xx) {
                        const Eigen::Index o = (static_cast<Eigen::Index>(n) * oh + y) * ow + xx;
                        const Eigen::Index base = (static_cast<Eigen::Index>(n) * u.height + 2 * y) * u.width + 2 * xx;
                        const Eigen::Index src[4] = {base, base + 1, base + u.width, base + u.width + 1};
                        for (int c = 0; c < u.out_channels; ++c) {
                            Eigen::Index best = src[0];
                            float v = act(c, src[0]);
                            for (int k = 1; k < 4; ++k) {
                                if (act(c, src[k]) > v) {
                                    v = act(c, src[k]);
                                    best = src[k];
                                }
                            }
                            pooled(c, o) = v;
                            if (tape) argmax[static_cast<std::size_t>(o * u.out_channels + c)] = best;
                        }
                    }
                }
            }
            if (tape) tape->conv[li].argmax = std::move(argmax);
            if (tape) tape->conv[li].act = std::move(act);
            x = std::move(pooled);
        } else {
            if (tape) tape->conv[li].act = act;
            x = std::move(act);
        }
        if (tape) tape->conv[li].col = std::move(col);
    }

    const auto &last = convs_.back();
    const int gap_pixels = (last.height / 2) * (last.width / 2);
    Matrix h = spatial_mean(x, gap_pixels, count);
    if (tape) {
        tape->gap_pixels = gap_pixels;
        tape->dense_in.clear();
        tape->dense_out.clear();
    }
    for (const auto &u : dense_) {
        const ConstMatrixMap weight(params_[static_cast<std::size_t>(u.weight)].value.data(), u.out_features,
                                    u.in_features);
        Matrix out = weight * h;
        if (u.bias >= 0) {
            out.colwise() += Eigen::Map<const Vector>(params_[static_cast<std::size_t>(u.bias)].value.data(),
                                                      u.out_features);
        }
        if (u.rectified) out = out.cwiseMax(0.0F);
        if (cells) cells->push_back(out);
        if (tape) {
            tape->dense_in.push_back(h);
            tape->dense_out.push_back(out);
        }
        h = std::move(out);
    }
    return h;
}

Matrix Network::logits(std::span<const float> images, std::size_t count) const
{
    return forward(input_matrix(images, count), count, false, nullptr, nullptr);
}

std::vector<Matrix> Network::layer_cells(std::span<const float> images, std::size_t count,
                                         std::span<const int> layers) const
{
    for (int l : layers) (void)arch_.cells_in_layer(l);
    std::vector<Matrix> all;
    all.reserve(static_cast<std::size_t>(arch_.weight_layers()));
    forward(input_matrix(images, count), count, false, nullptr, &all);
    std::vector<Matrix> out;
    out.reserve(layers.size());
    for (int l : layers) out.push_back(all[static_cast<std::size_t>(l)]);
    return out;
}

float Network::training_loss(std::span<const float> images, std::span<const int> labels) const
{
    const std::size_t count = labels.size();
    const Matrix logits = forward(input_matrix(images, count), count, true, nullptr, nullptr);
    double loss = 0.0;
    for (std::size_t n = 0; n < count; ++n) {
        const auto col = logits.col(static_cast<Eigen::Index>(n));
        const float peak = col.maxCoeff();
        const float lse = peak + std::log((col.array() - peak).exp().sum());
        loss += lse - col(labels[n]);
    }
    return static_cast<float>(loss / static_cast<double>(count));
}

float Network::gradients(std::span<const float> images, std::span<const int> labels,
                         std::vector<std::vector<float>> &grads, std::size_t *correct, bool update_running_stats)
{
    const std::size_t count = labels.size();
    Tape tape;
    const Matrix logits = forward(input_matrix(images, count), count, true, &tape, nullptr);

    // Softmax cross-entropy.
    const Eigen::Index classes = logits.rows();
    Matrix grad(classes, static_cast<Eigen::Index>(count));
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t n = 0; n < count; ++n) {
        const auto col = logits.col(static_cast<Eigen::Index>(n));
        Eigen::Index arg = 0;
        const float peak = col.maxCoeff(&arg);
        Vector e = (col.array() - peak).exp().matrix();
        const float z = e.sum();
        e /= z;
        const int y = labels[n];
        if (y < 0 || y >= classes) throw InputShapeError("label " + std::to_string(y) + " outside output range");
        loss -= std::log(std::max(e(y), 1e-12F));
        if (arg == y) ++hits;
        e(y) -= 1.0F;
        grad.col(static_cast<Eigen::Index>(n)) = e / static_cast<float>(count);
    }
    if (correct) *correct = hits;

    grads.assign(params_.size(), {});
    auto grad_of = [&](int index) -> std::vector<float> & {
        auto &g = grads[static_cast<std::size_t>(index)];
        g.assign(params_[static_cast<std::size_t>(index)].value.size(), 0.0F);
        return g;
    };

    for (std::size_t di = dense_.size(); di-- > 0;) {
        const auto &u = dense_[di];
        if (u.rectified) grad = grad.cwiseProduct((tape.dense_out[di].array() > 0.0F).cast<float>().matrix());
        MatrixMap(grad_of(u.weight).data(), u.out_features, u.in_features) = grad * tape.dense_in[di].transpose();
        if (u.bias >= 0) VectorMap(grad_of(u.bias).data(), u.out_features) = grad.rowwise().sum();
        const ConstMatrixMap weight(params_[static_cast<std::size_t>(u.weight)].value.data(), u.out_features,
                                    u.in_features);
        grad = weight.transpose() * grad;
    }

    // Global average pool.
    {
        const int pixels = tape.gap_pixels;
        Matrix spread(grad.rows(), static_cast<Eigen::Index>(count) * pixels);
        for (std::size_t n = 0; n < count; ++n) {
            const Vector g = grad.col(static_cast<Eigen::Index>(n)) / static_cast<float>(pixels);
            for (int p = 0; p < pixels; ++p) spread.col(static_cast<Eigen::Index>(n) * pixels + p) = g;
        }
        grad = std::move(spread);
    }

    for (std::size_t li = convs_.size(); li-- > 0;) {
        const auto &u = convs_[li];
        auto &rec = tape.conv[li];
        Matrix d_act;
        if (u.pool_after) {
            d_act = Matrix::Zero(u.out_channels, static_cast<Eigen::Index>(count) * u.height * u.width);
            for (Eigen::Index o = 0; o < grad.cols(); ++o) {
                for (int c = 0; c < u.out_channels; ++c) {
                    d_act(c, rec.argmax[static_cast<std::size_t>(o * u.out_channels + c)]) += grad(c, o);
                }
            }
        } else {
            d_act = std::move(grad);
        }
        Matrix dz = d_act.cwiseProduct((rec.act.array() > 0.0F).cast<float>().matrix());
        if (u.gamma >= 0) {
            const auto m = static_cast<float>(dz.cols());
            const Vector d_gamma = dz.cwiseProduct(rec.xhat).rowwise().sum();
            const Vector d_beta = dz.rowwise().sum();
            VectorMap(grad_of(u.gamma).data(), u.out_channels) = d_gamma;
            VectorMap(grad_of(u.beta).data(), u.out_channels) = d_beta;
            const Eigen::Map<const Vector> gamma(params_[static_cast<std::size_t>(u.gamma)].value.data(),
                                                 u.out_channels);
            const Vector scale = gamma.cwiseProduct(rec.inv_std);
            dz = ((dz.colwise() - d_beta / m) - (rec.xhat.array().colwise() * (d_gamma / m).array()).matrix());
            dz = dz.array().colwise() * scale.array();

            if (update_running_stats) {
            VectorMap running_mean(params_[static_cast<std::size_t>(u.running_mean)].value.data(), u.out_channels);
            VectorMap running_var(params_[static_cast<std::size_t>(u.running_var)].value.data(), u.out_channels);
            const float unbias = m > 1.0F ? m / (m - 1.0F) : 1.0F;
            running_mean = (1.0F - kBnMomentum) * running_mean + kBnMomentum * rec.batch_mean;
            running_var = (1.0F - kBnMomentum) * running_var + (kBnMomentum * unbias) * rec.batch_var;
            }
        } else if (u.bias >= 0) {
            VectorMap(grad_of(u.bias).data(), u.out_channels) = dz.rowwise().sum();
        }
        MatrixMap(grad_of(u.weight).data(), u.out_channels, 9 * u.in_channels) = dz * rec.col.transpose();
        if (li > 0) {
            const ConstMatrixMap weight(params_[static_cast<std::size_t>(u.weight)].value.data(), u.out_channels,
                                        9 * u.in_channels);
            const Matrix dcol = weight.transpose() * dz;
            grad = col2im(dcol, u.in_channels, u.height, u.width, count);
        }
        rec = {};
    }
    return static_cast<float>(loss / static_cast<double>(count));
}

float Network::train_step(std::span<const float> images, std::span<const int> labels, float learning_rate,
                          float momentum, float weight_decay, std::size_t *correct)
{
    std::vector<std::vector<float>> grads;
    const float loss = gradients(images, labels, grads, correct, true);

    // SGD with momentum; decay applies to weight tensors only.
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto &p = params_[i];
        if (!p.trainable || grads[i].empty()) continue;
        const bool decay = p.name.ends_with(".weight");
        auto &v = velocity_[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            float g = grads[i][k];
            if (decay) g += weight_decay * p.value[k];
            v[k] = momentum * v[k] + g;
            p.value[k] -= learning_rate * v[k];
        }
    }
    return loss;
}

} // namespace tamperlab
