#include "tamperlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "tamperlab/errors.hpp"

namespace tamperlab {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written little-endian");

namespace {

constexpr char kMagic[8] = {'T', 'L', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr std::size_t kInferenceChunk = 256;

void augment(std::span<float> image, const ImageShape &shape, const TrainConfig &cfg, std::mt19937_64 &rng)
{
    const int h = shape.height;
    const int w = shape.width;
    int dx = 0;
    int dy = 0;
    if (cfg.random_crop && cfg.crop_padding > 0) {
        std::uniform_int_distribution<int> shift(-cfg.crop_padding, cfg.crop_padding);
        dx = shift(rng);
        dy = shift(rng);
    }
    bool flip = false;
    if (cfg.horizontal_flip) flip = std::bernoulli_distribution(0.5)(rng);
    if (dx == 0 && dy == 0 && !flip) return;
    std::vector<float> src(image.begin(), image.end());
    for (int c = 0; c < shape.channels; ++c) {
        const float *plane = src.data() + static_cast<std::size_t>(c) * h * w;
        float *out = image.data() + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int sx0 = flip ? (w - 1 - x) : x;
                const int sy = y + dy;
                const int sx = sx0 + dx;
                out[y * w + x] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? plane[sy * w + sx] : 0.0F;
            }
        }
    }
}

std::size_t argmax_column(const Matrix &m, Eigen::Index col)
{
    Eigen::Index arg = 0;
    m.col(col).maxCoeff(&arg);
    return static_cast<std::size_t>(arg);
}

template <class T>
void write_pod(std::ofstream &out, const T &value)
{
    out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <class T>
T read_pod(std::ifstream &in, const std::filesystem::path &file)
{
    T value{};
    in.read(reinterpret_cast<char *>(&value), sizeof(T));
    if (!in) throw IncompatibleCheckpointError("truncated checkpoint: " + file.string());
    return value;
}

struct RawCheckpoint {
    nlohmann::json header;
    std::vector<char> payload;
};

RawCheckpoint read_raw(const std::filesystem::path &file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw LoadError(file.string(), "cannot open checkpoint");
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IncompatibleCheckpointError(file.string() + " is not a tamperlab checkpoint");
    }
    const auto version = read_pod<std::uint32_t>(in, file);
    if (version != kCheckpointVersion) {
        throw IncompatibleCheckpointError("checkpoint schema version " + std::to_string(version) +
                                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto header_size = read_pod<std::uint64_t>(in, file);
    std::string header(header_size, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_size));
    const auto payload_size = read_pod<std::uint64_t>(in, file);
    RawCheckpoint raw;
    raw.payload.resize(payload_size);
    in.read(raw.payload.data(), static_cast<std::streamsize>(payload_size));
    if (!in) throw IncompatibleCheckpointError("truncated checkpoint: " + file.string());
    try {
        raw.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception &e) {
        throw IncompatibleCheckpointError("corrupt checkpoint header in " + file.string() + ": " + e.what());
    }
    return raw;
}

} // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const
{
    if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("train config: batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
    if (crop_padding < 0) throw ConfigError("train config: crop_padding must be >= 0");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("train config: validation_fraction must be in [0,1)");
    }
    if (schedule != "cosine" && schedule != "step" && schedule != "constant") {
        throw ConfigError("train config: unknown schedule '" + schedule + "'");
    }
}

double TrainConfig::learning_rate_at(int epoch) const
{
    if (schedule == "cosine" && epochs > 0) {
        return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / epochs));
    }
    if (schedule == "step") {
        double lr = learning_rate;
        if (epoch >= epochs / 2) lr *= 0.1;
        if (epoch >= (3 * epochs) / 4) lr *= 0.1;
        return lr;
    }
    return learning_rate;
}

nlohmann::json TrainConfig::to_json() const
{
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"schedule", schedule},
            {"momentum", momentum},
            {"weight_decay", weight_decay},
            {"random_crop", random_crop},
            {"crop_padding", crop_padding},
            {"horizontal_flip", horizontal_flip},
            {"validation_fraction", validation_fraction},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json &j)
{
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.schedule = j.value("schedule", c.schedule);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.random_crop = j.value("random_crop", c.random_crop);
    c.crop_padding = j.value("crop_padding", c.crop_padding);
    c.horizontal_flip = j.value("horizontal_flip", c.horizontal_flip);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.seed = j.value("seed", c.seed);
    return c;
}

nlohmann::json TrainMetrics::to_json() const
{
    return {{"train_accuracy", train_accuracy},
            {"validation_accuracy", validation_accuracy},
            {"loss_curve", loss_curve},
            {"validation_curve", validation_curve}};
}

TrainMetrics TrainMetrics::from_json(const nlohmann::json &j)
{
    TrainMetrics m;
    m.train_accuracy = j.value("train_accuracy", 0.0);
    m.validation_accuracy = j.value("validation_accuracy", 0.0);
    m.loss_curve = j.value("loss_curve", std::vector<double>{});
    m.validation_curve = j.value("validation_curve", std::vector<double>{});
    return m;
}

nlohmann::json SealedRecord::to_json() const
{
    nlohmann::json j = {{"mode", std::string(to_string(mode))}, {"scenario_seed", scenario_seed}};
    if (scenario) j["scenario"] = scenario->to_json();
    return j;
}

SealedRecord SealedRecord::from_json(const nlohmann::json &j)
{
    SealedRecord r;
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.scenario_seed = j.at("scenario_seed");
    if (j.contains("scenario")) r.scenario = Scenario::from_json(j.at("scenario"));
    return r;
}

// ---------------------------------------------------------------------------
// SuspectModel

SuspectModel::SuspectModel(ArchitectureSpec arch, TrainConfig cfg)
    : network_(std::move(arch)), train_config_(std::move(cfg))
{
    network_.initialize(train_config_.seed);
}

ImageBatch SuspectModel::normalized(const ImageBatch &images) const
{
    if (!(images.shape() == architecture().input)) {
        const auto &s = images.shape();
        throw InputShapeError("image shape " + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
                              std::to_string(s.width) + " does not match the model input");
    }
    ImageBatch copy = images;
    if (!normalization_.mean.empty()) normalization_.apply(copy);
    return copy;
}

Matrix SuspectModel::logits(const ImageBatch &images) const
{
    const ImageBatch input = normalized(images);
    Matrix out(architecture().num_classes, static_cast<Eigen::Index>(input.size()));
    for (std::size_t begin = 0; begin < input.size(); begin += kInferenceChunk) {
        const std::size_t end = std::min(input.size(), begin + kInferenceChunk);
        const auto per = input.shape().size();
        out.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
            network_.logits(input.data().subspan(begin * per, (end - begin) * per), end - begin);
    }
    return out;
}

Matrix SuspectModel::probabilities(const ImageBatch &images) const
{
    Matrix z = logits(images);
    for (Eigen::Index n = 0; n < z.cols(); ++n) {
        const float peak = z.col(n).maxCoeff();
        z.col(n) = (z.col(n).array() - peak).exp().matrix();
        z.col(n) /= z.col(n).sum();
    }
    return z;
}

std::vector<int> SuspectModel::predict(const ImageBatch &images) const
{
    const Matrix z = logits(images);
    std::vector<int> out(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index n = 0; n < z.cols(); ++n) out[static_cast<std::size_t>(n)] = static_cast<int>(argmax_column(z, n));
    return out;
}

std::vector<Matrix> SuspectModel::layer_cells(const ImageBatch &images, std::span<const int> layers) const
{
    for (int l : layers) (void)architecture().cells_in_layer(l);
    const ImageBatch input = normalized(images);
    std::vector<Matrix> out;
    for (int l : layers) out.emplace_back(architecture().cells_in_layer(l), static_cast<Eigen::Index>(input.size()));
    for (std::size_t begin = 0; begin < input.size(); begin += kInferenceChunk) {
        const std::size_t end = std::min(input.size(), begin + kInferenceChunk);
        const auto per = input.shape().size();
        auto part = network_.layer_cells(input.data().subspan(begin * per, (end - begin) * per), end - begin, layers);
        for (std::size_t k = 0; k < layers.size(); ++k) {
            out[k].middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = part[k];
        }
    }
    return out;
}

std::vector<float> SuspectModel::parameter_payload() const
{
    std::vector<float> flat;
    for (const auto &p : network_.parameters()) flat.insert(flat.end(), p.value.begin(), p.value.end());
    return flat;
}

// ---------------------------------------------------------------------------
// Training

SuspectModel train_suspect(const Corpus &corpus, const TrainingSet &training_set, const ArchitectureSpec &arch,
                           const TrainConfig &cfg, const EpochCallback &on_epoch)
{
    arch.validate();
    cfg.validate();
    if (training_set.num_classes() != arch.num_classes) {
        throw ConfigError("training set has " + std::to_string(training_set.num_classes()) +
                          " classes but the architecture outputs " + std::to_string(arch.num_classes));
    }
    if (!(corpus.shape == arch.input)) throw InputShapeError("corpus image shape does not match architecture input");

    std::mt19937_64 rng(cfg.seed);
    auto samples = training_set.samples();
    if (samples.empty()) throw ConfigError("training set is empty");
    std::shuffle(samples.begin(), samples.end(), rng);
    const auto n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(samples.size()));
    std::vector<std::pair<std::size_t, int>> validation(samples.begin(), samples.begin() + static_cast<long>(n_val));
    std::vector<std::pair<std::size_t, int>> train(samples.begin() + static_cast<long>(n_val), samples.end());

    std::vector<std::size_t> train_indices;
    train_indices.reserve(train.size());
    for (const auto &s : train) train_indices.push_back(s.first);

    SuspectModel model(arch, cfg);
    model.set_normalization(channel_statistics(corpus, train_indices));

    ImageBatch val_images(corpus.shape);
    std::vector<int> val_labels;
    for (const auto &[index, label] : validation) {
        val_images.append(corpus.image(index));
        val_labels.push_back(label);
    }
    auto accuracy_on = [&](const ImageBatch &images, const std::vector<int> &labels) {
        if (labels.empty()) return 0.0;
        const auto pred = model.predict(images);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
        return static_cast<double>(hit) / static_cast<double>(labels.size());
    };

    auto &metrics = model.metrics();
    const auto per_image = corpus.shape.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto lr = static_cast<float>(cfg.learning_rate_at(epoch));
        std::shuffle(train.begin(), train.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t hits = 0;
        for (std::size_t begin = 0; begin < train.size(); begin += batch) {
            const std::size_t end = std::min(train.size(), begin + batch);
            if (end - begin < 2) break;
            ImageBatch images(corpus.shape);
            std::vector<int> labels;
            labels.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) {
                images.append(corpus.image(train[k].first));
                labels.push_back(train[k].second);
            }
            auto data = images.mutable_data();
            for (std::size_t k = 0; k < labels.size(); ++k) {
                augment(data.subspan(k * per_image, per_image), corpus.shape, cfg, rng);
            }
            model.normalization().apply(images);
            std::size_t correct = 0;
            const float loss = model.network().train_step(images.data(), labels, lr, static_cast<float>(cfg.momentum),
                                                          static_cast<float>(cfg.weight_decay), &correct);
            if (!std::isfinite(loss)) {
                metrics.loss_curve.push_back(loss);
                throw TrainingFailedError("training diverged (non-finite loss) in epoch " + std::to_string(epoch),
                                          metrics.validation_curve);
            }
            loss_sum += static_cast<double>(loss) * static_cast<double>(labels.size());
            seen += labels.size();
            hits += correct;
        }
        const double mean_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        metrics.train_accuracy = seen ? static_cast<double>(hits) / static_cast<double>(seen) : 0.0;
        metrics.validation_accuracy = val_labels.empty() ? metrics.train_accuracy : accuracy_on(val_images, val_labels);
        metrics.loss_curve.push_back(mean_loss);
        metrics.validation_curve.push_back(metrics.validation_accuracy);
        if (on_epoch) on_epoch(epoch, mean_loss, metrics.train_accuracy, metrics.validation_accuracy);
    }
    if (cfg.epochs > 0) {
        const double chance = 1.0 / arch.num_classes;
        if (metrics.validation_accuracy < 2.0 * chance) {
            throw TrainingFailedError("validation accuracy " + std::to_string(metrics.validation_accuracy) +
                                          " is below twice the chance level " + std::to_string(2.0 * chance),
                                      metrics.validation_curve);
        }
    } else if (!val_labels.empty()) {
        metrics.validation_accuracy = accuracy_on(val_images, val_labels);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_model(const SuspectModel &model, const std::filesystem::path &file)
{
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t floats = 0;
    for (const auto &p : model.network().parameters()) {
        tensors.push_back({{"name", p.name}, {"size", p.value.size()}, {"trainable", p.trainable}});
        floats += p.value.size();
    }
    const nlohmann::json header = {{"format", "tamperlab-checkpoint"},
                                   {"architecture", model.architecture().to_json()},
                                   {"train_config", model.train_config().to_json()},
                                   {"metrics", model.metrics().to_json()},
                                   {"normalization", model.normalization().to_json()},
                                   {"class_index_map", model.class_index_map()},
                                   {"tensors", tensors}};
    const std::string text = header.dump();

    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw LoadError(tmp.string(), "cannot open for writing");
        out.write(kMagic, sizeof(kMagic));
        write_pod(out, kCheckpointVersion);
        write_pod(out, static_cast<std::uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        write_pod(out, floats * sizeof(float));
        for (const auto &p : model.network().parameters()) {
            out.write(reinterpret_cast<const char *>(p.value.data()),
                      static_cast<std::streamsize>(p.value.size() * sizeof(float)));
        }
        if (!out) throw LoadError(tmp.string(), "write failed");
    }
    std::filesystem::rename(tmp, file);
}

SuspectModel load_model(const std::filesystem::path &file)
{
    const RawCheckpoint raw = read_raw(file);
    const auto &h = raw.header;
    if (h.value("format", "") != "tamperlab-checkpoint") {
        throw IncompatibleCheckpointError(file.string() + ": unexpected header format");
    }
    SuspectModel model(ArchitectureSpec::from_json(h.at("architecture")), TrainConfig::from_json(h.at("train_config")));
    model.metrics() = TrainMetrics::from_json(h.at("metrics"));
    model.set_normalization(Normalization::from_json(h.at("normalization")));
    model.set_class_index_map(h.at("class_index_map").get<std::vector<int>>());

    auto &params = model.network().parameters();
    const auto &tensors = h.at("tensors");
    if (tensors.size() != params.size()) {
        throw IncompatibleCheckpointError(file.string() + ": tensor list does not match the architecture");
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto &t = tensors[i];
        if (t.at("name").get<std::string>() != params[i].name || t.at("size").get<std::size_t>() != params[i].value.size()) {
            throw IncompatibleCheckpointError(file.string() + ": tensor '" + t.at("name").get<std::string>() +
                                              "' does not match the architecture");
        }
        const std::size_t bytes = params[i].value.size() * sizeof(float);
        if (offset + bytes > raw.payload.size()) throw IncompatibleCheckpointError("truncated payload: " + file.string());
        std::memcpy(params[i].value.data(), raw.payload.data() + offset, bytes);
        offset += bytes;
    }
    if (offset != raw.payload.size()) throw IncompatibleCheckpointError("trailing payload bytes: " + file.string());
    return model;
}

std::vector<char> checkpoint_payload_bytes(const std::filesystem::path &file)
{
    return read_raw(file).payload;
}

std::filesystem::path sealed_path_for(const std::filesystem::path &checkpoint)
{
    return std::filesystem::path(checkpoint.string() + ".sealed.json");
}

void save_sealed(const SealedRecord &record, const std::filesystem::path &checkpoint)
{
    std::ofstream out(sealed_path_for(checkpoint));
    if (!out) throw LoadError(sealed_path_for(checkpoint).string(), "cannot open for writing");
    out << record.to_json().dump(2) << '\n';
}

std::optional<SealedRecord> load_sealed(const std::filesystem::path &checkpoint)
{
    const auto path = sealed_path_for(checkpoint);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        return SealedRecord::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(path.string(), e.what());
    }
}

CoarsePosition coarse_position(const ArchitectureSpec &arch, int layer)
{
    (void)arch.cells_in_layer(layer);
    return layer < arch.weight_layers() / 2 ? CoarsePosition::Lower : CoarsePosition::Upper;
}

std::vector<CellInfo> enumerate_cells(const ArchitectureSpec &arch)
{
    std::vector<CellInfo> cells;
    int id = 0;
    for (int layer = 0; layer < arch.weight_layers(); ++layer) {
        const auto pos = coarse_position(arch, layer);
        for (int c = 0; c < arch.cells_in_layer(layer); ++c) cells.push_back({id++, layer, pos});
    }
    return cells;
}

} // namespace tamperlab
