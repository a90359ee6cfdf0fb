#include "tamperlab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tamperlab/errors.hpp"
#include "tamperlab/hashing.hpp"
#include "tamperlab/synthetic.hpp"

namespace tamperlab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// ImageBatch

ImageBatch::ImageBatch(ImageShape shape, std::vector<float> data) : shape_(shape), data_(std::move(data))
{
    if (shape_.size() == 0 || data_.size() % shape_.size() != 0) {
        throw InputShapeError("image data size is not a multiple of the image shape");
    }
}

std::span<const float> ImageBatch::image(std::size_t i) const
{
    if (i >= size()) throw std::out_of_range("image index out of range");
    return std::span<const float>(data_).subspan(i * shape_.size(), shape_.size());
}

void ImageBatch::append(std::span<const float> pixels)
{
    if (pixels.size() != shape_.size()) throw InputShapeError("appended image has the wrong number of values");
    data_.insert(data_.end(), pixels.begin(), pixels.end());
}

void ImageBatch::append(const ImageBatch &other)
{
    if (!(other.shape_ == shape_)) throw InputShapeError("cannot append images of a different shape");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
}

ImageBatch ImageBatch::slice(std::size_t begin, std::size_t end) const
{
    end = std::min(end, size());
    begin = std::min(begin, end);
    const auto per = shape_.size();
    return ImageBatch(shape_, std::vector<float>(data_.begin() + static_cast<long>(begin * per),
                                                 data_.begin() + static_cast<long>(end * per)));
}

// ---------------------------------------------------------------------------
// Corpus

std::span<const float> Corpus::image(std::size_t index) const
{
    if (index >= num_images()) throw std::out_of_range("corpus image index out of range");
    return std::span<const float>(pixels).subspan(index * shape.size(), shape.size());
}

std::vector<std::size_t> Corpus::indices_of(int fine_class, std::optional<Split> which) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < num_images(); ++i) {
        if (fine_labels[i] == fine_class && (!which || split[i] == *which)) out.push_back(i);
    }
    return out;
}

std::vector<int> Corpus::classes_in_category(int category) const
{
    std::vector<int> out;
    for (int c = 0; c < num_classes(); ++c) {
        if (coarse_map[static_cast<std::size_t>(c)] == category) out.push_back(c);
    }
    return out;
}

ImageBatch Corpus::gather(std::span<const std::size_t> indices) const
{
    ImageBatch batch(shape);
    for (auto i : indices) batch.append(image(i));
    return batch;
}

void Corpus::validate() const
{
    if (shape.size() == 0) throw CorruptCorpusError("corpus has an empty image shape");
    if (pixels.size() != num_images() * shape.size()) {
        throw CorruptCorpusError("pixel buffer does not match image count");
    }
    if (split.size() != num_images()) throw CorruptCorpusError("split flags do not match image count");
    if (class_names.size() != coarse_map.size()) throw CorruptCorpusError("class_names and category_map differ in length");
    for (std::size_t c = 0; c < coarse_map.size(); ++c) {
        if (coarse_map[c] < 0 || coarse_map[c] >= num_categories()) {
            throw CorruptCorpusError("class " + std::to_string(c) + " maps to invalid category " +
                                     std::to_string(coarse_map[c]));
        }
    }
    for (std::size_t i = 0; i < num_images(); ++i) {
        if (fine_labels[i] < 0 || fine_labels[i] >= num_classes()) {
            throw CorruptCorpusError("image " + std::to_string(i) + " has out-of-range label " +
                                     std::to_string(fine_labels[i]));
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest

CorpusManifest CorpusManifest::from_json(const nlohmann::json &j)
{
    try {
        CorpusManifest m;
        m.format = j.value("format", m.format);
        m.path = j.value("path", std::string{});
        m.class_names = j.value("class_names", std::vector<std::string>{});
        m.category_map = j.value("category_map", std::vector<int>{});
        m.category_names = j.value("category_names", std::vector<std::string>{});
        m.image_size = j.value("image_size", 0);
        m.options = j.value("options", nlohmann::json::object());
        if (m.format != "cifar100" && m.format != "directory" && m.format != "synthetic") {
            throw ConfigError("manifest: unknown format '" + m.format + "'");
        }
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
}

CorpusManifest CorpusManifest::from_file(const fs::path &file)
{
    std::ifstream in(file);
    if (!in) throw LoadError(file.string(), "cannot open manifest");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError("manifest " + file.string() + ": " + e.what());
    }
    auto m = from_json(j);
    if (!m.path.empty() && m.path.is_relative()) m.path = file.parent_path() / m.path;
    return m;
}

nlohmann::json CorpusManifest::to_json() const
{
    return {{"format", format},
            {"path", path.string()},
            {"class_names", class_names},
            {"category_map", category_map},
            {"category_names", category_names},
            {"image_size", image_size},
            {"options", options}};
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

constexpr int kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 2 + kCifarPixels;
constexpr int kCifarFine = 100;
constexpr int kCifarCoarse = 20;

std::vector<std::string> read_lines(const fs::path &file)
{
    std::vector<std::string> out;
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

void apply_manifest_names(Corpus &corpus, const CorpusManifest &manifest)
{
    if (!manifest.class_names.empty()) {
        if (static_cast<int>(manifest.class_names.size()) != corpus.num_classes()) {
            throw CorruptCorpusError("manifest lists " + std::to_string(manifest.class_names.size()) +
                                     " class names for a corpus with " + std::to_string(corpus.num_classes()) +
                                     " classes");
        }
        corpus.class_names = manifest.class_names;
    }
    if (!manifest.category_names.empty()) {
        if (static_cast<int>(manifest.category_names.size()) != corpus.num_categories()) {
            throw CorruptCorpusError("manifest category_names does not match the category count");
        }
        corpus.category_names = manifest.category_names;
    }
}

Corpus load_cifar100(const fs::path &dir, const CorpusManifest &manifest)
{
    Corpus corpus;
    corpus.shape = {3, kCifarSide, kCifarSide};
    corpus.coarse_map.assign(kCifarFine, -1);
    for (const auto &[name, split] : {std::pair{"train.bin", Split::Train}, std::pair{"test.bin", Split::Test}}) {
        const fs::path file = dir / name;
        if (!fs::exists(file)) throw LoadError(file.string(), "file not found");
        read_cifar100_binary(file, split, corpus);
    }
    for (int c = 0; c < kCifarFine; ++c) {
        if (corpus.coarse_map[static_cast<std::size_t>(c)] < 0) {
            throw CorruptCorpusError("fine class " + std::to_string(c) + " has no images");
        }
    }
    corpus.class_names = read_lines(dir / "fine_label_names.txt");
    corpus.category_names = read_lines(dir / "coarse_label_names.txt");
    if (corpus.class_names.size() != kCifarFine) {
        corpus.class_names.clear();
        for (int c = 0; c < kCifarFine; ++c) corpus.class_names.push_back("class_" + std::to_string(c));
    }
    if (corpus.category_names.size() != kCifarCoarse) {
        corpus.category_names.clear();
        for (int c = 0; c < kCifarCoarse; ++c) corpus.category_names.push_back("category_" + std::to_string(c));
    }
    if (!manifest.category_map.empty() && manifest.category_map != corpus.coarse_map) {
        throw CorruptCorpusError("manifest category_map disagrees with the coarse labels stored in the archive");
    }
    apply_manifest_names(corpus, manifest);
    return corpus;
}

// Binary PPM (P6, maxval 255).
std::vector<float> read_ppm(const fs::path &file, ImageShape &shape)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw LoadError(file.string(), "cannot open image");
    std::string magic;
    int w = 0;
    int h = 0;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
        throw CorruptCorpusError(file.string() + ": expected a binary 8-bit PPM (P6)");
    }
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw CorruptCorpusError(file.string() + ": truncated pixel data");
    shape = {3, h, w};
    std::vector<float> chw(raw.size());
    const std::size_t hw = static_cast<std::size_t>(w) * h;
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t c = 0; c < 3; ++c) chw[c * hw + p] = static_cast<float>(raw[p * 3 + c]) / 255.0F;
    }
    return chw;
}

Corpus load_directory(const fs::path &dir, const CorpusManifest &manifest)
{
    if (manifest.class_names.empty() || manifest.category_map.size() != manifest.class_names.size()) {
        throw ConfigError("directory manifest needs class_names and a category_map of equal length");
    }
    Corpus corpus;
    corpus.coarse_map = manifest.category_map;
    corpus.class_names = manifest.class_names;
    const int categories = *std::ranges::max_element(manifest.category_map) + 1;
    if (!manifest.category_names.empty()) {
        corpus.category_names = manifest.category_names;
    } else {
        for (int c = 0; c < categories; ++c) corpus.category_names.push_back("category_" + std::to_string(c));
    }
    bool have_shape = false;
    for (const auto &[sub, split] : {std::pair{"train", Split::Train}, std::pair{"test", Split::Test}}) {
        for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
            const fs::path class_dir = dir / sub / manifest.class_names[c];
            if (!fs::is_directory(class_dir)) throw LoadError(class_dir.string(), "class directory not found");
            std::vector<fs::path> files;
            for (const auto &entry : fs::directory_iterator(class_dir)) {
                if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
            }
            std::ranges::sort(files);
            for (const auto &f : files) {
                ImageShape s;
                auto chw = read_ppm(f, s);
                if (!have_shape) {
                    corpus.shape = s;
                    have_shape = true;
                } else if (!(s == corpus.shape)) {
                    throw CorruptCorpusError(f.string() + ": image size differs from the rest of the corpus");
                }
                corpus.pixels.insert(corpus.pixels.end(), chw.begin(), chw.end());
                corpus.fine_labels.push_back(static_cast<int>(c));
                corpus.split.push_back(split);
            }
        }
    }
    if (!have_shape) throw CorruptCorpusError(dir.string() + ": no images found");
    return corpus;
}

} // namespace

void read_cifar100_binary(const fs::path &file, Split split, Corpus &corpus)
{
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw LoadError(file.string(), "cannot open");
    const auto size = static_cast<std::size_t>(in.tellg());
    if (size % kCifarRecord != 0) {
        throw CorruptCorpusError(file.string() + ": size is not a multiple of the 3074-byte record");
    }
    in.seekg(0);
    std::vector<unsigned char> raw(size);
    in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(size));
    if (corpus.coarse_map.size() < kCifarFine) corpus.coarse_map.resize(kCifarFine, -1);
    const std::size_t records = size / kCifarRecord;
    corpus.pixels.reserve(corpus.pixels.size() + records * kCifarPixels);
    for (std::size_t r = 0; r < records; ++r) {
        const unsigned char *rec = raw.data() + r * kCifarRecord;
        const int coarse = rec[0];
        const int fine = rec[1];
        if (fine >= kCifarFine || coarse >= kCifarCoarse) {
            throw CorruptCorpusError(file.string() + ": record " + std::to_string(r) + " has label " +
                                     std::to_string(fine) + "/" + std::to_string(coarse) + " out of range");
        }
        auto &mapped = corpus.coarse_map[static_cast<std::size_t>(fine)];
        if (mapped >= 0 && mapped != coarse) {
            throw CorruptCorpusError(file.string() + ": fine class " + std::to_string(fine) +
                                     " appears under two coarse labels");
        }
        mapped = coarse;
        for (std::size_t p = 0; p < kCifarPixels; ++p) corpus.pixels.push_back(static_cast<float>(rec[2 + p]) / 255.0F);
        corpus.fine_labels.push_back(fine);
        corpus.split.push_back(split);
    }
}

void write_cifar100_binary(const fs::path &file, const Corpus &corpus, Split split)
{
    if (!(corpus.shape == ImageShape{3, kCifarSide, kCifarSide})) {
        throw InputShapeError("CIFAR-100 binary layout requires 3x32x32 images");
    }
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError(file.string(), "cannot open for writing");
    std::vector<unsigned char> rec(kCifarRecord);
    for (std::size_t i = 0; i < corpus.num_images(); ++i) {
        if (corpus.split[i] != split) continue;
        rec[0] = static_cast<unsigned char>(corpus.category_of(corpus.fine_labels[i]));
        rec[1] = static_cast<unsigned char>(corpus.fine_labels[i]);
        const auto img = corpus.image(i);
        for (std::size_t p = 0; p < kCifarPixels; ++p) {
            rec[2 + p] = static_cast<unsigned char>(std::lround(std::clamp(img[p], 0.0F, 1.0F) * 255.0F));
        }
        out.write(reinterpret_cast<const char *>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
}

Corpus downsample(const Corpus &corpus, int target_size)
{
    if (target_size <= 0 || corpus.shape.height % target_size != 0 || corpus.shape.width % target_size != 0 ||
        corpus.shape.height != corpus.shape.width) {
        throw ConfigError("image_size must evenly divide the native square image size");
    }
    const int f = corpus.shape.height / target_size;
    if (f == 1) return corpus;
    Corpus out = corpus;
    out.shape = {corpus.shape.channels, target_size, target_size};
    out.pixels.assign(corpus.num_images() * out.shape.size(), 0.0F);
    const int h = corpus.shape.height;
    const int w = corpus.shape.width;
    const float scale = 1.0F / static_cast<float>(f * f);
    for (std::size_t i = 0; i < corpus.num_images(); ++i) {
        const float *src = corpus.pixels.data() + i * corpus.shape.size();
        float *dst = out.pixels.data() + i * out.shape.size();
        for (int c = 0; c < corpus.shape.channels; ++c) {
            for (int y = 0; y < target_size; ++y) {
                for (int x = 0; x < target_size; ++x) {
                    float acc = 0.0F;
                    for (int dy = 0; dy < f; ++dy) {
                        for (int dx = 0; dx < f; ++dx) acc += src[(c * h + y * f + dy) * w + x * f + dx];
                    }
                    dst[(c * target_size + y) * target_size + x] = acc * scale;
                }
            }
        }
    }
    return out;
}

Corpus load_corpus(const fs::path &path, const CorpusManifest &manifest)
{
    Corpus corpus;
    if (manifest.format == "cifar100") {
        corpus = load_cifar100(path, manifest);
    } else if (manifest.format == "directory") {
        corpus = load_directory(path, manifest);
    } else if (manifest.format == "synthetic") {
        corpus = generate_synthetic_corpus(SyntheticCorpusConfig::from_json(manifest.options));
        apply_manifest_names(corpus, manifest);
    } else {
        throw ConfigError("unknown corpus format '" + manifest.format + "'");
    }
    if (manifest.image_size > 0 && manifest.image_size != corpus.shape.height) {
        corpus = downsample(corpus, manifest.image_size);
    }
    corpus.validate();
    return corpus;
}

Corpus load_corpus(const CorpusManifest &manifest) { return load_corpus(manifest.path, manifest); }

// ---------------------------------------------------------------------------
// Normalization

void Normalization::apply(ImageBatch &batch) const
{
    const auto &s = batch.shape();
    if (mean.size() != static_cast<std::size_t>(s.channels)) throw InputShapeError("normalization channel mismatch");
    const std::size_t hw = static_cast<std::size_t>(s.height) * s.width;
    auto data = batch.mutable_data();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (int c = 0; c < s.channels; ++c) {
            float *plane = data.data() + i * s.size() + static_cast<std::size_t>(c) * hw;
            const float m = mean[static_cast<std::size_t>(c)];
            const float inv = 1.0F / stddev[static_cast<std::size_t>(c)];
            for (std::size_t p = 0; p < hw; ++p) plane[p] = (plane[p] - m) * inv;
        }
    }
}

nlohmann::json Normalization::to_json() const { return {{"mean", mean}, {"std", stddev}}; }

Normalization Normalization::from_json(const nlohmann::json &j)
{
    return {j.at("mean").get<std::vector<float>>(), j.at("std").get<std::vector<float>>()};
}

Normalization channel_statistics(const Corpus &corpus, std::span<const std::size_t> indices)
{
    const auto &s = corpus.shape;
    const std::size_t hw = static_cast<std::size_t>(s.height) * s.width;
    std::vector<double> sum(static_cast<std::size_t>(s.channels), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(s.channels), 0.0);
    for (auto i : indices) {
        const auto img = corpus.image(i);
        for (std::size_t c = 0; c < sum.size(); ++c) {
            for (std::size_t p = 0; p < hw; ++p) {
                const double v = img[c * hw + p];
                sum[c] += v;
                sq[c] += v * v;
            }
        }
    }
    Normalization n;
    const double count = static_cast<double>(indices.size() * hw);
    for (std::size_t c = 0; c < sum.size(); ++c) {
        const double m = count > 0 ? sum[c] / count : 0.0;
        const double var = count > 0 ? std::max(sq[c] / count - m * m, 0.0) : 1.0;
        n.mean.push_back(static_cast<float>(m));
        n.stddev.push_back(static_cast<float>(std::max(std::sqrt(var), 1e-6)));
    }
    return n;
}

// ---------------------------------------------------------------------------
// Scenarios

std::string_view to_string(TamperMode mode)
{
    switch (mode) {
    case TamperMode::NT: return "NT";
    case TamperMode::RT: return "RT";
    case TamperMode::ET: return "ET";
    }
    return "?";
}

TamperMode parse_mode(std::string_view text)
{
    if (text == "NT") return TamperMode::NT;
    if (text == "RT") return TamperMode::RT;
    if (text == "ET") return TamperMode::ET;
    throw ConfigError("unknown tamper mode '" + std::string(text) + "' (expected NT, RT or ET)");
}

int Scenario::output_index_of(int fine_class) const
{
    const auto it = std::ranges::find(retained_classes, fine_class);
    return it == retained_classes.end() ? -1 : static_cast<int>(it - retained_classes.begin());
}

nlohmann::json Scenario::to_json() const
{
    return {{"class_O", class_O},
            {"class_A_attack", class_A_attack},
            {"heldout", {{"zeta_O", heldout.zeta_O}, {"zeta_A", heldout.zeta_A}, {"zeta_R", heldout.zeta_R}}},
            {"action_class", action_class},
            {"mode", std::string(to_string(mode))},
            {"seed", seed},
            {"retained_classes", retained_classes}};
}

Scenario Scenario::from_json(const nlohmann::json &j)
{
    Scenario s;
    s.class_O = j.at("class_O");
    s.class_A_attack = j.at("class_A_attack");
    const auto &h = j.at("heldout");
    s.heldout = {h.at("zeta_O"), h.at("zeta_A"), h.at("zeta_R")};
    s.action_class = j.at("action_class");
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.seed = j.at("seed");
    s.retained_classes = j.at("retained_classes").get<std::vector<int>>();
    return s;
}

Scenario build_scenario(const Corpus &corpus, TamperMode mode, std::uint64_t seed)
{
    std::vector<int> pairable;  // categories with at least two classes
    for (int g = 0; g < corpus.num_categories(); ++g) {
        if (corpus.classes_in_category(g).size() >= 2) pairable.push_back(g);
    }
    if (corpus.num_categories() < 3 || pairable.size() < 2) {
        throw ScenarioInfeasibleError("scenario needs >= 3 categories, two of them with >= 2 classes (corpus has " +
                                      std::to_string(corpus.num_categories()) + " categories)");
    }
    std::mt19937_64 rng(mix_seed(seed));
    auto pick = [&rng](const std::vector<int> &from) {
        std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
        return from[d(rng)];
    };
    auto pick_pair = [&](int category) {
        auto classes = corpus.classes_in_category(category);
        const int first = pick(classes);
        std::erase(classes, first);
        return std::pair{first, pick(classes)};
    };

    const int cat_O = pick(pairable);
    std::erase(pairable, cat_O);
    const int cat_A = pick(pairable);
    std::vector<int> others;
    for (int g = 0; g < corpus.num_categories(); ++g) {
        if (g != cat_O && g != cat_A && !corpus.classes_in_category(g).empty()) others.push_back(g);
    }
    if (others.empty()) throw ScenarioInfeasibleError("no third category left for the unrelated set");
    const int cat_R = pick(others);

    Scenario s;
    s.mode = mode;
    s.seed = seed;
    std::tie(s.class_O, s.heldout.zeta_O) = pick_pair(cat_O);
    std::tie(s.class_A_attack, s.heldout.zeta_A) = pick_pair(cat_A);
    s.heldout.zeta_R = pick(corpus.classes_in_category(cat_R));
    for (int c = 0; c < corpus.num_classes(); ++c) {
        if (c != s.heldout.zeta_O && c != s.heldout.zeta_A && c != s.heldout.zeta_R) s.retained_classes.push_back(c);
    }
    s.action_class = s.output_index_of(s.class_O);
    return s;
}

std::size_t TrainingSet::total() const noexcept
{
    std::size_t n = 0;
    for (const auto &c : per_class) n += c.size();
    return n;
}

std::vector<std::pair<std::size_t, int>> TrainingSet::samples() const
{
    std::vector<std::pair<std::size_t, int>> out;
    out.reserve(total());
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        for (auto i : per_class[c]) out.emplace_back(i, static_cast<int>(c));
    }
    return out;
}

std::string TrainingSet::digest() const
{
    Sha256 h;
    h.update_pod(static_cast<std::uint64_t>(per_class.size()));
    for (const auto &c : per_class) {
        h.update_pod(static_cast<std::uint64_t>(c.size()));
        for (auto i : c) h.update_pod(static_cast<std::uint64_t>(i));
    }
    return h.finish();
}

TrainingSet build_training_set(const Corpus &corpus, const Scenario &scenario)
{
    TrainingSet t;
    t.per_class.reserve(scenario.retained_classes.size());
    for (int fine : scenario.retained_classes) t.per_class.push_back(corpus.indices_of(fine, Split::Train));

    const auto a = static_cast<std::size_t>(scenario.action_class);
    const int attack_slot = scenario.output_index_of(scenario.class_A_attack);
    auto s_a = corpus.indices_of(scenario.class_A_attack, Split::Train);
    switch (scenario.mode) {
    case TamperMode::NT:
        break;
    case TamperMode::RT:
        t.per_class[a] = std::move(s_a);
        t.per_class[static_cast<std::size_t>(attack_slot)].clear();
        break;
    case TamperMode::ET:
        t.per_class[a].insert(t.per_class[a].end(), s_a.begin(), s_a.end());
        t.per_class[static_cast<std::size_t>(attack_slot)].clear();
        break;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Investigator data

namespace {

std::vector<std::size_t> shuffled_order(std::uint64_t seed)
{
    std::vector<std::size_t> order{0, 1, 2};
    std::mt19937_64 rng(derive_seed(seed, 0xA11CE));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

} // namespace

EvidenceManifest evidence_manifest(const Corpus &corpus, const Scenario &scenario)
{
    EvidenceManifest e;
    e.action_class = scenario.action_class;
    e.retained_classes = scenario.retained_classes;
    const std::array<int, 3> held{scenario.heldout.zeta_O, scenario.heldout.zeta_A, scenario.heldout.zeta_R};
    const auto order = shuffled_order(scenario.seed);
    for (std::size_t k = 0; k < 3; ++k) {
        e.tags.push_back("set-" + std::to_string(k + 1));
        e.unlabeled_indices.push_back(corpus.indices_of(held[order[k]]));
    }
    return e;
}

PublicSets materialize(const Corpus &corpus, const EvidenceManifest &evidence)
{
    PublicSets p;
    for (std::size_t i = 0; i < evidence.retained_classes.size(); ++i) {
        const int fine = evidence.retained_classes[i];
        if (fine < 0 || fine >= corpus.num_classes()) throw CorruptCorpusError("evidence names unknown class");
        const auto idx = corpus.indices_of(fine, Split::Test);
        SampleSet s;
        s.name = static_cast<int>(i) == evidence.action_class ? "L_A" : "L_" + std::to_string(i);
        s.images = corpus.gather(idx);
        s.labels = std::vector<int>(idx.size(), static_cast<int>(i));
        s.source_class = fine;
        s.source_category = corpus.category_of(fine);
        p.labeled.push_back(std::move(s));
    }
    for (std::size_t k = 0; k < evidence.tags.size(); ++k) {
        SampleSet s;
        s.name = evidence.tags[k];
        s.images = corpus.gather(evidence.unlabeled_indices.at(k));
        p.unlabeled.push_back(std::move(s));
    }
    return p;
}

PublicSets public_sets(const Corpus &corpus, const Scenario &scenario)
{
    PublicSets p = materialize(corpus, evidence_manifest(corpus, scenario));
    static constexpr std::array<const char *, 3> kTruth{"zeta_O", "zeta_A", "zeta_R"};
    for (auto k : shuffled_order(scenario.seed)) p.unlabeled_truth.emplace_back(kTruth[k]);
    return p;
}

nlohmann::json EvidenceManifest::to_json() const
{
    nlohmann::json sets = nlohmann::json::array();
    for (std::size_t k = 0; k < tags.size(); ++k) sets.push_back({{"tag", tags[k]}, {"indices", unlabeled_indices[k]}});
    return {{"action_class", action_class}, {"retained_classes", retained_classes}, {"unlabeled", sets}};
}

EvidenceManifest EvidenceManifest::from_json(const nlohmann::json &j)
{
    EvidenceManifest e;
    e.action_class = j.at("action_class");
    e.retained_classes = j.at("retained_classes").get<std::vector<int>>();
    for (const auto &s : j.at("unlabeled")) {
        e.tags.push_back(s.at("tag"));
        e.unlabeled_indices.push_back(s.at("indices").get<std::vector<std::size_t>>());
    }
    return e;
}

} // namespace tamperlab
