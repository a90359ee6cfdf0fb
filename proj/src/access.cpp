#include "tamperlab/access.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tamperlab/errors.hpp"
#include "tamperlab/hashing.hpp"

namespace tamperlab {

LayerWindow observation_window(const ArchitectureSpec &arch, int layer)
{
    (void)arch.cells_in_layer(layer);
    const int n = arch.weight_layers();
    if (n <= 3) return {0, n - 1};
    const int first = std::clamp(layer - 1, 0, n - 3);
    return {first, first + 2};
}

bool CellReadings::same_layout(const CellReadings &other) const
{
    return access == other.access && window == other.window && cell_ids == other.cell_ids;
}

namespace {

void check_window(const ArchitectureSpec &arch, LayerWindow w)
{
    if (w.first > w.last) throw LayerOutOfRangeError("empty layer window");
    (void)arch.cells_in_layer(w.first);
    (void)arch.cells_in_layer(w.last);
}

// Stacks the window's layers into one table in true cell order.
CellReadings raw_window(const SuspectModel &model, const ImageBatch &images, LayerWindow w)
{
    const auto &arch = model.architecture();
    check_window(arch, w);
    std::vector<int> layers(static_cast<std::size_t>(w.size()));
    std::iota(layers.begin(), layers.end(), w.first);
    const auto per_layer = model.layer_cells(images, layers);

    int first_id = 0;
    for (int l = 0; l < w.first; ++l) first_id += arch.cells_in_layer(l);

    CellReadings r;
    r.access = "white";
    r.window = w;
    Eigen::Index rows = 0;
    for (const auto &m : per_layer) rows += m.rows();
    r.values.resize(rows, static_cast<Eigen::Index>(images.size()));
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < per_layer.size(); ++k) {
        const int layer = layers[k];
        const auto pos = coarse_position(arch, layer);
        const bool rectified = arch.layer_is_rectified(layer);
        r.values.middleRows(row, per_layer[k].rows()) = per_layer[k];
        for (Eigen::Index c = 0; c < per_layer[k].rows(); ++c) {
            r.cell_ids.push_back(static_cast<std::uint32_t>(first_id + row + c));
            r.tags.push_back(pos);
            r.eligible.push_back(rectified);
        }
        row += per_layer[k].rows();
    }
    return r;
}

} // namespace

CellReadings WhiteBoxHandle::read_layer(const ImageBatch &images, int layer) const
{
    return read_window(images, {layer, layer});
}

CellReadings WhiteBoxHandle::read_window(const ImageBatch &images, LayerWindow window) const
{
    return raw_window(*model_, images, window);
}

GreyBoxHandle::GreyBoxHandle(const SuspectModel &model, std::uint64_t permutation_seed)
    : model_(&model), seed_(permutation_seed)
{
}

std::vector<std::uint32_t> GreyBoxHandle::permutation(LayerWindow window) const
{
    const auto &arch = model_->architecture();
    check_window(arch, window);
    std::size_t n = 0;
    for (int l = window.first; l <= window.last; ++l) n += static_cast<std::size_t>(arch.cells_in_layer(l));
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0U);
    std::mt19937_64 rng(derive_seed(derive_seed(seed_, static_cast<std::uint64_t>(window.first)),
                                    static_cast<std::uint64_t>(window.last)));
    // Fisher-Yates by hand: std::shuffle's draw sequence differs across standard libraries.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

CellReadings GreyBoxHandle::probe(const ImageBatch &images, int layer) const
{
    const auto window = observation_window(model_->architecture(), layer);
    const CellReadings raw = raw_window(*model_, images, window);
    const auto perm = permutation(window);

    CellReadings r;
    r.access = "grey";
    r.window = window;
    const std::size_t n = raw.cells();
    r.cell_ids.resize(n);
    std::iota(r.cell_ids.begin(), r.cell_ids.end(), 0U);
    r.tags.resize(n);
    r.eligible.resize(n);
    r.values.resize(static_cast<Eigen::Index>(n), raw.values.cols());
    for (std::size_t j = 0; j < n; ++j) {
        const auto k = perm[j];
        r.tags[k] = raw.tags[j];
        r.eligible[k] = raw.eligible[j];
        r.values.row(k) = (raw.values.row(static_cast<Eigen::Index>(j)).array() != 0.0F).cast<float>();
    }
    return r;
}

std::vector<GreyBoxObservation> observations(const CellReadings &readings)
{
    std::vector<GreyBoxObservation> out(readings.inputs());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].input_id = i;
        for (std::size_t c = 0; c < readings.cells(); ++c) {
            const float v = readings.values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
            out[i].readings[readings.cell_ids[c]] = v != 0.0F ? 1 : 0;
            out[i].tags[readings.cell_ids[c]] = readings.tags[c];
        }
    }
    return out;
}

std::string to_string(CoarsePosition position)
{
    return position == CoarsePosition::Lower ? "lower" : "upper";
}

void write_observation_dump(const std::filesystem::path &file, const CellReadings &readings)
{
    std::ofstream out(file);
    if (!out) throw LoadError(file.string(), "cannot open for writing");
    out << "input_id,cell_id,reading,coarse_tag\n";
    out.precision(9);
    for (std::size_t i = 0; i < readings.inputs(); ++i) {
        for (std::size_t c = 0; c < readings.cells(); ++c) {
            out << i << ',' << readings.cell_ids[c] << ','
                << readings.values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) << ','
                << to_string(readings.tags[c]) << '\n';
        }
    }
    if (!out) throw LoadError(file.string(), "write failed");
}

CellReadings read_observation_dump(const std::filesystem::path &file)
{
    std::ifstream in(file);
    if (!in) throw LoadError(file.string(), "cannot open");
    std::string line;
    if (!std::getline(in, line) || line != "input_id,cell_id,reading,coarse_tag") {
        throw LoadError(file.string(), "missing observation dump header");
    }
    std::map<std::uint32_t, std::size_t> row_of;
    std::vector<std::uint32_t> ids;
    std::vector<CoarsePosition> tags;
    std::vector<std::vector<float>> columns;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f[4];
        for (auto &field : f) std::getline(ss, field, ',');
        std::size_t input = 0;
        std::uint32_t cell = 0;
        float value = 0.0F;
        try {
            input = std::stoul(f[0]);
            cell = static_cast<std::uint32_t>(std::stoul(f[1]));
            value = std::stof(f[2]);
        } catch (const std::exception &) {
            throw LoadError(file.string(), "malformed row at line " + std::to_string(line_no));
        }
        if (f[3] != "lower" && f[3] != "upper") {
            throw LoadError(file.string(), "bad coarse tag at line " + std::to_string(line_no));
        }
        auto [it, inserted] = row_of.try_emplace(cell, ids.size());
        if (inserted) {
            ids.push_back(cell);
            tags.push_back(f[3] == "lower" ? CoarsePosition::Lower : CoarsePosition::Upper);
        }
        if (input >= columns.size()) columns.resize(input + 1);
        auto &col = columns[input];
        if (col.size() <= it->second) col.resize(it->second + 1, 0.0F);
        col[it->second] = value;
    }
    CellReadings r;
    r.cell_ids = ids;
    r.tags = tags;
    r.eligible.assign(ids.size(), true);
    r.values = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) {
        for (std::size_t c = 0; c < columns[i].size(); ++c) {
            r.values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = columns[i][c];
        }
    }
    return r;
}

} // namespace tamperlab
