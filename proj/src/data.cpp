#include "ncens/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ncens/errors.hpp"
#include "ncens/rng.hpp"

namespace ncens {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r'))
        --last;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && first != last;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void BlobSpec::validate() const {
    if (classes == 0 || per_class == 0 || dim == 0)
        throw ConfigError("blob spec: classes, per_class and dim must be positive");
    if (!(cluster_std > 0.0)) throw ConfigError("blob spec: cluster_std must be > 0");
    if (!(center_spread > 0.0)) throw ConfigError("blob spec: center_spread must be > 0");
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& class_names) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        rows.push_back(split_commas(line));
        if (rows.back().size() != rows.front().size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row (" +
                             std::to_string(rows.back().size()) + " cells, expected " +
                             std::to_string(rows.front().size()) + ")");
    }
    if (rows.empty()) throw EmptyInputError(path + ": empty file");

    const std::size_t ncols = rows.front().size();
    if (ncols < 2) throw ParseError(path + ": need at least one feature and a label column");

    // Resolve the label column: integer index or header name. A named label
    // column implies the first row is a header; with an index, the first row
    // is a header when any non-label cell fails to parse as a number.
    long label_idx;
    bool has_header;
    double idx_val;
    if (parse_double(label_column, idx_val) && idx_val == std::floor(idx_val)) {
        label_idx = static_cast<long>(idx_val);
        if (label_idx < 0) label_idx += static_cast<long>(ncols);
        if (label_idx < 0 || static_cast<std::size_t>(label_idx) >= ncols)
            throw ConfigError("label column index out of range");
        has_header = false;
        for (std::size_t c = 0; c < ncols; ++c) {
            double v;
            if (c != static_cast<std::size_t>(label_idx) && !parse_double(rows.front()[c], v)) {
                has_header = true;
                break;
            }
        }
    } else {
        has_header = true;
        auto it = std::find_if(rows.front().begin(), rows.front().end(),
                               [&](const std::string& h) { return trim(h) == label_column; });
        if (it == rows.front().end())
            throw ConfigError("label column '" + label_column + "' not found in header");
        label_idx = it - rows.front().begin();
    }

    const std::size_t first_data = has_header ? 1 : 0;
    const std::size_t n = rows.size() - first_data;
    if (n == 0) throw EmptyInputError(path + ": no data rows");

    Dataset ds;
    ds.features = Matrix(n, ncols - 1);
    ds.labels.resize(n);
    ds.class_names = class_names;

    for (std::size_t r = 0; r < n; ++r) {
        const auto& cells = rows[r + first_data];
        std::size_t fi = 0;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (c == static_cast<std::size_t>(label_idx)) continue;
            double v;
            if (!parse_double(cells[c], v) || !std::isfinite(v))
                throw ParseError(path + ": row " + std::to_string(r + first_data + 1) +
                                 ": cannot parse '" + cells[c] + "' as a number");
            ds.features(r, fi++) = v;
        }
        const std::string label = trim(cells[label_idx]);
        auto it = std::find(ds.class_names.begin(), ds.class_names.end(), label);
        if (it == ds.class_names.end()) {
            if (!class_names.empty())
                throw ParseError(path + ": row " + std::to_string(r + first_data + 1) +
                                 ": unknown class '" + label + "'");
            ds.class_names.push_back(label);
            it = ds.class_names.end() - 1;
        }
        ds.labels[r] = static_cast<std::size_t>(it - ds.class_names.begin());
    }
    ds.class_count = ds.class_names.size();
    return ds;
}

void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    for (std::size_t c = 0; c < dataset.dim(); ++c) out << "f" << c << ",";
    out << "label\n";
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        for (std::size_t c = 0; c < dataset.dim(); ++c) out << dataset.features(r, c) << ",";
        if (!dataset.class_names.empty())
            out << dataset.class_names[dataset.labels[r]];
        else
            out << dataset.labels[r];
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

Dataset gen_blobs(const BlobSpec& spec) {
    spec.validate();
    Xoshiro256pp rng(spec.seed);

    Matrix centers(spec.classes, spec.dim);
    for (auto& c : centers.data) c = rng.uniform(-spec.center_spread, spec.center_spread);

    const std::size_t n = spec.classes * spec.per_class;
    Dataset ds;
    ds.features = Matrix(n, spec.dim);
    ds.labels.resize(n);
    ds.class_count = spec.classes;
    for (std::size_t k = 0; k < spec.classes; ++k)
        ds.class_names.push_back(std::to_string(k));

    std::size_t row = 0;
    for (std::size_t k = 0; k < spec.classes; ++k) {
        for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
            for (std::size_t d = 0; d < spec.dim; ++d)
                ds.features(row, d) = centers(k, d) + rng.gaussian(0.0, spec.cluster_std);
            ds.labels[row] = k;
        }
    }
    return ds;
}

Dataset take_rows(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.features = Matrix(indices.size(), dataset.dim());
    out.labels.resize(indices.size());
    out.class_count = dataset.class_count;
    out.class_names = dataset.class_names;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = dataset.features.row(indices[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels[i] = dataset.labels[indices[i]];
    }
    return out;
}

std::pair<Dataset, Dataset> shuffle_split(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must be in (0,1)");
    const std::size_t n = dataset.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Xoshiro256pp rng(seed);
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = rng.below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * test_fraction));
    std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + n_test);
    std::vector<std::size_t> train_idx(perm.begin() + n_test, perm.end());
    return {take_rows(dataset, train_idx), take_rows(dataset, test_idx)};
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Xoshiro256pp rng(epoch_seed);
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = rng.below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::vector<std::size_t>> slices;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(start + batch_size, n);
        slices.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return slices;
}

}  // namespace ncens
