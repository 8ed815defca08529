#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncens/matrix.hpp"

namespace ncens {

struct Dataset {
    Matrix features;                       // n x d
    std::vector<std::size_t> labels;       // n entries, each < class_count
    std::size_t class_count = 0;
    std::vector<std::string> class_names;  // optional; index = label id

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
};

// Seeded Gaussian blobs: K clusters, centers uniform in +-center_spread per
// coordinate, isotropic noise cluster_std.
struct BlobSpec {
    std::size_t classes = 2;
    std::size_t per_class = 100;
    std::size_t dim = 2;
    double center_spread = 3.0;
    double cluster_std = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// label_column: column name (needs a header row) or a 0-based index in
// decimal; "-1" selects the last column. Labels map to 0..K-1 in
// first-appearance order unless class_names is supplied.
Dataset load_csv(const std::string& path, const std::string& label_column = "-1",
                 const std::vector<std::string>& class_names = {});

void save_csv(const Dataset& dataset, const std::string& path);

Dataset gen_blobs(const BlobSpec& spec);

std::pair<Dataset, Dataset> shuffle_split(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed);

// Seeded permutation of 0..n-1 chunked into ceil(n/batch_size) slices.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t epoch_seed);

Dataset take_rows(const Dataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace ncens
