#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fedlab/tensor.hpp"

namespace fedlab {

struct LabeledDataset {
  Tensor images;            // [N,H,W,C], values in [0,1]
  std::vector<int> labels;  // one class index per image
  int classes = 0;

  std::int64_t size() const { return images.rank() ? images.dim(0) : 0; }
  int height() const { return images.dim(1); }
  int width() const { return images.dim(2); }
  int channels() const { return images.dim(3); }

  // Copies one image as a [1,H,W,C] tensor (row `i` of the dataset).
  Tensor image(std::int64_t i) const;
  // Gathers rows into a batch tensor plus the matching labels.
  Tensor gather(const std::vector<std::int64_t>& rows) const;
  std::vector<int> gather_labels(const std::vector<std::int64_t>& rows) const;

  void validate() const;
};

// IDX (big-endian) reader/writer, the format MNIST ships in.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path);

// Deterministic 8x8 grayscale blobs: one binary prototype per class plus
// small per-sample noise. Linearly separable by construction. The seed
// fixes the prototypes; sample_salt switches to a disjoint noise stream
// (train/test splits share prototypes but not samples).
LabeledDataset synth_dataset(int classes, int per_class, std::uint64_t seed,
                             std::uint64_t sample_salt = 0);

// First-n subset (dataset files are already shuffled; tests rely on this
// being a plain prefix).
LabeledDataset subset(const LabeledDataset& ds, std::int64_t n);

struct ClientPartition {
  std::vector<std::vector<std::int64_t>> clients;

  void validate(std::int64_t dataset_size) const;  // disjoint + full cover
};

// Per-class Dirichlet(phi) split across clients. Empty clients are topped
// up with one index from the largest client.
ClientPartition dirichlet_partition(const LabeledDataset& ds, int clients, double phi,
                                    std::mt19937_64& rng);

}  // namespace fedlab
