#include "fedlab/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fedlab/errors.hpp"
#include "fedlab/rng.hpp"

namespace fedlab {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path, const char* what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw FormatError(path + ": truncated while reading " + what + " at offset " +
                      std::to_string(static_cast<long long>(in.tellg())));
  return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

Tensor LabeledDataset::image(std::int64_t i) const {
  const std::int64_t px = static_cast<std::int64_t>(height()) * width() * channels();
  Tensor t = Tensor::zeros({1, height(), width(), channels()});
  std::copy_n(images.data.begin() + i * px, px, t.data.begin());
  return t;
}

Tensor LabeledDataset::gather(const std::vector<std::int64_t>& rows) const {
  const std::int64_t px = static_cast<std::int64_t>(height()) * width() * channels();
  Tensor t = Tensor::zeros({static_cast<int>(rows.size()), height(), width(), channels()});
  for (std::size_t n = 0; n < rows.size(); ++n)
    std::copy_n(images.data.begin() + rows[n] * px, px,
                t.data.begin() + static_cast<std::int64_t>(n) * px);
  return t;
}

std::vector<int> LabeledDataset::gather_labels(const std::vector<std::int64_t>& rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) out[n] = labels[static_cast<std::size_t>(rows[n])];
  return out;
}

void LabeledDataset::validate() const {
  if (size() != static_cast<std::int64_t>(labels.size()))
    throw FormatError("dataset has " + std::to_string(size()) + " images but " +
                      std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw FormatError("label " + std::to_string(y) + " out of range [0," +
                        std::to_string(classes) + ")");
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path + ": cannot open");
  const std::uint32_t img_magic = read_be32(img, images_path, "magic");
  if (img_magic != kImagesMagic)
    throw FormatError(images_path + ": bad magic at offset 0 (expected 0x00000803)");
  const std::uint32_t n = read_be32(img, images_path, "count");
  const std::uint32_t h = read_be32(img, images_path, "rows");
  const std::uint32_t w = read_be32(img, images_path, "cols");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path + ": cannot open");
  const std::uint32_t lab_magic = read_be32(lab, labels_path, "magic");
  if (lab_magic != kLabelsMagic)
    throw FormatError(labels_path + ": bad magic at offset 0 (expected 0x00000801)");
  const std::uint32_t ln = read_be32(lab, labels_path, "count");
  if (ln != n)
    throw FormatError(labels_path + ": label count " + std::to_string(ln) +
                      " does not match image count " + std::to_string(n));

  const std::int64_t px = static_cast<std::int64_t>(h) * w;
  std::vector<unsigned char> raw(static_cast<std::size_t>(px));
  LabeledDataset ds;
  ds.classes = 10;
  ds.images = Tensor::zeros({static_cast<int>(n), static_cast<int>(h), static_cast<int>(w), 1});
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(raw.data()), px);
    if (!img)
      throw FormatError(images_path + ": truncated image data at offset " +
                        std::to_string(16 + static_cast<std::int64_t>(i) * px));
    float* dst = ds.images.data.data() + static_cast<std::int64_t>(i) * px;
    for (std::int64_t j = 0; j < px; ++j) dst[j] = static_cast<float>(raw[static_cast<std::size_t>(j)]) / 255.0f;
  }
  std::vector<unsigned char> lraw(n);
  lab.read(reinterpret_cast<char*>(lraw.data()), n);
  if (!lab) throw FormatError(labels_path + ": truncated label data after offset 8");
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = lraw[i];
    max_label = std::max(max_label, static_cast<int>(lraw[i]));
  }
  if (max_label >= ds.classes) ds.classes = max_label + 1;
  ds.validate();
  return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path) {
  if (ds.channels() != 1) throw FormatError("write_idx supports single-channel images only");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path + ": cannot open for writing");
  write_be32(img, kImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(ds.height()));
  write_be32(img, static_cast<std::uint32_t>(ds.width()));
  for (float v : ds.images.data) {
    const float scaled = v * 255.0f + 0.5f;
    const unsigned char byte =
        static_cast<unsigned char>(scaled < 0.0f ? 0.0f : (scaled > 255.0f ? 255.0f : scaled));
    img.put(static_cast<char>(byte));
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path + ": cannot open for writing");
  write_be32(lab, kLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

LabeledDataset synth_dataset(int classes, int per_class, std::uint64_t seed,
                             std::uint64_t sample_salt) {
  if (classes < 2) throw ConfigError("synth_dataset needs at least 2 classes");
  const int h = 8, w = 8;
  std::mt19937_64 proto_rng = make_stream(seed, Stream::kSynthData, 0, 0);

  // One binary prototype per class; distinct prototypes in 64-dim pixel
  // space are far apart, so small noise keeps the classes separable.
  std::vector<std::vector<float>> prototypes(static_cast<std::size_t>(classes));
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& p : prototypes) {
    p.resize(static_cast<std::size_t>(h) * w);
    for (auto& v : p) v = coin(proto_rng) ? 0.85f : 0.15f;
  }

  LabeledDataset ds;
  ds.classes = classes;
  ds.images = Tensor::zeros({classes * per_class, h, w, 1});
  ds.labels.resize(static_cast<std::size_t>(classes) * per_class);
  std::normal_distribution<float> noise(0.0f, 0.06f);
  std::int64_t row = 0;
  for (int s = 0; s < per_class; ++s) {
    for (int c = 0; c < classes; ++c) {
      float* dst = ds.images.data.data() + row * h * w;
      std::mt19937_64 rng = make_stream(seed, Stream::kSynthData, 1 + sample_salt,
                                        static_cast<std::uint64_t>(row));
      for (int j = 0; j < h * w; ++j) {
        float v = prototypes[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] + noise(rng);
        dst[j] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      }
      ds.labels[static_cast<std::size_t>(row)] = c;
      ++row;
    }
  }
  return ds;
}

LabeledDataset subset(const LabeledDataset& ds, std::int64_t n) {
  if (n <= 0 || n >= ds.size()) return ds;
  LabeledDataset out;
  out.classes = ds.classes;
  const std::int64_t px = static_cast<std::int64_t>(ds.height()) * ds.width() * ds.channels();
  out.images = Tensor::zeros({static_cast<int>(n), ds.height(), ds.width(), ds.channels()});
  std::copy_n(ds.images.data.begin(), n * px, out.images.data.begin());
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  return out;
}

void ClientPartition::validate(std::int64_t dataset_size) const {
  std::vector<char> seen(static_cast<std::size_t>(dataset_size), 0);
  std::int64_t covered = 0;
  for (const auto& idx : clients) {
    for (std::int64_t i : idx) {
      if (i < 0 || i >= dataset_size)
        throw ConfigError("partition index " + std::to_string(i) + " out of range");
      if (seen[static_cast<std::size_t>(i)])
        throw ConfigError("partition index " + std::to_string(i) + " assigned twice");
      seen[static_cast<std::size_t>(i)] = 1;
      ++covered;
    }
  }
  if (covered != dataset_size)
    throw ConfigError("partition covers " + std::to_string(covered) + " of " +
                      std::to_string(dataset_size) + " indices");
}

ClientPartition dirichlet_partition(const LabeledDataset& ds, int clients, double phi,
                                    std::mt19937_64& rng) {
  if (clients < 1) throw ConfigError("dirichlet_partition needs at least one client");
  if (phi <= 0.0) throw ConfigError("dirichlet_partition needs phi > 0");
  if (clients > ds.size())
    throw ConfigError("more clients (" + std::to_string(clients) + ") than samples (" +
                      std::to_string(ds.size()) + ")");

  ClientPartition part;
  part.clients.assign(static_cast<std::size_t>(clients), {});

  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(ds.classes));
  for (std::int64_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::gamma_distribution<double> gamma(phi, 1.0);
  for (auto& idx : by_class) {
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);

    // Dirichlet draw via normalized Gamma(phi, 1) variates.
    std::vector<double> prop(static_cast<std::size_t>(clients));
    double total = 0.0;
    for (auto& p : prop) {
      p = gamma(rng);
      total += p;
    }
    if (total <= 0.0) {
      // Tiny phi can underflow every draw; fall back to a uniform split.
      std::fill(prop.begin(), prop.end(), 1.0);
      total = static_cast<double>(clients);
    }

    // Largest-remainder rounding so class counts are split exactly.
    const std::int64_t n = static_cast<std::int64_t>(idx.size());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(clients));
    std::vector<std::pair<double, int>> remainders;
    std::int64_t assigned = 0;
    for (int cl = 0; cl < clients; ++cl) {
      const double exact = prop[static_cast<std::size_t>(cl)] / total * static_cast<double>(n);
      counts[static_cast<std::size_t>(cl)] = static_cast<std::int64_t>(exact);
      assigned += counts[static_cast<std::size_t>(cl)];
      remainders.emplace_back(exact - std::floor(exact), cl);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::int64_t r = 0; r < n - assigned; ++r)
      counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r)].second)] += 1;

    std::int64_t cursor = 0;
    for (int cl = 0; cl < clients; ++cl) {
      for (std::int64_t j = 0; j < counts[static_cast<std::size_t>(cl)]; ++j)
        part.clients[static_cast<std::size_t>(cl)].push_back(idx[static_cast<std::size_t>(cursor++)]);
    }
  }

  // Re-home one index from the largest client into each empty one so every
  // client can run local training.
  for (auto& mine : part.clients) {
    if (!mine.empty()) continue;
    auto largest = std::max_element(
        part.clients.begin(), part.clients.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() <= 1)
      throw ConfigError("cannot fill empty client: not enough samples");
    mine.push_back(largest->back());
    largest->pop_back();
  }

  part.validate(ds.size());
  return part;
}

}  // namespace fedlab
