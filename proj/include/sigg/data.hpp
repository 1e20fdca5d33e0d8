#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sigg/errors.hpp"
#include "sigg/image.hpp"
#include "sigg/rng.hpp"

namespace sigg {

struct LabeledImage {
    Image image;
    int label = 0; // contiguous referent id, < num_classes
};

enum class DataSource { mnist, cifar100 };

struct DatasetSpec {
    DataSource source = DataSource::mnist;
    std::vector<int> class_subset; // source class ids; mapped to 0..K-1 in load order
    int max_samples = 0;           // 0 = no cap; otherwise uniform per-class allocation
    std::string dir;               // dataset root (falls back to SIGG_DATA_DIR)
};

namespace data_detail {

inline uint32_t read_be32(std::istream& in, const std::string& path, int64_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw ParseError(path + ": truncated while reading 4 bytes at offset " + std::to_string(offset));
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

} // namespace data_detail

// Big-endian IDX parsing (MNIST format). Pixel bytes are scaled to [0,1].
inline std::vector<LabeledImage> load_idx(const std::string& images_path, const std::string& labels_path) {
    using data_detail::read_be32;

    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) throw IoError("cannot open image file " + images_path);
    const uint32_t img_magic = read_be32(imgf, images_path, 0);
    if (img_magic != 0x00000803u)
        throw ParseError(images_path + ": bad image magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", img_magic);
            return std::string(buf);
        }() + " at offset 0 (expected 00000803)");
    const uint32_t n_images = read_be32(imgf, images_path, 4);
    const uint32_t rows = read_be32(imgf, images_path, 8);
    const uint32_t cols = read_be32(imgf, images_path, 12);

    std::ifstream labf(labels_path, std::ios::binary);
    if (!labf) throw IoError("cannot open label file " + labels_path);
    const uint32_t lab_magic = read_be32(labf, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw ParseError(labels_path + ": bad label magic at offset 0 (expected 00000801)");
    const uint32_t n_labels = read_be32(labf, labels_path, 4);

    if (n_images != n_labels)
        throw ParseError("count mismatch: " + images_path + " has " + std::to_string(n_images) +
                         " images but " + labels_path + " has " + std::to_string(n_labels) + " labels");

    std::vector<LabeledImage> out;
    out.reserve(n_images);
    std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
    for (uint32_t i = 0; i < n_images; ++i) {
        imgf.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!imgf)
            throw ParseError(images_path + ": truncated at offset " +
                             std::to_string(16 + static_cast<int64_t>(i) * buf.size()) + " (image " +
                             std::to_string(i) + " of " + std::to_string(n_images) + ")");
        int lab = labf.get();
        if (lab == EOF)
            throw ParseError(labels_path + ": truncated at offset " + std::to_string(8 + i));
        LabeledImage li;
        li.image = Image(static_cast<int>(rows), static_cast<int>(cols));
        for (size_t p = 0; p < buf.size(); ++p) li.image.px[p] = buf[p] / 255.0;
        li.label = lab;
        out.push_back(std::move(li));
    }
    return out;
}

// Luma conversion; channel weights 0.299/0.587/0.114.
inline double to_greyscale(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// CIFAR-100 binary records: coarse label byte, fine label byte, then
// 32x32 R, G, B planes (3074 bytes per record). Filters to spec.class_subset
// (fine labels), converts to greyscale, caps at max_samples with uniform
// per-class allocation.
inline std::vector<LabeledImage> load_cifar100(const std::string& path, const DatasetSpec& spec) {
    constexpr int kDim = 32;
    constexpr int64_t kRecord = 2 + 3 * kDim * kDim;

    if (spec.class_subset.empty())
        throw ConfigError("load_cifar100: class_subset must name at least one class");
    for (int c : spec.class_subset)
        if (c < 0 || c > 99)
            throw ConfigError("load_cifar100: class id " + std::to_string(c) + " outside [0,99]");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const int64_t file_size = in.tellg();
    in.seekg(0);
    if (file_size % kRecord != 0)
        throw ParseError(path + ": size " + std::to_string(file_size) +
                         " is not a multiple of the record stride " + std::to_string(kRecord));

    std::map<int, int> class_to_referent;
    for (size_t i = 0; i < spec.class_subset.size(); ++i)
        class_to_referent[spec.class_subset[i]] = static_cast<int>(i);

    const int per_class_cap =
        spec.max_samples > 0 ? spec.max_samples / static_cast<int>(spec.class_subset.size()) : -1;
    std::vector<int> taken(spec.class_subset.size(), 0);

    std::vector<LabeledImage> out;
    std::vector<unsigned char> rec(static_cast<size_t>(kRecord));
    const int64_t n_records = file_size / kRecord;
    for (int64_t r = 0; r < n_records; ++r) {
        in.read(reinterpret_cast<char*>(rec.data()), kRecord);
        if (!in) throw ParseError(path + ": truncated at offset " + std::to_string(r * kRecord));
        const int fine = rec[1];
        auto it = class_to_referent.find(fine);
        if (it == class_to_referent.end()) continue;
        const int referent = it->second;
        if (per_class_cap >= 0 && taken[static_cast<size_t>(referent)] >= per_class_cap) continue;
        taken[static_cast<size_t>(referent)]++;

        LabeledImage li;
        li.image = Image(kDim, kDim);
        for (int p = 0; p < kDim * kDim; ++p) {
            const double red = rec[static_cast<size_t>(2 + p)] / 255.0;
            const double green = rec[static_cast<size_t>(2 + kDim * kDim + p)] / 255.0;
            const double blue = rec[static_cast<size_t>(2 + 2 * kDim * kDim + p)] / 255.0;
            li.image.px[static_cast<size_t>(p)] = to_greyscale(red, green, blue);
        }
        li.label = referent;
        out.push_back(std::move(li));
    }
    return out;
}

struct BanditRound {
    Image context;
    int winning_arm = 0;
    enum class Source { environment, agent } source_kind = Source::environment;
};

// Loaded dataset with a deterministic 90/10 train/heldout split, organized
// per class for uniform bandit sampling.
class Dataset {
  public:
    Dataset(std::vector<LabeledImage> items, int num_classes, uint64_t seed)
        : items_(std::move(items)), num_classes_(num_classes) {
        if (items_.empty()) throw ConfigError("dataset is empty");
        for (const auto& li : items_)
            if (li.label < 0 || li.label >= num_classes_)
                throw ContractError("dataset label " + std::to_string(li.label) + " outside [0," +
                                    std::to_string(num_classes_) + ")");
        std::vector<std::vector<int>> per_class(static_cast<size_t>(num_classes_));
        for (int i = 0; i < static_cast<int>(items_.size()); ++i)
            per_class[static_cast<size_t>(items_[static_cast<size_t>(i)].label)].push_back(i);

        Rng rng = Rng::substream(seed, "dataset-split");
        train_by_class_.resize(per_class.size());
        for (size_t c = 0; c < per_class.size(); ++c) {
            auto& idx = per_class[c];
            if (idx.empty())
                throw ConfigError("dataset class " + std::to_string(c) + " has no samples");
            // Fisher-Yates with our own rng so the split is seed-stable
            for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
                std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
            const size_t n_heldout = std::max<size_t>(1, idx.size() / 10);
            for (size_t i = 0; i < idx.size(); ++i) {
                if (i < n_heldout)
                    heldout_.push_back(idx[i]);
                else
                    train_by_class_[c].push_back(idx[i]);
            }
            if (train_by_class_[c].empty())
                throw ConfigError("dataset class " + std::to_string(c) +
                                  " too small for a train/heldout split");
        }
    }

    int num_classes() const { return num_classes_; }
    int height() const { return items_.front().image.height; }
    int width() const { return items_.front().image.width; }
    int64_t size() const { return static_cast<int64_t>(items_.size()); }

    const LabeledImage& item(int i) const { return items_[static_cast<size_t>(i)]; }
    const std::vector<int>& heldout_indices() const { return heldout_; }
    const std::vector<int>& train_indices(int cls) const {
        return train_by_class_[static_cast<size_t>(cls)];
    }

    int64_t train_size() const {
        int64_t n = 0;
        for (const auto& v : train_by_class_) n += static_cast<int64_t>(v.size());
        return n;
    }

    double mean_pixel() const {
        double acc = 0;
        int64_t n = 0;
        for (const auto& li : items_) {
            for (double v : li.image.px) acc += v;
            n += li.image.size();
        }
        return acc / static_cast<double>(n);
    }

    // Uniform class choice, then uniform image within the class (train split).
    BanditRound sample_bandit(Rng& rng) const {
        const int cls = rng.uniform_int(num_classes_);
        const auto& pool = train_by_class_[static_cast<size_t>(cls)];
        const int idx = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
        return BanditRound{items_[static_cast<size_t>(idx)].image, cls,
                           BanditRound::Source::environment};
    }

  private:
    std::vector<LabeledImage> items_;
    int num_classes_;
    std::vector<std::vector<int>> train_by_class_;
    std::vector<int> heldout_;
};

// Builds a Dataset from a DatasetSpec, remapping source class ids to
// contiguous referent ids in subset order.
inline Dataset load_dataset(const DatasetSpec& spec, uint64_t seed) {
    std::string root = spec.dir;
    if (root.empty()) {
        const char* env = std::getenv("SIGG_DATA_DIR");
        if (env) root = env;
    }
    if (root.empty())
        throw ConfigError("no dataset directory: set dataset.dir or the SIGG_DATA_DIR environment variable");

    if (spec.source == DataSource::mnist) {
        auto all = load_idx(root + "/mnist/train-images-idx3-ubyte", root + "/mnist/train-labels-idx1-ubyte");
        std::vector<int> subset = spec.class_subset;
        if (subset.empty()) {
            subset.resize(10);
            for (int i = 0; i < 10; ++i) subset[static_cast<size_t>(i)] = i;
        }
        std::map<int, int> remap;
        for (size_t i = 0; i < subset.size(); ++i) {
            if (subset[i] < 0 || subset[i] > 9)
                throw ConfigError("mnist class id " + std::to_string(subset[i]) + " outside [0,9]");
            remap[subset[i]] = static_cast<int>(i);
        }
        const int per_class_cap =
            spec.max_samples > 0 ? spec.max_samples / static_cast<int>(subset.size()) : -1;
        std::vector<int> taken(subset.size(), 0);
        std::vector<LabeledImage> filtered;
        for (auto& li : all) {
            auto it = remap.find(li.label);
            if (it == remap.end()) continue;
            if (per_class_cap >= 0 && taken[static_cast<size_t>(it->second)] >= per_class_cap) continue;
            taken[static_cast<size_t>(it->second)]++;
            li.label = it->second;
            filtered.push_back(std::move(li));
        }
        return Dataset(std::move(filtered), static_cast<int>(subset.size()), seed);
    }

    auto items = load_cifar100(root + "/cifar-100-binary/train.bin", spec);
    return Dataset(std::move(items), static_cast<int>(spec.class_subset.size()), seed);
}

inline const char* dataset_download_help() {
    return
        "Datasets are read from $SIGG_DATA_DIR (or dataset.dir in the config):\n"
        "\n"
        "  $SIGG_DATA_DIR/mnist/train-images-idx3-ubyte\n"
        "  $SIGG_DATA_DIR/mnist/train-labels-idx1-ubyte\n"
        "  $SIGG_DATA_DIR/cifar-100-binary/train.bin\n"
        "\n"
        "MNIST: download the four IDX files from an MNIST mirror (e.g.\n"
        "https://ossci-datasets.s3.amazonaws.com/mnist/) and gunzip them.\n"
        "CIFAR-100: download cifar-100-binary.tar.gz from\n"
        "https://www.cs.toronto.edu/~kriz/cifar.html and extract train.bin.\n"
        "No network access is attempted by this tool.\n";
}

} // namespace sigg
