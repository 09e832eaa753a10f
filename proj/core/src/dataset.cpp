#include "istrain/dataset.hpp"

#include <cmath>
#include <fstream>

namespace istrain {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("load_idx: truncated header in " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("load_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("load_idx: cannot open " + labels_path);

    std::uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != kImagesMagic)
        throw FormatError("load_idx: bad images magic in " + images_path +
                          " (expected 0x00000803)");
    std::uint32_t n_images = read_be_u32(img, images_path);
    std::uint32_t rows = read_be_u32(img, images_path);
    std::uint32_t cols = read_be_u32(img, images_path);

    std::uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != kLabelsMagic)
        throw FormatError("load_idx: bad labels magic in " + labels_path +
                          " (expected 0x00000801)");
    std::uint32_t n_labels = read_be_u32(lab, labels_path);

    if (n_images != n_labels)
        throw FormatError("load_idx: image count " + std::to_string(n_images) +
                          " does not match label count " + std::to_string(n_labels));

    std::size_t d = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.features = Matrix(n_images, d);
    ds.labels.resize(n_images);

    std::vector<unsigned char> buf(d);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d));
        if (!img) throw FormatError("load_idx: truncated image data in " + images_path);
        for (std::size_t j = 0; j < d; ++j)
            ds.features(i, j) = static_cast<double>(buf[j]) / 255.0;
        char label;
        lab.read(&label, 1);
        if (!lab) throw FormatError("load_idx: truncated label data in " + labels_path);
        ds.labels[i] = static_cast<int>(static_cast<unsigned char>(label));
    }

    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::vector<std::uint8_t>>& images, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& labels) {
    if (images.size() != labels.size())
        throw FormatError("write_idx: image count does not match label count");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("write_idx: cannot open " + images_path);
    write_be_u32(img, kImagesMagic);
    write_be_u32(img, static_cast<std::uint32_t>(images.size()));
    write_be_u32(img, static_cast<std::uint32_t>(rows));
    write_be_u32(img, static_cast<std::uint32_t>(cols));
    for (const auto& image : images) {
        if (image.size() != rows * cols) throw FormatError("write_idx: image size mismatch");
        img.write(reinterpret_cast<const char*>(image.data()),
                  static_cast<std::streamsize>(image.size()));
    }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("write_idx: cannot open " + labels_path);
    write_be_u32(lab, kLabelsMagic);
    write_be_u32(lab, static_cast<std::uint32_t>(labels.size()));
    lab.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2) throw ConfigError("synth_dataset: need at least 2 classes");
    if (spec.n < spec.classes) throw ConfigError("synth_dataset: need n >= classes");
    if (spec.dims < 2) throw ConfigError("synth_dataset: need dims >= 2");
    if (spec.noise < 0.0) throw ConfigError("synth_dataset: noise must be >= 0");
    if (spec.hard_fraction < 0.0 || spec.hard_fraction > 1.0)
        throw ConfigError("synth_dataset: hard_fraction must be in [0, 1]");

    Rng rng(seed);
    Dataset ds;
    ds.features = Matrix(spec.n, spec.dims);
    ds.labels.resize(spec.n);
    ds.num_classes = spec.classes;

    std::size_t n_hard =
        static_cast<std::size_t>(std::ceil(spec.hard_fraction * static_cast<double>(spec.n)));
    std::size_t hard_start = spec.n - n_hard;

    constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
    for (std::size_t i = 0; i < spec.n; ++i) {
        std::size_t cls = i % spec.classes;
        ds.labels[i] = static_cast<int>(cls);
        double angle = kTwoPi * static_cast<double>(cls) / static_cast<double>(spec.classes);
        double sigma = spec.noise * (i >= hard_start ? 3.0 : 1.0);
        ds.features(i, 0) = spec.radius * std::cos(angle) + sigma * rng.next_normal();
        ds.features(i, 1) = spec.radius * std::sin(angle) + sigma * rng.next_normal();
        for (std::size_t j = 2; j < spec.dims; ++j) ds.features(i, j) = sigma * rng.next_normal();
    }
    return ds;
}

}  // namespace istrain
