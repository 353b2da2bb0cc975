#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "common/error.hpp"

namespace fs = std::filesystem;

namespace sologan {

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> list_split_domains(const fs::path& split_dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(split_dir))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

int64_t MultiDomainDataset::label_of(const std::string& name) const {
  for (size_t i = 0; i < domains.size(); ++i)
    if (domains[i] == name) return static_cast<int64_t>(i);
  std::string known;
  for (const auto& d : domains) known += (known.empty() ? "" : ", ") + d;
  raise(ErrorCode::invalid_label, "unknown domain '" + name + "'; available: " + known);
}

const std::string& MultiDomainDataset::name_of(int64_t label) const {
  require(label >= 0 && label < domain_count(), ErrorCode::invalid_label,
          "domain label " + std::to_string(label) + " out of range [0," +
              std::to_string(domain_count()) + ")");
  return domains[static_cast<size_t>(label)];
}

MultiDomainDataset load_dataset(const std::string& root,
                                const std::vector<std::string>* declared_domains) {
  fs::path root_path(root);
  require(fs::is_directory(root_path), ErrorCode::dataset, "dataset root not found: " + root);
  fs::path train_dir = root_path / "train";
  fs::path test_dir = root_path / "test";
  require(fs::is_directory(train_dir), ErrorCode::dataset,
          "missing train split directory: " + train_dir.string());
  require(fs::is_directory(test_dir), ErrorCode::dataset,
          "missing test split directory: " + test_dir.string());

  MultiDomainDataset ds;
  ds.root = root;
  ds.domains = list_split_domains(train_dir);
  require(ds.domains.size() >= 2, ErrorCode::dataset,
          "dataset needs at least 2 domains, found " + std::to_string(ds.domains.size()) +
              " under " + train_dir.string());
  std::vector<std::string> test_domains = list_split_domains(test_dir);
  require(ds.domains == test_domains, ErrorCode::dataset,
          "train/test splits disagree on domain directories under " + root);
  if (declared_domains) {
    std::vector<std::string> declared = *declared_domains;
    std::sort(declared.begin(), declared.end());
    require(declared == ds.domains, ErrorCode::config,
            "declared domain list does not match dataset directories under " + root);
  }

  for (const std::string& name : ds.domains) {
    auto train_files = list_images(train_dir / name);
    auto test_files = list_images(test_dir / name);
    require(!train_files.empty(), ErrorCode::dataset,
            "domain '" + name + "' has no training images in " + (train_dir / name).string());
    require(!test_files.empty(), ErrorCode::dataset,
            "domain '" + name + "' has no test images in " + (test_dir / name).string());
    ds.train_files.push_back(std::move(train_files));
    ds.test_files.push_back(std::move(test_files));
  }
  return ds;
}

Tensor<float> preprocess(const ImageU8& image, int64_t image_size, bool train_mode, Rng* rng) {
  require(image_size >= 1, ErrorCode::invalid_argument, "preprocess: image_size must be positive");
  require(!train_mode || rng != nullptr, ErrorCode::invalid_argument,
          "preprocess: train mode needs an RNG");

  int64_t target_short = static_cast<int64_t>(std::lround(image_size * 1.12));
  int64_t w, h;
  if (image.width <= image.height) {
    w = target_short;
    h = std::max<int64_t>(image_size,
                          static_cast<int64_t>(std::lround(static_cast<double>(image.height) *
                                                           target_short / image.width)));
  } else {
    h = target_short;
    w = std::max<int64_t>(image_size,
                          static_cast<int64_t>(std::lround(static_cast<double>(image.width) *
                                                           target_short / image.height)));
  }
  ImageU8 resized = resize_bilinear(image, w, h);

  int64_t max_x = w - image_size;
  int64_t max_y = h - image_size;
  int64_t x0, y0;
  bool flip = false;
  if (train_mode) {
    x0 = rng->uniform_int(0, max_x);
    y0 = rng->uniform_int(0, max_y);
    flip = rng->uniform() < 0.5;
  } else {
    x0 = max_x / 2;
    y0 = max_y / 2;
  }

  Tensor<float> out({3, image_size, image_size});
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < image_size; ++y)
      for (int64_t x = 0; x < image_size; ++x) {
        int64_t sx = flip ? (x0 + image_size - 1 - x) : (x0 + x);
        uint8_t px = resized.pixels[((y0 + y) * w + sx) * 3 + c];
        out[(c * image_size + y) * image_size + x] = static_cast<float>(px) / 127.5f - 1.0f;
      }
  return out;
}

Tensor<float> load_and_preprocess(const std::string& path, int64_t image_size, bool train_mode,
                                  Rng* rng) {
  return preprocess(decode_image_file(path), image_size, train_mode, rng);
}

}  // namespace sologan
