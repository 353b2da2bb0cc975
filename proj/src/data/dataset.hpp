#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/image_io.hpp"

namespace sologan {

// Multi-domain dataset over the root/{train,test}/<domain>/*.{png,jpg} layout.
// Domains are ordered lexicographically; the domain label is its index.
struct MultiDomainDataset {
  std::string root;
  std::vector<std::string> domains;
  std::vector<std::vector<std::string>> train_files;  // per domain, sorted
  std::vector<std::vector<std::string>> test_files;

  int64_t domain_count() const { return static_cast<int64_t>(domains.size()); }

  int64_t label_of(const std::string& name) const;
  const std::string& name_of(int64_t label) const;
};

MultiDomainDataset load_dataset(const std::string& root,
                                const std::vector<std::string>* declared_domains = nullptr);

// Resize shorter side to image_size * 1.12, crop to image_size^2 (random in
// train mode, centered otherwise), random horizontal flip in train mode, and
// map to [-1, 1]. rng is required in train mode only.
Tensor<float> preprocess(const ImageU8& image, int64_t image_size, bool train_mode,
                         Rng* rng = nullptr);

Tensor<float> load_and_preprocess(const std::string& path, int64_t image_size, bool train_mode,
                                  Rng* rng = nullptr);

}  // namespace sologan
