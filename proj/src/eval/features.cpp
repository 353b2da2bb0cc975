#include "eval/features.hpp"

#include <algorithm>
#include <cstdio>

#include "nn/optim.hpp"
#include "train/checkpoint.hpp"

namespace sologan {

namespace {
constexpr int64_t kC1 = 16, kC2 = 32, kC3 = 64;
}

ProbeExtractor::ProbeExtractor(int64_t num_classes, int64_t image_size)
    : num_classes_(num_classes),
      image_size_(image_size),
      conv1_(3, kC1, 3, 1, 1, false, /*spectral=*/false),
      conv2_(kC1, kC2, 3, 1, 1, false, /*spectral=*/false),
      conv3_(kC2, kC3, 3, 1, 1, false, /*spectral=*/false),
      fc_(kC3, num_classes, /*spectral=*/false) {
  require(num_classes >= 2, ErrorCode::config, "probe classifier needs at least 2 classes");
  require(image_size % 4 == 0, ErrorCode::config, "probe image size must be divisible by 4");
}

void ProbeExtractor::collect(ParamBag<float>& bag) {
  conv1_.collect("probe.conv1", bag);
  conv2_.collect("probe.conv2", bag);
  conv3_.collect("probe.conv3", bag);
  fc_.collect("probe.fc", bag);
}

ProbeExtractor::Activations ProbeExtractor::forward(const Var<float>& x) const {
  Activations act;
  Var<float> h = relu(conv1_.forward(x));
  act.layers.push_back(h);
  h = avg_pool2d(h, 2, 2);
  h = relu(conv2_.forward(h));
  act.layers.push_back(h);
  h = avg_pool2d(h, 2, 2);
  h = relu(conv3_.forward(h));
  act.layers.push_back(h);
  act.pooled = reduce_mean(h, {2, 3}, false);
  act.logits = fc_.forward(act.pooled);
  return act;
}

Tensor<float> ProbeExtractor::probabilities(const Tensor<float>& batch) {
  TrainingModeGuard guard(false);
  Activations act = forward(Var<float>::leaf(batch, false));
  const Tensor<float>& logits = act.logits.value();
  int64_t B = logits.dim(0), k = logits.dim(1);
  Tensor<float> probs({B, k});
  for (int64_t b = 0; b < B; ++b) {
    const float* row = logits.data() + b * k;
    float mx = *std::max_element(row, row + k);
    float denom = 0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    for (int64_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - mx) / denom;
  }
  return probs;
}

Tensor<float> ProbeExtractor::penultimate(const Tensor<float>& batch) {
  TrainingModeGuard guard(false);
  return forward(Var<float>::leaf(batch, false)).pooled.value();
}

std::vector<Tensor<float>> ProbeExtractor::feature_stack(const Tensor<float>& batch) {
  TrainingModeGuard guard(false);
  Activations act = forward(Var<float>::leaf(batch, false));
  std::vector<Tensor<float>> out;
  for (auto& layer : act.layers) out.push_back(layer.value());
  return out;
}

std::string ProbeExtractor::identity_hash() const {
  ParamBag<float> bag;
  const_cast<ProbeExtractor*>(this)->collect(bag);
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (auto& [name, var] : bag.params) {
    mix(name.data(), name.size());
    mix(var.value().data(), static_cast<size_t>(var.value().numel()) * sizeof(float));
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ProbeExtractor::evaluate_accuracy(const MultiDomainDataset& dataset) {
  int64_t correct = 0, total = 0;
  for (int64_t d = 0; d < dataset.domain_count(); ++d) {
    for (const auto& file : dataset.test_files[static_cast<size_t>(d)]) {
      Tensor<float> plane = load_and_preprocess(file, image_size_, false);
      Tensor<float> batch = plane.reshaped({1, 3, image_size_, image_size_});
      Tensor<float> probs = probabilities(batch);
      int64_t arg = 0;
      for (int64_t j = 1; j < num_classes_; ++j)
        if (probs[j] > probs[arg]) arg = j;
      correct += arg == d ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::unique_ptr<ProbeExtractor> ProbeExtractor::train(const MultiDomainDataset& dataset,
                                                      int64_t image_size,
                                                      const TrainOptions& opts) {
  int64_t n = dataset.domain_count();
  auto probe = std::make_unique<ProbeExtractor>(n, image_size);
  Rng rng(opts.seed);
  ParamBag<float> bag;
  probe->collect(bag);
  for (auto& [name, var] : bag.params) {
    if (name.find(".bias") != std::string::npos || name.find(".beta") != std::string::npos)
      const_cast<Var<float>&>(var).value().fill(0.0f);
    else
      xavier_uniform_fill(const_cast<Var<float>&>(var).value(), rng);
  }
  AdamConfig<float> acfg;
  acfg.lr = static_cast<float>(opts.lr);
  acfg.beta1 = 0.9f;
  Adam<float> opt(bag.param_vars(), acfg);

  // flat list of (file, label)
  std::vector<std::pair<const std::string*, int64_t>> items;
  for (int64_t d = 0; d < n; ++d)
    for (const auto& f : dataset.train_files[static_cast<size_t>(d)]) items.emplace_back(&f, d);

  TrainingModeGuard guard(true);
  for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    // shuffle
    for (size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    for (size_t start = 0; start < items.size(); start += static_cast<size_t>(opts.batch_size)) {
      size_t end = std::min(items.size(), start + static_cast<size_t>(opts.batch_size));
      int64_t bs = static_cast<int64_t>(end - start);
      Tensor<float> batch({bs, 3, image_size, image_size});
      std::vector<int64_t> labels;
      for (size_t i = start; i < end; ++i) {
        Tensor<float> plane = load_and_preprocess(*items[i].first, image_size, true, &rng);
        std::copy_n(plane.data(), plane.numel(), batch.data() + static_cast<int64_t>(i - start) * plane.numel());
        labels.push_back(items[i].second);
      }
      opt.zero_grad();
      Activations act = probe->forward(Var<float>::leaf(batch, false));
      Var<float> loss = softmax_cross_entropy(act.logits, labels);
      loss.backward();
      opt.step();
    }
    if (opts.target_accuracy > 0 && probe->evaluate_accuracy(dataset) >= opts.target_accuracy)
      break;
  }
  return probe;
}

void ProbeExtractor::save(const std::string& path) const {
  CheckpointBundle bundle;
  bundle.meta["format_version"] = kCheckpointFormatVersion;
  bundle.meta["kind"] = "probe_extractor";
  bundle.meta["num_classes"] = num_classes_;
  bundle.meta["image_size"] = image_size_;
  ParamBag<float> bag;
  const_cast<ProbeExtractor*>(this)->collect(bag);
  for (auto& [name, var] : bag.params) bundle.arrays[name] = var.value();
  save_checkpoint(bundle, path);
}

std::unique_ptr<ProbeExtractor> ProbeExtractor::load(const std::string& path) {
  CheckpointBundle bundle = load_checkpoint(path);
  require(bundle.meta.value("kind", "") == "probe_extractor", ErrorCode::checkpoint_corrupt,
          "not a probe extractor checkpoint: " + path);
  auto probe = std::make_unique<ProbeExtractor>(bundle.meta.at("num_classes").get<int64_t>(),
                                                bundle.meta.at("image_size").get<int64_t>());
  ParamBag<float> bag;
  probe->collect(bag);
  for (auto& [name, var] : bag.params) {
    auto it = bundle.arrays.find(name);
    require(it != bundle.arrays.end(), ErrorCode::checkpoint_corrupt,
            "probe checkpoint missing " + name);
    const_cast<Var<float>&>(var).value() = it->second;
  }
  return probe;
}

}  // namespace sologan
