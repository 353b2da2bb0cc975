#pragma once

#include <memory>

#include "data/dataset.hpp"
#include "model/networks.hpp"

namespace sologan {

// Frozen classifier backing the evaluation metrics: class probabilities for
// IS/CIS and the classification error, a penultimate vector for FID, and a
// per-layer feature stack for the perceptual diversity distance.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int64_t num_classes() const = 0;
  virtual int64_t image_size() const = 0;
  // [B,3,S,S] in [-1,1] -> rows summing to 1.
  virtual Tensor<float> probabilities(const Tensor<float>& batch) = 0;
  // [B,3,S,S] -> [B,F]
  virtual Tensor<float> penultimate(const Tensor<float>& batch) = 0;
  // [B,3,S,S] -> per-layer activation maps, shallow to deep.
  virtual std::vector<Tensor<float>> feature_stack(const Tensor<float>& batch) = 0;
  // Stable content hash of the extractor parameters.
  virtual std::string identity_hash() const = 0;
};

// Small three-stage convnet trained on a dataset's real train split; the
// desk-scale stand-in for a fine-tuned Inception-V3 / AlexNet.
class ProbeExtractor : public FeatureExtractor {
 public:
  ProbeExtractor(int64_t num_classes, int64_t image_size);

  int64_t num_classes() const override { return num_classes_; }
  int64_t image_size() const override { return image_size_; }
  Tensor<float> probabilities(const Tensor<float>& batch) override;
  Tensor<float> penultimate(const Tensor<float>& batch) override;
  std::vector<Tensor<float>> feature_stack(const Tensor<float>& batch) override;
  std::string identity_hash() const override;

  // Test accuracy on the dataset's test split.
  double evaluate_accuracy(const MultiDomainDataset& dataset);

  void save(const std::string& path) const;
  static std::unique_ptr<ProbeExtractor> load(const std::string& path);

  struct TrainOptions {
    int64_t epochs = 8;
    int64_t batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 123;
    double target_accuracy = 0.99;  // stop early once the test split clears this
  };
  static std::unique_ptr<ProbeExtractor> train(const MultiDomainDataset& dataset,
                                               int64_t image_size, const TrainOptions& opts);
  static std::unique_ptr<ProbeExtractor> train(const MultiDomainDataset& dataset,
                                               int64_t image_size) {
    return train(dataset, image_size, TrainOptions{});
  }

 private:
  struct Activations {
    std::vector<Var<float>> layers;
    Var<float> pooled;
    Var<float> logits;
  };
  Activations forward(const Var<float>& x) const;
  void collect(ParamBag<float>& bag);

  int64_t num_classes_ = 0;
  int64_t image_size_ = 0;
  Conv2d<float> conv1_, conv2_, conv3_;
  Linear<float> fc_;
};

}  // namespace sologan
