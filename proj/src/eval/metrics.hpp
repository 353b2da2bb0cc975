#pragma once

#include <functional>

#include "eval/features.hpp"
#include "json.hpp"

namespace sologan {

// Gaussian fit of a feature distribution; covariance is the unbiased
// estimator (count - 1 in the denominator).
struct GaussianStats {
  Tensor<double> mean;  // [F]
  Tensor<double> cov;   // [F,F]
  int64_t count = 0;
};

GaussianStats gaussian_stats(const Tensor<double>& features /*[N,F]*/);

// Frechet distance between Gaussian fits:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the matrix square
// root taken by eigendecomposition and negative eigenvalues clamped to zero.
double fid(const GaussianStats& a, const GaussianStats& b);

// exp(mean_i KL(p(y|x_i) || mean_j p(y|x_j))) over rows of [B,k].
double inception_score(const Tensor<double>& probs);

// Per-input variant: marginals are taken within each input's sample set.
double conditional_inception_score(const std::vector<Tensor<double>>& probs_per_input);

// Perceptual distance between two per-layer feature stacks of single images:
// channel-unit-normalized squared differences, spatially averaged, summed
// over layers (unit layer weights).
double lpips_distance(const std::vector<Tensor<float>>& stack_a,
                      const std::vector<Tensor<float>>& stack_b);

// Mean over inputs of the average distance across `pairs` random distinct
// sample pairs. Requires at least two samples per input.
double lpips_diversity(FeatureExtractor& extractor,
                       const std::vector<std::vector<Tensor<float>>>& samples_per_input,
                       int64_t pairs, Rng& rng);

// Percentage of translated images whose argmax class differs from the
// annotated target domain.
double classification_error_percent(FeatureExtractor& extractor,
                                    const std::vector<Tensor<float>>& images,
                                    const std::vector<int64_t>& target_labels);

struct EvalProtocol {
  int64_t num_inputs = 100;        // test inputs per domain
  int64_t samples_per_input = 16;  // translations per input for IS/CIS/LPIPS
  int64_t fid_samples = 10;        // translations per input entering FID stats
  int64_t cls_samples = 10;        // translations per input entering Cls_error
  int64_t pairs = 19;              // LPIPS pairings per input
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalProtocol from_json(const nlohmann::json& j);
};

struct EvalReport {
  double fid_value = 0;
  double is_value = 0;
  double cis_value = 0;
  double lpips_value = 0;
  double cls_error = 0;
  nlohmann::json protocol;
  std::string extractor_hash;

  // Exactly the documented report schema:
  // {FID, IS, CIS, LPIPS, Cls_error, protocol, extractor_hash}
  nlohmann::json to_json() const;
};

// Translates a single [3,S,S] input plane into `styles.dim(0)` samples of the
// target domain; returns [k,3,S,S].
using TranslateFn =
    std::function<Tensor<float>(const Tensor<float>& input, int64_t target_label,
                                const Tensor<float>& styles)>;

// Runs the full metric suite over every ordered domain pair of the dataset's
// test split.
EvalReport evaluate_translations(FeatureExtractor& extractor, const MultiDomainDataset& dataset,
                                 const EvalProtocol& protocol, const TranslateFn& translate,
                                 int64_t image_size, int64_t style_dim = 8);

}  // namespace sologan
