#include "eval/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace sologan {

using nlohmann::json;

GaussianStats gaussian_stats(const Tensor<double>& features) {
  require(features.ndim() == 2, ErrorCode::shape_mismatch, "gaussian_stats expects [N,F]");
  int64_t n = features.dim(0), f = features.dim(1);
  require(n >= 2, ErrorCode::invalid_argument,
          "gaussian_stats needs at least 2 samples, got " + std::to_string(n));
  GaussianStats stats;
  stats.count = n;
  stats.mean = Tensor<double>({f});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) stats.mean[j] += features[i * f + j];
  for (int64_t j = 0; j < f; ++j) stats.mean[j] /= static_cast<double>(n);
  stats.cov = Tensor<double>({f, f});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t a = 0; a < f; ++a) {
      double da = features[i * f + a] - stats.mean[a];
      for (int64_t b = a; b < f; ++b) {
        stats.cov[a * f + b] += da * (features[i * f + b] - stats.mean[b]);
      }
    }
  }
  double denom = static_cast<double>(n - 1);
  for (int64_t a = 0; a < f; ++a)
    for (int64_t b = a; b < f; ++b) {
      stats.cov[a * f + b] /= denom;
      stats.cov[b * f + a] = stats.cov[a * f + b];
    }
  return stats;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor<double>& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j) m(i, j) = t[i * t.dim(1) + j];
  return m;
}

// Symmetric PSD square root; negative eigenvalues are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = es.eigenvalues();
  for (int i = 0; i < vals.size(); ++i) vals(i) = vals(i) > 0 ? std::sqrt(vals(i)) : 0.0;
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.shape() == b.mean.shape(), ErrorCode::dimension_mismatch,
          "fid: feature dimensions differ, " + shape_str(a.mean.shape()) + " vs " +
              shape_str(b.mean.shape()));
  int64_t f = a.mean.dim(0);
  double mean_term = 0;
  for (int64_t j = 0; j < f; ++j) {
    double d = a.mean[j] - b.mean[j];
    mean_term += d * d;
  }
  Eigen::MatrixXd ca = to_eigen(a.cov);
  Eigen::MatrixXd cb = to_eigen(b.cov);
  // Tr((Sa Sb)^{1/2}) computed through the symmetric form
  // sqrt(Sa)^T Sb sqrt(Sa), which shares its spectrum with Sa Sb.
  Eigen::MatrixXd ra = psd_sqrt(ca);
  Eigen::MatrixXd inner = ra * cb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  double tr_sqrt = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    double v = es.eigenvalues()(i);
    tr_sqrt += v > 0 ? std::sqrt(v) : 0.0;
  }
  return mean_term + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
}

namespace {

void validate_prob_rows(const Tensor<double>& probs) {
  require(probs.ndim() == 2, ErrorCode::shape_mismatch, "probabilities must be [B,k]");
  int64_t bsz = probs.dim(0), k = probs.dim(1);
  for (int64_t b = 0; b < bsz; ++b) {
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) {
      require(probs[b * k + j] >= -1e-9, ErrorCode::invalid_argument,
              "negative probability entry");
      sum += probs[b * k + j];
    }
    require(std::abs(sum - 1.0) < 1e-6, ErrorCode::invalid_argument,
            "probability row " + std::to_string(b) + " sums to " + std::to_string(sum) +
                ", expected 1 within 1e-6");
  }
}

double mean_kl_to_marginal(const Tensor<double>& probs) {
  int64_t bsz = probs.dim(0), k = probs.dim(1);
  std::vector<double> marginal(static_cast<size_t>(k), 0.0);
  for (int64_t b = 0; b < bsz; ++b)
    for (int64_t j = 0; j < k; ++j) marginal[static_cast<size_t>(j)] += probs[b * k + j];
  for (double& m : marginal) m /= static_cast<double>(bsz);
  double kl_sum = 0;
  for (int64_t b = 0; b < bsz; ++b) {
    for (int64_t j = 0; j < k; ++j) {
      double p = probs[b * k + j];
      if (p <= 0) continue;
      kl_sum += p * (std::log(p) - std::log(std::max(marginal[static_cast<size_t>(j)], 1e-300)));
    }
  }
  return kl_sum / static_cast<double>(bsz);
}

}  // namespace

double inception_score(const Tensor<double>& probs) {
  validate_prob_rows(probs);
  require(probs.dim(0) >= 2, ErrorCode::invalid_argument,
          "inception_score needs at least 2 samples");
  return std::exp(mean_kl_to_marginal(probs));
}

double conditional_inception_score(const std::vector<Tensor<double>>& probs_per_input) {
  require(!probs_per_input.empty(), ErrorCode::invalid_argument,
          "conditional_inception_score needs at least one input");
  double acc = 0;
  for (const auto& probs : probs_per_input) {
    validate_prob_rows(probs);
    require(probs.dim(0) >= 1, ErrorCode::invalid_argument,
            "conditional_inception_score: empty sample set for an input");
    acc += mean_kl_to_marginal(probs);
  }
  return std::exp(acc / static_cast<double>(probs_per_input.size()));
}

double lpips_distance(const std::vector<Tensor<float>>& stack_a,
                      const std::vector<Tensor<float>>& stack_b) {
  require(stack_a.size() == stack_b.size(), ErrorCode::dimension_mismatch,
          "lpips_distance: stacks have different depth");
  double total = 0;
  for (size_t l = 0; l < stack_a.size(); ++l) {
    const Tensor<float>& fa = stack_a[l];
    const Tensor<float>& fb = stack_b[l];
    require(fa.shape() == fb.shape(), ErrorCode::dimension_mismatch,
            "lpips_distance: layer shape mismatch");
    int64_t c = fa.dim(1), h = fa.dim(2), w = fa.dim(3);
    double layer_acc = 0;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double na = 0, nb = 0;
        for (int64_t ch = 0; ch < c; ++ch) {
          double va = fa[(ch * h + y) * w + x];
          double vb = fb[(ch * h + y) * w + x];
          na += va * va;
          nb += vb * vb;
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        for (int64_t ch = 0; ch < c; ++ch) {
          double d = fa[(ch * h + y) * w + x] / na - fb[(ch * h + y) * w + x] / nb;
          layer_acc += d * d;
        }
      }
    total += layer_acc / static_cast<double>(h * w);
  }
  return total;
}

double lpips_diversity(FeatureExtractor& extractor,
                       const std::vector<std::vector<Tensor<float>>>& samples_per_input,
                       int64_t pairs, Rng& rng) {
  require(!samples_per_input.empty(), ErrorCode::protocol, "lpips_diversity: no inputs");
  require(pairs >= 1, ErrorCode::protocol, "lpips_diversity: pair count must be positive");
  double grand = 0;
  for (const auto& samples : samples_per_input) {
    require(samples.size() >= 2, ErrorCode::protocol,
            "lpips_diversity needs at least 2 samples per input, got " +
                std::to_string(samples.size()));
    std::vector<std::vector<Tensor<float>>> stacks;
    stacks.reserve(samples.size());
    for (const auto& img : samples) {
      Tensor<float> batch = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
      stacks.push_back(extractor.feature_stack(batch));
    }
    double acc = 0;
    int64_t m = static_cast<int64_t>(samples.size());
    for (int64_t p = 0; p < pairs; ++p) {
      int64_t i = rng.uniform_int(0, m - 1);
      int64_t j = rng.uniform_int(0, m - 2);
      if (j >= i) ++j;
      acc += lpips_distance(stacks[static_cast<size_t>(i)], stacks[static_cast<size_t>(j)]);
    }
    grand += acc / static_cast<double>(pairs);
  }
  return grand / static_cast<double>(samples_per_input.size());
}

double classification_error_percent(FeatureExtractor& extractor,
                                    const std::vector<Tensor<float>>& images,
                                    const std::vector<int64_t>& target_labels) {
  require(images.size() == target_labels.size() && !images.empty(), ErrorCode::invalid_argument,
          "classification_error: image/label count mismatch");
  int64_t k = extractor.num_classes();
  int64_t wrong = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    require(target_labels[i] >= 0 && target_labels[i] < k, ErrorCode::config,
            "classification_error: target label " + std::to_string(target_labels[i]) +
                " outside extractor's " + std::to_string(k) + " classes");
    const Tensor<float>& img = images[i];
    Tensor<float> probs =
        extractor.probabilities(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
    int64_t arg = 0;
    for (int64_t j = 1; j < k; ++j)
      if (probs[j] > probs[arg]) arg = j;
    wrong += arg != target_labels[i] ? 1 : 0;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(images.size());
}

void EvalProtocol::validate() const {
  require(num_inputs >= 1, ErrorCode::protocol, "protocol: num_inputs must be positive");
  require(samples_per_input >= 2, ErrorCode::protocol,
          "protocol: samples_per_input must be >= 2 (CIS/LPIPS need sample pairs)");
  require(fid_samples >= 1 && cls_samples >= 1, ErrorCode::protocol,
          "protocol: per-metric sample counts must be positive");
  require(pairs >= 1, ErrorCode::protocol, "protocol: pairs must be positive");
}

json EvalProtocol::to_json() const {
  return json{{"num_inputs", num_inputs}, {"samples_per_input", samples_per_input},
              {"fid_samples", fid_samples}, {"cls_samples", cls_samples},
              {"pairs", pairs},             {"seed", seed}};
}

EvalProtocol EvalProtocol::from_json(const json& j) {
  static const std::vector<std::string> known = {"num_inputs", "samples_per_input", "fid_samples",
                                                 "cls_samples", "pairs", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in evaluation protocol: " + it.key());
  EvalProtocol p;
  if (j.contains("num_inputs")) p.num_inputs = j.at("num_inputs").get<int64_t>();
  if (j.contains("samples_per_input")) p.samples_per_input = j.at("samples_per_input").get<int64_t>();
  if (j.contains("fid_samples")) p.fid_samples = j.at("fid_samples").get<int64_t>();
  if (j.contains("cls_samples")) p.cls_samples = j.at("cls_samples").get<int64_t>();
  if (j.contains("pairs")) p.pairs = j.at("pairs").get<int64_t>();
  if (j.contains("seed")) p.seed = j.at("seed").get<uint64_t>();
  p.validate();
  return p;
}

json EvalReport::to_json() const {
  return json{{"FID", fid_value},   {"IS", is_value},
              {"CIS", cis_value},   {"LPIPS", lpips_value},
              {"Cls_error", cls_error}, {"protocol", protocol},
              {"extractor_hash", extractor_hash}};
}

EvalReport evaluate_translations(FeatureExtractor& extractor, const MultiDomainDataset& dataset,
                                 const EvalProtocol& protocol, const TranslateFn& translate,
                                 int64_t image_size, int64_t style_dim) {
  protocol.validate();
  int64_t n = dataset.domain_count();
  require(extractor.num_classes() == n, ErrorCode::config,
          "extractor has " + std::to_string(extractor.num_classes()) + " classes but the dataset has " +
              std::to_string(n) + " domains");
  for (int64_t d = 0; d < n; ++d)
    require(static_cast<int64_t>(dataset.test_files[static_cast<size_t>(d)].size()) >=
                protocol.num_inputs,
            ErrorCode::protocol,
            "domain '" + dataset.domains[static_cast<size_t>(d)] + "' has only " +
                std::to_string(dataset.test_files[static_cast<size_t>(d)].size()) +
                " test images; scale num_inputs down to evaluate this dataset");

  Rng rng(protocol.seed);
  int64_t per_input = std::max({protocol.samples_per_input, protocol.fid_samples,
                                protocol.cls_samples});

  std::vector<Tensor<double>> all_probs_blocks;
  std::vector<Tensor<double>> cis_blocks;
  std::vector<std::vector<Tensor<float>>> lpips_inputs;
  std::vector<Tensor<float>> cls_images;
  std::vector<int64_t> cls_targets;
  std::vector<std::vector<std::vector<double>>> gen_features(static_cast<size_t>(n));
  std::vector<std::vector<std::vector<double>>> real_features(static_cast<size_t>(n));

  // Real-image statistics per domain.
  for (int64_t d = 0; d < n; ++d) {
    for (int64_t i = 0; i < protocol.num_inputs; ++i) {
      Tensor<float> plane = load_and_preprocess(
          dataset.test_files[static_cast<size_t>(d)][static_cast<size_t>(i)], image_size, false);
      Tensor<float> feats = extractor.penultimate(plane.reshaped({1, 3, image_size, image_size}));
      real_features[static_cast<size_t>(d)].emplace_back(feats.data(),
                                                         feats.data() + feats.numel());
    }
  }

  for (int64_t src = 0; src < n; ++src) {
    for (int64_t dst = 0; dst < n; ++dst) {
      if (src == dst) continue;
      for (int64_t i = 0; i < protocol.num_inputs; ++i) {
        Tensor<float> input = load_and_preprocess(
            dataset.test_files[static_cast<size_t>(src)][static_cast<size_t>(i)], image_size,
            false);
        Tensor<float> styles({per_input, style_dim});
        for (int64_t q = 0; q < styles.numel(); ++q)
          styles[q] = static_cast<float>(rng.normal());
        Tensor<float> outputs = translate(input, dst, styles);  // [per_input,3,S,S]

        Tensor<float> probs_f = extractor.probabilities(outputs);
        int64_t k = probs_f.dim(1);
        Tensor<double> probs_block({protocol.samples_per_input, k});
        for (int64_t s = 0; s < protocol.samples_per_input; ++s)
          for (int64_t j = 0; j < k; ++j)
            probs_block[s * k + j] = static_cast<double>(probs_f[s * k + j]);
        all_probs_blocks.push_back(probs_block);
        cis_blocks.push_back(probs_block);

        Tensor<float> feats = extractor.penultimate(outputs);
        for (int64_t s = 0; s < protocol.fid_samples; ++s)
          gen_features[static_cast<size_t>(dst)].emplace_back(
              feats.data() + s * feats.dim(1), feats.data() + (s + 1) * feats.dim(1));

        std::vector<Tensor<float>> samples;
        int64_t plane_elems = 3 * image_size * image_size;
        for (int64_t s = 0; s < protocol.samples_per_input; ++s) {
          Tensor<float> img({3, image_size, image_size});
          std::copy_n(outputs.data() + s * plane_elems, plane_elems, img.data());
          samples.push_back(std::move(img));
        }
        for (int64_t s = 0; s < protocol.cls_samples; ++s) {
          cls_images.push_back(samples.size() > static_cast<size_t>(s)
                                   ? samples[static_cast<size_t>(s)]
                                   : samples.back());
          cls_targets.push_back(dst);
        }
        lpips_inputs.push_back(std::move(samples));
      }
    }
  }

  // Pool the per-block probabilities for IS.
  int64_t total_rows = 0;
  int64_t k = extractor.num_classes();
  for (const auto& blk : all_probs_blocks) total_rows += blk.dim(0);
  Tensor<double> pooled({total_rows, k});
  int64_t row = 0;
  for (const auto& blk : all_probs_blocks) {
    std::copy_n(blk.data(), blk.numel(), pooled.data() + row * k);
    row += blk.dim(0);
  }

  EvalReport report;
  report.is_value = inception_score(pooled);
  report.cis_value = conditional_inception_score(cis_blocks);
  report.lpips_value = lpips_diversity(extractor, lpips_inputs, protocol.pairs, rng);
  report.cls_error = classification_error_percent(extractor, cls_images, cls_targets);

  double fid_acc = 0;
  for (int64_t d = 0; d < n; ++d) {
    auto pack = [](const std::vector<std::vector<double>>& rows) {
      int64_t m = static_cast<int64_t>(rows.size());
      int64_t f = static_cast<int64_t>(rows.front().size());
      Tensor<double> t({m, f});
      for (int64_t i = 0; i < m; ++i)
        std::copy_n(rows[static_cast<size_t>(i)].data(), f, t.data() + i * f);
      return t;
    };
    fid_acc += fid(gaussian_stats(pack(real_features[static_cast<size_t>(d)])),
                   gaussian_stats(pack(gen_features[static_cast<size_t>(d)])));
  }
  report.fid_value = fid_acc / static_cast<double>(n);

  report.protocol = protocol.to_json();
  report.extractor_hash = extractor.identity_hash();
  return report;
}

}  // namespace sologan
