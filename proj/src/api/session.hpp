#pragma once

#include <string>
#include <vector>

#include "eval/metrics.hpp"
#include "model/networks.hpp"

namespace sologan {

// Frozen model loaded from a training checkpoint; all forwards run in eval
// mode and are pure functions of the stored state.
class InferenceSession {
 public:
  explicit InferenceSession(const std::string& checkpoint_path);

  const NetworkConfig& config() const { return config_; }
  const std::vector<std::string>& domains() const { return domains_; }
  int64_t label_of(const std::string& domain_name) const;

  // [3,S,S] input, [k,style_dim] styles -> [k,3,S,S] translations.
  Tensor<float> translate(const Tensor<float>& input, int64_t target_label,
                          const Tensor<float>& styles);

  // Example-guided: content of x1 combined with the style of (x2, y2).
  Tensor<float> guide(const Tensor<float>& content_image, const Tensor<float>& style_image,
                      int64_t style_domain);

  Tensor<float> encode_style_of(const Tensor<float>& image, int64_t label);

  TranslateFn translate_fn();

  SologanModel<float>& model() { return model_; }

 private:
  NetworkConfig config_;
  std::vector<std::string> domains_;
  SologanModel<float> model_;
};

// Horizontal/vertical grid of equally sized tiles with a white separator.
ImageU8 compose_grid(const std::vector<std::vector<ImageU8>>& rows, int64_t separator = 2);

}  // namespace sologan
