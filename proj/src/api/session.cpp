#include "api/session.hpp"

#include "train/trainer.hpp"

namespace sologan {

InferenceSession::InferenceSession(const std::string& checkpoint_path) {
  CheckpointBundle bundle = load_checkpoint(checkpoint_path);
  require(bundle.meta.contains("network") && bundle.meta.contains("domains"),
          ErrorCode::checkpoint_corrupt,
          "checkpoint lacks network/domain metadata: " + checkpoint_path);
  config_ = network_config_from_json(bundle.meta.at("network"));
  domains_ = bundle.meta.at("domains").get<std::vector<std::string>>();
  require(static_cast<int64_t>(domains_.size()) == config_.domain_count,
          ErrorCode::checkpoint_corrupt, "checkpoint domain list does not match domain_count");
  model_ = SologanModel<float>(config_);
  apply_model_arrays(model_, bundle.arrays);
}

int64_t InferenceSession::label_of(const std::string& domain_name) const {
  for (size_t i = 0; i < domains_.size(); ++i)
    if (domains_[i] == domain_name) return static_cast<int64_t>(i);
  std::string known;
  for (const auto& d : domains_) known += (known.empty() ? "" : ", ") + d;
  raise(ErrorCode::invalid_label, "unknown domain '" + domain_name + "'; available: " + known);
}

Tensor<float> InferenceSession::translate(const Tensor<float>& input, int64_t target_label,
                                          const Tensor<float>& styles) {
  require(input.ndim() == 3 && input.dim(0) == 3, ErrorCode::shape_mismatch,
          "translate expects a [3,H,W] input plane");
  require(styles.ndim() == 2 && styles.dim(1) == config_.style_dim, ErrorCode::dimension_mismatch,
          "styles must be [k," + std::to_string(config_.style_dim) + "]");
  require(target_label >= 0 && target_label < config_.domain_count, ErrorCode::invalid_label,
          "target label " + std::to_string(target_label) + " out of range");
  TrainingModeGuard guard(false);
  int64_t k = styles.dim(0);
  Var<float> x = Var<float>::leaf(input.reshaped({1, 3, input.dim(1), input.dim(2)}), false);
  Tensor<float> c = model_.content_encoder.forward(x).value();  // [1,C,h,w]
  Tensor<float> c_rep({k, c.dim(1), c.dim(2), c.dim(3)});
  for (int64_t i = 0; i < k; ++i)
    std::copy_n(c.data(), c.numel(), c_rep.data() + i * c.numel());
  std::vector<int64_t> targets(static_cast<size_t>(k), target_label);
  Var<float> out = model_.generator.forward(Var<float>::leaf(std::move(c_rep), false),
                                            Var<float>::leaf(styles, false), targets);
  return out.value();
}

Tensor<float> InferenceSession::encode_style_of(const Tensor<float>& image, int64_t label) {
  require(image.ndim() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
          "encode_style_of expects a [3,H,W] plane");
  TrainingModeGuard guard(false);
  Var<float> x = Var<float>::leaf(image.reshaped({1, 3, image.dim(1), image.dim(2)}), false);
  return model_.style_encoder.forward(x, {label}).value();
}

Tensor<float> InferenceSession::guide(const Tensor<float>& content_image,
                                      const Tensor<float>& style_image, int64_t style_domain) {
  Tensor<float> s = encode_style_of(style_image, style_domain);
  Tensor<float> out = translate(content_image, style_domain, s.reshaped({1, config_.style_dim}));
  return Tensor<float>::from_data(
      {3, out.dim(2), out.dim(3)},
      std::vector<float>(out.data(), out.data() + out.numel()));
}

TranslateFn InferenceSession::translate_fn() {
  return [this](const Tensor<float>& input, int64_t target, const Tensor<float>& styles) {
    return translate(input, target, styles);
  };
}

ImageU8 compose_grid(const std::vector<std::vector<ImageU8>>& rows, int64_t separator) {
  require(!rows.empty() && !rows.front().empty(), ErrorCode::invalid_argument,
          "compose_grid: empty grid");
  int64_t tile_w = rows.front().front().width;
  int64_t tile_h = rows.front().front().height;
  size_t cols = 0;
  for (const auto& row : rows) cols = std::max(cols, row.size());
  int64_t width = static_cast<int64_t>(cols) * tile_w + (static_cast<int64_t>(cols) - 1) * separator;
  int64_t height =
      static_cast<int64_t>(rows.size()) * tile_h + (static_cast<int64_t>(rows.size()) - 1) * separator;
  ImageU8 grid;
  grid.width = width;
  grid.height = height;
  grid.pixels.assign(static_cast<size_t>(width) * height * 3, 255);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t ccol = 0; ccol < rows[r].size(); ++ccol) {
      const ImageU8& tile = rows[r][ccol];
      require(tile.width == tile_w && tile.height == tile_h, ErrorCode::invalid_argument,
              "compose_grid: tiles must share one size");
      int64_t ox = static_cast<int64_t>(ccol) * (tile_w + separator);
      int64_t oy = static_cast<int64_t>(r) * (tile_h + separator);
      for (int64_t y = 0; y < tile_h; ++y)
        std::copy_n(tile.row(y), tile_w * 3, grid.pixels.data() + ((oy + y) * width + ox) * 3);
    }
  }
  return grid;
}

}  // namespace sologan
