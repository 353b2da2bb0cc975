#pragma once

#include <functional>
#include <optional>
#include <string>

#include "data/dataset.hpp"
#include "model/losses.hpp"
#include "model/networks.hpp"
#include "nn/optim.hpp"
#include "train/checkpoint.hpp"

namespace sologan {

struct TrainConfig {
  int64_t n_epochs_flat = 50;
  int64_t n_epochs_decay = 50;
  double lr0 = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  uint64_t seed = 0;
  int64_t checkpoint_interval = 10;  // epochs between checkpoints
  int64_t steps_per_epoch = 0;       // 0: largest domain's train count
  double grad_clip = 0.0;            // 0 disables
  bool ablate_latent = false;        // w/o-latent variant: drops L_rec^latent

  void validate() const {
    require(lr0 > 0, ErrorCode::config, "lr0 must be positive");
    require(n_epochs_flat >= 1 && n_epochs_decay >= 0, ErrorCode::config,
            "epoch counts must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorCode::config,
            "Adam betas must lie in [0,1)");
    require(checkpoint_interval >= 1, ErrorCode::config, "checkpoint_interval must be >= 1");
  }

  int64_t total_epochs() const { return n_epochs_flat + n_epochs_decay; }
};

// lr0 for the flat phase, then linear decay hitting zero at the last epoch.
double lr_schedule(int64_t epoch, const TrainConfig& cfg);

struct TrainBatch {
  Tensor<float> images;  // [n, 3, S, S]
  std::vector<int64_t> labels;
};

// One uniformly sampled, train-preprocessed image per domain.
TrainBatch sample_training_batch(const MultiDomainDataset& dataset, int64_t image_size, Rng& rng);

struct StepRecord {
  double adv_d = 0, cls_r = 0, total_d = 0;
  double adv_g = 0, cls_t = 0, cyc = 0, rec_img = 0;
  double rec_latent_style = 0, rec_latent_content = 0, total_ge = 0;
};

class Trainer {
 public:
  Trainer(const NetworkConfig& net_cfg, const TrainConfig& train_cfg,
          const LossWeights<float>& weights, MultiDomainDataset dataset);

  // Xavier init of all networks, fresh optimizer state.
  void init_fresh();

  void resume_from(const std::string& checkpoint_path);

  // One D update followed by one G/E update on a freshly sampled batch.
  StepRecord step();

  // Same, on a caller-provided batch (deterministic tests).
  StepRecord step_on(const TrainBatch& batch);

  // Runs the remaining epochs; appends JSONL records to
  // <output_dir>/train_log.jsonl and checkpoints into output_dir. The output
  // directory is locked for the duration of the run.
  using LogCallback = std::function<void(const std::string& jsonl_line)>;
  void run(const std::string& output_dir, const LogCallback& cb = nullptr);

  void save(const std::string& path) const;
  CheckpointBundle make_bundle() const;

  SologanModel<float>& model() { return model_; }
  const MultiDomainDataset& dataset() const { return dataset_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  int64_t next_epoch() const { return next_epoch_; }
  int64_t global_step() const { return global_step_; }
  double current_lr() const { return opt_ge_.lr(); }
  Rng& rng() { return rng_; }

  int64_t steps_per_epoch() const;

 private:
  StepRecord step_impl(const TrainBatch& batch);
  void zero_all_grads();
  void set_discriminator_frozen(bool frozen);
  void apply_bundle(const CheckpointBundle& bundle);

  NetworkConfig net_cfg_;
  TrainConfig train_cfg_;
  LossWeights<float> weights_;
  MultiDomainDataset dataset_;
  SologanModel<float> model_;
  ParamBag<float> ge_bag_, d_bag_;
  Adam<float> opt_ge_, opt_d_;
  Rng rng_;
  int64_t next_epoch_ = 0;   // first epoch run() will execute
  int64_t global_step_ = 0;  // completed optimization steps
};

// Shared by the trainer and the inference session: parameter/buffer transfer
// between a model and a checkpoint array map.
void store_model_arrays(SologanModel<float>& model, std::map<std::string, Tensor<float>>& arrays);
void apply_model_arrays(SologanModel<float>& model,
                        const std::map<std::string, Tensor<float>>& arrays);

nlohmann::json network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace sologan
