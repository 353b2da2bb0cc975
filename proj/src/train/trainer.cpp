#include "train/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sologan {

double lr_schedule(int64_t epoch, const TrainConfig& cfg) {
  require(epoch >= 0 && epoch < cfg.total_epochs(), ErrorCode::invalid_argument,
          "epoch " + std::to_string(epoch) + " outside schedule [0," +
              std::to_string(cfg.total_epochs()) + ")");
  if (epoch < cfg.n_epochs_flat) return cfg.lr0;
  double progressed = static_cast<double>(epoch - cfg.n_epochs_flat + 1);
  return cfg.lr0 * (1.0 - progressed / static_cast<double>(cfg.n_epochs_decay));
}

TrainBatch sample_training_batch(const MultiDomainDataset& dataset, int64_t image_size, Rng& rng) {
  int64_t n = dataset.domain_count();
  require(n >= 2, ErrorCode::dataset, "training requires at least 2 domains");
  TrainBatch batch;
  batch.images = Tensor<float>({n, 3, image_size, image_size});
  for (int64_t d = 0; d < n; ++d) {
    const auto& files = dataset.train_files[static_cast<size_t>(d)];
    require(!files.empty(), ErrorCode::dataset,
            "domain '" + dataset.domains[static_cast<size_t>(d)] + "' has no training images");
    int64_t idx = rng.uniform_int(0, static_cast<int64_t>(files.size()) - 1);
    Tensor<float> plane =
        load_and_preprocess(files[static_cast<size_t>(idx)], image_size, /*train=*/true, &rng);
    std::copy_n(plane.data(), plane.numel(), batch.images.data() + d * plane.numel());
    batch.labels.push_back(d);
  }
  return batch;
}

Trainer::Trainer(const NetworkConfig& net_cfg, const TrainConfig& train_cfg,
                 const LossWeights<float>& weights, MultiDomainDataset dataset)
    : net_cfg_(net_cfg),
      train_cfg_(train_cfg),
      weights_(weights),
      dataset_(std::move(dataset)),
      model_(net_cfg),
      rng_(train_cfg.seed) {
  net_cfg_.validate();
  train_cfg_.validate();
  require(dataset_.domain_count() == net_cfg_.domain_count, ErrorCode::config,
          "network domain_count " + std::to_string(net_cfg_.domain_count) +
              " does not match dataset domain count " + std::to_string(dataset_.domain_count()));
  ge_bag_ = model_.ge_params();
  d_bag_ = model_.d_params();
  AdamConfig<float> ge_cfg{static_cast<float>(train_cfg_.lr0), static_cast<float>(train_cfg_.beta1),
                           static_cast<float>(train_cfg_.beta2), 1e-8f,
                           static_cast<float>(train_cfg_.grad_clip)};
  opt_ge_ = Adam<float>(ge_bag_.param_vars(), ge_cfg);
  opt_d_ = Adam<float>(d_bag_.param_vars(), ge_cfg);
}

void Trainer::init_fresh() {
  model_.init(train_cfg_.seed);
  rng_ = Rng(train_cfg_.seed + 1);
  next_epoch_ = 0;
  global_step_ = 0;
}

int64_t Trainer::steps_per_epoch() const {
  if (train_cfg_.steps_per_epoch > 0) return train_cfg_.steps_per_epoch;
  size_t longest = 0;
  for (const auto& files : dataset_.train_files) longest = std::max(longest, files.size());
  return static_cast<int64_t>(longest);
}

void Trainer::zero_all_grads() {
  opt_ge_.zero_grad();
  opt_d_.zero_grad();
}

void Trainer::set_discriminator_frozen(bool frozen) {
  for (auto& [name, var] : d_bag_.params) const_cast<Var<float>&>(var).set_requires_grad(!frozen);
}

StepRecord Trainer::step() { return step_impl(sample_training_batch(dataset_, net_cfg_.image_size, rng_)); }

StepRecord Trainer::step_on(const TrainBatch& batch) { return step_impl(batch); }

StepRecord Trainer::step_impl(const TrainBatch& batch) {
  TrainingModeGuard guard(true);
  int64_t n = net_cfg_.domain_count;
  require(batch.images.dim(0) == n, ErrorCode::dataset, "batch must hold one image per domain");

  // Target domains: uniform over the other domains. Style: z ~ N(0,1)^8.
  std::vector<int64_t> target_labels(batch.labels.size());
  for (size_t i = 0; i < batch.labels.size(); ++i) {
    int64_t draw = rng_.uniform_int(0, n - 2);
    target_labels[i] = draw >= batch.labels[i] ? draw + 1 : draw;
  }
  Tensor<float> z({n, net_cfg_.style_dim});
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = static_cast<float>(rng_.normal());

  Var<float> x = Var<float>::leaf(batch.images, false);
  Var<float> zv = Var<float>::leaf(z, false);

  // Shared translation tuple; one forward pipeline serves both updates.
  Var<float> c = model_.content_encoder.forward(x);
  Var<float> s = model_.style_encoder.forward(x, batch.labels);
  Var<float> x_hat = model_.generator.forward(c, zv, target_labels);
  Var<float> x_self = model_.generator.forward(c, s, batch.labels);
  Var<float> c_hat = model_.content_encoder.forward(x_hat);
  Var<float> s_hat;
  if (!train_cfg_.ablate_latent) s_hat = model_.style_encoder.forward(x_hat, target_labels);
  Var<float> x_cyc = model_.generator.forward(c_hat, s, batch.labels);

  StepRecord rec;

  // Discriminator update; generator outputs detached.
  zero_all_grads();
  DiscriminatorVerdict<float> v_real = model_.discriminator.forward(x, batch.labels);
  DiscriminatorVerdict<float> v_fake = model_.discriminator.forward(x_hat.detached(), target_labels);
  DLossParts<float> d_parts;
  d_parts.adv_d = adv_loss_d(v_fake.dis, v_real.dis);
  d_parts.cls_r = cls_loss(v_real.cls, batch.labels);
  Var<float> l_d = total_d_loss(d_parts, weights_);
  l_d.backward();
  opt_d_.step();
  rec.adv_d = d_parts.adv_d.value().item();
  rec.cls_r = d_parts.cls_r.value().item();
  rec.total_d = l_d.value().item();

  // Joint G/E update against the refreshed discriminator.
  zero_all_grads();
  set_discriminator_frozen(true);
  DiscriminatorVerdict<float> v_fake_g = model_.discriminator.forward(x_hat, target_labels);
  GeLossParts<float> parts;
  parts.adv_g = adv_loss_g(v_fake_g.dis);
  parts.cls_t = cls_loss(v_fake_g.cls, target_labels);
  parts.cyc = cycle_loss(x, x_cyc);
  parts.rec_img = img_rec_loss(x, x_self);
  if (train_cfg_.ablate_latent) {
    parts.rec_latent = Var<float>::leaf(Tensor<float>::scalar(0.0f), false);
  } else {
    auto [style_term, content_term] = latent_rec_loss(zv, s_hat, c, c_hat);
    parts.rec_latent = add(style_term, content_term);
    rec.rec_latent_style = style_term.value().item();
    rec.rec_latent_content = content_term.value().item();
  }
  Var<float> l_ge = total_ge_loss(parts, weights_);
  l_ge.backward();
  opt_ge_.step();
  set_discriminator_frozen(false);

  rec.adv_g = parts.adv_g.value().item();
  rec.cls_t = parts.cls_t.value().item();
  rec.cyc = parts.cyc.value().item();
  rec.rec_img = parts.rec_img.value().item();
  rec.total_ge = l_ge.value().item();

  const std::pair<const char*, double> terms[] = {
      {"adv_d", rec.adv_d},   {"cls_r", rec.cls_r},
      {"adv_g", rec.adv_g},   {"cls_t", rec.cls_t},
      {"cyc", rec.cyc},       {"rec_img", rec.rec_img},
      {"rec_latent_style", rec.rec_latent_style},
      {"rec_latent_content", rec.rec_latent_content}};
  for (const auto& [name, value] : terms)
    require(std::isfinite(value), ErrorCode::divergence,
            "training diverged at step " + std::to_string(global_step_) + ": loss term '" +
                std::string(name) + "' is not finite");

  ++global_step_;
  return rec;
}

void Trainer::run(const std::string& output_dir, const LogCallback& cb) {
  fs::path out(output_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  require(fs::is_directory(out), ErrorCode::io, "cannot create output directory " + output_dir);

  fs::path lock = out / ".train_lock";
  {
    std::ofstream probe(lock, std::ios::out | std::ios::app);
  }
  // A pre-existing lock means another run owns the directory.
  require(!fs::exists(out / ".train_lock.active"), ErrorCode::io,
          "output directory " + output_dir + " is locked by another training run");
  fs::rename(lock, out / ".train_lock.active", ec);
  require(!ec, ErrorCode::io, "cannot lock output directory " + output_dir);

  std::ofstream log(out / "train_log.jsonl", std::ios::app);
  require(log.good(), ErrorCode::io, "cannot open training log in " + output_dir);

  int64_t per_epoch = steps_per_epoch();
  for (int64_t epoch = next_epoch_; epoch < train_cfg_.total_epochs(); ++epoch) {
    double lr = lr_schedule(epoch, train_cfg_);
    opt_ge_.set_lr(static_cast<float>(lr));
    opt_d_.set_lr(static_cast<float>(lr));
    for (int64_t s = 0; s < per_epoch; ++s) {
      StepRecord r = step();
      json line = {{"step", global_step_},
                   {"epoch", epoch},
                   {"lr", lr},
                   {"adv_d", r.adv_d},
                   {"cls_r", r.cls_r},
                   {"total_d", r.total_d},
                   {"adv_g", r.adv_g},
                   {"cls_t", r.cls_t},
                   {"cyc", r.cyc},
                   {"rec_img", r.rec_img},
                   {"rec_latent_style", r.rec_latent_style},
                   {"rec_latent_content", r.rec_latent_content},
                   {"total_ge", r.total_ge}};
      std::string text = line.dump();
      log << text << "\n";
      if (cb) cb(text);
    }
    log.flush();
    next_epoch_ = epoch + 1;
    bool last = epoch + 1 == train_cfg_.total_epochs();
    if ((epoch + 1) % train_cfg_.checkpoint_interval == 0 || last) {
      save((out / ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ckpt")).string());
      save((out / "checkpoint_latest.ckpt").string());
    }
  }
  fs::rename(out / ".train_lock.active", lock, ec);
  fs::remove(lock, ec);
}

CheckpointBundle Trainer::make_bundle() const {
  auto* self = const_cast<Trainer*>(this);
  CheckpointBundle bundle;
  bundle.meta["format_version"] = kCheckpointFormatVersion;
  bundle.meta["epoch"] = next_epoch_;
  bundle.meta["global_step"] = global_step_;
  bundle.meta["rng"] = rng_.serialize();
  bundle.meta["network"] = network_config_to_json(net_cfg_);
  bundle.meta["train"] = train_config_to_json(train_cfg_);
  bundle.meta["domains"] = dataset_.domains;
  bundle.meta["adam_ge_steps"] = self->opt_ge_.step_count();
  bundle.meta["adam_d_steps"] = self->opt_d_.step_count();

  store_model_arrays(self->model_, bundle.arrays);
  auto store_opt = [&](const char* prefix, Adam<float>& opt, ParamBag<float>& bag) {
    for (size_t i = 0; i < bag.params.size(); ++i) {
      bundle.arrays[std::string(prefix) + ".m." + bag.params[i].first] = opt.first_moments()[i];
      bundle.arrays[std::string(prefix) + ".v." + bag.params[i].first] = opt.second_moments()[i];
    }
  };
  store_opt("adam_ge", self->opt_ge_, self->ge_bag_);
  store_opt("adam_d", self->opt_d_, self->d_bag_);
  return bundle;
}

void Trainer::save(const std::string& path) const { save_checkpoint(make_bundle(), path); }

void Trainer::apply_bundle(const CheckpointBundle& bundle) {
  NetworkConfig saved_net = network_config_from_json(bundle.meta.at("network"));
  require(saved_net.domain_count == net_cfg_.domain_count, ErrorCode::config,
          "checkpoint domain_count " + std::to_string(saved_net.domain_count) +
              " does not match configured " + std::to_string(net_cfg_.domain_count));
  require(saved_net.image_size == net_cfg_.image_size &&
              saved_net.base_channels == net_cfg_.base_channels &&
              saved_net.style_dim == net_cfg_.style_dim,
          ErrorCode::config, "checkpoint network configuration does not match");
  std::vector<std::string> saved_domains = bundle.meta.at("domains").get<std::vector<std::string>>();
  require(saved_domains == dataset_.domains, ErrorCode::config,
          "checkpoint domain names do not match the dataset");

  apply_model_arrays(model_, bundle.arrays);
  auto load_opt = [&](const char* prefix, Adam<float>& opt, ParamBag<float>& bag) {
    for (size_t i = 0; i < bag.params.size(); ++i) {
      auto mi = bundle.arrays.find(std::string(prefix) + ".m." + bag.params[i].first);
      auto vi = bundle.arrays.find(std::string(prefix) + ".v." + bag.params[i].first);
      require(mi != bundle.arrays.end() && vi != bundle.arrays.end(), ErrorCode::checkpoint_corrupt,
              "checkpoint missing optimizer state for " + bag.params[i].first);
      opt.first_moments()[i] = mi->second;
      opt.second_moments()[i] = vi->second;
    }
  };
  load_opt("adam_ge", opt_ge_, ge_bag_);
  load_opt("adam_d", opt_d_, d_bag_);
  opt_ge_.set_step_count(bundle.meta.at("adam_ge_steps").get<int64_t>());
  opt_d_.set_step_count(bundle.meta.at("adam_d_steps").get<int64_t>());

  next_epoch_ = bundle.meta.at("epoch").get<int64_t>();
  global_step_ = bundle.meta.at("global_step").get<int64_t>();
  rng_.deserialize(bundle.meta.at("rng").get<std::string>());
  bump_param_generation();
}

void Trainer::resume_from(const std::string& checkpoint_path) {
  apply_bundle(load_checkpoint(checkpoint_path));
}

void store_model_arrays(SologanModel<float>& model, std::map<std::string, Tensor<float>>& arrays) {
  ParamBag<float> bag;
  model.collect(bag);
  for (auto& [name, var] : bag.params) arrays["param." + name] = var.value();
  for (auto& [name, buf] : bag.buffers) arrays["buffer." + name] = *buf;
}

void apply_model_arrays(SologanModel<float>& model,
                        const std::map<std::string, Tensor<float>>& arrays) {
  ParamBag<float> bag;
  model.collect(bag);
  for (auto& [name, var] : bag.params) {
    auto it = arrays.find("param." + name);
    require(it != arrays.end(), ErrorCode::checkpoint_corrupt,
            "checkpoint missing parameter " + name);
    require(it->second.shape() == var.value().shape(), ErrorCode::checkpoint_corrupt,
            "checkpoint parameter " + name + " has shape " + shape_str(it->second.shape()) +
                ", expected " + shape_str(var.value().shape()));
    const_cast<Var<float>&>(var).value() = it->second;
  }
  for (auto& [name, buf] : bag.buffers) {
    auto it = arrays.find("buffer." + name);
    require(it != arrays.end(), ErrorCode::checkpoint_corrupt, "checkpoint missing buffer " + name);
    *buf = it->second;
  }
  bump_param_generation();
}

json network_config_to_json(const NetworkConfig& cfg) {
  return json{{"domain_count", cfg.domain_count},
              {"image_size", cfg.image_size},
              {"base_channels", cfg.base_channels},
              {"style_dim", cfg.style_dim}};
}

NetworkConfig network_config_from_json(const json& j) {
  static const std::vector<std::string> known = {"domain_count", "image_size", "base_channels",
                                                 "style_dim"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in network config: " + it.key());
  NetworkConfig cfg;
  if (j.contains("domain_count")) cfg.domain_count = j.at("domain_count").get<int64_t>();
  if (j.contains("image_size")) cfg.image_size = j.at("image_size").get<int64_t>();
  if (j.contains("base_channels")) cfg.base_channels = j.at("base_channels").get<int64_t>();
  if (j.contains("style_dim")) cfg.style_dim = j.at("style_dim").get<int64_t>();
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"n_epochs_flat", cfg.n_epochs_flat},
              {"n_epochs_decay", cfg.n_epochs_decay},
              {"lr0", cfg.lr0},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"seed", cfg.seed},
              {"checkpoint_interval", cfg.checkpoint_interval},
              {"steps_per_epoch", cfg.steps_per_epoch},
              {"grad_clip", cfg.grad_clip},
              {"ablate_latent", cfg.ablate_latent}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "n_epochs_flat", "n_epochs_decay", "lr0",  "beta1",     "beta2",
      "seed",          "checkpoint_interval", "steps_per_epoch", "grad_clip", "ablate_latent"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in train config: " + it.key());
  TrainConfig cfg;
  if (j.contains("n_epochs_flat")) cfg.n_epochs_flat = j.at("n_epochs_flat").get<int64_t>();
  if (j.contains("n_epochs_decay")) cfg.n_epochs_decay = j.at("n_epochs_decay").get<int64_t>();
  if (j.contains("lr0")) cfg.lr0 = j.at("lr0").get<double>();
  if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("checkpoint_interval"))
    cfg.checkpoint_interval = j.at("checkpoint_interval").get<int64_t>();
  if (j.contains("steps_per_epoch")) cfg.steps_per_epoch = j.at("steps_per_epoch").get<int64_t>();
  if (j.contains("grad_clip")) cfg.grad_clip = j.at("grad_clip").get<double>();
  if (j.contains("ablate_latent")) cfg.ablate_latent = j.at("ablate_latent").get<bool>();
  cfg.validate();
  return cfg;
}

}  // namespace sologan
