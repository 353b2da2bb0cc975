#include "sologan.h"

#include <filesystem>
#include <fstream>

#include "api/session.hpp"
#include "data/synthetic.hpp"
#include "eval/metrics.hpp"
#include "train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sologan;

namespace {

thread_local std::string g_last_error;

sologan_status map_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_label:
    case ErrorCode::config:
      return SOLOGAN_ERR_CONFIG;
    case ErrorCode::dataset:
    case ErrorCode::decode:
    case ErrorCode::protocol:
      return SOLOGAN_ERR_DATA;
    case ErrorCode::io:
      return SOLOGAN_ERR_IO;
    default:
      return SOLOGAN_ERR_RUNTIME;
  }
}

template <typename Fn>
sologan_status guarded(Fn&& fn) {
  try {
    fn();
    return SOLOGAN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("configuration document error: ") + e.what();
    return SOLOGAN_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SOLOGAN_ERR_RUNTIME;
  }
}

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  std::string data_root;
  std::vector<std::string> declared_domains;
  bool has_declared = false;
};

RunConfig parse_run_config(const char* text) {
  require(text != nullptr && *text != '\0', ErrorCode::config, "run configuration is empty");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::config, std::string("run configuration is not valid JSON: ") + e.what());
  }
  static const std::vector<std::string> known = {"network", "train",      "data",
                                                 "synthetic", "evaluate", "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in run configuration: " + it.key());
  RunConfig cfg;
  if (j.contains("network")) cfg.network = network_config_from_json(j.at("network"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  require(j.contains("data") && j.at("data").contains("root"), ErrorCode::config,
          "run configuration needs data.root (the dataset directory)");
  const json& data = j.at("data");
  static const std::vector<std::string> known_data = {"root", "declared_domains"};
  for (auto it = data.begin(); it != data.end(); ++it)
    require(std::find(known_data.begin(), known_data.end(), it.key()) != known_data.end(),
            ErrorCode::config, "unknown key in data section: " + it.key());
  cfg.data_root = data.at("root").get<std::string>();
  if (data.contains("declared_domains")) {
    cfg.declared_domains = data.at("declared_domains").get<std::vector<std::string>>();
    cfg.has_declared = true;
  }
  return cfg;
}

Tensor<float> load_input_plane(const char* path, int64_t image_size) {
  require(path != nullptr, ErrorCode::config, "null input path");
  require(fs::exists(path), ErrorCode::dataset, std::string("input image not found: ") + path);
  return load_and_preprocess(path, image_size, /*train=*/false);
}

}  // namespace

struct sologan_session {
  explicit sologan_session(const std::string& path) : impl(path) {}
  InferenceSession impl;
};

extern "C" {

const char* sologan_version(void) { return "0.1.0"; }

const char* sologan_last_error(void) { return g_last_error.c_str(); }

sologan_status sologan_make_synthetic(const char* spec_json, const char* out_dir) {
  return guarded([&] {
    require(out_dir != nullptr && *out_dir != '\0', ErrorCode::config,
            "make_synthetic: output directory is required");
    SyntheticSpec spec = (spec_json == nullptr || *spec_json == '\0')
                             ? SyntheticSpec::two_domain_default()
                             : SyntheticSpec::from_json(spec_json);
    make_synthetic(spec, out_dir);
  });
}

sologan_status sologan_train(const char* run_config_json, const char* output_dir,
                             const char* resume_checkpoint, sologan_log_fn log_fn, void* user) {
  return guarded([&] {
    require(output_dir != nullptr && *output_dir != '\0', ErrorCode::config,
            "train: output directory is required");
    RunConfig cfg = parse_run_config(run_config_json);
    MultiDomainDataset dataset =
        load_dataset(cfg.data_root, cfg.has_declared ? &cfg.declared_domains : nullptr);
    cfg.network.domain_count = dataset.domain_count();

    Trainer trainer(cfg.network, cfg.train, LossWeights<float>{}, std::move(dataset));
    if (resume_checkpoint != nullptr && *resume_checkpoint != '\0') {
      trainer.resume_from(resume_checkpoint);
    } else {
      trainer.init_fresh();
    }

    fs::create_directories(output_dir);
    json effective = {{"network", network_config_to_json(cfg.network)},
                      {"train", train_config_to_json(cfg.train)},
                      {"data", {{"root", cfg.data_root}}}};
    std::ofstream echo(fs::path(output_dir) / "effective_config.json");
    require(echo.good(), ErrorCode::io,
            std::string("cannot write effective config under ") + output_dir);
    echo << effective.dump(2) << "\n";
    echo.close();

    Trainer::LogCallback cb;
    if (log_fn) cb = [log_fn, user](const std::string& line) { log_fn(line.c_str(), user); };
    trainer.run(output_dir, cb);
  });
}

sologan_status sologan_session_open(const char* checkpoint_path, sologan_session** out_session) {
  return guarded([&] {
    require(checkpoint_path != nullptr && out_session != nullptr, ErrorCode::config,
            "session_open: checkpoint path and out pointer are required");
    *out_session = new sologan_session(checkpoint_path);
  });
}

void sologan_session_close(sologan_session* session) { delete session; }

int64_t sologan_session_domain_count(const sologan_session* session) {
  return session ? static_cast<int64_t>(session->impl.domains().size()) : 0;
}

const char* sologan_session_domain_name(const sologan_session* session, int64_t index) {
  if (!session || index < 0 || index >= sologan_session_domain_count(session)) return nullptr;
  return session->impl.domains()[static_cast<size_t>(index)].c_str();
}

int64_t sologan_session_image_size(const sologan_session* session) {
  return session ? session->impl.config().image_size : 0;
}

sologan_status sologan_translate(sologan_session* session, const char* const* input_paths,
                                 int64_t n_inputs, const char* target_domain, int64_t num_samples,
                                 uint64_t seed, const char* output_dir, int write_grid) {
  return guarded([&] {
    require(session != nullptr, ErrorCode::config, "translate: null session");
    require(input_paths != nullptr && n_inputs >= 1, ErrorCode::config,
            "translate: at least one input image is required");
    require(num_samples >= 1, ErrorCode::config, "translate: num_samples must be >= 1");
    require(target_domain != nullptr, ErrorCode::config, "translate: target domain is required");
    require(output_dir != nullptr && *output_dir != '\0', ErrorCode::config,
            "translate: output directory is required");
    int64_t target = session->impl.label_of(target_domain);
    int64_t image_size = session->impl.config().image_size;
    int64_t style_dim = session->impl.config().style_dim;
    fs::create_directories(output_dir);

    Rng rng(seed);
    std::vector<std::vector<ImageU8>> grid_rows;
    for (int64_t i = 0; i < n_inputs; ++i) {
      Tensor<float> input = load_input_plane(input_paths[i], image_size);
      Tensor<float> styles({num_samples, style_dim});
      for (int64_t q = 0; q < styles.numel(); ++q) styles[q] = static_cast<float>(rng.normal());
      Tensor<float> outputs = session->impl.translate(input, target, styles);

      std::vector<ImageU8> row;
      row.push_back(plane_to_image(input));
      std::string stem = fs::path(input_paths[i]).stem().string();
      int64_t plane_elems = 3 * image_size * image_size;
      for (int64_t s = 0; s < num_samples; ++s) {
        Tensor<float> img({3, image_size, image_size});
        std::copy_n(outputs.data() + s * plane_elems, plane_elems, img.data());
        ImageU8 png = plane_to_image(img);
        char name[256];
        std::snprintf(name, sizeof(name), "%03lld_%s_to_%s_s%02lld.png",
                      static_cast<long long>(i), stem.c_str(), target_domain,
                      static_cast<long long>(s));
        encode_png((fs::path(output_dir) / name).string(), png);
        row.push_back(std::move(png));
      }
      grid_rows.push_back(std::move(row));
    }
    if (write_grid) {
      ImageU8 grid = compose_grid(grid_rows);
      encode_png((fs::path(output_dir) / (std::string("grid_to_") + target_domain + ".png")).string(),
                 grid);
    }
  });
}

sologan_status sologan_guide(sologan_session* session, const char* content_path,
                             const char* style_path, const char* style_domain,
                             const char* output_path) {
  return guarded([&] {
    require(session != nullptr, ErrorCode::config, "guide: null session");
    require(content_path && style_path && style_domain && output_path, ErrorCode::config,
            "guide: content, style, style domain, and output path are required");
    int64_t label = session->impl.label_of(style_domain);
    int64_t image_size = session->impl.config().image_size;
    Tensor<float> content = load_input_plane(content_path, image_size);
    Tensor<float> style = load_input_plane(style_path, image_size);
    Tensor<float> out = session->impl.guide(content, style, label);
    encode_png(output_path, plane_to_image(out));
  });
}

sologan_status sologan_guide_grid(sologan_session* session, const char* const* content_paths,
                                  int64_t n_contents, const char* const* style_paths,
                                  int64_t n_styles, const char* style_domain,
                                  const char* output_path) {
  return guarded([&] {
    require(session != nullptr, ErrorCode::config, "guide_grid: null session");
    require(content_paths && n_contents >= 1 && style_paths && n_styles >= 1, ErrorCode::config,
            "guide_grid: contents and styles are required");
    require(style_domain && output_path, ErrorCode::config,
            "guide_grid: style domain and output path are required");
    int64_t label = session->impl.label_of(style_domain);
    int64_t image_size = session->impl.config().image_size;

    std::vector<Tensor<float>> contents, styles;
    for (int64_t i = 0; i < n_contents; ++i)
      contents.push_back(load_input_plane(content_paths[i], image_size));
    for (int64_t j = 0; j < n_styles; ++j)
      styles.push_back(load_input_plane(style_paths[j], image_size));

    ImageU8 blank;
    blank.width = image_size;
    blank.height = image_size;
    blank.pixels.assign(static_cast<size_t>(image_size) * image_size * 3, 255);

    // Header row: blank corner then the style images; each body row leads
    // with its content image.
    std::vector<std::vector<ImageU8>> rows;
    std::vector<ImageU8> header;
    header.push_back(blank);
    for (const auto& s : styles) header.push_back(plane_to_image(s));
    rows.push_back(std::move(header));
    for (const auto& c : contents) {
      std::vector<ImageU8> row;
      row.push_back(plane_to_image(c));
      for (const auto& s : styles) row.push_back(plane_to_image(session->impl.guide(c, s, label)));
      rows.push_back(std::move(row));
    }
    encode_png(output_path, compose_grid(rows));
  });
}

sologan_status sologan_evaluate(sologan_session* session, const char* dataset_root,
                                const char* protocol_json, const char* extractor_path,
                                const char* report_path) {
  return guarded([&] {
    require(session != nullptr, ErrorCode::config, "evaluate: null session");
    require(dataset_root && report_path, ErrorCode::config,
            "evaluate: dataset root and report path are required");
    MultiDomainDataset dataset = load_dataset(dataset_root);
    require(dataset.domains == session->impl.domains(), ErrorCode::config,
            "evaluate: dataset domains do not match the checkpoint's domains");
    EvalProtocol protocol;
    if (protocol_json != nullptr && *protocol_json != '\0')
      protocol = EvalProtocol::from_json(json::parse(protocol_json));

    int64_t image_size = session->impl.config().image_size;
    std::unique_ptr<ProbeExtractor> extractor;
    if (extractor_path != nullptr && *extractor_path != '\0' && fs::exists(extractor_path)) {
      extractor = ProbeExtractor::load(extractor_path);
      require(extractor->image_size() == image_size, ErrorCode::config,
              "evaluate: extractor image size does not match the checkpoint");
    } else {
      ProbeExtractor::TrainOptions opts;
      opts.seed = protocol.seed + 101;
      extractor = ProbeExtractor::train(dataset, image_size, opts);
      if (extractor_path != nullptr && *extractor_path != '\0') extractor->save(extractor_path);
    }

    EvalReport report =
        evaluate_translations(*extractor, dataset, protocol, session->impl.translate_fn(),
                              image_size, session->impl.config().style_dim);
    std::ofstream out(report_path);
    require(out.good(), ErrorCode::io, std::string("cannot write report to ") + report_path);
    out << report.to_json().dump(2) << "\n";
  });
}

}  // extern "C"
