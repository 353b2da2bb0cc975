// sologan command-line interface. Links only the public C API; configuration
// documents are plain JSON files.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/data error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sologan.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int exit_code_for(sologan_status status) {
  if (status == SOLOGAN_OK) return kExitOk;
  if (status == SOLOGAN_ERR_CONFIG) return kExitUsage;
  return kExitRuntime;
}

int report_failure(sologan_status status) {
  std::cerr << "error: " << sologan_last_error() << "\n";
  return exit_code_for(status);
}

bool read_file(const std::string& path, std::string& out, std::string& error) {
  std::ifstream in(path);
  if (!in.good()) {
    error = "cannot read file: " + path;
    return false;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

struct SessionHandle {
  sologan_session* ptr = nullptr;
  ~SessionHandle() {
    if (ptr) sologan_session_close(ptr);
  }
};

void log_to_stdout(const char* record, void*) { std::cout << record << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SoloGAN: multimodal multi-domain image-to-image translation"};
  app.require_subcommand(1);

  // --- train ---
  auto* train = app.add_subcommand("train", "Train a model from a run configuration");
  std::string train_config, train_output, train_resume;
  int64_t train_seed = -1;
  int64_t train_image_size = 0;
  bool quiet = false;
  train->add_option("--config", train_config, "Run configuration JSON file")->required();
  train->add_option("--output-dir", train_output, "Output directory (overrides config)");
  train->add_option("--checkpoint", train_resume, "Checkpoint to resume from");
  train->add_option("--seed", train_seed, "Override train.seed");
  train->add_option("--image-size", train_image_size, "Override network.image_size");
  train->add_flag("--quiet", quiet, "Do not echo training records to stdout");

  // --- translate ---
  auto* translate = app.add_subcommand("translate", "Multimodal translation of input images");
  std::string tr_checkpoint, tr_target, tr_output;
  std::vector<std::string> tr_inputs;
  int64_t tr_samples = 5;
  uint64_t tr_seed = 0;
  translate->add_option("--checkpoint", tr_checkpoint, "Trained checkpoint")->required();
  translate->add_option("--target-domain", tr_target, "Target domain name")->required();
  translate->add_option("--num-samples", tr_samples, "Style samples per input");
  translate->add_option("--seed", tr_seed, "Style sampling seed");
  translate->add_option("--output-dir", tr_output, "Output directory")->required();
  translate->add_option("input", tr_inputs, "Input image files")->required();

  // --- guide ---
  auto* guide = app.add_subcommand("guide", "Example-guided translation");
  std::string g_checkpoint, g_domain, g_output;
  std::vector<std::string> g_contents, g_styles;
  guide->add_option("--checkpoint", g_checkpoint, "Trained checkpoint")->required();
  guide->add_option("--style-domain", g_domain, "Domain of the style image(s)")->required();
  guide->add_option("--content", g_contents, "Content image(s)")->required();
  guide->add_option("--style", g_styles, "Style image(s)")->required();
  guide->add_option("--output", g_output, "Output PNG path")->required();

  // --- evaluate ---
  auto* evaluate = app.add_subcommand("evaluate", "Quantitative metric suite");
  std::string e_checkpoint, e_dataset, e_protocol_file, e_extractor, e_report;
  evaluate->add_option("--checkpoint", e_checkpoint, "Trained checkpoint")->required();
  evaluate->add_option("--dataset-root", e_dataset, "Dataset directory")->required();
  evaluate->add_option("--protocol", e_protocol_file, "Protocol JSON file");
  evaluate->add_option("--extractor", e_extractor, "Feature-extractor cache path");
  evaluate->add_option("--report", e_report, "Report output path")->required();

  // --- make-synthetic ---
  auto* synth = app.add_subcommand("make-synthetic", "Generate a synthetic dataset");
  std::string s_spec_file, s_output;
  synth->add_option("--spec", s_spec_file, "SyntheticSpec JSON file (built-in default if omitted)");
  synth->add_option("--output-dir", s_output, "Dataset output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::string file_error;

  if (train->parsed()) {
    std::string config_text;
    if (!read_file(train_config, config_text, file_error)) {
      std::cerr << "error: " << file_error << "\n";
      return kExitUsage;
    }
    nlohmann::json cfg = nlohmann::json::parse(config_text, nullptr, false);
    if (cfg.is_discarded()) {
      std::cerr << "error: " << train_config << " is not valid JSON\n";
      return kExitUsage;
    }
    std::string output_dir = train_output;
    if (output_dir.empty() && cfg.contains("output_dir"))
      output_dir = cfg["output_dir"].get<std::string>();
    if (output_dir.empty()) {
      std::cerr << "error: no output directory (set --output-dir or config output_dir)\n";
      return kExitUsage;
    }
    if (train_seed >= 0) cfg["train"]["seed"] = train_seed;
    if (train_image_size > 0) cfg["network"]["image_size"] = train_image_size;
    sologan_status st =
        sologan_train(cfg.dump().c_str(), output_dir.c_str(),
                      train_resume.empty() ? nullptr : train_resume.c_str(),
                      quiet ? nullptr : log_to_stdout, nullptr);
    if (st != SOLOGAN_OK) return report_failure(st);
    std::cout << "training complete; outputs in " << output_dir << "\n";
    return kExitOk;
  }

  if (translate->parsed()) {
    SessionHandle session;
    sologan_status st = sologan_session_open(tr_checkpoint.c_str(), &session.ptr);
    if (st != SOLOGAN_OK) return report_failure(st);
    std::vector<const char*> paths;
    for (const auto& p : tr_inputs) paths.push_back(p.c_str());
    st = sologan_translate(session.ptr, paths.data(), static_cast<int64_t>(paths.size()),
                           tr_target.c_str(), tr_samples, tr_seed, tr_output.c_str(),
                           /*write_grid=*/1);
    if (st != SOLOGAN_OK) return report_failure(st);
    std::cout << "wrote " << paths.size() * static_cast<size_t>(tr_samples)
              << " translations and a grid to " << tr_output << "\n";
    return kExitOk;
  }

  if (guide->parsed()) {
    SessionHandle session;
    sologan_status st = sologan_session_open(g_checkpoint.c_str(), &session.ptr);
    if (st != SOLOGAN_OK) return report_failure(st);
    if (g_contents.size() == 1 && g_styles.size() == 1) {
      st = sologan_guide(session.ptr, g_contents[0].c_str(), g_styles[0].c_str(),
                         g_domain.c_str(), g_output.c_str());
    } else {
      std::vector<const char*> contents, styles;
      for (const auto& p : g_contents) contents.push_back(p.c_str());
      for (const auto& p : g_styles) styles.push_back(p.c_str());
      st = sologan_guide_grid(session.ptr, contents.data(),
                              static_cast<int64_t>(contents.size()), styles.data(),
                              static_cast<int64_t>(styles.size()), g_domain.c_str(),
                              g_output.c_str());
    }
    if (st != SOLOGAN_OK) return report_failure(st);
    std::cout << "wrote " << g_output << "\n";
    return kExitOk;
  }

  if (evaluate->parsed()) {
    std::string protocol_text;
    if (!e_protocol_file.empty() && !read_file(e_protocol_file, protocol_text, file_error)) {
      std::cerr << "error: " << file_error << "\n";
      return kExitUsage;
    }
    SessionHandle session;
    sologan_status st = sologan_session_open(e_checkpoint.c_str(), &session.ptr);
    if (st != SOLOGAN_OK) return report_failure(st);
    st = sologan_evaluate(session.ptr, e_dataset.c_str(),
                          protocol_text.empty() ? nullptr : protocol_text.c_str(),
                          e_extractor.empty() ? nullptr : e_extractor.c_str(), e_report.c_str());
    if (st != SOLOGAN_OK) return report_failure(st);
    std::cout << "wrote report " << e_report << "\n";
    return kExitOk;
  }

  if (synth->parsed()) {
    std::string spec_text;
    if (!s_spec_file.empty() && !read_file(s_spec_file, spec_text, file_error)) {
      std::cerr << "error: " << file_error << "\n";
      return kExitUsage;
    }
    sologan_status st = sologan_make_synthetic(spec_text.empty() ? nullptr : spec_text.c_str(),
                                               s_output.c_str());
    if (st != SOLOGAN_OK) return report_failure(st);
    std::cout << "wrote synthetic dataset to " << s_output << "\n";
    return kExitOk;
  }

  return kExitUsage;
}
