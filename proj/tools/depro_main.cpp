// Experiment CLI: generate-data, train, eval, sweep, decorr-study.
//
// Every run is driven by one flat JSON config; any config key can be
// overridden on the command line, e.g.
//   depro train --config run.json --epochs 10 --use_purification false
//   depro sweep --config run.json --axis purify_ratio --values 0.5,0.7,1.0

#include "depro/data.hpp"
#include "depro/harness.hpp"
#include "depro/model.hpp"
#include "depro/types.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in.good()) throw depro::ContractError("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

json parse_scalar_like(const json& model_value, const std::string& text) {
  if (model_value.is_string()) return text;
  if (model_value.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw depro::ContractError("expected boolean, got '" + text + "'");
  }
  if (model_value.is_number_float()) return std::stod(text);
  if (model_value.is_number_unsigned()) return static_cast<std::uint64_t>(std::stoull(text));
  if (model_value.is_number_integer()) return static_cast<std::int64_t>(std::stoll(text));
  throw depro::ContractError("cannot override key of this type from the command line");
}

// Applies "--key value" pairs left over after CLI11 parsing onto the config.
void apply_overrides(json& cfg, const std::vector<std::string>& extras) {
  const json defaults = depro::harness::RunConfig{}.to_json();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) {
      throw depro::ContractError("unexpected argument '" + tok + "' (expected --key value)");
    }
    const std::string key = tok.substr(2);
    if (!defaults.contains(key)) throw depro::ContractError("unknown config key '" + key + "'");
    if (i + 1 >= extras.size()) throw depro::ContractError("missing value for --" + key);
    const std::string text = extras[++i];
    const json& model_value = defaults.at(key);
    if (model_value.is_array()) {
      json arr = json::array();
      const json element_model =
          model_value.empty() ? json(std::uint64_t{0}) : model_value.at(0);
      for (const std::string& piece : split_commas(text)) {
        arr.push_back(parse_scalar_like(element_model, piece));
      }
      cfg[key] = arr;
    } else {
      cfg[key] = parse_scalar_like(model_value, text);
    }
  }
}

depro::harness::RunConfig resolve_config(const std::string& config_path,
                                         const std::vector<std::string>& extras) {
  json j = read_config_file(config_path);
  apply_overrides(j, extras);
  return depro::harness::RunConfig::from_json(j);
}

int cmd_generate_data(const depro::harness::RunConfig& cfg, const std::string& out) {
  const depro::data::TaskData task = depro::data::generate(cfg.task);
  fs::create_directories(out);
  depro::data::save_csv(task.train, out + "/train.csv");
  depro::data::save_csv(task.dev, out + "/dev.csv");
  depro::data::save_csv(task.ood, out + "/ood.csv");
  json t;
  t["kslots"] = cfg.task.kslots;
  t["n_classes"] = cfg.task.n_classes;
  t["vocab"] = cfg.task.vocab;
  t["signal_slots"] = cfg.task.signal_slots;
  t["bias_slot"] = cfg.task.bias_slot;
  t["align_train"] = cfg.task.align_train;
  t["align_ood"] = cfg.task.align_ood;
  t["noise_flip"] = cfg.task.noise_flip;
  t["n_train"] = cfg.task.n_train;
  t["n_dev"] = cfg.task.n_dev;
  t["n_ood"] = cfg.task.n_ood;
  t["data_seed"] = cfg.task.seed;
  std::ofstream meta(out + "/task.json");
  meta << t.dump(2) << "\n";
  std::cout << "wrote " << task.train.size() << " train / " << task.dev.size() << " dev / "
            << task.ood.size() << " ood samples to " << out << "\n";
  return 0;
}

int cmd_train(const depro::harness::RunConfig& cfg) {
  const depro::harness::RunMetrics rm = depro::harness::train(cfg);
  for (const auto& s : rm.seeds) {
    if (s.failed) {
      std::cout << "seed " << s.seed << ": FAILED (" << s.error << ")\n";
    } else {
      std::printf("seed %llu: dev_acc %.4f  ood_acc %.4f\n",
                  static_cast<unsigned long long>(s.seed), s.dev_acc, s.ood_acc);
    }
  }
  std::printf("mean: dev_acc %.4f (+/- %.4f)  ood_acc %.4f (+/- %.4f)\n", rm.mean_dev,
              rm.stdev_dev, rm.mean_ood, rm.stdev_ood);
  std::cout << "outputs in " << cfg.out_dir << "\n";
  return rm.any_failed() ? 1 : 0;
}

int cmd_eval(const std::string& model_prefix, const std::string& data_csv) {
  const depro::model::DeproModel m = depro::model::load_model(model_prefix);
  const depro::data::CsvSchema schema{m.cfg.kslots, m.cfg.n_classes};
  const depro::data::Dataset d = depro::data::load_csv(data_csv, schema);
  std::printf("accuracy %.6f on %d samples\n", depro::harness::evaluate(m, d), d.size());
  return 0;
}

int cmd_sweep(const depro::harness::RunConfig& cfg, const std::string& axis,
              const std::string& values_text) {
  std::vector<double> values;
  for (const std::string& piece : split_commas(values_text)) values.push_back(std::stod(piece));
  const auto rows = depro::harness::sweep(cfg, axis, values);
  bool failed = false;
  for (const auto& r : rows) {
    failed = failed || r.failed;
    if (r.aggregate) {
      std::printf("%s=%g  mean dev_acc %.4f  mean ood_acc %.4f\n", axis.c_str(), r.value,
                  r.dev_acc, r.ood_acc);
    }
  }
  std::cout << "sweep table in " << cfg.out_dir << "/sweep.csv\n";
  return failed ? 1 : 0;
}

int cmd_decorr_study(const depro::harness::RunConfig& cfg) {
  const auto res = depro::harness::decorr_study(cfg);
  const auto show = [](const char* arm, const std::vector<double>& em) {
    if (em.empty()) return;
    std::printf("%s: epoch-1 decorr mean %.6g, final %.6g\n", arm, em.front(), em.back());
  };
  show("depro", res.depro_epoch_mean);
  show("control", res.control_epoch_mean);
  std::cout << "study outputs in " << cfg.out_dir << "\n";
  return (res.depro.any_failed() || res.control.any_failed()) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DePro: feature decorrelation + purification experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "data";
  std::string model_prefix;
  std::string data_csv;
  std::string axis = "purify_ratio";
  std::string values_text;

  auto* gen = app.add_subcommand("generate-data", "Generate synthetic task CSV splits");
  gen->add_option("--config", config_path, "JSON run config");
  gen->add_option("--out", out_dir, "Output directory");
  gen->allow_extras();

  auto* train = app.add_subcommand("train", "Train over the configured seed list");
  train->add_option("--config", config_path, "JSON run config");
  train->allow_extras();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV dataset");
  eval->add_option("--model", model_prefix, "Checkpoint prefix (as written by train)")
      ->required();
  eval->add_option("--data", data_csv, "CSV dataset path")->required();

  auto* sweep = app.add_subcommand("sweep", "Sweep rff_multiplier or purify_ratio");
  sweep->add_option("--config", config_path, "JSON run config");
  sweep->add_option("--axis", axis, "rff_multiplier or purify_ratio");
  sweep->add_option("--values", values_text, "Comma-separated value list")->required();
  sweep->allow_extras();

  auto* study = app.add_subcommand("decorr-study", "Weighted run vs frozen-weight control");
  study->add_option("--config", config_path, "JSON run config");
  study->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(resolve_config(config_path, gen->remaining()), out_dir);
    if (train->parsed()) return cmd_train(resolve_config(config_path, train->remaining()));
    if (eval->parsed()) return cmd_eval(model_prefix, data_csv);
    if (sweep->parsed()) return cmd_sweep(resolve_config(config_path, sweep->remaining()), axis, values_text);
    if (study->parsed()) return cmd_decorr_study(resolve_config(config_path, study->remaining()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
