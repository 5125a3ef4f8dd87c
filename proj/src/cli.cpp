#include "han/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include "han/checkpoint.hpp"
#include "han/config.hpp"
#include "han/error.hpp"
#include "han/model.hpp"
#include "han/profile.hpp"
#include "han/synth.hpp"
#include "han/train.hpp"

namespace han {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kWristJoint = 0;

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;  // key -> raw value
};

void register_keys(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "key=value configuration file");
  for (const auto& key : config_keys()) {
    auto* opt = cmd.app->add_option_function<std::string>(
        flag_for_key(key.name),
        [&cmd, name = key.name](const std::string& v) { cmd.flags[name] = v; }, key.help);
    if (!key.default_value.empty()) opt->default_str(key.default_value);
  }
}

RunConfig resolve(const Command& cmd) {
  RunConfig config;
  if (!cmd.config_path.empty()) config.merge_file(cmd.config_path);
  for (const auto& [key, value] : cmd.flags) config.set(key, value);
  return config;
}

std::optional<std::size_t> center_joint(const RunConfig& config) {
  if (config.get_bool("wrist_center")) return kWristJoint;
  return std::nullopt;
}

void write_matrix_csv(const fs::path& path, const DenseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(9);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const fs::path manifest_path = config.get("manifest");
  const fs::path out_dir = config.get("out");
  const TrainConfig train_cfg = config.train_config();
  const AugmentationConfig aug = config.augmentation_config();
  // validate the model config before touching any data
  config.han_config();

  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  const HanConfig han_cfg =
      config.han_config(manifest.class_count, manifest.joint_count, manifest.resolve_partition());
  const auto train_set = manifest.load_split("train");
  const auto val_set = manifest.load_split("test");
  if (train_set.empty()) throw DataError(manifest_path.string() + ": no train entries");

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.csv");
  if (!log) throw DataError("cannot write training log in " + out_dir.string());

  HanModel<float> model = HanModel<float>::create(han_cfg, train_cfg.seed);
  TrainOptions options;
  options.train = train_cfg;
  options.augmentation = aug;
  options.center_joint = center_joint(config);
  options.on_epoch = [&](const EpochLog& e) {
    log << format_log_line(e) << '\n';
    log.flush();
    out << "epoch " << e.epoch << " lr=" << e.lr << " loss=" << e.train_loss;
    if (e.val_accuracy) out << " val_acc=" << *e.val_accuracy;
    out << " decays=" << e.decays << '\n';
  };
  const TrainResult result = train(model, train_set, val_set, options);
  save_checkpoint(out_dir / "model.ckpt", model);

  std::vector<SkeletonSequence> prepared;
  for (const auto& s : train_set)
    prepared.push_back(prepare_for_eval(s, han_cfg.frames, options.center_joint));
  const EvalReport train_report = evaluate(model, prepared);
  out << "final epochs=" << result.log.size() << " train_acc=" << train_report.accuracy;
  if (result.final_val_accuracy) out << " val_acc=" << *result.final_val_accuracy;
  out << " stopped=" << (result.stopped_by_schedule ? "schedule" : "max_epochs") << '\n';
  out << "checkpoint " << (out_dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  const fs::path ckpt = config.get("checkpoint");
  const fs::path manifest_path = config.get("manifest");
  const HanModel<float> model = load_checkpoint(ckpt);
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  const auto& mc = model.config();
  if (manifest.class_count != mc.class_count || manifest.joint_count != mc.joint_count)
    throw ConfigError("checkpoint expects classes=" + std::to_string(mc.class_count) +
                      " joints=" + std::to_string(mc.joint_count) + ", manifest declares classes=" +
                      std::to_string(manifest.class_count) +
                      " joints=" + std::to_string(manifest.joint_count));
  if (!(manifest.resolve_partition() == mc.partition))
    throw ConfigError("manifest partition differs from the checkpoint's partition");

  const std::string split = config.get("split");
  const auto data = manifest.load_split(split);
  if (data.empty()) throw DataError(manifest_path.string() + ": no entries in split " + split);
  std::vector<SkeletonSequence> prepared;
  for (const auto& s : data) prepared.push_back(prepare_for_eval(s, mc.frames, center_joint(config)));
  const EvalReport report = evaluate(model, prepared);
  out << "accuracy=" << std::setprecision(9) << report.accuracy << " (" << split << ", "
      << report.total << " sequences)\n";
  if (const auto path = config.get_optional("confusion")) {
    std::ofstream csv(*path);
    if (!csv) throw DataError("cannot write " + *path);
    write_confusion_csv(csv, report);
  }
  return kExitOk;
}

int cmd_profile(const RunConfig& config, std::ostream& out) {
  const CostReport report = profile(config.han_config());
  write_report_text(out, report);
  if (const auto path = config.get_optional("csv")) {
    std::ofstream csv(*path);
    if (!csv) throw DataError("cannot write " + *path);
    write_report_csv(csv, report);
  }
  return kExitOk;
}

int cmd_export_attn(const RunConfig& config, std::ostream& out) {
  const fs::path ckpt = config.get("checkpoint");
  const fs::path seq_path = config.get("sequence");
  const fs::path out_dir = config.get("out");
  AttentionSelector sel;
  sel.site = parse_site(config.get("site"));
  sel.frame = config.get_uint("frame");
  sel.part = config.get_uint("part");
  sel.stream = config.get_uint("stream");

  const HanModel<float> model = load_checkpoint(ckpt);
  const SkeletonSequence seq = prepare_for_eval(
      parse_sequence(seq_path, model.config().joint_count), model.config().frames,
      center_joint(config));
  const AttentionExport exp = model.extract_attention(seq, sel);

  fs::create_directories(out_dir);
  const std::string stem = "attn_" + site_name(sel.site);
  write_matrix_csv(out_dir / (stem + "_mean.csv"), exp.head_mean);
  for (std::size_t h = 0; h < exp.per_head.size(); ++h)
    write_matrix_csv(out_dir / (stem + "_head" + std::to_string(h) + ".csv"), exp.per_head[h]);
  if (!exp.frame_sums.empty()) {
    std::ofstream sums(out_dir / (stem + "_frame_sums.csv"));
    sums << "frame,weight_sum\n" << std::setprecision(9);
    for (std::size_t t = 0; t < exp.frame_sums.size(); ++t) sums << t << ',' << exp.frame_sums[t] << '\n';
  }
  out << "wrote " << exp.per_head.size() << " head matrices and the head mean ("
      << exp.head_mean.rows << "x" << exp.head_mean.cols << ") to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_synth(const RunConfig& config, std::ostream& out) {
  SynthConfig s;
  s.classes = config.get_uint("classes");
  s.samples_per_class = config.get_uint("samples_per_class");
  s.test_fraction = config.get_double("test_fraction");
  s.joint_count = config.get_uint("joints");
  s.min_frames = config.get_uint("min_frames");
  s.max_frames = config.get_uint("max_frames");
  s.noise_std = config.get_double("synth_noise");
  s.seed = config.get_uint("seed");
  const fs::path out_dir = config.get("out");
  const fs::path manifest = write_synthetic(out_dir, s);
  out << "wrote " << s.classes * s.samples_per_class << " sequences and " << manifest.string()
      << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical self-attention network for skeleton gestures", "han"};
  app.require_subcommand(1);
  std::map<std::string, Command> commands;
  const std::vector<std::pair<std::string, std::string>> specs = {
      {"train", "train a model from a manifest"},
      {"eval", "evaluate a checkpoint on a manifest split"},
      {"profile", "print parameter and FLOP counts"},
      {"export-attn", "export attention matrices for one sequence"},
      {"synth", "generate a synthetic gesture dataset"},
  };
  for (const auto& [name, help] : specs) {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    register_keys(cmd);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      const RunConfig config = resolve(cmd);
      if (name == "train") return cmd_train(config, out);
      if (name == "eval") return cmd_eval(config, out);
      if (name == "profile") return cmd_profile(config, out);
      if (name == "export-attn") return cmd_export_attn(config, out);
      if (name == "synth") return cmd_synth(config, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "checkpoint format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitConfig;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace han
