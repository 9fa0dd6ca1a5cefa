#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

#include "audiomt/error.hpp"
#include "audiomt/harness.hpp"

namespace audiomt::cli {

namespace fs = std::filesystem;
using namespace audiomt::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::string> stage;
  std::optional<std::string> checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Run configuration (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Override the run seed");
  cmd->add_option("--steps", c.steps, "Override the step budget");
  cmd->add_option("--stage", c.stage, "pretrain | finetune | joint");
  cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint to resume from or evaluate");
}

RunConfig resolve(const Common& c) {
  RunConfig config = load_run_config(c.config);
  if (c.seed) config.seed = *c.seed;
  if (c.steps) {
    if (*c.steps < 0) throw Error(ErrorCode::Usage, "--steps must be >= 0");
    config.steps = *c.steps;
  }
  if (c.stage) config.stage = parse_stage(*c.stage);
  return config;
}

std::optional<fs::path> checkpoint_of(const Common& c) {
  if (!c.checkpoint) return std::nullopt;
  return fs::path(*c.checkpoint);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multitask audio-text model toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic corpus");
  add_common(synth_cmd, common);
  auto* prepare_cmd = app.add_subcommand("prepare", "Learn merges and write the vocabulary");
  add_common(prepare_cmd, common);
  auto* train_cmd = app.add_subcommand("train", "Train (or resume with --checkpoint)");
  add_common(train_cmd, common);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, common);
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the SRWT and conflict ablations");
  add_common(ablate_cmd, common);

  auto* decode_cmd = app.add_subcommand("decode", "Greedy-decode one audio file");
  add_common(decode_cmd, common);
  DecodeRequest req;
  std::string task = "ASR";
  std::string question;
  decode_cmd->add_option("--audio", req.audio, "WAV file")->required();
  decode_cmd->add_option("--task", task, "Task code, e.g. ASR, SRWT, S2TT");
  decode_cmd->add_option("--audio-lang", req.audio_language);
  decode_cmd->add_option("--text-lang", req.text_language);
  auto* question_opt = decode_cmd->add_option("--question", question);
  decode_cmd->add_option("--max-len", req.max_len);

  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint");
  add_common(inspect_cmd, common, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (inspect_cmd->parsed()) {
      fs::path ckpt;
      if (common.checkpoint) {
        ckpt = *common.checkpoint;
      } else if (!common.config.empty()) {
        ckpt = checkpoint_path(load_run_config(common.config));
      } else {
        throw Error(ErrorCode::Usage, "inspect needs --checkpoint or --config");
      }
      out << inspect_checkpoint(ckpt).dump(2) << '\n';
      return 0;
    }
    const RunConfig config = resolve(common);
    if (synth_cmd->parsed()) {
      const auto result = cmd_synth(config);
      for (const auto& [name, path] : result.manifests) out << name << ' ' << path.string() << '\n';
      out << result.wav_files << " wav files\n";
    } else if (prepare_cmd->parsed()) {
      const Vocabulary vocab = cmd_prepare(config);
      out << "vocabulary: " << vocab.size() << " tokens (" << vocab.text_size() << " text) -> "
          << vocab_path(config).string() << '\n';
    } else if (train_cmd->parsed()) {
      const auto result = cmd_train(config, checkpoint_of(common));
      if (!result.steps.empty()) {
        const auto& last = result.steps.back();
        out << "step " << last.step << " loss " << last.loss << " lr " << last.lr << '\n';
      }
      out << "checkpoint " << result.checkpoint.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const auto reports = cmd_eval(config, checkpoint_of(common));
      write_table(out, reports);
    } else if (decode_cmd->parsed()) {
      const auto code = parse_task_code(task);
      if (!code) throw Error(ErrorCode::UnknownTask, task);
      req.task = *code;
      if (question_opt->count() > 0) req.question = question;
      const auto result = cmd_decode(config, req, checkpoint_of(common));
      out << result.text << '\n';
      if (result.timed) out << to_json(*result.timed).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    } else if (ablate_cmd->parsed()) {
      const auto report = cmd_ablate(config);
      out << report.summary.dump(2) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace audiomt::cli
