// Command-line front end: overlap, train-aux, init, verify, size-report.
//
// Every subcommand accepts --config <file.json> (a PipelineConfig document);
// flags override values from the file. FOCUS_THREADS sets the worker count
// for similarity and combination passes.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "focus/focus.hpp"

namespace {

using focus::PipelineConfig;
using Json = nlohmann::json;

// Flags mirror the config document; each is applied only when given.
struct Overrides {
  std::map<std::string, std::string> strings;
  std::map<std::string, std::string> numbers;  // parsed as JSON scalars
  std::string config_path;
  bool no_fuzzy = false;
  bool untied = false;

  void add_string(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, strings[key], help);
  }
  void add_number(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, numbers[key], help);
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : focus::load_config(config_path);
    // Similarity and combination work is thread-count independent; the
    // trainer stays single-threaded unless asked via --train-threads.
    cfg.focus.threads = focus::configured_threads();
    Json j = Json::object();
    for (const auto& [key, value] : strings) {
      if (value.empty()) continue;
      set_path(j, key, Json(value));
    }
    for (const auto& [key, value] : numbers) {
      if (value.empty()) continue;
      Json parsed;
      try {
        parsed = Json::parse(value);
      } catch (const Json::parse_error&) {
        throw focus::InputError("flag for '" + key + "' expects a number, got '" + value + "'");
      }
      set_path(j, key, parsed);
    }
    if (no_fuzzy) set_path(j, "focus.fuzzy", false);
    if (untied) set_path(j, "tied_head", false);
    focus::merge_config(cfg, j);
    return cfg;
  }

  static void set_path(Json& j, const std::string& key, Json value) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) j[key] = std::move(value);
    else j[key.substr(0, dot)][key.substr(dot + 1)] = std::move(value);
  }
};

void add_vocab_flags(CLI::App* app, Overrides& o) {
  o.add_string(app, "--source-vocab", "source_vocab", "Source vocabulary (text or JSON)");
  o.add_string(app, "--source-vocab-format", "source_vocab_format", "auto|text|json");
  o.add_string(app, "--source-marker", "source_marker", "sentencepiece|bpe|none");
  o.add_string(app, "--target-vocab", "target_vocab", "Target vocabulary (text or JSON)");
  o.add_string(app, "--target-vocab-format", "target_vocab_format", "auto|text|json");
  o.add_string(app, "--target-marker", "target_marker", "sentencepiece|bpe|none");
  app->add_flag("--no-fuzzy", o.no_fuzzy, "Exact matching only");
}

void add_common_flags(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config_path, "JSON config document");
  o.add_string(app, "--run-dir", "run_dir", "Output directory");
  o.add_string(app, "--report", "report_path", "Report path (default <run-dir>/report.json)");
}

void add_train_flags(CLI::App* app, Overrides& o) {
  o.add_string(app, "--corpus", "corpus", "Target-language corpus");
  o.add_string(app, "--corpus-format", "corpus_format", "text|ids");
  o.add_number(app, "--dim", "train.dim", "Auxiliary embedding dimension (default 300)");
  o.add_number(app, "--window", "train.window", "Maximum context window (default 5)");
  o.add_number(app, "--negatives", "train.negatives", "Negative samples per pair (default 5)");
  o.add_number(app, "--epochs", "train.epochs", "Training epochs (default 1)");
  o.add_number(app, "--min-count", "train.min_count", "Minimum token count (default 1)");
  o.add_number(app, "--lr", "train.initial_lr", "Initial learning rate (default 0.05)");
  o.add_number(app, "--subsample", "train.subsample_threshold", "Subsampling threshold (default 1e-4)");
  o.add_number(app, "--train-seed", "train.seed", "Trainer seed");
  o.add_number(app, "--train-threads", "train.threads", "Trainer threads (1 = reproducible)");
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const focus::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return focus::exit_code::kInputError;
  } catch (const focus::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return focus::exit_code::kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return focus::exit_code::kInputError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return focus::exit_code::kInputError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding initialization for vocabulary transfer (FOCUS, WECHSEL-style, shuffle)"};
  app.require_subcommand(1);

  Overrides ov_overlap, ov_train, ov_init;

  auto* overlap = app.add_subcommand("overlap", "Vocabulary overlap statistics");
  add_common_flags(overlap, ov_overlap);
  add_vocab_flags(overlap, ov_overlap);

  auto* train = app.add_subcommand("train-aux", "Train the auxiliary static token embeddings");
  add_common_flags(train, ov_train);
  ov_train.add_string(train, "--target-vocab", "target_vocab", "Target vocabulary");
  ov_train.add_string(train, "--target-vocab-format", "target_vocab_format", "auto|text|json");
  ov_train.add_string(train, "--target-marker", "target_marker", "sentencepiece|bpe|none");
  ov_train.add_string(train, "--aux-dir", "aux_dir", "Output directory (default <run-dir>/aux)");
  add_train_flags(train, ov_train);

  auto* init = app.add_subcommand("init", "Initialize target embeddings");
  add_common_flags(init, ov_init);
  add_vocab_flags(init, ov_init);
  add_train_flags(init, ov_init);
  ov_init.add_string(init, "--source-emb", "source_emb", "Source embeddings (VTM or text)");
  ov_init.add_string(init, "--aux-dir", "aux_dir", "Trained auxiliary space (trained from --corpus if absent)");
  ov_init.add_string(init, "--method", "method", "focus|wechsel|wechsel-subset|shuffle");
  ov_init.add_string(init, "--mode", "focus.mode", "replace|extend");
  ov_init.add_string(init, "--fallback", "focus.fallback", "normal|shuffle_row|none");
  ov_init.add_number(init, "--seed", "focus.seed", "Seed for fallback and shuffle draws");
  ov_init.add_number(init, "--extend-cap", "focus.extend_cap", "Extend mode: append only the N most frequent tokens");
  ov_init.add_number(init, "--block-size", "focus.block_size", "Similarity block size");
  ov_init.add_string(init, "--source-tok", "source_tok", "WECHSEL: aligned source token space");
  ov_init.add_string(init, "--target-tok", "target_tok", "WECHSEL: aligned target token space");
  ov_init.add_string(init, "--seed-pairs", "seed_pairs", "WECHSEL: TSV of paired vectors for Procrustes");
  ov_init.add_string(init, "--seed-words", "seed_words", "WECHSEL: word-pair TSV for Procrustes");
  ov_init.add_string(init, "--seed-source-vectors", "seed_source_vectors", "Word vectors for --seed-words (source)");
  ov_init.add_string(init, "--seed-target-vectors", "seed_target_vectors", "Word vectors for --seed-words (target)");
  ov_init.add_string(init, "--source-subset", "source_subset", "wechsel-subset: source tokens to keep");
  ov_init.add_number(init, "--k", "wechsel_k", "WECHSEL neighbours (default 10)");
  ov_init.add_number(init, "--temperature", "temperature", "WECHSEL softmax temperature (default 1.0)");
  ov_init.add_number(init, "--non-embedding-params", "non_embedding_params", "Add a size report");
  init->add_flag("--untied-head", ov_init.untied, "Output head is not tied to the embeddings");

  std::string v_target, v_source, v_weights;
  double v_tol = 1e-6;
  auto* verify = app.add_subcommand("verify", "Recompute an init run from its audit file");
  verify->add_option("--embeddings", v_target, "embeddings.vtm from init")->required();
  verify->add_option("--source-emb", v_source, "Source embeddings")->required();
  verify->add_option("--weights", v_weights, "weights.jsonl from init")->required();
  verify->add_option("--tolerance", v_tol, "Tolerance for weighted rows");

  std::uint64_t s_non_emb = 0, s_dim = 0, s_old = 0, s_new = 0;
  bool s_untied = false;
  auto* size = app.add_subcommand("size-report", "Parameter count before/after a vocabulary swap");
  size->add_option("--non-embedding-params", s_non_emb, "Parameters outside the embedding matrix")->required();
  size->add_option("--dim", s_dim, "Hidden size")->required();
  size->add_option("--old-vocab", s_old, "Original vocabulary size")->required();
  size->add_option("--new-vocab", s_new, "New vocabulary size")->required();
  size->add_flag("--untied-head", s_untied, "Count the embedding matrix twice");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : focus::exit_code::kInputError;
  }

  if (*overlap) {
    return guarded([&] {
      const auto cfg = ov_overlap.resolve();
      const auto report = focus::cmd_overlap(cfg);
      std::cout << report.overlap_count << '\t' << report.clean_overlap_count << '\n';
      return focus::exit_code::kSuccess;
    });
  }
  if (*train) {
    return guarded([&] {
      focus::cmd_train_aux(ov_train.resolve());
      return focus::exit_code::kSuccess;
    });
  }
  if (*init) {
    return guarded([&] {
      focus::cmd_init(ov_init.resolve());
      return focus::exit_code::kSuccess;
    });
  }
  if (*verify) {
    return guarded([&] {
      const auto r = focus::cmd_verify(v_target, v_source, v_weights, v_tol);
      if (!r.ok) {
        std::cerr << "verify failed: " << r.message << '\n';
        return focus::exit_code::kVerifyFailed;
      }
      std::cerr << r.message << '\n';
      std::cout << "pass\n";
      return focus::exit_code::kSuccess;
    });
  }
  if (*size) {
    return guarded([&] {
      const auto r = focus::size_report(s_non_emb, s_dim, s_old, s_new, !s_untied);
      std::cout << focus::to_json(r).dump(2) << '\n';
      return focus::exit_code::kSuccess;
    });
  }
  return focus::exit_code::kInputError;
}
