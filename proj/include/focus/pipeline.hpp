#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/baselines.hpp"
#include "focus/corpus.hpp"
#include "focus/error.hpp"
#include "focus/matcher.hpp"
#include "focus/matrix.hpp"
#include "focus/parallel.hpp"
#include "focus/report.hpp"
#include "focus/skipgram.hpp"
#include "focus/vocab.hpp"

namespace focus {

namespace fs = std::filesystem;

enum class Method { kFocus, kWechsel, kWechselSubset, kShuffle };

inline Method parse_method(std::string_view s) {
  if (s == "focus") return Method::kFocus;
  if (s == "wechsel") return Method::kWechsel;
  if (s == "wechsel-subset") return Method::kWechselSubset;
  if (s == "shuffle") return Method::kShuffle;
  throw InputError("unknown method '" + std::string(s) + "' (expected focus|wechsel|wechsel-subset|shuffle)");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kFocus: return "focus";
    case Method::kWechsel: return "wechsel";
    case Method::kWechselSubset: return "wechsel-subset";
    case Method::kShuffle: return "shuffle";
  }
  return "focus";
}

struct PipelineConfig {
  std::string source_vocab;
  std::string source_vocab_format = "auto";
  std::string source_marker = "sentencepiece";
  std::string source_emb;
  std::string target_vocab;
  std::string target_vocab_format = "auto";
  std::string target_marker = "sentencepiece";
  std::string corpus;
  std::string corpus_format = "text";  // text | ids
  std::string aux_dir;                 // init: read from here; train-aux: default <run_dir>/aux

  // WECHSEL inputs.
  std::string source_tok;
  std::string target_tok;
  std::string seed_pairs;           // TSV of paired vectors
  std::string seed_words;           // word-pair TSV, used with the two vector files below
  std::string seed_source_vectors;
  std::string seed_target_vectors;
  std::string source_subset;        // raw source tokens, one per line
  std::size_t wechsel_k = 10;
  double temperature = 1.0;

  std::string run_dir = "run";
  std::string report_path;  // default <run_dir>/report.json

  Method method = Method::kFocus;
  TrainConfig train;
  FocusConfig focus;

  std::optional<std::uint64_t> non_embedding_params;
  bool tied_head = true;

  fs::path report_file() const { return report_path.empty() ? fs::path(run_dir) / "report.json" : fs::path(report_path); }
  fs::path aux_output_dir() const { return aux_dir.empty() ? fs::path(run_dir) / "aux" : fs::path(aux_dir); }

  void validate() const {
    if (method == Method::kShuffle && focus.mode == InitMode::kExtend)
      throw InputError("method shuffle cannot be combined with extend mode");
    if (method != Method::kFocus && focus.mode == InitMode::kExtend && focus.extend_cap)
      throw InputError("extend_cap needs corpus frequencies and is only supported with method focus");
    if (corpus_format != "text" && corpus_format != "ids")
      throw InputError("corpus_format must be text or ids");
    if (wechsel_k < 1) throw InputError("wechsel_k must be >= 1");
    if (!(temperature > 0.0)) throw InputError("temperature must be positive");
    train.validate();
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j{
      {"source_vocab", c.source_vocab},
      {"source_vocab_format", c.source_vocab_format},
      {"source_marker", c.source_marker},
      {"source_emb", c.source_emb},
      {"target_vocab", c.target_vocab},
      {"target_vocab_format", c.target_vocab_format},
      {"target_marker", c.target_marker},
      {"corpus", c.corpus},
      {"corpus_format", c.corpus_format},
      {"aux_dir", c.aux_dir},
      {"source_tok", c.source_tok},
      {"target_tok", c.target_tok},
      {"seed_pairs", c.seed_pairs},
      {"seed_words", c.seed_words},
      {"seed_source_vectors", c.seed_source_vectors},
      {"seed_target_vectors", c.seed_target_vectors},
      {"source_subset", c.source_subset},
      {"wechsel_k", c.wechsel_k},
      {"temperature", c.temperature},
      {"run_dir", c.run_dir},
      {"report_path", c.report_file().string()},
      {"method", to_string(c.method)},
      {"train", to_json(c.train)},
      {"focus", to_json(c.focus)},
      {"tied_head", c.tied_head},
  };
  j["non_embedding_params"] = c.non_embedding_params ? nlohmann::json(*c.non_embedding_params) : nlohmann::json(nullptr);
  return j;
}

// Overlays keys present in `j` onto `c`. Unknown keys are rejected.
inline void merge_config(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  auto str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  static const std::vector<std::string> known = {
      "source_vocab", "source_vocab_format", "source_marker", "source_emb", "target_vocab",
      "target_vocab_format", "target_marker", "corpus", "corpus_format", "aux_dir", "source_tok",
      "target_tok", "seed_pairs", "seed_words", "seed_source_vectors", "seed_target_vectors",
      "source_subset", "wechsel_k", "temperature", "run_dir", "report_path", "method", "train",
      "focus", "non_embedding_params", "tied_head"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InputError("unknown config key '" + key + "'");
  try {
    str("source_vocab", c.source_vocab);
    str("source_vocab_format", c.source_vocab_format);
    str("source_marker", c.source_marker);
    str("source_emb", c.source_emb);
    str("target_vocab", c.target_vocab);
    str("target_vocab_format", c.target_vocab_format);
    str("target_marker", c.target_marker);
    str("corpus", c.corpus);
    str("corpus_format", c.corpus_format);
    str("aux_dir", c.aux_dir);
    str("source_tok", c.source_tok);
    str("target_tok", c.target_tok);
    str("seed_pairs", c.seed_pairs);
    str("seed_words", c.seed_words);
    str("seed_source_vectors", c.seed_source_vectors);
    str("seed_target_vectors", c.seed_target_vectors);
    str("source_subset", c.source_subset);
    str("run_dir", c.run_dir);
    str("report_path", c.report_path);
    if (j.contains("wechsel_k")) c.wechsel_k = j.at("wechsel_k").get<std::size_t>();
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("tied_head")) c.tied_head = j.at("tied_head").get<bool>();
    if (j.contains("non_embedding_params") && !j.at("non_embedding_params").is_null())
      c.non_embedding_params = j.at("non_embedding_params").get<std::uint64_t>();
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.dim = t.value("dim", c.train.dim);
      c.train.window = t.value("window", c.train.window);
      c.train.negatives = t.value("negatives", c.train.negatives);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.min_count = t.value("min_count", c.train.min_count);
      c.train.initial_lr = t.value("initial_lr", c.train.initial_lr);
      c.train.subsample_threshold = t.value("subsample_threshold", c.train.subsample_threshold);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.threads = t.value("threads", c.train.threads);
    }
    if (j.contains("focus")) {
      const auto& f = j.at("focus");
      if (f.contains("mode")) c.focus.mode = parse_init_mode(f.at("mode").get<std::string>());
      if (f.contains("fallback")) c.focus.fallback = parse_fallback(f.at("fallback").get<std::string>());
      c.focus.fuzzy = f.value("fuzzy", c.focus.fuzzy);
      c.focus.seed = f.value("seed", c.focus.seed);
      c.focus.threads = f.value("threads", c.focus.threads);
      c.focus.block_size = f.value("block_size", c.focus.block_size);
      if (f.contains("extend_cap"))
        c.focus.extend_cap = f.at("extend_cap").is_null() ? std::nullopt
                                                           : std::optional<std::size_t>(f.at("extend_cap").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid config value: ") + e.what());
  }
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  PipelineConfig c;
  try {
    merge_config(c, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return c;
}

// FNV-1a over a file's bytes, as a hex string.
inline std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_manifest(const fs::path& run_dir, const std::string& command, const nlohmann::json& config,
                           const std::vector<fs::path>& artifacts) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& p : artifacts) {
    files.push_back({{"path", fs::relative(p, run_dir).generic_string()},
                     {"bytes", fs::file_size(p)},
                     {"fnv1a64", file_checksum(p)}});
  }
  write_json(run_dir / "manifest.json",
             {{"format_version", kReportFormatVersion}, {"command", command}, {"config", config}, {"artifacts", files}});
}

inline void write_vocabulary(const fs::path& path, const std::vector<std::string>& tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& t : tokens) out << t << '\n';
}

struct VocabPair {
  Vocabulary source_raw, target_raw;
  Vocabulary source, target;  // canonical
};

inline Vocabulary load_configured_vocab(const std::string& path, const std::string& format, const std::string& marker) {
  if (path.empty()) throw InputError("vocabulary path not configured");
  const VocabFormat f = format == "auto" ? vocab_format_for(path) : parse_vocab_format(format);
  return load_vocabulary(path, f, parse_space_marker(marker));
}

inline VocabPair load_vocab_pair(const PipelineConfig& c) {
  VocabPair v;
  v.source_raw = load_configured_vocab(c.source_vocab, c.source_vocab_format, c.source_marker);
  v.target_raw = load_configured_vocab(c.target_vocab, c.target_vocab_format, c.target_marker);
  v.source = canonicalize(v.source_raw);
  v.target = canonicalize(v.target_raw);
  return v;
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

struct OverlapBundle {
  OverlapResult overlap;
  InitReport report;
};

inline OverlapBundle compute_overlap_report(const VocabPair& v, bool fuzzy) {
  OverlapBundle b;
  b.overlap = compute_overlap(v.source, v.target, fuzzy);
  const std::size_t without = fuzzy ? compute_overlap(v.source, v.target, false).overlap.size() : b.overlap.overlap.size();
  fill_overlap_fields(b.report, b.overlap, clean_overlap_filter(b.overlap, v.target), without, v.source, v.target);
  return b;
}

// overlap: vocabulary overlap statistics only.
inline InitReport cmd_overlap(const PipelineConfig& c, std::ostream& log = std::cerr) {
  Stopwatch sw;
  const VocabPair v = load_vocab_pair(c);
  auto b = compute_overlap_report(v, c.focus.fuzzy);
  b.report.method = "overlap";
  b.report.timing_seconds["overlap"] = sw.lap();
  b.report.config = to_json(c);
  for (const auto& w : b.report.warnings) log << "warning: " << w << '\n';
  log << "overlap: " << b.report.overlap_count << " (exact " << b.report.exact_overlap_count << ", fuzzy "
      << b.report.fuzzy_overlap_count << "), clean " << b.report.clean_overlap_count << ", additional "
      << b.report.additional_count << '\n';
  const fs::path report = c.report_file();
  write_json(report, to_json(b.report));
  fs::create_directories(c.run_dir);
  write_manifest(c.run_dir, "overlap", to_json(c), {report});
  return b.report;
}

inline Corpus load_configured_corpus(const PipelineConfig& c, const Vocabulary& target) {
  if (c.corpus.empty()) throw InputError("corpus path not configured");
  TokenizerSpec spec;
  spec.kind = c.corpus_format == "ids" ? TokenizerSpec::Kind::kPretokenizedIds : TokenizerSpec::Kind::kGreedyLongestMatch;
  spec.prefix_space = parse_space_marker(c.target_marker) != SpaceMarker::kNone;
  return tokenize_corpus(c.corpus, target, spec);
}

inline nlohmann::json to_json(const TrainStats& s) {
  return {{"updates", s.updates},
          {"mean_loss", s.mean_loss},
          {"final_decile_loss", s.final_decile_loss},
          {"final_decile_updates", s.final_decile_updates},
          {"trained_tokens", s.trained_tokens},
          {"untrained_tokens", s.untrained_tokens}};
}

// train-aux: tokenize the corpus and train the auxiliary space.
inline AuxiliarySpace cmd_train_aux(const PipelineConfig& c, std::ostream& log = std::cerr) {
  Stopwatch sw;
  const Vocabulary target = canonicalize(load_configured_vocab(c.target_vocab, c.target_vocab_format, c.target_marker));
  const Corpus corpus = load_configured_corpus(c, target);
  for (const auto& w : corpus.warnings) log << "warning: " << w << '\n';
  const double t_tok = sw.lap();
  log << "corpus: " << corpus.sequences.size() << " sequences, " << corpus.total_tokens() << " tokens\n";
  TrainStats stats;
  AuxiliarySpace aux = train_skipgram(corpus, c.train, &stats);
  const double t_train = sw.lap();
  log << "trained " << stats.trained_tokens << " tokens (" << stats.untrained_tokens << " untrained), mean loss "
      << stats.mean_loss << '\n';

  const fs::path dir = c.aux_output_dir();
  save_auxiliary(aux, dir, {{"config", to_json(c.train)}});
  nlohmann::json report{{"format_version", kReportFormatVersion},
                        {"command", "train-aux"},
                        {"corpus_sequences", corpus.sequences.size()},
                        {"corpus_tokens", corpus.total_tokens()},
                        {"dropped_chars", corpus.dropped_chars},
                        {"dropped_lines", corpus.dropped_lines},
                        {"train", to_json(stats)},
                        {"timing_seconds", {{"tokenize", t_tok}, {"train", t_train}}},
                        {"config", to_json(c)},
                        {"warnings", corpus.warnings}};
  write_json(c.report_file(), report);
  fs::create_directories(c.run_dir);
  write_manifest(c.run_dir, "train-aux", to_json(c),
                 {dir / "input.vtm", dir / "output.vtm", dir / "aux.json", c.report_file()});
  return aux;
}

namespace detail {

inline nlohmann::json support_json(const std::vector<TokenId>& sources, const std::vector<double>& weights,
                                   const Vocabulary& source_raw) {
  nlohmann::json s = nlohmann::json::array();
  for (std::size_t i = 0; i < sources.size(); ++i)
    s.push_back({{"token", source_raw.token(sources[i])}, {"source_id", sources[i]}, {"weight", weights[i]}});
  return s;
}

struct AuditWriter {
  std::ofstream out;
  explicit AuditWriter(const fs::path& p) : out(p, std::ios::binary) {
    if (!out) throw InputError("cannot write " + p.string());
  }
  void copy(std::size_t row, const std::string& token, std::optional<TokenId> target_id, TokenId source_id,
            const Vocabulary& source_raw) {
    nlohmann::json j{{"row", row}, {"token", token}, {"kind", "copy"},
                     {"source_id", source_id}, {"source_token", source_raw.token(source_id)}};
    j["target_id"] = target_id ? nlohmann::json(*target_id) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  void weighted(std::size_t row, const std::string& token, TokenId target_id, nlohmann::json support) {
    out << nlohmann::json{{"row", row}, {"token", token}, {"kind", "weighted"},
                          {"target_id", target_id}, {"support", std::move(support)}}.dump()
        << '\n';
  }
  void fallback(std::size_t row, const std::string& token, TokenId target_id) {
    out << nlohmann::json{{"row", row}, {"token", token}, {"kind", "fallback"}, {"target_id", target_id}}.dump()
        << '\n';
  }
};

inline std::vector<TokenId> load_subset(const fs::path& path, const Vocabulary& source_raw) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open source subset " + path.string());
  std::vector<TokenId> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (auto id = source_raw.find(line)) ids.push_back(*id);
    else throw InputError("subset token '" + line + "' is not in the source vocabulary");
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) throw InputError("source subset is empty");
  return ids;
}

}  // namespace detail

struct InitOutputs {
  EmbeddingMatrix embeddings;
  InitReport report;
  fs::path embeddings_path, weights_path, vocab_path, report_path;
};

// init: build the target embedding matrix with the configured method and
// write embeddings.vtm, weights.jsonl, vocab.txt, report.json and manifest.json.
inline InitOutputs cmd_init(PipelineConfig c, std::ostream& log = std::cerr) {
  c.validate();
  Stopwatch sw;
  const fs::path run(c.run_dir);
  fs::create_directories(run);

  const VocabPair v = load_vocab_pair(c);
  if (c.source_emb.empty()) throw InputError("source_emb not configured");
  const EmbeddingMatrix source_emb = load_any_matrix(c.source_emb);
  if (source_emb.rows() != v.source.size())
    throw InputError("source embeddings have " + std::to_string(source_emb.rows()) +
                     " rows but the source vocabulary has " + std::to_string(v.source.size()) + " tokens");
  auto bundle = compute_overlap_report(v, c.focus.fuzzy);
  InitReport& report = bundle.report;
  const OverlapResult& overlap = bundle.overlap;
  report.method = to_string(c.method);
  report.mode = to_string(c.focus.mode);
  report.timing_seconds["load_and_overlap"] = sw.lap();

  InitOutputs out;
  out.embeddings_path = run / "embeddings.vtm";
  out.weights_path = run / "weights.jsonl";
  out.vocab_path = run / "vocab.txt";
  out.report_path = c.report_file();
  detail::AuditWriter audit(out.weights_path);
  std::vector<std::string> row_tokens;

  if (c.method == Method::kFocus) {
    AuxiliarySpace aux;
    if (!c.aux_dir.empty() && fs::exists(fs::path(c.aux_dir) / "aux.json")) {
      aux = load_auxiliary(c.aux_dir);
    } else {
      const Corpus corpus = load_configured_corpus(c, v.target);
      for (const auto& w : corpus.warnings) log << "warning: " << w << '\n';
      TrainStats stats;
      aux = train_skipgram(corpus, c.train, &stats);
      save_auxiliary(aux, c.aux_output_dir(), {{"config", to_json(c.train)}});
      report.timing_seconds["train_aux"] = sw.lap();
    }
    FocusResult res = focus_initialize(source_emb, overlap, aux, c.focus);
    report.timing_seconds["focus"] = sw.lap();
    report.initialized_additional_count = res.weights.size() + res.fallback_ids.size();
    report.weighted_count = res.weighted_count();
    report.fallback_count = res.fallback_count();
    report.untrained_overlap_count = res.untrained_overlap;
    fill_support_fields(report, res.weights);
    for (const auto& w : res.warnings)
      if (std::find(report.warnings.begin(), report.warnings.end(), w) == report.warnings.end())
        report.warnings.push_back(w);

    const std::size_t rows = res.embeddings.rows();
    row_tokens.assign(rows, {});
    std::vector<bool> recorded(rows, false);
    if (c.focus.mode == InitMode::kExtend) {
      for (std::size_t s = 0; s < v.source.size(); ++s) {
        row_tokens[s] = v.source_raw.token(static_cast<TokenId>(s));
        audit.copy(s, row_tokens[s], std::nullopt, static_cast<TokenId>(s), v.source_raw);
        recorded[s] = true;
      }
    } else {
      for (const auto& e : overlap.overlap) {
        row_tokens[e.target_id] = v.target_raw.token(e.target_id);
        audit.copy(e.target_id, row_tokens[e.target_id], e.target_id, e.source_id, v.source_raw);
      }
    }
    for (const auto& w : res.weights) {
      const std::size_t row = *res.target_row[w.additional_id];
      row_tokens[row] = v.target_raw.token(w.additional_id);
      std::vector<TokenId> src;
      std::vector<double> wt;
      for (const auto& s : w.support) {
        src.push_back(overlap.overlap[s.overlap_index].source_id);
        wt.push_back(s.weight);
      }
      audit.weighted(row, row_tokens[row], w.additional_id, detail::support_json(src, wt, v.source_raw));
    }
    for (TokenId a : res.fallback_ids) {
      const std::size_t row = *res.target_row[a];
      row_tokens[row] = v.target_raw.token(a);
      audit.fallback(row, row_tokens[row], a);
    }
    out.embeddings = std::move(res.embeddings);
  } else if (c.method == Method::kShuffle) {
    const auto assignment = shuffle_assignment(source_emb.rows(), v.target.size(), c.focus.seed);
    out.embeddings = shuffle_initialize(source_emb, v.target.size(), c.focus.seed);
    row_tokens = v.target_raw.tokens();
    for (std::size_t t = 0; t < assignment.size(); ++t)
      audit.copy(t, row_tokens[t], static_cast<TokenId>(t), static_cast<TokenId>(assignment[t]), v.source_raw);
    report.initialized_additional_count = 0;
    report.timing_seconds["shuffle"] = sw.lap();
  } else {
    if (c.source_tok.empty() || c.target_tok.empty())
      throw InputError("wechsel needs source_tok and target_tok aligned token spaces");
    AlignedSpaces aligned{load_any_matrix(c.source_tok), load_any_matrix(c.target_tok)};
    if (aligned.target_tok.rows() != v.target.size())
      throw InputError("target_tok rows do not match the target vocabulary");
    std::optional<SeedDictionary> seed;
    if (!c.seed_pairs.empty()) seed = load_paired_vectors(c.seed_pairs);
    else if (!c.seed_words.empty())
      seed = load_seed_dictionary(c.seed_words, c.seed_source_vectors, c.seed_target_vectors);
    if (seed) {
      auto pr = procrustes_align(*seed);
      for (const auto& w : pr.warnings) report.warnings.push_back("procrustes: " + w);
      aligned.source_tok = apply_rotation(aligned.source_tok, pr.rotation);
    }
    std::vector<TokenId> subset;
    const AlignedSpaces* spaces = &aligned;
    const EmbeddingMatrix* src_emb = &source_emb;
    std::pair<AlignedSpaces, EmbeddingMatrix> restricted;
    if (c.method == Method::kWechselSubset) {
      if (c.source_subset.empty()) throw InputError("wechsel-subset needs source_subset");
      subset = detail::load_subset(c.source_subset, v.source_raw);
      restricted = restrict_source(aligned, source_emb, subset);
      spaces = &restricted.first;
      src_emb = &restricted.second;
    }
    WechselConfig wc;
    wc.k = c.wechsel_k;
    wc.temperature = c.temperature;
    wc.fallback = c.focus.fallback;
    wc.seed = c.focus.seed;
    wc.threads = c.focus.threads;
    WechselResult res = wechsel_combine(*spaces, *src_emb, wc);
    report.timing_seconds["wechsel"] = sw.lap();
    auto source_of = [&](TokenId s) { return subset.empty() ? s : subset[s]; };

    std::vector<TokenId> target_ids;  // target tokens receiving rows, in output order
    std::size_t base = 0;
    if (c.focus.mode == InitMode::kExtend) {
      base = source_emb.rows();
      target_ids = overlap.additional;
      out.embeddings = EmbeddingMatrix(base + target_ids.size(), source_emb.dim());
      std::copy(source_emb.data().begin(), source_emb.data().end(), out.embeddings.data().begin());
      row_tokens = v.source_raw.tokens();
      for (std::size_t s = 0; s < base; ++s)
        audit.copy(s, row_tokens[s], std::nullopt, static_cast<TokenId>(s), v.source_raw);
      report.initialized_additional_count = target_ids.size();
    } else {
      target_ids.resize(v.target.size());
      std::iota(target_ids.begin(), target_ids.end(), TokenId{0});
      out.embeddings = EmbeddingMatrix(v.target.size(), source_emb.dim());
      report.initialized_additional_count = v.target.size();
    }
    std::vector<char> is_fallback(v.target.size(), 0);
    for (TokenId t : res.fallback_ids) is_fallback[t] = 1;
    for (std::size_t i = 0; i < target_ids.size(); ++i) {
      const TokenId t = target_ids[i];
      const std::size_t row = base + i;
      auto src = res.embeddings.row(t);
      std::copy(src.begin(), src.end(), out.embeddings.row(row).begin());
      if (row_tokens.size() <= row) row_tokens.resize(row + 1);
      row_tokens[row] = v.target_raw.token(t);
      if (is_fallback[t]) {
        audit.fallback(row, row_tokens[row], t);
        ++report.fallback_count;
        continue;
      }
      const auto& sel = res.selections[t];
      std::vector<TokenId> ids;
      for (TokenId s : sel.sources) ids.push_back(source_of(s));
      audit.weighted(row, row_tokens[row], t, detail::support_json(ids, sel.weights, v.source_raw));
      ++report.weighted_count;
    }
    std::vector<WeightAssignment> pseudo;
    for (TokenId t : target_ids)
      if (!is_fallback[t]) pseudo.push_back({t, std::vector<SupportEntry>(res.selections[t].sources.size())});
    fill_support_fields(report, pseudo);
  }
  audit.out.close();

  if (c.non_embedding_params)
    report.size = size_report(*c.non_embedding_params, source_emb.dim(), source_emb.rows(), out.embeddings.rows(),
                              c.tied_head);
  out.embeddings.meta() = {{"method", to_string(c.method)}, {"mode", to_string(c.focus.mode)}, {"vocab", "vocab.txt"}};
  save_matrix(out.embeddings, out.embeddings_path);
  write_vocabulary(out.vocab_path, row_tokens);
  report.timing_seconds["write"] = sw.lap();
  report.config = to_json(c);
  for (const auto& w : report.warnings) log << "warning: " << w << '\n';
  log << "init(" << report.method << ", " << report.mode << "): " << out.embeddings.rows() << " rows, overlap "
      << report.overlap_count << ", weighted " << report.weighted_count << ", fallback " << report.fallback_count
      << ", mean |S_a| " << report.mean_support_size << '\n';
  write_json(out.report_path, to_json(report));
  write_manifest(run, "init", to_json(c), {out.embeddings_path, out.weights_path, out.vocab_path, out.report_path});
  out.report = std::move(report);
  return out;
}

struct VerifyResult {
  bool ok = true;
  std::size_t checked_rows = 0;
  std::string message;
};

// Recomputes every weighted row from the audit file and checks copies bit-exactly.
inline VerifyResult cmd_verify(const fs::path& target_path, const fs::path& source_path, const fs::path& weights_path,
                               double tolerance = 1e-6) {
  const EmbeddingMatrix et = load_matrix(target_path);
  const EmbeddingMatrix es = load_any_matrix(source_path);
  if (et.dim() != es.dim()) return {false, 0, "dimension mismatch between target and source embeddings"};
  std::ifstream in(weights_path);
  if (!in) throw InputError("cannot open weights file " + weights_path.string());

  VerifyResult r;
  std::vector<bool> seen(et.rows(), false);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](std::string msg) {
    r.ok = false;
    r.message = std::move(msg);
    return r;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("weights line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto row = rec.at("row").get<std::size_t>();
    const auto token = rec.value("token", std::string());
    const auto kind = rec.at("kind").get<std::string>();
    if (row >= et.rows()) return fail("record for row " + std::to_string(row) + " ('" + token + "') is out of range");
    if (seen[row]) return fail("duplicate weight record for row " + std::to_string(row) + " ('" + token + "')");
    seen[row] = true;
    auto got = et.row(row);
    if (kind == "copy") {
      const auto sid = rec.at("source_id").get<std::size_t>();
      if (sid >= es.rows()) return fail("token '" + token + "': source id out of range");
      if (!rows_bit_equal(got, es.row(sid)))
        return fail("token '" + token + "' (row " + std::to_string(row) + ") is not a bit-exact copy of source row " +
                    std::to_string(sid));
    } else if (kind == "weighted") {
      std::vector<double> acc(es.dim(), 0.0);
      double wsum = 0.0;
      for (const auto& s : rec.at("support")) {
        const auto sid = s.at("source_id").get<std::size_t>();
        const double w = s.at("weight").get<double>();
        if (sid >= es.rows()) return fail("token '" + token + "': support source id out of range");
        if (!(w > 0.0)) return fail("token '" + token + "': non-positive support weight");
        wsum += w;
        auto src = es.row(sid);
        for (std::size_t c = 0; c < es.dim(); ++c) acc[c] += w * static_cast<double>(src[c]);
      }
      if (std::abs(wsum - 1.0) > tolerance)
        return fail("token '" + token + "': support weights sum to " + std::to_string(wsum));
      for (std::size_t c = 0; c < es.dim(); ++c) {
        const double diff = std::abs(static_cast<double>(got[c]) - acc[c]);
        if (diff > tolerance * std::max(1.0, std::abs(acc[c])))
          return fail("token '" + token + "' (row " + std::to_string(row) + ") differs from its weighted combination by " +
                      std::to_string(diff) + " at dim " + std::to_string(c));
      }
    } else if (kind == "fallback") {
      for (float x : got)
        if (!std::isfinite(x)) return fail("token '" + token + "': non-finite fallback row");
    } else {
      throw InputError("weights line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
    }
    ++r.checked_rows;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) return fail("missing weight record for row " + std::to_string(i));
  r.message = "verified " + std::to_string(r.checked_rows) + " rows";
  return r;
}

}  // namespace focus
