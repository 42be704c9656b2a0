#include "shield/cli.hpp"

#include "shield/alignment.hpp"
#include "shield/baselines.hpp"
#include "shield/error.hpp"
#include "shield/extraction.hpp"
#include "shield/feature_cache.hpp"
#include "shield/lexicon.hpp"
#include "shield/synthetic.hpp"
#include "shield/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace shield {

namespace fs = std::filesystem;
using nlohmann::json;

std::string group_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::unique_ptr<LlmClient> make_client(const ExtractionConfig& config) {
  switch (config.client) {
    case ClientKind::kReplay: {
      auto c = std::make_unique<ReplayLlmClient>(config.model_id, config.decoding);
      c->load_jsonl(config.replay_path);
      return c;
    }
    case ClientKind::kLexicon:
      return std::make_unique<LexiconMockClient>(load_lexicon(config.lexicon_path));
    case ClientKind::kLive:
      break;
  }
  if (config.api_key.empty()) {
    throw ConfigError(std::string("extraction.api_key: set ") + kApiKeyEnv +
                      " to use the live client");
  }
  HttpClientOptions o;
  o.endpoint = config.endpoint;
  o.api_key = config.api_key;
  o.model_id = config.model_id;
  o.decoding = config.decoding;
  o.timeout = std::chrono::seconds(config.timeout_seconds);
  return std::make_unique<HttpLlmClient>(std::move(o));
}

// ---------------------------------------------------------------------------

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".shield.lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    // A lock left by a process that no longer exists is taken over.
    std::ifstream in(path_);
    long holder = 0;
    in >> holder;
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) break;
    fs::remove(path_, ec);
  }
  throw LockedError("output directory " + dir.string() + " is in use (" + path_.string() + ")");
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------

namespace {

struct Context {
  AppConfig config;
  std::ostream& out;
};

std::vector<Post> load_dataset(const AppConfig& config, const std::string& name) {
  const DatasetConfig& d = config.dataset(name);
  LoadOptions opts;
  opts.format = d.format;
  opts.platform = d.platform;
  opts.labels = d.label_map;
  return prepare_posts(load_posts(d.path, opts).posts);
}

fs::path dataset_dir(const AppConfig& config, const std::string& name) {
  return config.output_dir / name;
}

fs::path cache_dir(const AppConfig& config) {
  return config.extraction.cache_dir.empty() ? config.output_dir / "llm_cache"
                                             : config.extraction.cache_dir;
}

ExtractOptions extract_options(const AppConfig& config, RateLimiter* limiter) {
  ExtractOptions o;
  o.retry.max_retries = config.extraction.max_retries;
  o.limiter = limiter;
  o.parallelism = config.extraction.parallelism;
  o.skip_unparseable = config.extraction.skip_unparseable;
  return o;
}

// Features for every post: the dataset's features file first, then the
// configured client (cache-first) for whatever is missing.
std::map<std::string, FeatureSet> ensure_features(const AppConfig& config, const std::string& name,
                                                  std::span<const Post> posts) {
  const fs::path file = dataset_dir(config, name) / "features.jsonl";
  std::map<std::string, FeatureSet> features;
  if (fs::exists(file)) features = read_features_jsonl(file);
  std::vector<Post> missing;
  for (const auto& p : posts) {
    if (!features.count(p.id)) missing.push_back(p);
  }
  if (missing.empty()) return features;

  auto client = make_client(config.extraction);
  FeatureCache cache(cache_dir(config));
  RateLimiter limiter(config.extraction.rate_limit);
  auto result = extract_corpus(missing, *client, &cache, extract_options(config, &limiter));
  features.merge(result.features);
  write_features_jsonl(file, posts, features);
  return features;
}

EncoderSpec text_spec(const AppConfig& c) {
  return EncoderSpec{c.encoders.hsd_encoder, true, c.encoders.max_tokens};
}
EncoderSpec feature_spec(const AppConfig& c) {
  return EncoderSpec{c.encoders.fe_encoder, false, c.encoders.max_tokens};
}

std::vector<Post> select_split(const AppConfig& config, std::vector<Post> posts,
                               const std::string& which) {
  if (which == "all") return posts;
  Split s = split_dataset(posts, config.split.ratios, config.split.seed);
  if (which == "train") return std::move(s.train);
  if (which == "val") return std::move(s.val);
  if (which == "test") return std::move(s.test);
  throw ConfigError("--split: expected train, val, test or all");
}

void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

// --- commands --------------------------------------------------------------

void cmd_stats(Context& ctx, std::vector<std::string> names, bool as_json) {
  if (names.empty()) {
    for (const auto& [name, _] : ctx.config.datasets) names.push_back(name);
  }
  if (names.empty()) throw ConfigError("datasets: no dataset configured");
  json rows = json::array();
  std::size_t width = 7;
  for (const auto& n : names) width = std::max(width, n.size());
  if (!as_json) {
    ctx.out << std::string("Dataset") + std::string(width - 7, ' ')
            << "  #Posts / #Hateful / Hate %\n";
  }
  for (const auto& name : names) {
    const auto posts = load_dataset(ctx.config, name);
    const DatasetStats s = dataset_stats(posts);
    if (as_json) {
      rows.push_back({{"dataset", name},
                      {"posts", s.n_posts},
                      {"hateful", s.n_hateful},
                      {"hate_pct", s.hate_pct}});
    } else {
      ctx.out << name << std::string(width - name.size(), ' ') << "  "
              << group_thousands(s.n_posts) << " / " << group_thousands(s.n_hateful) << " / "
              << fixed1(s.hate_pct) << '\n';
    }
  }
  if (as_json) print_json(ctx.out, rows);
}

void cmd_extract(Context& ctx, const std::string& name) {
  const auto posts = load_dataset(ctx.config, name);
  auto client = make_client(ctx.config.extraction);
  FeatureCache cache(cache_dir(ctx.config));
  RateLimiter limiter(ctx.config.extraction.rate_limit);
  const auto result = extract_corpus(posts, *client, &cache, extract_options(ctx.config, &limiter));
  const fs::path file = dataset_dir(ctx.config, name) / "features.jsonl";
  write_features_jsonl(file, posts, result.features);
  std::size_t non_hateful = 0;
  for (const auto& [_, fs] : result.features) non_hateful += fs.non_hateful ? 1 : 0;
  print_json(ctx.out, {{"dataset", name},
                       {"features", file.string()},
                       {"n_posts", posts.size()},
                       {"n_extracted", result.features.size()},
                       {"n_non_hateful", non_hateful},
                       {"failed_ids", result.failed_ids},
                       {"llm_calls", client->calls()}});
}

void cmd_train(Context& ctx, const std::string& name) {
  const AppConfig& c = ctx.config;
  auto posts = load_dataset(c, name);
  const auto features = ensure_features(c, name, posts);
  const Split split = split_dataset(posts, c.split.ratios, c.split.seed);
  const EncoderRegistry registry = c.registry();
  ShieldModel model = make_model(registry, text_spec(c), feature_spec(c), c.train);

  const fs::path dir = dataset_dir(c, name);
  FeatureEmbeddingCache fe_cache(dir / "fe_embeddings.bin", model.feature_encoder());
  TrainOptions opts;
  opts.checkpoint_dir = dir / "checkpoint";
  opts.metrics_log = dir / "metrics.jsonl";
  opts.feature_cache = &fe_cache;
  opts.encoder_names = {c.encoders.hsd_encoder, c.encoders.fe_encoder};
  auto result = train(split.train, split.val, features, std::move(model), c.train, opts);
  fe_cache.save();

  const auto& r = result.report;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_accuracy", e.val_accuracy ? json(*e.val_accuracy) : json(nullptr)}});
  }
  json summary = {{"dataset", name},
                  {"checkpoint", r.best_checkpoint.string()},
                  {"best_epoch", r.best_epoch},
                  {"best_val_accuracy", r.best_val_accuracy ? json(*r.best_val_accuracy) : json(nullptr)},
                  {"steps", r.steps},
                  {"text_encoder_trained", r.text_encoder_trained},
                  {"feature_encoder_digest_before", r.feature_encoder_digest_before},
                  {"feature_encoder_digest_after", r.feature_encoder_digest_after},
                  {"n_train", split.train.size()},
                  {"n_val", split.val.size()},
                  {"epochs", epochs}};
  atomic_write(dir / "train_report.json", summary.dump(2) + "\n");
  print_json(ctx.out, summary);
}

void cmd_eval(Context& ctx, const std::string& name, const std::string& which) {
  const AppConfig& c = ctx.config;
  const fs::path dir = dataset_dir(c, name);
  const auto loaded = load_checkpoint(dir / "checkpoint", c.registry());
  auto posts = select_split(c, load_dataset(c, name), which);
  const auto features = ensure_features(c, name, posts);
  FeatureEmbeddingCache fe_cache(dir / "fe_embeddings.bin", loaded.model.feature_encoder());
  const double acc = evaluate_accuracy(loaded.model, posts, features, &fe_cache);
  fe_cache.save();
  json summary = {{"dataset", name}, {"split", which}, {"n_posts", posts.size()}, {"accuracy", acc}};
  atomic_write(dir / ("eval_" + which + ".json"), summary.dump(2) + "\n");
  print_json(ctx.out, summary);
}

AlignmentResult run_alignment(const AppConfig& c, const std::string& name,
                              std::vector<Post>& posts_out,
                              std::map<std::string, FeatureSet>& features_out) {
  posts_out = load_dataset(c, name);
  features_out = ensure_features(c, name, posts_out);
  const auto encoder = c.registry().load(feature_spec(c));
  return align_corpus(features_out, posts_out, *encoder);
}

void cmd_align(Context& ctx, const std::string& name) {
  std::vector<Post> posts;
  std::map<std::string, FeatureSet> features;
  const auto result = run_alignment(ctx.config, name, posts, features);
  const json j = result;
  atomic_write(dataset_dir(ctx.config, name) / "alignment.json", j.dump(2) + "\n");
  json brief = j;
  brief.erase("per_example");
  print_json(ctx.out, brief);
}

void cmd_report(Context& ctx, const std::string& name) {
  std::vector<Post> posts;
  std::map<std::string, FeatureSet> features;
  const auto result = run_alignment(ctx.config, name, posts, features);
  const fs::path path = dataset_dir(ctx.config, name) / "overlap_report.html";
  render_overlap_report(posts, features, result, path);
  print_json(ctx.out, {{"dataset", name}, {"report", path.string()}, {"n_evaluated", result.n_evaluated}});
}

void cmd_baseline(Context& ctx, const std::string& name, bool strict_flag) {
  const AppConfig& c = ctx.config;
  const auto ex = c.baseline.exemplars.find(name);
  if (ex == c.baseline.exemplars.end()) {
    throw ConfigError("baseline.exemplars." + name + ": no exemplar pinned for this dataset");
  }
  const auto posts = select_split(c, load_dataset(c, name), "test");
  auto client = make_client(c.extraction);
  RateLimiter limiter(c.extraction.rate_limit);
  OneShotOptions o;
  o.exemplar = ex->second;
  o.retry.max_retries = c.extraction.max_retries;
  o.limiter = &limiter;
  o.parallelism = c.extraction.parallelism;
  o.strict = strict_flag || c.baseline.strict;
  const auto eval = evaluate_oneshot(posts, *client, o);
  const fs::path dir = dataset_dir(c, name);
  write_oneshot_results(dir / "oneshot_results.jsonl", eval);
  const json summary = oneshot_summary(eval, *client);
  atomic_write(dir / "oneshot_summary.json", summary.dump(2) + "\n");
  print_json(ctx.out, summary);
}

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

void cmd_synth(std::ostream& out, const fs::path& dir, std::size_t n_posts, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  const auto posts = make_separable_corpus(n_posts, seed);
  write_posts_jsonl(dir / "posts.jsonl", posts);
  json lex = json::object();
  for (const auto& [term, cat] : synthetic_lexicon()) {
    lex[term] = cat == FeatureCategory::kDerogatory ? "derogatory" : "cuss";
  }
  write_json(dir / "lexicon.json", lex);
  const json config = {
      {"datasets", {{"synthetic", {{"path", "posts.jsonl"}, {"format", "jsonl"}}}}},
      {"encoders", {{"hsd_encoder", "detector-default"}, {"fe_encoder", "feature-default"}}},
      {"extraction", {{"client", "lexicon"}, {"lexicon_path", "lexicon.json"}}},
      {"train", {{"learning_rate", 1e-3}, {"epochs", 3}, {"batch_size", 16}, {"hidden_dim", 64}}},
      {"split", {{"ratios", {0.8, 0.1, 0.1}}, {"seed", 42}}},
      {"baseline",
       {{"exemplars", {{"synthetic", {{"text", "those newcomers are grubvoles"}, {"label", 1}}}}}}},
      {"output_dir", "out"}};
  write_json(dir / "config.json", config);
  print_json(out, {{"posts", (dir / "posts.jsonl").string()},
                   {"lexicon", (dir / "lexicon.json").string()},
                   {"config", (dir / "config.json").string()},
                   {"n_posts", posts.size()}});
}

void report_error(std::ostream& err, std::string_view name, const std::string& message, int code) {
  const json j = {{"error", name}, {"message", message}, {"exit_code", code}};
  err << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env) {
  CLI::App app{"Rationale-feature hate speech detection pipeline"};
  app.require_subcommand(1);
  std::string config_path = "shield.json";
  std::string output_dir;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("-o,--output-dir", output_dir, "Overrides output_dir");

  std::vector<std::string> stats_names;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "Dataset statistics table");
  stats->add_option("-d,--dataset", stats_names, "Datasets to list (default: all)");
  stats->add_flag("--json", stats_json, "Emit JSON instead of a table");

  std::string dataset;
  auto need_dataset = [&](CLI::App* sub) {
    sub->add_option("-d,--dataset", dataset, "Configured dataset name")->required();
    return sub;
  };
  auto* extract = need_dataset(app.add_subcommand("extract", "Extract rationale features"));
  auto* train_cmd = need_dataset(app.add_subcommand("train", "Train the fused classifier"));
  std::string client_override;
  for (auto* sub : {extract, train_cmd}) {
    sub->add_option("--client", client_override, "Overrides extraction.client")
        ->check(CLI::IsMember({"live", "replay", "lexicon"}));
  }
  std::optional<double> lr_override;
  std::optional<std::size_t> epochs_override;
  train_cmd->add_option("--learning-rate", lr_override, "Overrides train.learning_rate");
  train_cmd->add_option("--epochs", epochs_override, "Overrides train.epochs");
  std::string which = "test";
  auto* eval = need_dataset(app.add_subcommand("eval", "Accuracy of the trained checkpoint"));
  eval->add_option("--split", which, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  auto* align = need_dataset(app.add_subcommand("align", "LLM vs human rationale agreement"));
  auto* report = need_dataset(app.add_subcommand("report", "HTML rationale overlap report"));
  bool strict = false;
  auto* baseline = need_dataset(app.add_subcommand("baseline", "One-shot LLM classification"));
  baseline->add_flag("--strict", strict, "Count abstentions as errors");

  std::string synth_dir;
  std::size_t synth_n = 200;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "Write a synthetic separable corpus and config");
  synth->add_option("--out", synth_dir, "Target directory")->required();
  synth->add_option("--posts", synth_n, "Number of posts");
  synth->add_option("--seed", synth_seed, "Generator seed");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("shield");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "UsageError", e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(out, synth_dir, synth_n, synth_seed);
      return 0;
    }
    AppConfig config = load_config(config_path, env);
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (!client_override.empty()) {
      config.extraction.client = client_override == "live"     ? ClientKind::kLive
                                 : client_override == "replay" ? ClientKind::kReplay
                                                               : ClientKind::kLexicon;
    }
    if (lr_override) config.train.learning_rate = *lr_override;
    if (epochs_override) config.train.epochs = *epochs_override;
    config.train.validate();

    OutputLock lock(config.output_dir);
    Context ctx{std::move(config), out};
    if (stats->parsed()) cmd_stats(ctx, stats_names, stats_json);
    else if (extract->parsed()) cmd_extract(ctx, dataset);
    else if (train_cmd->parsed()) cmd_train(ctx, dataset);
    else if (eval->parsed()) cmd_eval(ctx, dataset, which);
    else if (align->parsed()) cmd_align(ctx, dataset);
    else if (report->parsed()) cmd_report(ctx, dataset);
    else if (baseline->parsed()) cmd_baseline(ctx, dataset, strict);
    return 0;
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    report_error(err, e.name(), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    report_error(err, "InternalError", e.what(), kExitUnexpected);
    return kExitUnexpected;
  }
}

}  // namespace shield
