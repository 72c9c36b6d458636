#include "ufd/cli.h"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ufd/augment.h"
#include "ufd/error.h"
#include "ufd/feature_bank.h"
#include "ufd/harness.h"
#include "ufd/hash.h"
#include "ufd/linear_probe.h"
#include "ufd/metrics.h"
#include "ufd/nn_classifier.h"
#include "ufd/spectrum.h"

namespace ufd {
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::size_t threads = 0;
};

void configure_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("ufd");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    return true;
  }();
  (void)once;
  const char* level = std::getenv("UFD_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

fs::path output_path(const Globals& g, const std::string& name) {
  fs::path p = name;
  if (p.is_relative()) p = fs::path(g.out_dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::string timestamp_now() {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<BankRecord> read_records_jsonl(const fs::path& path, std::size_t& dim) {
  std::ifstream in(path);
  check(static_cast<bool>(in), ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<BankRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      BankRecord r;
      r.vector = j.at("vector").get<std::vector<float>>();
      r.label = parse_label(j.at("label").get<std::string>());
      r.class_id = j.value("class_id", -1);
      r.source_tag = j.value("source_tag", std::string());
      r.image_ref = j.value("image_ref", std::string());
      if (dim == 0) dim = r.vector.size();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::kCorruptData, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::unique_ptr<Scorer> make_scorer(const std::string& method, const std::string& bank_path,
                                    std::size_t k, const std::string& model_path) {
  if (method == "knn") {
    check(!bank_path.empty(), ErrorCode::kInvalidArgument, "--bank is required for method knn");
    return std::make_unique<KnnScorer>(load_bank(bank_path), k);
  }
  if (method == "linear") {
    check(!model_path.empty(), ErrorCode::kInvalidArgument, "--model is required for method linear");
    return std::make_unique<LinearScorer>(load_model(model_path));
  }
  raise(ErrorCode::kInvalidArgument, "unknown method '" + method + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    is >> v;
    check(!is.fail(), ErrorCode::kInvalidArgument, "cannot parse list value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void print_inspect(const FeatureBank& bank, const std::string& path, std::ostream& out) {
  std::map<std::int32_t, std::pair<std::size_t, std::size_t>> per_class;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_source;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    auto& c = per_class[bank.class_id(i)];
    auto& s = per_source[bank.source_tag(i)];
    (bank.label(i) == Label::kFake ? c.second : c.first) += 1;
    (bank.label(i) == Label::kFake ? s.second : s.first) += 1;
  }
  out << "file: " << path << '\n';
  out << "dim: " << bank.dim() << '\n';
  out << "N=" << bank.size() << " (" << bank.count(Label::kReal) << " real / " << bank.count(Label::kFake)
      << " fake)\n";
  out << "encoder: " << bank.encoder_id() << " layer: " << bank.layer_id() << '\n';
  out << "classes:\n";
  for (const auto& [id, n] : per_class) out << "  " << id << ": " << n.first << " real / " << n.second << " fake\n";
  out << "sources:\n";
  for (const auto& [tag, n] : per_source)
    out << "  " << (tag.empty() ? "(none)" : tag) << ": " << n.first << " real / " << n.second << " fake\n";
  out << "metadata: " << bank.metadata().dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Real-vs-fake image detection on frozen embedding features", "ufd"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style key = value file; command-line flags override it");
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

  std::function<void()> action;

  // bank ---------------------------------------------------------------------
  auto* bank = app.add_subcommand("bank", "Build, merge, subsample, inspect and export feature banks");
  bank->require_subcommand(1);

  struct {
    std::string records, out, encoder_id, layer_id;
    std::vector<std::string> meta;
    std::size_t dim = 0;
  } build;
  auto* b_build = bank->add_subcommand("build", "Build a bank from a JSON-lines record file");
  b_build->add_option("records", build.records, "JSON-lines: {vector, label, class_id, source_tag, image_ref}")
      ->required();
  b_build->add_option("-o,--out", build.out, "Output .ufdb")->required();
  b_build->add_option("--dim", build.dim, "Vector dimension (default: first record's length)");
  b_build->add_option("--encoder-id", build.encoder_id, "Encoder that produced the vectors");
  b_build->add_option("--layer-id", build.layer_id, "Encoder layer, e.g. L24");
  b_build->add_option("--meta", build.meta, "Extra metadata key=value");
  b_build->callback([&] {
    action = [&] {
      std::size_t dim = build.dim;
      auto records = read_records_jsonl(build.records, dim);
      nlohmann::json meta = nlohmann::json::object();
      if (!build.encoder_id.empty()) meta["encoder_id"] = build.encoder_id;
      if (!build.layer_id.empty()) meta["layer_id"] = build.layer_id;
      for (const auto& kv : build.meta) {
        const auto eq = kv.find('=');
        check(eq != std::string::npos, ErrorCode::kInvalidArgument, "--meta expects key=value, got " + kv);
        meta[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      const auto b = build_bank(std::move(records), dim, std::move(meta));
      const auto path = output_path(g, build.out);
      save_bank(b, path);
      out << "wrote " << path.string() << " (N=" << b.size() << ", dim=" << b.dim() << ")\n";
    };
  });

  struct {
    std::string images, label, out, source_tag;
    int side = 16;
    int class_id = -1;
  } embed;
  auto* b_embed = bank->add_subcommand("embed", "Build a bank of downsampled-pixel features from an image directory");
  b_embed->add_option("images", embed.images, "Image directory")->required();
  b_embed->add_option("--label", embed.label, "real or fake")->required();
  b_embed->add_option("-o,--out", embed.out, "Output .ufdb")->required();
  b_embed->add_option("--side", embed.side, "Resize side before flattening")->capture_default_str();
  b_embed->add_option("--source-tag", embed.source_tag, "Source tag stamped on every entry");
  b_embed->add_option("--class-id", embed.class_id, "Class id stamped on every entry")->capture_default_str();
  b_embed->callback([&] {
    action = [&] {
      const Label label = parse_label(embed.label);
      std::vector<RasterImage> imgs;
      std::vector<std::string> refs;
      for (const auto& p : list_images(embed.images)) {
        imgs.push_back(read_image(p));
        refs.push_back(p.string());
      }
      check(!imgs.empty(), ErrorCode::kEmptyInput, "no images in " + embed.images);
      const std::vector<Label> labels(imgs.size(), label);
      PixelEmbedder embedder(embed.side);
      auto base = embedder.embed(imgs, labels, refs);
      std::vector<BankRecord> records;
      for (std::size_t i = 0; i < base.size(); ++i) {
        auto r = base.record(i);
        r.source_tag = embed.source_tag;
        r.class_id = embed.class_id;
        records.push_back(std::move(r));
      }
      const auto b = build_bank(std::move(records), base.dim(),
                                {{"encoder_id", embedder.encoder_id()}, {"layer_id", "pixels"}});
      const auto path = output_path(g, embed.out);
      save_bank(b, path);
      out << "wrote " << path.string() << " (N=" << b.size() << ", dim=" << b.dim() << ")\n";
    };
  });

  struct {
    std::vector<std::string> inputs;
    std::string out;
  } merge;
  auto* b_merge = bank->add_subcommand("merge", "Concatenate banks in argument order");
  b_merge->add_option("inputs", merge.inputs, "Input banks")->required();
  b_merge->add_option("-o,--out", merge.out, "Output .ufdb")->required();
  b_merge->callback([&] {
    action = [&] {
      std::vector<FeatureBank> banks;
      for (const auto& p : merge.inputs) banks.push_back(load_bank(p));
      const auto b = merge_banks(banks);
      const auto path = output_path(g, merge.out);
      save_bank(b, path);
      out << "wrote " << path.string() << " (N=" << b.size() << ")\n";
    };
  });

  struct {
    std::string input, out;
    std::size_t total = 0, classes = 0;
  } sub;
  auto* b_sub = bank->add_subcommand("subsample", "Deterministic balanced or class-count subsampling");
  b_sub->add_option("input", sub.input, "Input bank")->required();
  b_sub->add_option("-o,--out", sub.out, "Output .ufdb")->required();
  auto* total_opt = b_sub->add_option("--total", sub.total, "Keep this many entries, real:fake balanced");
  auto* classes_opt = b_sub->add_option("--classes", sub.classes, "Keep every entry of this many classes");
  total_opt->excludes(classes_opt);
  b_sub->callback([&] {
    action = [&] {
      check(sub.total > 0 || sub.classes > 0, ErrorCode::kInvalidArgument, "give --total or --classes");
      SubsampleSpec spec;
      spec.seed = g.seed;
      if (sub.classes > 0) {
        spec.mode = SubsampleMode::kByClassCount;
        spec.class_count = sub.classes;
      } else {
        spec.target_total = sub.total;
      }
      const auto b = subsample_bank(load_bank(sub.input), spec);
      const auto path = output_path(g, sub.out);
      save_bank(b, path);
      out << "wrote " << path.string() << " (N=" << b.size() << ") sha256=" << sha256_file(path) << '\n';
    };
  });

  std::string inspect_path;
  auto* b_inspect = bank->add_subcommand("inspect", "Print dimension, counts and metadata");
  b_inspect->add_option("input", inspect_path, "Bank file")->required();
  b_inspect->callback([&] { action = [&] { print_inspect(load_bank(inspect_path), inspect_path, out); }; });

  struct {
    std::string input, out;
  } exp;
  auto* b_export = bank->add_subcommand("export", "Write raw vectors and labels as JSON-lines");
  b_export->add_option("input", exp.input, "Bank file")->required();
  b_export->add_option("-o,--out", exp.out, "Output .jsonl")->required();
  b_export->callback([&] {
    action = [&] {
      const auto b = load_bank(exp.input);
      std::string text;
      for (std::size_t i = 0; i < b.size(); ++i) {
        const auto v = b.raw(i);
        nlohmann::json j = {{"vector", std::vector<float>(v.begin(), v.end())},
                            {"label", to_string(b.label(i))},
                            {"class_id", b.class_id(i)},
                            {"source_tag", b.source_tag(i)},
                            {"image_ref", b.image_ref(i)}};
        text += j.dump() + "\n";
      }
      const auto path = output_path(g, exp.out);
      write_text(path, text);
      out << "wrote " << path.string() << '\n';
    };
  });

  // classify -----------------------------------------------------------------
  struct {
    std::string method = "knn", bank, model, queries, out;
    std::size_t k = 1;
    std::optional<double> threshold;
  } cls;
  auto* classify = app.add_subcommand("classify", "Score a query bank with the kNN rule or a linear probe");
  classify->add_option("--method", cls.method, "knn or linear")->check(CLI::IsMember({"knn", "linear"}))
      ->capture_default_str();
  classify->add_option("--bank", cls.bank, "Reference bank (knn)");
  classify->add_option("--k", cls.k, "Neighbors per side (knn)")->capture_default_str();
  classify->add_option("--model", cls.model, "Model JSON (linear)");
  classify->add_option("--queries", cls.queries, "Query bank")->required();
  classify->add_option("--threshold", cls.threshold, "Decision threshold (default 0 for knn, 0.5 for linear)");
  classify->add_option("-o,--out", cls.out, "Scores JSON-lines output")->required();
  classify->callback([&] {
    action = [&] {
      const auto scorer = make_scorer(cls.method, cls.bank, cls.k, cls.model);
      auto records = scorer->score(load_bank(cls.queries), g.threads);
      const double t = cls.threshold.value_or(scorer->default_threshold());
      std::size_t fakes = 0;
      for (auto& r : records) {
        r.decision = r.score > t ? Label::kFake : Label::kReal;
        fakes += *r.decision == Label::kFake;
      }
      const auto path = output_path(g, cls.out);
      write_scores(path, records);
      out << "wrote " << path.string() << " (" << records.size() << " scores, " << fakes << " fake at threshold "
          << t << ")\n";
    };
  });

  // train ----------------------------------------------------------------------
  struct {
    std::string bank, out, report = "train_report.json";
    TrainConfig config;
  } trn;
  auto* train = app.add_subcommand("train", "Train the linear probe on a feature bank");
  train->add_option("--bank", trn.bank, "Training bank")->required();
  train->add_option("-o,--out", trn.out, "Model JSON output")->required();
  train->add_option("--report", trn.report, "Training report JSON")->capture_default_str();
  train->add_option("--lr", trn.config.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--batch-size", trn.config.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--epochs", trn.config.max_epochs, "Maximum epochs")->capture_default_str();
  train->add_option("--patience", trn.config.early_stop_patience, "Early-stop patience (0 disables)")
      ->capture_default_str();
  train->add_option("--val-fraction", trn.config.val_fraction, "Held-out validation fraction")
      ->capture_default_str();
  train->callback([&] {
    action = [&] {
      trn.config.seed = g.seed;
      const auto b = load_bank(trn.bank);
      if (auto it = b.metadata().find("augment"); it != b.metadata().end() && it->is_object()) {
        try {
          trn.config.augment = it->get<AugmentPolicy>();
        } catch (const nlohmann::json::exception&) {
          spdlog::warn("bank metadata 'augment' is not a policy record; ignoring");
        }
      }
      auto [model, report] = train_linear(b, trn.config);
      const auto path = output_path(g, trn.out);
      save_model(model, path);
      write_text(output_path(g, trn.report), nlohmann::json(report).dump(2) + "\n");
      out << "wrote " << path.string() << " (best epoch " << report.best_epoch << ", val acc "
          << report.best_val_accuracy << ")\n";
    };
  });

  // eval -----------------------------------------------------------------------
  struct {
    std::string suite, method = "knn", bank, model, calibration = "fixed", val_bank, val_scores,
                                      label, ap = "step";
    std::size_t k = 1;
    std::optional<double> threshold;
  } ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a suite of test sets and write report tables");
  eval->add_option("--suite", ev.suite, "Suite manifest JSON")->required();
  eval->add_option("--method", ev.method, "knn, linear or scores")
      ->check(CLI::IsMember({"knn", "linear", "scores"}))
      ->capture_default_str();
  eval->add_option("--bank", ev.bank, "Reference bank (knn)");
  eval->add_option("--k", ev.k, "Neighbors per side (knn)")->capture_default_str();
  eval->add_option("--model", ev.model, "Model JSON (linear)");
  eval->add_option("--calibration", ev.calibration, "validation, oracle or fixed")
      ->check(CLI::IsMember({"validation", "oracle", "fixed"}))
      ->capture_default_str();
  eval->add_option("--val-bank", ev.val_bank, "Held-out validation bank (validation calibration)");
  eval->add_option("--val-scores", ev.val_scores, "Validation scores JSON-lines (validation calibration)");
  eval->add_option("--threshold", ev.threshold, "Threshold for fixed calibration");
  eval->add_option("--label", ev.label, "Row label in the tables (default: method description)");
  eval->add_option("--ap", ev.ap, "AP convention: step or interpolated11")
      ->check(CLI::IsMember({"step", "interpolated11"}))
      ->capture_default_str();
  eval->callback([&] {
    action = [&] {
      const Suite suite = load_suite(ev.suite);
      std::unique_ptr<Scorer> scorer;
      if (ev.method != "scores") scorer = make_scorer(ev.method, ev.bank, ev.k, ev.model);
      CalibrationSpec cal;
      cal.source = parse_threshold_source(ev.calibration);
      cal.fixed_threshold = ev.threshold;
      if (!ev.val_bank.empty()) cal.validation_bank = load_bank(ev.val_bank);
      if (!ev.val_scores.empty()) cal.validation_scores = labeled_scores(read_scores(ev.val_scores));
      SuiteRunOptions opts;
      opts.threads = g.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : g.threads;
      opts.ap_convention = ev.ap == "interpolated11" ? ApConvention::kInterpolated11 : ApConvention::kStep;
      opts.timestamp = timestamp_now();
      opts.config_echo = {{"method", ev.method}, {"k", ev.k}, {"calibration", ev.calibration},
                          {"seed", g.seed}, {"suite", ev.suite}};
      if (!ev.bank.empty()) opts.config_echo["bank_sha256"] = sha256_file(ev.bank);
      if (!ev.model.empty()) opts.config_echo["model"] = ev.model;
      if (ev.threshold) opts.config_echo["threshold"] = *ev.threshold;
      const auto result = evaluate_suite(suite, scorer.get(), cal, opts);

      std::string label = ev.label;
      if (label.empty()) label = ev.method == "knn" ? "NN, k=" + std::to_string(ev.k) : ev.method;
      if (cal.source == ThresholdSource::kOracle) label += " (oracle)";

      const fs::path dir = output_path(g, "reports/.keep").parent_path();
      for (const auto& [name, report] : result.per_set)
        write_text(dir / (name + ".json"), nlohmann::json(report).dump(2) + "\n");
      write_text(output_path(g, "suite_result.json"), suite_result_to_json(result).dump(2) + "\n");
      for (auto metric : {TableMetric::kAp, TableMetric::kAccuracy, TableMetric::kRealAccuracy,
                          TableMetric::kFakeAccuracy}) {
        ResultTable table;
        table.metric = metric;
        add_table_row(table, label, result);
        const std::string stem = std::string(to_string(metric)) + "_table";
        write_text(output_path(g, stem + ".csv"), render_table_csv(table));
        write_text(output_path(g, stem + ".txt"), render_table_text(table));
        if (metric == TableMetric::kAp || metric == TableMetric::kAccuracy) out << render_table_text(table) << '\n';
      }
      out << std::fixed << std::setprecision(2);
      for (const auto& f : result.family_rollups)
        out << f.family << ": mean AP " << 100 * f.mean_ap << ", mean acc " << 100 * f.mean_accuracy << " ("
            << f.members << " sets)\n";
      out << "mAP " << 100 * result.map_total << ", avg acc " << 100 * result.avg_acc_total << '\n';
    };
  });

  // calibrate ------------------------------------------------------------------
  struct {
    std::string scores, out;
  } calb;
  auto* calibrate = app.add_subcommand("calibrate", "Best-accuracy threshold for a labeled scores file");
  calibrate->add_option("--scores", calb.scores, "Scores JSON-lines with ground truth")->required();
  calibrate->add_option("-o,--out", calb.out, "Optional JSON output");
  calibrate->callback([&] {
    action = [&] {
      const auto scores = labeled_scores(read_scores(calb.scores));
      const auto c = calibrate_threshold(scores);
      const auto acc = accuracy_at_threshold(scores, c.threshold);
      const nlohmann::json j = {{"threshold", c.threshold},
                                {"balanced_accuracy", c.accuracy},
                                {"accuracy", acc.accuracy},
                                {"real_accuracy", acc.real_accuracy},
                                {"fake_accuracy", acc.fake_accuracy}};
      if (!calb.out.empty()) write_text(output_path(g, calb.out), j.dump(2) + "\n");
      out << j.dump() << '\n';
    };
  });

  // rank -----------------------------------------------------------------------
  struct {
    std::string bank, queries, side = "fake", direction = "closest", out;
    std::size_t m = 10;
  } rnk;
  auto* rank = app.add_subcommand("rank", "List queries closest to / farthest from one side of a bank");
  rank->add_option("--bank", rnk.bank, "Reference bank")->required();
  rank->add_option("--queries", rnk.queries, "Query bank")->required();
  rank->add_option("--side", rnk.side, "real or fake")->check(CLI::IsMember({"real", "fake"}))->capture_default_str();
  rank->add_option("--direction", rnk.direction, "closest or farthest")
      ->check(CLI::IsMember({"closest", "farthest"}))
      ->capture_default_str();
  rank->add_option("--m", rnk.m, "Number of queries to list")->capture_default_str();
  rank->add_option("-o,--out", rnk.out, "Optional CSV output");
  rank->callback([&] {
    action = [&] {
      const auto b = load_bank(rnk.bank);
      const auto q = load_bank(rnk.queries);
      const auto ranked = rank_by_distance(q, parse_label(rnk.side), b,
                                           rnk.direction == "closest" ? RankDirection::kClosest
                                                                      : RankDirection::kFarthest,
                                           rnk.m);
      std::ostringstream csv;
      csv << std::setprecision(17) << "rank,query_index,distance,image_ref\n";
      for (std::size_t i = 0; i < ranked.size(); ++i)
        csv << i + 1 << ',' << ranked[i].query_index << ',' << ranked[i].distance << ','
            << q.image_ref(ranked[i].query_index) << '\n';
      if (!rnk.out.empty()) write_text(output_path(g, rnk.out), csv.str());
      out << csv.str();
    };
  });

  // spectrum -------------------------------------------------------------------
  struct {
    std::string images, out = "spectrum.png";
    SpectrumOptions opts;
    std::size_t max_images = 2000;
  } spc;
  auto* spectrum = app.add_subcommand("spectrum", "Average high-pass frequency spectrum of an image directory");
  spectrum->add_option("--images", spc.images, "Image directory")->required();
  spectrum->add_option("-o,--out", spc.out, "Output PNG; .f32 grid and .json sidecars share its stem")
      ->capture_default_str();
  spectrum->add_option("--kernel", spc.opts.median_kernel, "Median kernel (odd)")->capture_default_str();
  spectrum->add_option("--size", spc.opts.size, "Resize side")->capture_default_str();
  spectrum->add_option("--max-images", spc.max_images, "Use at most this many images (sorted order)")
      ->capture_default_str();
  spectrum->add_flag("--log", spc.opts.log_scale, "log(1 + magnitude)");
  spectrum->add_flag("--no-highpass", spc.opts.bypass_highpass, "Transform luminance directly");
  spectrum->callback([&] {
    action = [&] {
      auto paths = list_images(spc.images);
      if (paths.size() > spc.max_images) paths.resize(spc.max_images);
      std::vector<RasterImage> imgs;
      imgs.reserve(paths.size());
      for (const auto& p : paths) imgs.push_back(read_image(p));
      const auto s = average_spectrum(imgs, spc.opts);
      const auto png = output_path(g, spc.out);
      render_spectrum(s, png);
      auto grid = png;
      grid.replace_extension(".f32");
      save_spectrum_grid(s, grid);
      auto meta = s.parameters;
      meta["image_dir"] = spc.images;
      meta["png"] = png.string();
      meta["grid"] = grid.string();
      auto sidecar = png;
      sidecar.replace_extension(".json");
      write_text(sidecar, meta.dump(2) + "\n");
      out << "wrote " << png.string() << " from " << s.n_images << " images\n";
    };
  });

  // robustness -----------------------------------------------------------------
  struct {
    std::string suite, method = "knn", bank, model, encoder = "pixel", extract_cmd, out = "robustness.csv";
    std::string blur = "0,0.5,1,1.5,2,3", jpeg = "100,90,80,70,60,50,40,30";
    std::size_t k = 1;
    int side = 16;
  } rob;
  auto* robustness = app.add_subcommand("robustness", "AP under Gaussian blur and JPEG compression sweeps");
  robustness->add_option("--suite", rob.suite, "Suite manifest with real_images/fake_images")->required();
  robustness->add_option("--method", rob.method, "knn or linear")
      ->check(CLI::IsMember({"knn", "linear"}))
      ->capture_default_str();
  robustness->add_option("--bank", rob.bank, "Reference bank (knn)");
  robustness->add_option("--k", rob.k, "Neighbors per side (knn)")->capture_default_str();
  robustness->add_option("--model", rob.model, "Model JSON (linear)");
  robustness->add_option("--encoder", rob.encoder, "pixel or command")
      ->check(CLI::IsMember({"pixel", "command"}))
      ->capture_default_str();
  robustness->add_option("--pixel-side", rob.side, "Side for the pixel encoder")->capture_default_str();
  robustness->add_option("--extract-cmd", rob.extract_cmd,
                         "Extraction command with {images}, {out}, {label} placeholders");
  robustness->add_option("--blur-grid", rob.blur, "Comma-separated sigmas")->capture_default_str();
  robustness->add_option("--jpeg-grid", rob.jpeg, "Comma-separated qualities")->capture_default_str();
  robustness->add_option("-o,--out", rob.out, "Long-format CSV; a _family CSV is written beside it")
      ->capture_default_str();
  robustness->callback([&] {
    action = [&] {
      const Suite suite = load_suite(rob.suite);
      const auto scorer = make_scorer(rob.method, rob.bank, rob.k, rob.model);
      std::unique_ptr<ImageEmbedder> embedder;
      if (rob.encoder == "pixel") {
        embedder = std::make_unique<PixelEmbedder>(rob.side);
      } else {
        check(!rob.extract_cmd.empty(), ErrorCode::kInvalidArgument, "--encoder command needs --extract-cmd");
        embedder = std::make_unique<CommandEmbedder>(rob.extract_cmd);
      }
      const auto blur = parse_list<double>(rob.blur);
      const auto jpeg = parse_list<int>(rob.jpeg);
      const auto result = run_robustness(suite, *scorer, *embedder, blur, jpeg);
      std::map<std::string, std::string> family_of;
      for (const auto& s : suite.sets) family_of[s.name] = std::string(to_string(s.family));
      const auto path = output_path(g, rob.out);
      write_text(path, sweep_to_csv(result.rows, family_of));
      auto fam = path;
      fam.replace_filename(path.stem().string() + "_family.csv");
      write_text(fam, family_sweep_to_csv(result.family_rows));
      out << "wrote " << path.string() << " and " << fam.string() << " (" << result.rows.size() << " rows)\n";
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ufd: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    err << "ufd: " << e.what() << '\n';
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "ufd: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace ufd
