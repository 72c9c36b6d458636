#include "ufd/harness.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <opencv2/imgproc.hpp>

#include "ufd/error.h"
#include "ufd/hash.h"
#include "ufd/nn_classifier.h"

namespace ufd {
namespace fs = std::filesystem;

namespace {

constexpr std::pair<ModelFamily, std::string_view> kFamilyNames[] = {
    {ModelFamily::kGan, "gan"},
    {ModelFamily::kDeepfake, "deepfake"},
    {ModelFamily::kLowLevelVision, "low_level_vision"},
    {ModelFamily::kPerceptualLoss, "perceptual_loss"},
    {ModelFamily::kDiffusion, "diffusion"},
    {ModelFamily::kAutoregressive, "autoregressive"},
};

fs::path resolve(const nlohmann::json& j, const char* key, const fs::path& base) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  fs::path p = it->get<std::string>();
  return p.is_relative() ? base / p : p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

nlohmann::json rounded(const nlohmann::json& j) {
  if (j.is_number_float()) return round_significant(j.get<double>(), 6);
  if (j.is_array() || j.is_object()) {
    nlohmann::json out = j;
    for (auto& v : out) v = rounded(v);
    return out;
  }
  return j;
}

std::string format_percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

double table_value(const EvalReport& r, TableMetric m) {
  switch (m) {
    case TableMetric::kAp: return r.ap;
    case TableMetric::kAccuracy: return r.accuracy;
    case TableMetric::kRealAccuracy: return r.real_accuracy;
    case TableMetric::kFakeAccuracy: return r.fake_accuracy;
  }
  return 0.0;
}

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "ufd-XXXXXX").string();
    check(::mkdtemp(pattern.data()) != nullptr, ErrorCode::kIoFailure, "cannot create temp dir");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

}  // namespace

std::string_view to_string(ModelFamily family) {
  for (const auto& [f, name] : kFamilyNames)
    if (f == family) return name;
  return "gan";
}

ModelFamily parse_family(std::string_view text) {
  for (const auto& [f, name] : kFamilyNames)
    if (name == text) return f;
  raise(ErrorCode::kInvalidArgument, "unknown model family '" + std::string(text) + "'");
}

Suite parse_suite(const nlohmann::json& j, const fs::path& base_dir) {
  Suite suite;
  try {
    suite.name = j.value("name", std::string("suite"));
    std::set<std::string> seen;
    for (const auto& s : j.at("test_sets")) {
      TestSetManifest m;
      m.name = s.at("name").get<std::string>();
      check(seen.insert(m.name).second, ErrorCode::kManifestUnresolvable,
            "duplicate test set name '" + m.name + "'");
      m.family = parse_family(s.at("family").get<std::string>());
      m.real_bank = resolve(s, "real_bank", base_dir);
      m.fake_bank = resolve(s, "fake_bank", base_dir);
      m.real_images = resolve(s, "real_images", base_dir);
      m.fake_images = resolve(s, "fake_images", base_dir);
      m.scores = resolve(s, "scores", base_dir);
      m.notes = s.value("notes", nlohmann::json::object());
      suite.sets.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kManifestUnresolvable, std::string("malformed suite manifest: ") + e.what());
  }
  check(!suite.sets.empty(), ErrorCode::kManifestUnresolvable, "suite has no test sets");
  return suite;
}

Suite load_suite(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kManifestUnresolvable, path.string() + ": " + e.what());
  }
  return parse_suite(j, path.parent_path());
}

nlohmann::json suite_to_manifest_json(const Suite& suite) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& m : suite.sets) {
    nlohmann::json s = {{"name", m.name}, {"family", to_string(m.family)}, {"notes", m.notes}};
    auto put = [&](const char* key, const fs::path& p) {
      if (!p.empty()) s[key] = p.string();
    };
    put("real_bank", m.real_bank);
    put("fake_bank", m.fake_bank);
    put("real_images", m.real_images);
    put("fake_images", m.fake_images);
    put("scores", m.scores);
    sets.push_back(std::move(s));
  }
  return {{"name", suite.name}, {"test_sets", std::move(sets)}};
}

void require_resolvable(const Suite& suite, SetInput input) {
  for (const auto& m : suite.sets) {
    auto need_file = [&](const fs::path& p, const char* what) {
      check(!p.empty() && fs::is_regular_file(p), ErrorCode::kManifestUnresolvable,
            "test set '" + m.name + "': " + what + " " + (p.empty() ? "not given" : p.string() + " not found"));
    };
    auto need_dir = [&](const fs::path& p, const char* what) {
      check(!p.empty() && fs::is_directory(p), ErrorCode::kManifestUnresolvable,
            "test set '" + m.name + "': " + what + " " + (p.empty() ? "not given" : p.string() + " not found"));
    };
    switch (input) {
      case SetInput::kBanks:
        need_file(m.real_bank, "real_bank");
        need_file(m.fake_bank, "fake_bank");
        break;
      case SetInput::kImages:
        need_dir(m.real_images, "real_images");
        need_dir(m.fake_images, "fake_images");
        break;
      case SetInput::kScores:
        need_file(m.scores, "scores");
        break;
    }
  }
}

std::string scores_to_jsonl(std::span<const ScoreRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"score", r.score}, {"image_ref", r.image_ref}};
    j["truth"] = r.truth ? nlohmann::json(to_string(*r.truth)) : nlohmann::json(nullptr);
    if (r.decision) j["decision"] = to_string(*r.decision);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ScoreRecord> scores_from_jsonl(std::string_view text) {
  std::vector<ScoreRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoreRecord r;
      r.score = j.at("score").get<double>();
      if (auto it = j.find("truth"); it != j.end() && !it->is_null()) r.truth = parse_label(it->get<std::string>());
      r.image_ref = j.value("image_ref", std::string());
      if (auto it = j.find("decision"); it != j.end() && !it->is_null())
        r.decision = parse_label(it->get<std::string>());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::kCorruptData, "scores line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_scores(const fs::path& path, std::span<const ScoreRecord> records) {
  write_text(path, scores_to_jsonl(records));
}

std::vector<ScoreRecord> read_scores(const fs::path& path) {
  try {
    return scores_from_jsonl(read_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<LabeledScore> labeled_scores(std::span<const ScoreRecord> records) {
  std::vector<LabeledScore> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    check(records[i].truth.has_value(), ErrorCode::kInvalidArgument,
          "score record " + std::to_string(i) + " has no ground truth");
    out.push_back({records[i].score, *records[i].truth});
  }
  return out;
}

std::vector<ScoreRecord> KnnScorer::score(const FeatureBank& queries, std::size_t threads) const {
  check(queries.dim() == bank_.dim(), ErrorCode::kDimensionMismatch,
        "query dim " + std::to_string(queries.dim()) + " does not match bank dim " +
            std::to_string(bank_.dim()));
  check(queries.encoder_id() == bank_.encoder_id() && queries.layer_id() == bank_.layer_id(),
        ErrorCode::kEncoderMismatch,
        "queries come from " + queries.encoder_id() + "/" + queries.layer_id() + ", bank from " +
            bank_.encoder_id() + "/" + bank_.layer_id());
  const auto preds = knn_batch(queries, bank_, k_, threads);
  std::vector<ScoreRecord> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    out[i] = {preds[i].score_fake, queries.label(i), queries.image_ref(i), preds[i].decision};
  return out;
}

nlohmann::json KnnScorer::describe() const {
  return {{"method", "knn"},        {"k", k_},
          {"bank_entries", bank_.size()}, {"bank_real", bank_.count(Label::kReal)},
          {"bank_fake", bank_.count(Label::kFake)}, {"encoder_id", bank_.encoder_id()},
          {"layer_id", bank_.layer_id()}};
}

std::vector<ScoreRecord> LinearScorer::score(const FeatureBank& queries, std::size_t) const {
  const auto preds = predict_linear(model_, queries, default_threshold());
  std::vector<ScoreRecord> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    out[i] = {preds[i].score, queries.label(i), queries.image_ref(i), preds[i].decision};
  return out;
}

nlohmann::json LinearScorer::describe() const {
  return {{"method", "linear"}, {"dim", model_.dim()}, {"model_hash", model_to_json(model_).at("content_hash")},
          {"metadata", model_.metadata}};
}

FeatureBank load_set_queries(const TestSetManifest& set) {
  const FeatureBank banks[] = {load_bank(set.real_bank), load_bank(set.fake_bank)};
  return merge_banks(banks);
}

double round_significant(double value, int digits) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, value);
  return std::strtod(buf, nullptr);
}

SuiteResult assemble_suite_result(std::string suite_name, std::vector<NamedReport> per_set,
                                  const std::map<std::string, std::string>& family_of,
                                  nlohmann::json provenance) {
  SuiteResult r;
  r.suite_name = std::move(suite_name);
  r.map_total = aggregate_map(per_set);
  r.avg_acc_total = aggregate_accuracy(per_set);
  for (const auto& [name, report] : per_set) {
    auto it = family_of.find(name);
    const std::string family = it == family_of.end() ? "other" : it->second;
    auto slot = std::find_if(r.family_rollups.begin(), r.family_rollups.end(),
                             [&](const FamilyRollup& f) { return f.family == family; });
    if (slot == r.family_rollups.end()) {
      r.family_rollups.push_back({family, 0.0, 0.0, 0});
      slot = r.family_rollups.end() - 1;
    }
    slot->mean_ap += report.ap;
    slot->mean_accuracy += report.accuracy;
    slot->members += 1;
  }
  for (auto& f : r.family_rollups) {
    f.mean_ap /= static_cast<double>(f.members);
    f.mean_accuracy /= static_cast<double>(f.members);
  }
  r.per_set = std::move(per_set);
  provenance["families"] = family_of;
  r.provenance = std::move(provenance);
  return r;
}

SuiteResult evaluate_suite(const Suite& suite, const Scorer* scorer, const CalibrationSpec& calibration,
                           const SuiteRunOptions& options) {
  require_resolvable(suite, scorer ? SetInput::kBanks : SetInput::kScores);

  double fixed = 0.5;
  if (calibration.source == ThresholdSource::kFixed) {
    check(calibration.fixed_threshold.has_value() || scorer != nullptr, ErrorCode::kInvalidArgument,
          "fixed calibration over scores files needs an explicit threshold");
    fixed = calibration.fixed_threshold.value_or(scorer ? scorer->default_threshold() : 0.5);
  }
  std::optional<Calibration> validation;
  if (calibration.source == ThresholdSource::kValidation) {
    if (calibration.validation_scores) {
      validation = calibrate_threshold(*calibration.validation_scores);
    } else {
      check(calibration.validation_bank.has_value() && scorer != nullptr,
            ErrorCode::kCalibrationSourceMissing,
            "validation calibration needs a held-out validation bank or validation scores");
      const auto records = scorer->score(*calibration.validation_bank, options.threads);
      validation = calibrate_threshold(labeled_scores(records));
    }
  }

  const std::size_t n = suite.sets.size();
  std::vector<NamedReport> reports(n);
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, n);
  const std::size_t inner_threads = std::max<std::size_t>(1, options.threads / workers);
  auto run_set = [&](std::size_t i) {
    try {
      const auto& set = suite.sets[i];
      const auto records = scorer ? scorer->score(load_set_queries(set), inner_threads) : read_scores(set.scores);
      const auto scores = labeled_scores(records);
      double threshold = fixed;
      if (calibration.source == ThresholdSource::kOracle) threshold = calibrate_threshold(scores).threshold;
      if (validation) threshold = validation->threshold;
      reports[i] = {set.name, evaluate(scores, threshold, calibration.source, options.ap_convention)};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run_set(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) run_set(i);
      });
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "test set '" + suite.sets[i].name + "': " + e.what());
    }
  }

  std::map<std::string, std::string> family_of;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& set : suite.sets) {
    family_of[set.name] = std::string(to_string(set.family));
    nlohmann::json h = nlohmann::json::object();
    if (scorer) {
      h["real_bank_sha256"] = sha256_file(set.real_bank);
      h["fake_bank_sha256"] = sha256_file(set.fake_bank);
    } else {
      h["scores_sha256"] = sha256_file(set.scores);
    }
    if (!set.notes.empty()) h["notes"] = set.notes;
    inputs[set.name] = std::move(h);
  }
  nlohmann::json provenance = {
      {"inputs", std::move(inputs)},
      {"method", scorer ? scorer->describe() : nlohmann::json{{"method", "scores"}}},
      {"calibration", {{"source", to_string(calibration.source)}}},
      {"ap_convention", to_string(options.ap_convention)},
      {"config", options.config_echo},
      {"timestamp", options.timestamp}};
  if (validation) {
    provenance["calibration"]["threshold"] = validation->threshold;
    provenance["calibration"]["validation_balanced_accuracy"] = validation->accuracy;
  }
  if (calibration.source == ThresholdSource::kFixed) provenance["calibration"]["threshold"] = fixed;
  if (calibration.source == ThresholdSource::kValidation &&
      std::any_of(reports.begin(), reports.end(),
                  [](const NamedReport& r) { return r.second.n_real != r.second.n_fake; }))
    provenance["calibration"]["note"] = "balanced accuracy maximized on unbalanced input";
  return assemble_suite_result(suite.name, std::move(reports), family_of, std::move(provenance));
}

nlohmann::json suite_result_to_json(const SuiteResult& result) {
  nlohmann::json per_set = nlohmann::json::array();
  for (const auto& [name, report] : result.per_set) {
    const auto fam = result.provenance.contains("families") && result.provenance["families"].contains(name)
                         ? result.provenance["families"][name]
                         : nlohmann::json("other");
    per_set.push_back({{"name", name}, {"family", fam}, {"report", report}});
  }
  nlohmann::json rollups = nlohmann::json::array();
  for (const auto& f : result.family_rollups)
    rollups.push_back({{"family", f.family}, {"mean_ap", f.mean_ap}, {"mean_accuracy", f.mean_accuracy},
                       {"members", f.members}});
  nlohmann::json j = {{"suite", result.suite_name},
                      {"per_set", std::move(per_set)},
                      {"map_total", result.map_total},
                      {"avg_acc_total", result.avg_acc_total},
                      {"family_rollups", std::move(rollups)},
                      {"provenance", result.provenance}};
  return rounded(j);
}

std::string_view to_string(TableMetric metric) {
  switch (metric) {
    case TableMetric::kAp: return "ap";
    case TableMetric::kAccuracy: return "accuracy";
    case TableMetric::kRealAccuracy: return "real_accuracy";
    case TableMetric::kFakeAccuracy: return "fake_accuracy";
  }
  return "ap";
}

void add_table_row(ResultTable& table, const std::string& label, const SuiteResult& result) {
  std::vector<std::string> columns;
  ResultTable::Row row;
  row.label = label;
  for (const auto& [name, report] : result.per_set) {
    columns.push_back(name);
    row.values.push_back(100.0 * table_value(report, table.metric));
  }
  if (table.rows.empty()) {
    table.columns = columns;
  } else {
    check(columns == table.columns, ErrorCode::kInvalidArgument, "table rows must share test-set columns");
  }
  switch (table.metric) {
    case TableMetric::kAp: row.mean = 100.0 * result.map_total; break;
    case TableMetric::kAccuracy: row.mean = 100.0 * result.avg_acc_total; break;
    default: {
      double sum = 0.0;
      for (double v : row.values) sum += v;
      row.mean = row.values.empty() ? 0.0 : sum / static_cast<double>(row.values.size());
    }
  }
  table.rows.push_back(std::move(row));
}

std::string render_table_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "method";
  for (const auto& c : table.columns) os << ',' << c;
  os << ',' << (table.metric == TableMetric::kAp ? "mAP" : "Avg. acc") << '\n';
  for (const auto& r : table.rows) {
    os << r.label;
    for (double v : r.values) os << ',' << format_percent(v);
    os << ',' << format_percent(r.mean) << '\n';
  }
  return os.str();
}

std::string render_table_text(const ResultTable& table) {
  std::vector<std::string> header = {"Method"};
  header.insert(header.end(), table.columns.begin(), table.columns.end());
  header.push_back(table.metric == TableMetric::kAp ? "mAP" : "Avg. acc");
  std::vector<std::vector<std::string>> cells = {header};
  for (const auto& r : table.rows) {
    std::vector<std::string> line = {r.label};
    for (double v : r.values) line.push_back(format_percent(v));
    line.push_back(format_percent(r.mean));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ostringstream os;
  for (std::size_t li = 0; li < cells.size(); ++li) {
    for (std::size_t c = 0; c < cells[li].size(); ++c) {
      if (c) os << "  ";
      if (c == 0)
        os << std::left << std::setw(static_cast<int>(width[c])) << cells[li][c];
      else
        os << std::right << std::setw(static_cast<int>(width[c])) << cells[li][c];
    }
    os << '\n';
    if (li == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

std::string PixelEmbedder::encoder_id() const { return "pixel-" + std::to_string(side_); }

FeatureBank PixelEmbedder::embed(std::span<const RasterImage> images, std::span<const Label> labels,
                                 std::span<const std::string> image_refs) const {
  check(images.size() == labels.size() && images.size() == image_refs.size(), ErrorCode::kInvalidArgument,
        "images, labels and refs must have equal length");
  std::vector<BankRecord> records;
  records.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    img.validate();
    cv::Mat src(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(side_, side_), 0, 0, cv::INTER_AREA);
    BankRecord rec;
    rec.vector.reserve(static_cast<std::size_t>(side_) * side_ * 3);
    for (int y = 0; y < side_; ++y) {
      const auto* row = dst.ptr<std::uint8_t>(y);
      for (int x = 0; x < side_ * 3; ++x) rec.vector.push_back((static_cast<float>(row[x]) + 1.0f) / 256.0f);
    }
    rec.label = labels[i];
    rec.image_ref = image_refs[i];
    records.push_back(std::move(rec));
  }
  return build_bank(std::move(records), static_cast<std::size_t>(side_) * side_ * 3,
                    {{"encoder_id", encoder_id()}, {"layer_id", "pixels"}});
}

FeatureBank CommandEmbedder::embed(std::span<const RasterImage> images, std::span<const Label> labels,
                                   std::span<const std::string> image_refs) const {
  check(images.size() == labels.size() && images.size() == image_refs.size(), ErrorCode::kInvalidArgument,
        "images, labels and refs must have equal length");
  TempDir tmp;
  std::vector<FeatureBank> parts;
  for (Label side : {Label::kReal, Label::kFake}) {
    const fs::path dir = tmp.path() / std::string(to_string(side));
    fs::create_directories(dir);
    std::size_t n = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (labels[i] != side) continue;
      char name[32];
      std::snprintf(name, sizeof(name), "%08zu.png", n++);
      write_png(images[i], dir / name);
    }
    if (n == 0) continue;
    const fs::path out = tmp.path() / (std::string(to_string(side)) + ".ufdb");
    std::string cmd = replace_all(template_, "{images}", shell_quote(dir.string()));
    cmd = replace_all(cmd, "{out}", shell_quote(out.string()));
    cmd = replace_all(cmd, "{label}", std::string(to_string(side)));
    const int rc = std::system(cmd.c_str());
    check(rc == 0, ErrorCode::kEncoderFailure, "extraction command exited with status " + std::to_string(rc));
    auto bank = load_bank(out);
    check(bank.size() == n, ErrorCode::kEncoderFailure,
          "extraction produced " + std::to_string(bank.size()) + " entries for " + std::to_string(n) + " images");
    parts.push_back(std::move(bank));
  }
  return merge_banks(parts);
}

RobustnessResult run_robustness(const Suite& suite, const Scorer& scorer, const ImageEmbedder& embedder,
                                std::span<const double> blur_grid, std::span<const int> jpeg_grid) {
  require_resolvable(suite, SetInput::kImages);
  struct Corpus {
    std::vector<RasterImage> images;
    std::vector<Label> labels;
    std::vector<std::string> refs;
  };
  std::map<std::string, Corpus> corpora;
  std::map<std::string, std::string> family_of;
  std::vector<std::string> names;
  for (const auto& set : suite.sets) {
    Corpus c;
    for (auto [dir, side] : {std::pair{set.real_images, Label::kReal}, std::pair{set.fake_images, Label::kFake}})
      for (const auto& p : list_images(dir)) {
        c.images.push_back(read_image(p));
        c.labels.push_back(side);
        c.refs.push_back(p.string());
      }
    corpora[set.name] = std::move(c);
    family_of[set.name] = std::string(to_string(set.family));
    names.push_back(set.name);
  }
  auto score_fn = [&](const std::string& name, const Perturbation& p) {
    const auto& c = corpora.at(name);
    std::vector<RasterImage> perturbed;
    perturbed.reserve(c.images.size());
    for (const auto& img : c.images) perturbed.push_back(p(img));
    const auto bank = embedder.embed(perturbed, c.labels, c.refs);
    return labeled_scores(scorer.score(bank, 1));
  };
  RobustnessResult out;
  out.rows = robustness_sweep(names, score_fn, blur_grid, jpeg_grid);
  out.family_rows = group_sweep_by_family(out.rows, family_of);
  return out;
}

}  // namespace ufd
