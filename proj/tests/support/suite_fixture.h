#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blobs.h"
#include "ufd/feature_bank.h"

namespace testutil {

struct SetSpec {
  std::string name;
  std::string family;
  double separation;
};

struct SuiteFiles {
  std::filesystem::path manifest;
  std::filesystem::path train_bank;
  std::filesystem::path val_bank;
};

/// Splits a two-sided bank into its real and fake halves.
inline std::pair<ufd::FeatureBank, ufd::FeatureBank> split_by_label(const ufd::FeatureBank& b) {
  std::vector<std::size_t> real, fake;
  for (std::size_t i = 0; i < b.size(); ++i) (b.label(i) == ufd::Label::kFake ? fake : real).push_back(i);
  return {ufd::select_entries(b, real), ufd::select_entries(b, fake)};
}

/// Writes a training bank, a validation bank, per-set real/fake banks and a
/// suite manifest under `dir`. Every bank shares the blob encoder id.
inline SuiteFiles write_blob_suite(const std::filesystem::path& dir, const std::vector<SetSpec>& sets,
                                   std::size_t dim = 8, std::size_t n_per_side = 200,
                                   double train_separation = 6.0, std::uint64_t seed = 1) {
  std::filesystem::create_directories(dir);
  SuiteFiles files;
  files.train_bank = dir / "train.ufdb";
  files.val_bank = dir / "val.ufdb";
  ufd::save_bank(overlapping_blobs(seed, dim, n_per_side, train_separation, "train"), files.train_bank);
  ufd::save_bank(overlapping_blobs(seed + 1, dim, n_per_side / 2, train_separation, "val"), files.val_bank);
  nlohmann::json manifest = {{"name", "synthetic"}, {"test_sets", nlohmann::json::array()}};
  std::uint64_t s = seed + 100;
  for (const auto& spec : sets) {
    const auto bank = overlapping_blobs(s++, dim, n_per_side, spec.separation, spec.name);
    const auto [real, fake] = split_by_label(bank);
    ufd::save_bank(real, dir / (spec.name + "_real.ufdb"));
    ufd::save_bank(fake, dir / (spec.name + "_fake.ufdb"));
    manifest["test_sets"].push_back({{"name", spec.name},
                                     {"family", spec.family},
                                     {"real_bank", spec.name + "_real.ufdb"},
                                     {"fake_bank", spec.name + "_fake.ufdb"},
                                     {"notes", {{"separation", spec.separation}}}});
  }
  files.manifest = dir / "suite.json";
  std::ofstream(files.manifest) << manifest.dump(2);
  return files;
}

}  // namespace testutil
