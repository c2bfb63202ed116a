#include "tbscreen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

namespace fs = std::filesystem;

namespace {

struct Candidate {
  std::size_t scene;
  std::size_t grid_index;
  Anchor anchor;
};

}  // namespace

PatchDataset make_patch_dataset(std::span<const SceneTruth> scenes, const PatchDatasetOptions& opt) {
  if (opt.train_fraction < 0.0 || opt.train_fraction > 1.0)
    throw ConfigError("train fraction must be in [0,1]");
  std::vector<Candidate> positives, negatives;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    const auto grid = plan_grid(scene.image_w, scene.image_h, opt.patch_side, opt.overlap);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double frac = max_box_fraction(grid.anchors[i], opt.patch_side, scene.boxes);
      if (frac >= kPositiveBoxFraction)
        positives.push_back({s, i, grid.anchors[i]});
      else if (frac == 0.0 || !opt.exclude_partial_negatives)
        negatives.push_back({s, i, grid.anchors[i]});
    }
  }
  if (positives.size() < opt.per_class_cap)
    throw ShortageError("need " + std::to_string(opt.per_class_cap) + " positive patches, found " +
                        std::to_string(positives.size()));
  if (negatives.size() < opt.per_class_cap)
    throw ShortageError("need " + std::to_string(opt.per_class_cap) + " negative patches, found " +
                        std::to_string(negatives.size()));

  const auto n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(opt.per_class_cap) * opt.train_fraction));
  PatchDataset out;
  out.train.split = Split::train;
  out.test.split = Split::test;
  out.train.provenance = out.test.provenance = "synthetic-seed:" + std::to_string(opt.seed);

  auto take = [&](std::vector<Candidate>& pool, Label label, std::uint64_t stream) {
    Rng rng(derive_seed(opt.seed, stream));
    rng.shuffle(pool);
    pool.resize(opt.per_class_cap);
    auto by_position = [](const Candidate& a, const Candidate& b) {
      return std::tie(a.scene, a.grid_index) < std::tie(b.scene, b.grid_index);
    };
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train), by_position);
    std::sort(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end(), by_position);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& c = pool[i];
      auto& set = i < n_train ? out.train : out.test;
      set.patches.push_back({scenes[c.scene].image_id, c.grid_index, c.anchor, label});
    }
  };
  take(positives, Label::positive, 1);
  take(negatives, Label::negative, 2);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_tsv(const fs::path& path, std::size_t fields) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, '\t');) cols.push_back(col);
    if (cols.size() != fields)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(fields) + " tab-separated fields, got " +
                            std::to_string(cols.size()));
    rows.push_back(std::move(cols));
  }
  return rows;
}

fs::path resolve(const fs::path& manifest, const std::string& entry) {
  fs::path p(entry);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

std::string relative_to(const fs::path& manifest, const fs::path& image) {
  const auto base = manifest.parent_path();
  if (!base.empty()) {
    const auto rel = image.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return image.generic_string();
}

std::size_t parse_count(const std::string& text, const fs::path& path) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit))
    throw ValidationError(path.string() + ": '" + text + "' is not a pixel coordinate");
  return std::stoull(text);
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' into place");
  }
}

std::vector<PatchManifestEntry> read_patch_manifest(const fs::path& path) {
  std::vector<PatchManifestEntry> out;
  for (const auto& r : read_tsv(path, 4))
    out.push_back({resolve(path, r[0]), {parse_count(r[1], path), parse_count(r[2], path)}, parse_label(r[3])});
  return out;
}

std::vector<ImageManifestEntry> read_image_manifest(const fs::path& path) {
  std::vector<ImageManifestEntry> out;
  for (const auto& r : read_tsv(path, 2)) out.push_back({resolve(path, r[0]), parse_label(r[1])});
  return out;
}

std::vector<BoxManifestEntry> read_box_manifest(const fs::path& path) {
  std::vector<BoxManifestEntry> out;
  for (const auto& r : read_tsv(path, 5))
    out.push_back({resolve(path, r[0]),
                   {parse_count(r[1], path), parse_count(r[2], path), parse_count(r[3], path),
                    parse_count(r[4], path)}});
  return out;
}

void write_patch_manifest(const fs::path& path, std::span<const PatchManifestEntry> entries) {
  std::string text;
  for (const auto& e : entries)
    text += relative_to(path, e.image) + "\t" + std::to_string(e.anchor.x) + "\t" +
            std::to_string(e.anchor.y) + "\t" + std::string(label_name(e.label)) + "\n";
  write_file_atomic(path, text);
}

void write_image_manifest(const fs::path& path, std::span<const ImageManifestEntry> entries) {
  std::string text;
  for (const auto& e : entries)
    text += relative_to(path, e.image) + "\t" + std::string(label_name(e.label)) + "\n";
  write_file_atomic(path, text);
}

void write_box_manifest(const fs::path& path, std::span<const BoxManifestEntry> entries) {
  std::string text;
  for (const auto& e : entries)
    text += relative_to(path, e.image) + "\t" + std::to_string(e.box.x0) + "\t" +
            std::to_string(e.box.y0) + "\t" + std::to_string(e.box.x1) + "\t" +
            std::to_string(e.box.y1) + "\n";
  write_file_atomic(path, text);
}

}  // namespace tbscreen
