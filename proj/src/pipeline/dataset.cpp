#include "fetalseg/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fetalseg/phantom.hpp"

namespace fseg {

std::vector<const DatasetCase*> Dataset::select(Split split) const {
  std::vector<const DatasetCase*> out;
  for (const auto& c : cases)
    if (c.split == split) out.push_back(&c);
  return out;
}

Dataset build_dataset(const ExperimentConfig& config) {
  config.validate();
  const PhantomConfig pc = config.effective_phantom();
  const RandomStream root(config.seed);

  const int n = pc.n_volumes;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RandomStream split_rng = root.derive("split");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const int n_train = static_cast<int>(std::lround(config.train_fraction * n));
  std::vector<Split> split(static_cast<std::size_t>(n), Split::Test);
  for (int i = 0; i < n_train; ++i) split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::Train;

  Dataset ds;
  ds.seed = config.seed;
  for (auto& pcase : generate_dataset(pc)) {
    DatasetCase c;
    c.id = pcase.id;
    c.split = split[static_cast<std::size_t>(pcase.id)];
    if (c.split == Split::Test) {
      RandomStream rng = root.derive("artifact").derive(static_cast<std::uint64_t>(pcase.id));
      pcase = inject_test_artifact(pcase, rng, config.artifact);
      c.artifact_flags = pcase.has_injected_artifact;
    } else {
      c.artifact_flags.assign(static_cast<std::size_t>(pcase.intensity.depth()), 0);
    }
    c.intensity = std::move(pcase.intensity);
    c.truth = std::move(pcase.truth);
    ds.cases.push_back(std::move(c));
  }
  return ds;
}

std::filesystem::path case_image_path(const std::filesystem::path& dir, int id) {
  return dir / ("case_" + std::to_string(id) + "_image.mvol");
}

std::filesystem::path case_labels_path(const std::filesystem::path& dir, int id) {
  return dir / ("case_" + std::to_string(id) + "_labels.mvol");
}

std::string manifest_text(const Dataset& dataset) {
  std::string out = "seed " + std::to_string(dataset.seed) + "\n";
  for (const auto& c : dataset.cases) {
    out += "case " + std::to_string(c.id) + (c.split == Split::Train ? " train " : " test ");
    for (auto f : c.artifact_flags) out += f ? '1' : '0';
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& c : dataset.cases) {
    save_volume(c.intensity, case_image_path(dir, c.id));
    save_volume(c.truth, case_labels_path(dir, c.id));
  }
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << manifest_text(dataset);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw Error("no dataset manifest in " + dir.string());
  Dataset ds;
  std::string line;
  bool have_seed = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "seed") {
      if (!(ss >> ds.seed)) throw FormatError("manifest: bad seed line");
      have_seed = true;
    } else if (tag == "case") {
      DatasetCase c;
      std::string split, flags;
      if (!(ss >> c.id >> split)) throw FormatError("manifest: bad case line: " + line);
      ss >> flags;
      if (split != "train" && split != "test") throw FormatError("manifest: bad split: " + split);
      c.split = split == "train" ? Split::Train : Split::Test;
      c.intensity = load_intensity(case_image_path(dir, c.id));
      c.truth = load_labels(case_labels_path(dir, c.id));
      if (!c.intensity.same_geometry(c.truth)) throw FormatError("manifest: image/label geometry differ");
      if (flags.size() != static_cast<std::size_t>(c.intensity.depth()))
        throw FormatError("manifest: flag count does not match slice count for case " + std::to_string(c.id));
      for (char ch : flags) {
        if (ch != '0' && ch != '1') throw FormatError("manifest: bad flag character");
        c.artifact_flags.push_back(ch == '1');
      }
      ds.cases.push_back(std::move(c));
    } else {
      throw FormatError("manifest: unknown line: " + line);
    }
  }
  if (!have_seed) throw FormatError("manifest: missing seed");
  return ds;
}

}  // namespace fseg
