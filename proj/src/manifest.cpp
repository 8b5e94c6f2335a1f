#include "lsvt/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "lsvt/errors.hpp"

namespace lsvt {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

const std::set<std::string> kSplits = {"", "train", "val", "test"};

}  // namespace

std::filesystem::path Manifest::resolve(const ManifestRecord& record) const {
  std::filesystem::path p(record.path);
  return p.is_absolute() ? p : base_dir / p;
}

int Manifest::class_count(const std::string& dataset) const {
  auto it = class_counts.find(dataset);
  if (it != class_counts.end()) return it->second;
  int mx = -1;
  for (const auto& r : records)
    if (r.dataset == dataset) mx = std::max(mx, r.label);
  return mx + 1;
}

std::vector<std::string> Manifest::datasets() const {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.dataset) == out.end()) out.push_back(r.dataset);
  return out;
}

Manifest Manifest::subset(const std::vector<std::size_t>& indices) const {
  Manifest out{{}, class_counts, base_dir};
  for (auto i : indices) out.records.push_back(records.at(i));
  return out;
}

Manifest Manifest::filter_dataset(const std::string& dataset) const {
  Manifest out{{}, class_counts, base_dir};
  for (const auto& r : records)
    if (r.dataset == dataset) out.records.push_back(r);
  return out;
}

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

void validate_manifest(const Manifest& m) {
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const int count = m.class_count(r.dataset);
    if (r.label < 0 || r.label >= count) {
      throw FormatError("manifest record " + std::to_string(i) + ": label " + std::to_string(r.label) +
                        " outside [0, " + std::to_string(count) + ") for dataset '" + r.dataset + "'");
    }
    if (!seen.emplace(r.dataset, r.path).second) {
      throw FormatError("manifest: duplicate path '" + r.path + "' in dataset '" + r.dataset + "'");
    }
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::set<std::pair<std::string, std::string>> seen;
  const auto fail = [&](const std::string& why) {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream directive(line.substr(1));
      std::string word, dataset;
      int count = 0;
      if (directive >> word && word == "classes") {
        if (!(directive >> dataset >> count) || count < 1) fail("malformed '# classes' directive");
        m.class_counts[dataset] = count;
      }
      continue;
    }
    if (!have_header) {
      if (line != "path,label,dataset,split") fail("expected header 'path,label,dataset,split'");
      have_header = true;
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() == 3) fields.emplace_back();
    if (fields.size() != 4) fail("expected 4 fields, got " + std::to_string(fields.size()));
    ManifestRecord r{trim(fields[0]), 0, trim(fields[2]), trim(fields[3])};
    const auto label_text = trim(fields[1]);
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), r.label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size()) fail("label '" + label_text + "' is not an integer");
    if (r.path.empty()) fail("empty path");
    if (!kSplits.count(r.split)) fail("unknown split tag '" + r.split + "'");
    if (r.label < 0) fail("label " + std::to_string(r.label) + " is negative");
    if (!seen.emplace(r.dataset, r.path).second) fail("duplicate path '" + r.path + "'");
    auto declared = m.class_counts.find(r.dataset);
    if (declared != m.class_counts.end() && r.label >= declared->second) {
      fail("label " + std::to_string(r.label) + " out of range for dataset '" + r.dataset + "' with " +
           std::to_string(declared->second) + " classes");
    }
    m.records.push_back(std::move(r));
  }
  if (!have_header) throw FormatError(path.string() + ": missing header 'path,label,dataset,split'");
  validate_manifest(m);
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write manifest '" + path.string() + "'");
  for (const auto& [dataset, count] : manifest.class_counts) out << "# classes " << dataset << ' ' << count << '\n';
  out << "path,label,dataset,split\n";
  for (const auto& r : manifest.records) out << r.path << ',' << r.label << ',' << r.dataset << ',' << r.split << '\n';
}

}  // namespace lsvt
