#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lsvt {

struct ManifestRecord {
  std::string path;  // relative paths resolve against the manifest's directory
  int label = 0;
  std::string dataset;
  std::string split;  // "", "train", "val" or "test"

  bool operator==(const ManifestRecord&) const = default;
};

// CSV with header `path,label,dataset,split`. Lines starting with '#' are comments, except
// `# classes <dataset> <count>` which declares a dataset's class count. Undeclared datasets
// get max(label)+1 classes. Fields may not contain commas.
struct Manifest {
  std::vector<ManifestRecord> records;
  std::map<std::string, int> class_counts;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestRecord& record) const;
  int class_count(const std::string& dataset) const;
  std::vector<std::string> datasets() const;
  // Records of one dataset, file order preserved.
  Manifest subset(const std::vector<std::size_t>& indices) const;
  Manifest filter_dataset(const std::string& dataset) const;
  std::vector<int> labels() const;
};

// Throws FormatError with the offending line number for malformed rows, out-of-range labels
// and duplicate paths within a dataset.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Validates label ranges and path uniqueness; used by load_manifest and generators.
void validate_manifest(const Manifest& manifest);

}  // namespace lsvt
