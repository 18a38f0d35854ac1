#pragma once

// On-disk model library: one directory per record holding meta.json,
// actor.bin and critic.bin. The index is the set of record directories;
// records appear through an atomic directory rename.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "autoprune/errors.hpp"
#include "autoprune/io.hpp"
#include "autoprune/netlib.hpp"
#include "autoprune/transfer.hpp"

namespace autoprune {

namespace fs = std::filesystem;

struct RecordMeta {
  std::string id;
  std::string scenario_id;
  double target_preservation = 1.0;
  std::string model_tag;
  std::string dataset_tag;
  bool invariant_mode = false;
  std::int64_t created_at = 0;
};

/// Record ids double as directory names.
inline bool valid_record_id(const std::string& id) {
  if (id.empty() || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.';
  });
}

/// Seconds since the epoch, pinned by SOURCE_DATE_EPOCH when set so that
/// records are reproducible.
inline std::int64_t record_timestamp() {
  if (const char* s = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      throw ConfigError("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  return std::int64_t(std::time(nullptr));
}

inline void write_record_dir(const HistoricalRecord& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file((dir / "meta.json").string(), record_meta_to_json(r).dump(1) + "\n");
  save_params(r.actor, dir / "actor.bin");
  save_params(r.critic, dir / "critic.bin");
}

inline HistoricalRecord read_record_dir(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "meta.json")) throw LibraryError("'" + dir.string() + "' has no meta.json");
  HistoricalRecord r = record_meta_from_json(read_json_file((dir / "meta.json").string()));
  try {
    r.actor = load_params(dir / "actor.bin");
    r.critic = load_params(dir / "critic.bin");
  } catch (const Error& e) {
    throw LibraryError("record '" + r.id + "': " + e.what());
  }
  return r;
}

class ModelLibrary {
 public:
  /// Opens (creating if needed) the library rooted at `root`.
  explicit ModelLibrary(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) throw LibraryError("cannot open library at '" + root_.string() + "'");
  }

  const fs::path& root() const { return root_; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_)) {
      const std::string name = e.path().filename().string();
      if (e.is_directory() && valid_record_id(name) && fs::is_regular_file(e.path() / "meta.json")) {
        out.push_back(name);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool contains(const std::string& id) const { return valid_record_id(id) && fs::is_directory(root_ / id); }
  std::size_t size() const { return ids().size(); }

  std::vector<RecordMeta> list() const {
    std::vector<RecordMeta> out;
    for (const auto& id : ids()) {
      const json j = read_json_file((root_ / id / "meta.json").string());
      RecordMeta m;
      try {
        m.id = j.at("id").get<std::string>();
        m.scenario_id = j.at("scenario").at("scenario_id").get<std::string>();
        m.target_preservation = j.at("scenario").at("target_preservation").get<double>();
        m.model_tag = j.value("model_tag", "");
        m.dataset_tag = j.at("scenario").value("dataset_tag", "");
        m.invariant_mode = j.at("invariant_mode").get<bool>();
        m.created_at = j.at("created_at").get<std::int64_t>();
      } catch (const json::exception& e) {
        throw LibraryError("record '" + id + "': " + e.what());
      }
      if (m.id != id) throw LibraryError("record directory '" + id + "' holds id '" + m.id + "'");
      out.push_back(std::move(m));
    }
    return out;
  }

  HistoricalRecord load(const std::string& id) const {
    if (!contains(id)) throw LibraryError("no record '" + id + "' in '" + root_.string() + "'");
    HistoricalRecord r = read_record_dir(root_ / id);
    if (r.id != id) throw LibraryError("record directory '" + id + "' holds id '" + r.id + "'");
    return r;
  }

  std::vector<HistoricalRecord> load_all() const {
    std::vector<HistoricalRecord> out;
    for (const auto& id : ids()) out.push_back(load(id));
    return out;
  }

  /// Writes the record into a staging directory and renames it into place.
  void insert(const HistoricalRecord& r) {
    if (!valid_record_id(r.id)) throw LibraryError("invalid record id '" + r.id + "'");
    if (contains(r.id)) throw LibraryError("record '" + r.id + "' already exists");
    const fs::path staging = root_ / (".staging-" + r.id);
    std::error_code ec;
    fs::remove_all(staging, ec);
    write_record_dir(r, staging);
    fs::rename(staging, root_ / r.id, ec);
    if (ec) {
      fs::remove_all(staging);
      throw LibraryError("cannot publish record '" + r.id + "': " + ec.message());
    }
  }

  /// First free id among `base`, `base-2`, `base-3`, ...
  std::string unique_id(const std::string& base) const {
    if (!contains(base)) return base;
    for (int n = 2;; ++n) {
      const std::string id = base + "-" + std::to_string(n);
      if (!contains(id)) return id;
    }
  }

  void export_record(const std::string& id, const fs::path& dest) const {
    if (!contains(id)) throw LibraryError("no record '" + id + "' to export");
    if (fs::exists(dest)) throw LibraryError("export target '" + dest.string() + "' already exists");
    fs::copy(root_ / id, dest, fs::copy_options::recursive);
  }

  /// Validates a record directory and inserts a copy; returns its id.
  std::string import_record(const fs::path& src) {
    const HistoricalRecord r = read_record_dir(src);
    r.validate(r.actor.layer_sizes.size() > 1 ? r.actor.layer_sizes[1] : 64);
    insert(r);
    return r.id;
  }

 private:
  fs::path root_;
};

}  // namespace autoprune
