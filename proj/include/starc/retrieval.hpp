#pragma once

#include "starc/common.hpp"
#include "starc/segments.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace starc {

struct DatastoreEntry {
  std::string entry_id;
  std::string caption;
  VectorXd embedding;
};

struct RetrievalHit {
  std::string entry_id;
  double similarity = 0;
  bool operator==(const RetrievalHit&) const = default;
};

// Immutable caption store with unit-norm embeddings. Embeddings are rounded
// to single precision at build time so the store survives a save/load
// round trip unchanged.
class Datastore {
 public:
  Datastore() = default;

  /// Normalizes embeddings; rejects duplicate ids, mixed dimensions and zero
  /// vectors. An empty entry list yields an empty store.
  static Datastore build(std::vector<DatastoreEntry> entries);

  std::size_t size() const { return entries_.size(); }
  Index dim() const { return dim_; }
  const std::vector<DatastoreEntry>& entries() const { return entries_; }
  const DatastoreEntry& entry(std::size_t i) const { return entries_.at(i); }
  const DatastoreEntry* find(const std::string& id) const;

  /// Exact top-p by cosine similarity; ties by lexicographic entry id.
  std::vector<RetrievalHit> query_topp(const VectorXd& query, int p) const;

  std::string encode() const;
  static Datastore decode(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Datastore load(const std::filesystem::path& path);

 private:
  std::vector<DatastoreEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  Index dim_ = 0;
};

struct SegmentRetrieval {
  Segment segment;
  std::vector<RetrievalHit> hits;
};

struct RetrievalResult {
  std::vector<SegmentRetrieval> per_segment;  // temporal order
  MatrixXd vectors;                           // R, k x D
};

/// For each selected segment: saliency-weighted pooled feature, top-p query,
/// and the mean of the retrieved embeddings as the retrieval vector.
RetrievalResult retrieval_vectors(const SegmentSet& segs, const MatrixXd& xs, const VectorXd& prior,
                                  const Datastore& store, int p);

}  // namespace starc
