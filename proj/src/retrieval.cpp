#include "starc/retrieval.hpp"

#include "starc/binary_io.hpp"
#include "starc/features.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace starc {

namespace {

constexpr std::string_view kStoreMagic = "SDS1";

bool hit_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.entry_id < b.entry_id;
}

}  // namespace

Datastore Datastore::build(std::vector<DatastoreEntry> entries) {
  Datastore store;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!store.index_.emplace(e.entry_id, i).second) throw data_error("datastore: duplicate id " + e.entry_id);
    if (store.dim_ == 0) store.dim_ = e.embedding.size();
    if (e.embedding.size() != store.dim_ || store.dim_ == 0)
      throw data_error("datastore: embedding dimension mismatch for " + e.entry_id);
    if (!e.embedding.allFinite()) throw data_error("datastore: non-finite embedding for " + e.entry_id);
    const double norm = e.embedding.norm();
    if (norm == 0) throw data_error("datastore: zero-norm embedding for " + e.entry_id);
    e.embedding = (e.embedding / norm).cast<float>().cast<double>();
  }
  store.entries_ = std::move(entries);
  return store;
}

const DatastoreEntry* Datastore::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<RetrievalHit> Datastore::query_topp(const VectorXd& query, int p) const {
  if (entries_.empty()) throw data_error("query on an empty datastore");
  if (p < 1) throw config_error("top_p must be >= 1");
  if (query.size() != dim_) throw data_error("query dimension mismatch");
  const double norm = query.norm();
  if (!(norm > 0)) throw data_error("zero query vector");
  const VectorXd unit = query / norm;

  const std::size_t keep = std::min(entries_.size(), static_cast<std::size_t>(p));
  // Bounded heap of the best `keep` hits; the worst kept hit sits on top.
  std::vector<RetrievalHit> heap;
  heap.reserve(keep + 1);
  for (const auto& e : entries_) {
    RetrievalHit hit{e.entry_id, e.embedding.dot(unit)};
    if (heap.size() < keep) {
      heap.push_back(std::move(hit));
      std::push_heap(heap.begin(), heap.end(), hit_before);
    } else if (hit_before(hit, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), hit_before);
      heap.back() = std::move(hit);
      std::push_heap(heap.begin(), heap.end(), hit_before);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), hit_before);
  return heap;
}

std::string Datastore::encode() const {
  std::string out(kStoreMagic);
  binio::put_u64(out, entries_.size());
  binio::put_u64(out, static_cast<std::uint64_t>(dim_));
  for (const auto& e : entries_) {
    binio::put_u32(out, static_cast<std::uint32_t>(e.entry_id.size()));
    out += e.entry_id;
    binio::put_u32(out, static_cast<std::uint32_t>(e.caption.size()));
    out += e.caption;
    binio::put_f32_rows(out, e.embedding.transpose());
  }
  return out;
}

Datastore Datastore::decode(std::string_view bytes) {
  binio::Reader r(bytes);
  if (r.take(4, "datastore header") != kStoreMagic) throw data_error("bad magic, expected SDS1");
  const std::uint64_t n = r.u64("datastore header");
  const std::uint64_t d = r.u64("datastore header");
  if (n > 0 && (d == 0 || d > r.remaining())) throw data_error("bad datastore dimension");
  std::vector<DatastoreEntry> entries;
  for (std::uint64_t i = 0; i < n; ++i) {
    DatastoreEntry e;
    e.entry_id = std::string(r.take(r.u32("datastore record"), "datastore record"));
    e.caption = std::string(r.take(r.u32("datastore record"), "datastore record"));
    e.embedding = r.f32_rows(1, static_cast<Index>(d), "datastore record").transpose().cast<double>();
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw data_error("datastore: trailing bytes");
  Datastore store = build(std::move(entries));
  if (n == 0) store.dim_ = static_cast<Index>(d);
  return store;
}

void Datastore::save(const std::filesystem::path& path) const { write_file(path, encode()); }

Datastore Datastore::load(const std::filesystem::path& path) { return decode(read_file(path)); }

RetrievalResult retrieval_vectors(const SegmentSet& segs, const MatrixXd& xs, const VectorXd& prior,
                                  const Datastore& store, int p) {
  RetrievalResult out;
  out.vectors = MatrixXd::Zero(static_cast<Index>(segs.selected.size()), store.dim());
  Index row = 0;
  for (const auto& seg : segs.selected_segments()) {
    const VectorXd pooled = pool_segment_features(seg, xs, prior);
    auto hits = store.query_topp(pooled, p);
    VectorXd mean = VectorXd::Zero(store.dim());
    for (const auto& h : hits) mean += store.find(h.entry_id)->embedding;
    mean /= static_cast<double>(hits.size());
    if (mean.norm() < 1e-12)
      spdlog::info("segment [{}, {}): retrieved embeddings cancel out", seg.start, seg.end);
    out.vectors.row(row++) = mean.transpose();
    out.per_segment.push_back({seg, std::move(hits)});
  }
  return out;
}

}  // namespace starc
