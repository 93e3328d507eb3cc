#pragma once

// Leave-one-out retrieval over a gallery of global descriptors, k-reciprocal
// query expansion, and the Top-1 / Hard-N / mAP metrics.
//
// Every ordering sorts by ascending cosine distance, then by doc_id.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wir/encoding.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/parallel.hpp"

namespace wir {

inline constexpr std::size_t kDefaultRerankK = 2;

inline double cosine_distance(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), Errc::DimMismatch, "cosine_distance: length mismatch");
  const double np = norm2(p);
  const double nq = norm2(q);
  if (np == 0.0 || nq == 0.0) fail(Errc::ZeroVector, "cosine distance of a zero vector");
  const double cos = std::clamp(dot(p, q) / (np * nq), -1.0, 1.0);
  return 1.0 - cos;
}

class Gallery {
 public:
  explicit Gallery(std::vector<GlobalDescriptor> docs) : docs_(std::move(docs)) {
    if (docs_.size() < 2)
      fail(Errc::EmptyGallery, "gallery needs at least 2 documents, got " + std::to_string(docs_.size()));
    const std::size_t e = docs_.front().values.size();
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      require(docs_[i].values.size() == e, Errc::DimMismatch,
              "document '" + docs_[i].doc_id + "' has a different length");
      if (!index_.emplace(docs_[i].doc_id, i).second)
        fail(Errc::InvalidArgument, "duplicate doc_id '" + docs_[i].doc_id + "'");
    }
  }

  std::size_t size() const noexcept { return docs_.size(); }
  const GlobalDescriptor& operator[](std::size_t i) const noexcept { return docs_[i]; }
  std::span<const GlobalDescriptor> docs() const noexcept { return docs_; }

  std::size_t index_of(const std::string& doc_id) const {
    const auto it = index_.find(doc_id);
    if (it == index_.end()) fail(Errc::InvalidArgument, "unknown doc_id '" + doc_id + "'");
    return it->second;
  }

  std::map<std::string, std::string> writer_labels() const {
    std::map<std::string, std::string> out;
    for (const auto& d : docs_) out[d.doc_id] = d.writer_id;
    return out;
  }

 private:
  std::vector<GlobalDescriptor> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct RankedEntry {
  std::string doc_id;
  double distance = 0.0;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedList {
  std::string query;
  std::vector<RankedEntry> entries;
  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Ranks every gallery document except `skip` against `query`.
inline RankedList rank_against(const Gallery& gallery, std::span<const double> query,
                               std::size_t skip) {
  RankedList out{gallery[skip].doc_id, {}};
  out.entries.reserve(gallery.size() - 1);
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    if (j == skip) continue;
    out.entries.push_back({gallery[j].doc_id, cosine_distance(query, gallery[j].values)});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.doc_id < b.doc_id;
  });
  return out;
}

/// One leave-one-out list per gallery document, in gallery order.
inline std::vector<RankedList> rank_all(const Gallery& gallery, std::size_t threads = 1) {
  std::vector<RankedList> out(gallery.size());
  parallel_for(gallery.size(), threads,
               [&](std::size_t i) { out[i] = rank_against(gallery, gallery[i].values, i); });
  return out;
}

/// First k doc_ids of a ranked list.
inline std::vector<std::string> knn(const RankedList& ranked, std::size_t k) {
  if (k < 1 || k > ranked.entries.size())
    fail(Errc::KOutOfRange, "k=" + std::to_string(k) + " not in [1, " +
                                std::to_string(ranked.entries.size()) + "]");
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked.entries[i].doc_id);
  return out;
}

/// { p in kNN(q) : q in kNN(p) }, sorted by doc_id.
inline std::set<std::string> krnn(std::span<const RankedList> lists, const std::string& query,
                                  std::size_t k) {
  std::unordered_map<std::string, const RankedList*> by_query;
  for (const auto& l : lists) by_query.emplace(l.query, &l);
  const auto it = by_query.find(query);
  if (it == by_query.end()) fail(Errc::InvalidArgument, "no ranked list for '" + query + "'");
  std::set<std::string> out;
  for (const auto& p : knn(*it->second, k)) {
    const auto pit = by_query.find(p);
    if (pit == by_query.end()) continue;
    const auto back = knn(*pit->second, k);
    if (std::find(back.begin(), back.end(), query) != back.end()) out.insert(p);
  }
  return out;
}

/// Mean of q and its neighbours; q itself when there are none.
inline Vector expand_query(std::span<const double> q, std::span<const Vector> neighbours) {
  Vector out(q.begin(), q.end());
  for (const auto& r : neighbours) {
    require(r.size() == q.size(), Errc::DimMismatch, "expand_query: neighbour length");
    axpy(1.0, r, out);
  }
  const double scale = 1.0 / static_cast<double>(neighbours.size() + 1);
  for (double& v : out) v *= scale;
  return out;
}

/// Single-pass krNN query expansion: each query is replaced by the mean of
/// itself and its k-reciprocal neighbours from the initial ranking, then
/// re-ranked against the original (unexpanded) gallery vectors.
inline std::vector<RankedList> rerank(const Gallery& gallery, std::size_t k = kDefaultRerankK,
                                      std::size_t threads = 1) {
  const auto initial = rank_all(gallery, threads);
  std::vector<RankedList> out(gallery.size());
  parallel_for(gallery.size(), threads, [&](std::size_t i) {
    std::vector<Vector> neighbours;
    for (const auto& id : krnn(initial, gallery[i].doc_id, k))
      neighbours.push_back(gallery[gallery.index_of(id)].values);
    const Vector q = expand_query(gallery[i].values, neighbours);
    out[i] = rank_against(gallery, q, i);
  });
  return out;
}

struct QueryScore {
  std::string query;
  std::size_t relevant = 0;
  double average_precision = 0.0;  // meaningful only when relevant > 0
};

struct EvalReport {
  double top1 = 0.0;
  double hard2 = 0.0;
  double hard3 = 0.0;
  double map = 0.0;
  std::size_t queries = 0;
  std::size_t excluded = 0;  // queries without any relevant document; not in mAP
  std::vector<QueryScore> per_query;
};

/// Average precision of a binary relevance sequence against `relevant`
/// total relevant documents.
inline double average_precision(const std::vector<bool>& rel, std::size_t relevant) {
  if (relevant == 0) return 0.0;
  // extended precision so short hand-checkable cases round to the nearest double
  long double sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rel.size(); ++k) {
    if (!rel[k]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(k + 1);
  }
  return static_cast<double>(sum / static_cast<long double>(relevant));
}

/// Top-1 and Hard-N count a query as correct when its first 1 / N entries
/// all share the query's writer; lists shorter than N never pass Hard-N.
/// mAP averages over queries with at least one relevant document.
inline EvalReport evaluate(std::span<const RankedList> lists,
                           const std::map<std::string, std::string>& writer_of) {
  if (lists.empty()) fail(Errc::EmptyGallery, "no ranked lists to evaluate");
  const auto writer = [&](const std::string& id) -> const std::string& {
    const auto it = writer_of.find(id);
    if (it == writer_of.end()) fail(Errc::InvalidArgument, "no writer label for '" + id + "'");
    return it->second;
  };
  std::map<std::string, std::size_t> docs_per_writer;
  for (const auto& [doc, w] : writer_of) ++docs_per_writer[w];
  EvalReport rep;
  rep.queries = lists.size();
  std::size_t top1 = 0, hard2 = 0, hard3 = 0, scored = 0;
  double ap_sum = 0.0;
  for (const auto& l : lists) {
    const auto& qw = writer(l.query);
    std::vector<bool> rel(l.entries.size());
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = writer(l.entries[i].doc_id) == qw;
    const auto all_top = [&](std::size_t n) {
      if (rel.size() < n) return false;
      return std::all_of(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(n), [](bool b) { return b; });
    };
    top1 += all_top(1);
    hard2 += all_top(2);
    hard3 += all_top(3);

    // relevant documents are counted over the whole gallery, not only the list
    const std::size_t relevant = docs_per_writer[qw] - 1;
    QueryScore qs{l.query, relevant, average_precision(rel, relevant)};
    if (relevant == 0) {
      ++rep.excluded;
    } else {
      ap_sum += qs.average_precision;
      ++scored;
    }
    rep.per_query.push_back(std::move(qs));
  }
  const double nq = static_cast<double>(rep.queries);
  rep.top1 = static_cast<double>(top1) / nq;
  rep.hard2 = static_cast<double>(hard2) / nq;
  rep.hard3 = static_cast<double>(hard3) / nq;
  rep.map = scored ? ap_sum / static_cast<double>(scored) : 0.0;
  return rep;
}

/// "query_doc\trank\tgallery_doc\tdistance" with 1-based rank and the
/// distance printed to 9 significant digits.
inline std::string ranked_tsv(std::span<const RankedList> lists) {
  std::string out;
  char buf[48];
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.entries.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.9g", l.entries[r].distance);
      out += l.query + "\t" + std::to_string(r + 1) + "\t" + l.entries[r].doc_id + "\t" + buf + "\n";
    }
  }
  return out;
}

/// Single line: top1 hard2 hard3 map queries excluded (tab separated).
inline std::string report_tsv(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.9g\t%.9g\t%.9g\t%.9g\t%zu\t%zu\n", r.top1, r.hard2, r.hard3,
                r.map, r.queries, r.excluded);
  return buf;
}

inline std::string report_summary(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "queries  %zu (%zu without relevant documents)\n"
                "Top-1    %.2f%%\nHard-2   %.2f%%\nHard-3   %.2f%%\nmAP      %.2f%%\n",
                r.queries, r.excluded, 100.0 * r.top1, 100.0 * r.hard2, 100.0 * r.hard3,
                100.0 * r.map);
  return buf;
}

}  // namespace wir
