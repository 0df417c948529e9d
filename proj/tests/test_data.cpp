#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

using namespace fedsim;

namespace {

// Rows as (label, features) so datasets can be compared as multisets.
std::multiset<std::vector<double>> rows_of(const Dataset& ds) {
  std::multiset<std::vector<double>> out;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::vector<double> row(ds.inputs.row(r).begin(), ds.inputs.row(r).end());
    row.push_back(static_cast<double>(ds.labels[r]));
    out.insert(std::move(row));
  }
  return out;
}

std::multiset<std::vector<double>> rows_of(const Partition& p) {
  std::multiset<std::vector<double>> out = rows_of(p.validation);
  out.merge(rows_of(p.server_holdout));
  for (const Dataset& s : p.shards) out.merge(rows_of(s));
  return out;
}

std::set<std::size_t> label_set(const Dataset& ds) {
  return {ds.labels.begin(), ds.labels.end()};
}

double center_distance(const Dataset& ds, std::size_t a, std::size_t b,
                       std::size_t per_class) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < ds.inputs.cols(); ++i) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t s = 0; s < per_class; ++s) {
      ma += ds.inputs(a * per_class + s, i);
      mb += ds.inputs(b * per_class + s, i);
    }
    const double diff = (ma - mb) / static_cast<double>(per_class);
    d2 += diff * diff;
  }
  return std::sqrt(d2);
}

}  // namespace

TEST_CASE("make_blobs shape and determinism") {
  const Dataset a = make_blobs(10, 10, 500, 1.0, 3);
  CHECK(a.size() == 5000);
  CHECK(a.inputs.cols() == 10);
  CHECK(a.class_count == 10);
  CHECK(a.class_histogram() == std::vector<std::size_t>(10, 500));
  CHECK(a == make_blobs(10, 10, 500, 1.0, 3));
  CHECK_FALSE(a == make_blobs(10, 10, 500, 1.0, 4));
  for (double v : a.inputs.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("make_blobs keeps every center at least 4 spreads away") {
  // Empirical centers from many samples; sampling error ~ spread/sqrt(n).
  for (std::size_t c : {2, 5, 10}) {
    const double spread = 0.7;
    const std::size_t n = 4000;
    const Dataset ds = make_blobs(c, 6, n, spread, 9);
    double closest = 1e300;
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = a + 1; b < c; ++b) {
        closest = std::min(closest, center_distance(ds, a, b, n));
      }
    }
    CHECK(closest > kCenterSeparation * spread * 0.97);
  }
}

TEST_CASE("make_blobs rejects bad arguments") {
  CHECK_THROWS_AS(make_blobs(0, 2, 5, 1.0, 1), InputError);
  CHECK_THROWS_AS(make_blobs(2, 0, 5, 1.0, 1), InputError);
  CHECK_THROWS_AS(make_blobs(2, 2, 0, 1.0, 1), InputError);
  CHECK_THROWS_AS(make_blobs(2, 2, 5, 0.0, 1), InputError);
  CHECK_THROWS_AS(make_blobs(2, 2, 5, -1.0, 1), InputError);
  CHECK_NOTHROW(make_blobs(1, 1, 1, 1.0, 1));
}

TEST_CASE("label-shard partition splits classes between two agents") {
  const Dataset ds = make_blobs(10, 4, 100, 1.0, 5);
  PartitionPlan plan{PartitionMode::kLabelShard, 2, 5, 0.0};
  const Partition p = partition(ds, plan, 77);
  REQUIRE(p.shards.size() == 2);
  CHECK(label_set(p.shards[0]) == std::set<std::size_t>{0, 1, 2, 3, 4});
  CHECK(label_set(p.shards[1]) == std::set<std::size_t>{5, 6, 7, 8, 9});
  CHECK(p.server_holdout.empty());
  CHECK(p.validation.size() == 200);
  CHECK(p.validation.class_histogram() == std::vector<std::size_t>(10, 20));
  CHECK(p.shards[0].size() + p.shards[1].size() == 800);
  CHECK(rows_of(p) == rows_of(ds));
}

TEST_CASE("IID partition gives each agent balanced class counts") {
  const Dataset ds = make_blobs(10, 3, 500, 1.0, 6);
  for (std::size_t k : {1, 2, 3, 7}) {
    const Partition p = partition(ds, {PartitionMode::kIid, k, 0, 0.0}, 8);
    REQUIRE(p.shards.size() == k);
    for (std::size_t c = 0; c < 10; ++c) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const Dataset& s : p.shards) {
        const std::size_t n = s.class_histogram()[c];
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      CHECK(hi - lo <= 1);
    }
    CHECK(rows_of(p) == rows_of(ds));
  }
}

TEST_CASE("server holdout is stratified and carved before the shards") {
  const Dataset ds = make_blobs(4, 2, 103, 1.0, 7);
  for (PartitionMode mode : {PartitionMode::kIid, PartitionMode::kLabelShard}) {
    const Partition p = partition(ds, {mode, 2, 2, 0.05}, 9);
    const auto hold = p.server_holdout.class_histogram();
    const auto val = p.validation.class_histogram();
    for (std::size_t c = 0; c < 4; ++c) {
      // 103 per class: 21 to validation, then 5% of the remaining 82.
      CHECK(val[c] == 21);
      CHECK(std::abs(static_cast<double>(hold[c]) - 0.05 * 82) <= 1.0);
    }
    CHECK(rows_of(p) == rows_of(ds));
    std::size_t total = p.validation.size() + p.server_holdout.size();
    for (const Dataset& s : p.shards) total += s.size();
    CHECK(total == ds.size());
  }
}

TEST_CASE("partition is deterministic and seed dependent") {
  const Dataset ds = make_blobs(3, 2, 50, 1.0, 1);
  const PartitionPlan plan{PartitionMode::kIid, 2, 0, 0.1};
  const Partition a = partition(ds, plan, 4), b = partition(ds, plan, 4),
                  c = partition(ds, plan, 5);
  CHECK(a.shards == b.shards);
  CHECK(a.validation == b.validation);
  CHECK(a.server_holdout == b.server_holdout);
  CHECK_FALSE(a.validation == c.validation);
}

TEST_CASE("partition rejects impossible plans") {
  const Dataset ds = make_blobs(4, 2, 20, 1.0, 1);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kLabelShard, 3, 2, 0.0}, 1), InputError);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kLabelShard, 2, 0, 0.0}, 1), InputError);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kLabelShard, 2, 4, 0.0}, 1), InputError);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kIid, 0, 0, 0.0}, 1), InputError);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kIid, 2, 0, 0.6}, 1), InputError);
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kIid, 2, 0, -0.1}, 1), InputError);
  // 16 samples per class after validation cannot feed 17 agents.
  CHECK_THROWS_AS(partition(ds, {PartitionMode::kIid, 17, 0, 0.0}, 1), InputError);
  // Two samples per class: round(0.4) = 0 leaves no validation data.
  CHECK_THROWS_AS(partition(make_blobs(4, 2, 2, 1.0, 1), {PartitionMode::kIid, 1, 0, 0.0}, 1),
                  InputError);
}

TEST_CASE("batches cover the dataset once per epoch") {
  const Dataset ds = make_blobs(2, 3, 5, 1.0, 2);
  const auto bs = batches(ds, 3, 11);
  std::vector<std::size_t> sizes;
  for (const Batch& b : bs) sizes.push_back(b.labels.size());
  CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 1});

  Dataset joined;
  joined.class_count = 2;
  joined.inputs = Matrix(0, 3);
  for (const Batch& b : bs) {
    for (std::size_t r = 0; r < b.labels.size(); ++r) {
      joined.inputs.append_row(b.inputs.row(r));
      joined.labels.push_back(b.labels[r]);
    }
  }
  CHECK(rows_of(joined) == rows_of(ds));

  CHECK(batches(ds, 100, 1).size() == 1);
  CHECK(batches(ds, 1, 1).size() == 10);
  CHECK_THROWS_AS(batches(ds, 0, 1), InputError);
}

TEST_CASE("batch order depends only on the epoch seed") {
  const Dataset ds = make_blobs(3, 2, 20, 1.0, 2);
  const auto a = shuffled_order(ds.size(), 1), b = shuffled_order(ds.size(), 1),
             c = shuffled_order(ds.size(), 2);
  CHECK(a == b);
  CHECK(a != c);
  auto sa = a, sc = c;
  std::sort(sa.begin(), sa.end());
  std::sort(sc.begin(), sc.end());
  CHECK(sa == sc);
  const auto first = batches(ds, 7, 1);
  const auto again = batches(ds, 7, 1);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].inputs == again[i].inputs);
    CHECK(first[i].labels == again[i].labels);
  }
}

TEST_CASE("concat and subset") {
  const Dataset ds = make_blobs(3, 2, 4, 1.0, 3);
  const std::size_t lo[] = {0, 1, 2, 3, 4, 5}, hi[] = {6, 7, 8, 9, 10, 11};
  const Dataset parts[] = {ds.subset(lo), Dataset{Matrix(0, 2), {}, 3}, ds.subset(hi)};
  CHECK(concat(parts) == ds);
  const Dataset bad[] = {ds, make_blobs(3, 5, 4, 1.0, 3)};
  CHECK_THROWS_AS(concat(bad), InputError);
}

TEST_CASE("CSV dump and load is exact") {
  const Dataset ds = make_blobs(3, 4, 7, 1.3, 12);
  const auto path = std::filesystem::temp_directory_path() / "fedsim_unit_blobs.csv";
  write_csv(ds, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x0,x1,x2,x3,label");
  CHECK(read_csv(path, 3) == ds);
  CHECK(read_csv(path) == ds);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_csv(path), InputError);
}
