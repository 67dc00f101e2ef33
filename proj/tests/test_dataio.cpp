#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "continsense/dataio/csv.hpp"
#include "continsense/dataio/observation.hpp"
#include "continsense/dataio/protocols.hpp"
#include "continsense/dataio/synthetic.hpp"

using namespace continsense;
using namespace continsense::dataio;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "continsense_dataio";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << content;
  return p;
}

double column_sum(const DenseMatrix& m, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j);
  return s;
}

}  // namespace

TEST(GridCsv, DenseFileGivesGroundTruth) {
  const auto p = temp_file("dense.csv", "time,a0,a1\n0,1,2\n10,3,4\n25.5,5,6\n");
  const GridData d = load_grid_csv(p);
  ASSERT_TRUE(std::holds_alternative<GroundTruth>(d));
  const auto& gt = std::get<GroundTruth>(d);
  EXPECT_EQ(gt.values, (DenseMatrix{{1, 3, 5}, {2, 4, 6}}));
  EXPECT_EQ(gt.times, (std::vector<double>{0, 10, 25.5}));
  EXPECT_EQ(gt.area_ids, (std::vector<std::string>{"a0", "a1"}));
}

TEST(GridCsv, GapGivesObservationSetWithOneMissingCell) {
  const auto p = temp_file("gap.csv", "time,a0,a1\n0,1,2\n10,,4\n25.5,5,6\n");
  const GridData d = load_grid_csv(p);
  ASSERT_TRUE(std::holds_alternative<ObservationSet>(d));
  const auto& obs = std::get<ObservationSet>(d);
  EXPECT_EQ(obs.observed_count(), 5u);
  EXPECT_EQ(obs.mask(0, 1), 0.0);
}

TEST(GridCsv, FormatErrorsCarryRowNumber) {
  const auto ragged = temp_file("ragged.csv", "time,a0,a1\n0,1,2\n1,3\n");
  try {
    load_grid_csv(ragged);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  const auto back = temp_file("back.csv", "time,a0\n5,1\n5,2\n");
  try {
    load_grid_csv(back);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_grid_csv(temp_file("hdr.csv", "t,a0\n1,2\n")), FormatError);
  EXPECT_THROW(load_grid_csv(temp_file("nan.csv", "time,a0\n1,abc\n")), FormatError);
  EXPECT_THROW(load_grid_csv("/nonexistent/file.csv"), IoError);
}

TEST(GridCsv, CoordinatesAttachByAreaId) {
  const auto grid = temp_file("g.csv", "time,north,south\n0,1,\n1,,2\n");
  const auto coords = temp_file("c.csv", "area_id,x,y\nsouth,0,-1\nnorth,0,1\n");
  const auto obs = std::get<ObservationSet>(load_grid_csv(grid, coords));
  ASSERT_TRUE(obs.coords.has_value());
  EXPECT_EQ(obs.coords->y, (std::vector<double>{1, -1}));
  EXPECT_THROW(load_grid_csv(grid, temp_file("c2.csv", "area_id,x,y\nnorth,0,1\n")), FormatError);
}

TEST(GridCsv, RoundTripPreservesValuesExactly) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 4, 9, seed);
    const fs::path p = fs::temp_directory_path() / "continsense_dataio" / "rt.csv";
    save_grid_csv(p, gt);
    const auto back = std::get<GroundTruth>(load_grid_csv(p));
    EXPECT_EQ(back.values, gt.values);
    EXPECT_EQ(back.times, gt.times);
  }
}

TEST(Synthetic, Rank1OuterProduct) {
  const GroundTruth gt = make_rank1({1, 2}, {1, 1, 1}, {0, 1, 2});
  EXPECT_EQ(gt.values, (DenseMatrix{{1, 1, 1}, {2, 2, 2}}));
  const GroundTruth r = generate_synthetic(SyntheticKind::Rank1, 3, 5, 9);
  // every 2x2 minor vanishes
  for (std::size_t j = 1; j < 5; ++j)
    EXPECT_NEAR(r.values(0, 0) * r.values(1, j) - r.values(0, j) * r.values(1, 0), 0.0, 1e-14);
}

TEST(Synthetic, DeterministicPerSeed) {
  for (auto kind : {SyntheticKind::SmoothField, SyntheticKind::Rank1, SyntheticKind::Seasonal}) {
    const auto a = generate_synthetic(kind, 5, 20, 77), b = generate_synthetic(kind, 5, 20, 77);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.times, b.times);
    EXPECT_NE(a.values, generate_synthetic(kind, 5, 20, 78).values);
  }
  EXPECT_THROW(generate_synthetic(SyntheticKind::SmoothField, 1, 5, 0), ParameterError);
}

TEST(Synthetic, SmoothFieldIsTemporallyAutocorrelated) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 10, 200, 4);
  require_strictly_increasing(gt.times, "test");
  double mean_ac = 0.0;
  for (std::size_t i = 0; i < gt.n_subareas(); ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < gt.n_columns(); ++j) mu += gt.values(i, j);
    mu /= static_cast<double>(gt.n_columns());
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < gt.n_columns(); ++j) {
      den += (gt.values(i, j) - mu) * (gt.values(i, j) - mu);
      if (j + 1 < gt.n_columns()) num += (gt.values(i, j) - mu) * (gt.values(i, j + 1) - mu);
    }
    mean_ac += num / den;
  }
  mean_ac /= static_cast<double>(gt.n_subareas());
  EXPECT_GT(mean_ac, 0.5);
}

TEST(Synthetic, FieldClosureMatchesNoiseFreeGrid) {
  SyntheticOptions opt;
  opt.noise_std = 0.0;
  const GroundTruth gt = generate_synthetic(SyntheticKind::Seasonal, 3, 6, 5, opt);
  ASSERT_TRUE(static_cast<bool>(gt.field));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(gt.field(2, gt.times[j]), gt.values(2, j));
}

TEST(MaskColumns, KeepAllIsFullSensing) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 4, 10, 1);
  const ObservationSet obs = mask_columns(gt, MaskSpec{.k = 4, .seed = 3});
  EXPECT_EQ(obs.values, gt.values);
  EXPECT_EQ(obs.observed_count(), 40u);
}

TEST(MaskColumns, ColumnSumsAreExactlyK) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 5, 100, 1);
  for (std::size_t k = 1; k <= 5; ++k) {
    const ObservationSet obs = mask_columns(gt, MaskSpec{.k = k, .seed = 10 + k});
    for (std::size_t j = 0; j < 100; ++j) EXPECT_EQ(column_sum(obs.mask, j), static_cast<double>(k));
    validate(obs, true);
    // Y' .* C == Y .* C
    for (std::size_t idx = 0; idx < obs.mask.size(); ++idx)
      EXPECT_EQ(obs.values[idx] * obs.mask[idx], gt.values[idx] * obs.mask[idx]);
  }
  EXPECT_THROW(mask_columns(gt, MaskSpec{.k = 6}), ParameterError);
}

TEST(MaskColumns, MatchesReferenceSamplerTrace) {
  // Independent Python MT19937-64 + partial Fisher-Yates, seed 2024, N=5, k=2.
  const std::vector<std::vector<std::size_t>> expected{{2, 4}, {1, 3}, {0, 2}, {1, 2}};
  const GroundTruth gt = make_rank1({1, 1, 1, 1, 1}, {1, 1, 1, 1}, {0, 1, 2, 3});
  const ObservationSet obs = mask_columns(gt, MaskSpec{.k = 2, .seed = 2024});
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<std::size_t> got;
    for (std::size_t i = 0; i < 5; ++i)
      if (obs.observed(i, j)) got.push_back(i);
    EXPECT_EQ(got, expected[j]) << "column " << j;
  }
}

TEST(MaskColumns, KeepRatio) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 10, 7, 1);
  const ObservationSet obs = mask_columns(gt, MaskSpec{.mode = MaskSpec::Mode::KeepRatio, .ratio = 0.3, .seed = 1});
  for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(column_sum(obs.mask, j), 3.0);
  EXPECT_THROW(mask_columns(gt, MaskSpec{.mode = MaskSpec::Mode::KeepRatio, .ratio = 0.0}), ParameterError);
}

TEST(DeleteColumns, Basics) {
  SyntheticOptions even;
  even.layout = TimeLayout::Even;
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 3, 10, 2, even);
  const GroundTruth same = delete_columns(gt, 0.0, 1);
  EXPECT_EQ(same.values, gt.values);
  EXPECT_EQ(same.times, gt.times);
  const GroundTruth half = delete_columns(gt, 0.5, 1);
  EXPECT_EQ(half.n_columns(), 5u);
  require_strictly_increasing(half.times, "test");
  for (std::size_t j = 0; j < 5; ++j) {
    const auto it = std::find(gt.times.begin(), gt.times.end(), half.times[j]);
    ASSERT_NE(it, gt.times.end());
    const std::size_t src = static_cast<std::size_t>(it - gt.times.begin());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(half.values(i, j), gt.values(i, src));
  }
  EXPECT_THROW(delete_columns(gt, 0.9, 1), ParameterError);
  EXPECT_THROW(delete_columns(gt, 1.0, 1), ParameterError);
}

TEST(DeleteColumns, DeletionMakesGapsUneven) {
  SyntheticOptions even;
  even.layout = TimeLayout::Even;
  const GroundTruth gt = generate_synthetic(SyntheticKind::Rank1, 2, 60, 2, even);
  auto gap_variance = [](const std::vector<double>& t) {
    std::vector<double> g;
    for (std::size_t j = 1; j < t.size(); ++j) g.push_back(t[j] - t[j - 1]);
    double mu = 0.0;
    for (double x : g) mu += x;
    mu /= static_cast<double>(g.size());
    double v = 0.0;
    for (double x : g) v += (x - mu) * (x - mu);
    return v / static_cast<double>(g.size());
  };
  const double before = gap_variance(gt.times);
  double after = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) after += gap_variance(delete_columns(gt, 0.5, s).times);
  after /= 100.0;
  EXPECT_GT(after, before);
}

TEST(Discretize, MeanWithinUnit) {
  const ObservationSet obs = to_observation_set({{1.0, 0, 4.0}, {2.0, 0, 6.0}}, 1);
  const DiscreteObservation d = discretize_merge(obs, 10.0);
  EXPECT_EQ(d.units, 1u);
  EXPECT_EQ(d.values(0, 0), 5.0);
  EXPECT_EQ(d.mask(0, 0), 1.0);
}

TEST(Discretize, OneSubmissionPerUnitIsIdentity) {
  const ObservationSet obs = to_observation_set({{0.5, 0, 1.0}, {1.5, 1, 2.0}, {2.5, 0, 3.0}, {3.5, 1, 4.0}}, 2);
  const DiscreteObservation d = discretize_merge(obs, 1.0);
  EXPECT_EQ(d.units, 3u);
  EXPECT_EQ(d.values(0, 0), 1.0);
  EXPECT_EQ(d.values(1, 1), 2.0);
  EXPECT_EQ(d.values(0, 2), 3.0);
  EXPECT_EQ(d.values(1, 2), 4.0);  // last submission sits on the closing boundary
  EXPECT_EQ(d.column_unit, (std::vector<std::size_t>{0, 1, 2, 2}));
}

TEST(Discretize, MatchesBruteForceBucketing) {
  const std::vector<Submission> subs{{0.0, 0, 1.0},  {0.4, 1, 2.0}, {0.9, 0, 3.0}, {1.2, 1, 5.0},
                                     {1.3, 1, 7.0},  {1.9, 0, 4.0}, {2.2, 0, 8.0}, {2.8, 1, 1.0},
                                     {3.0, 0, 10.0}};
  const ObservationSet obs = to_observation_set(subs, 2);
  const double L = 1.0;
  const DiscreteObservation d = discretize_merge(obs, L);
  ASSERT_EQ(d.units, 3u);
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t area = 0; area < 2; ++area) {
      double sum = 0.0;
      int count = 0;
      for (const auto& s : subs) {
        const double lo = p * L, hi = (p + 1) * L;
        const bool inside = s.time >= lo && (s.time < hi || (p == 2 && s.time <= hi));
        if (inside && s.subarea == area) {
          sum += s.value;
          ++count;
        }
      }
      EXPECT_EQ(d.mask(area, p), count > 0 ? 1.0 : 0.0);
      if (count > 0) {
        EXPECT_DOUBLE_EQ(d.values(area, p), sum / count);
      }
    }
  }
}

TEST(Discretize, FineUnitsPreserveSubmissions) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 4, 40, 3);
  const ObservationSet obs = mask_columns(gt, MaskSpec{.k = 2, .seed = 4});
  double min_gap = 1e300;
  for (std::size_t j = 1; j < obs.times.size(); ++j) min_gap = std::min(min_gap, obs.times[j] - obs.times[j - 1]);
  const DiscreteObservation d = discretize_merge(obs, min_gap / 2.0);
  std::multiset<std::pair<std::size_t, double>> original, unmerged;
  for (const auto& s : to_submissions(obs)) original.insert({s.subarea, s.value});
  for (std::size_t p = 0; p < d.units; ++p)
    for (std::size_t i = 0; i < 4; ++i)
      if (d.mask(i, p) == 1.0) unmerged.insert({i, d.values(i, p)});
  EXPECT_EQ(original, unmerged);
}

TEST(Discretize, EmptyUnitsHaveZeroMaskAndBadLengthRejected) {
  const ObservationSet obs = to_observation_set({{0.0, 0, 1.0}, {5.0, 0, 2.0}}, 1);
  const DiscreteObservation d = discretize_merge(obs, 1.0);
  EXPECT_EQ(d.units, 5u);
  EXPECT_EQ(d.mask(0, 2), 0.0);
  EXPECT_THROW(discretize_merge(obs, 0.0), ParameterError);
}

TEST(Normalize, InvertsAndIgnoresMaskedCells) {
  const GroundTruth gt = generate_synthetic(SyntheticKind::SmoothField, 5, 30, 8);
  ObservationSet obs = mask_columns(gt, MaskSpec{.k = 2, .seed = 1});
  auto [norm, rec] = normalize(obs);
  const DenseMatrix back = denormalize(norm.values, rec);
  for (std::size_t i = 0; i < obs.mask.size(); ++i) {
    if (obs.mask[i] == 1.0) {
      EXPECT_NEAR(back[i], obs.values[i], 1e-12);
    } else {
      EXPECT_EQ(norm.values[i], 0.0);
    }
  }
  for (std::size_t i = 0; i < obs.mask.size(); ++i)
    if (obs.mask[i] == 0.0) obs.values[i] = 1e6;
  auto [norm2, rec2] = normalize(obs);
  EXPECT_EQ(norm2.values, norm.values);
  EXPECT_EQ(rec2.mean, rec.mean);
}

TEST(Normalize, ConstantDataFloorsStd) {
  const ObservationSet obs = to_observation_set({{0, 0, 3.0}, {1, 0, 3.0}, {2, 0, 3.0}}, 1);
  auto [norm, rec] = normalize(obs);
  EXPECT_TRUE(rec.std_floored);
  EXPECT_EQ(rec.std, kStdFloor);
  EXPECT_EQ(norm.values(0, 1), 0.0);
  EXPECT_THROW(normalize(to_observation_set({{0, 0, 1.0}}, 1)), InputError);
}

TEST(Submissions, ShapesAndSharedColumns) {
  const ObservationSet a = to_observation_set({{1, 0, 1.0}, {2, 1, 2.0}, {3, 2, 3.0}}, 3);
  EXPECT_EQ(a.n_columns(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(column_sum(a.mask, j), 1.0);
  const ObservationSet b = to_observation_set({{5, 0, 1.0}, {5, 1, 2.0}}, 2);
  EXPECT_EQ(b.n_columns(), 1u);
  EXPECT_EQ(column_sum(b.mask, 0), 2.0);
  EXPECT_THROW(to_observation_set({{5, 0, 1.0}, {5, 0, 2.0}}, 2), InputError);
  EXPECT_THROW(to_observation_set({{5, 3, 1.0}}, 2), InputError);
}

TEST(Submissions, PermutationInvariant) {
  numkit::Rng rng(12);
  std::vector<Submission> subs;
  for (int k = 0; k < 30; ++k) subs.push_back({std::floor(rng.uniform(0, 20)), rng.index(4), rng.normal()});
  // drop duplicates (time, subarea)
  std::map<std::pair<double, std::size_t>, Submission> uniq;
  for (const auto& s : subs) uniq.emplace(std::make_pair(s.time, s.subarea), s);
  std::vector<Submission> sorted;
  for (const auto& [k, s] : uniq) sorted.push_back(s);
  const ObservationSet ref = to_observation_set(sorted, 4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Submission> shuffled = sorted;
    rng.shuffle(shuffled);
    const ObservationSet got = to_observation_set(shuffled, 4);
    EXPECT_EQ(got.values, ref.values);
    EXPECT_EQ(got.mask, ref.mask);
    EXPECT_EQ(got.times, ref.times);
  }
}
