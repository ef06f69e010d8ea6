#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "fetalseg/metrics.hpp"
#include "oracles.hpp"

using namespace fseg;

namespace {

// Label slice holding class 1 where the mask is set.
LabelSlice to_labels(const oracle::Mask& m, std::uint8_t code = 1) {
  LabelSlice s(m.w, m.h, 0.7, 0.7);
  for (std::size_t i = 0; i < m.v.size(); ++i) s.data()[i] = m.v[i] ? code : 0;
  return s;
}

LabelVolume to_label_volume(const oracle::Mask& m, Spacing sp) {
  LabelVolume v(m.w, m.h, m.d, sp);
  for (std::size_t i = 0; i < m.v.size(); ++i) v.data()[i] = m.v[i];
  return v;
}

oracle::Mask mask_from_bits(int w, int h, unsigned bits) {
  oracle::Mask m{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h)};
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = (bits >> i) & 1u;
  return m;
}

void check_same(const std::optional<double>& got, const std::optional<double>& want, double tol) {
  REQUIRE(got.has_value() == want.has_value());
  if (want) REQUIRE(std::abs(*got - *want) <= tol);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("2D metrics match brute force on every pair of 3x2 masks") {
    for (unsigned a = 0; a < 64; ++a)
      for (unsigned b = 0; b < 64; ++b) {
        const auto ma = mask_from_bits(3, 2, a), mb = mask_from_bits(3, 2, b);
        const auto ra = to_labels(ma), rb = to_labels(mb);
        const auto dc = dice_2d(ra, rb, 1);
        const auto want = oracle::dice(ma, mb);
        REQUIRE(dc.has_value() == want.has_value());
        if (want) REQUIRE(*dc == *want);
        check_same(msd_2d(ra, rb, 1, 0.7, 0.7), oracle::msd(ma, mb, 0.7, 0.7, 1.0, false), 1e-12);
      }
  }

  TEST_CASE("2D metrics match brute force on random 6x6 masks") {
    std::mt19937_64 gen(31);
    for (int t = 0; t < 500; ++t) {
      const auto ma = oracle::random_mask(6, 6, 1, 0.1 + 0.8 * (t % 7) / 7.0, gen);
      const auto mb = oracle::random_mask(6, 6, 1, 0.5, gen);
      const auto ra = to_labels(ma, 4), rb = to_labels(mb, 4);
      const auto dc = dice_2d(ra, rb, 4);
      const auto want = oracle::dice(ma, mb);
      REQUIRE(dc.has_value() == want.has_value());
      if (want) REQUIRE(*dc == *want);
      check_same(msd_2d(ra, rb, 4, 0.7, 0.9), oracle::msd(ma, mb, 0.7, 0.9, 1.0, false), 1e-12);
    }
  }

  TEST_CASE("3D metrics match brute force on random 6x6x3 masks") {
    std::mt19937_64 gen(32);
    const Spacing sp{0.7, 0.7, 1.25};
    for (int t = 0; t < 300; ++t) {
      const auto ma = oracle::random_mask(6, 6, 3, 0.4, gen);
      const auto mb = oracle::random_mask(6, 6, 3, 0.2 + 0.1 * (t % 5), gen);
      const auto va = to_label_volume(ma, sp), vb = to_label_volume(mb, sp);
      const auto dc = dice_3d(va, vb, 1);
      const auto want = oracle::dice(ma, mb);
      REQUIRE(dc.has_value() == want.has_value());
      if (want) REQUIRE(*dc == *want);
      check_same(msd_3d(va, vb, 1, sp), oracle::msd(ma, mb, sp.x, sp.y, sp.z, true), 1e-12);
    }
  }

  TEST_CASE("worked examples") {
    LabelSlice a(4, 4, 0.7, 0.7), b(4, 4, 0.7, 0.7);
    for (int y = 1; y < 3; ++y) {
      a.at(1, y) = a.at(2, y) = 1;
      b.at(2, y) = b.at(3, y) = 1;
    }
    CHECK(*dice_2d(a, b, 1) == 0.5);

    LabelSlice p(6, 1, 0.7, 0.7), q(6, 1, 0.7, 0.7);
    p.at(0, 0) = 2;
    q.at(3, 0) = 2;
    CHECK(*msd_2d(p, q, 2, 0.7, 0.7) == doctest::Approx(2.1).epsilon(1e-14));

    LabelVolume r(3, 3, 3, {0.7, 0.7, 1.25});
    r.at(1, 1, 0) = 5;
    LabelVolume s = LabelVolume(3, 3, 3, {0.7, 0.7, 1.25});
    s.at(1, 1, 1) = 5;
    CHECK(*msd_3d(r, s, 5, r.spacing()) == doctest::Approx(1.25).epsilon(1e-14));
  }

  TEST_CASE("dice is symmetric and grows with the overlap") {
    std::mt19937_64 gen(33);
    for (int t = 0; t < 200; ++t) {
      const auto ma = oracle::random_mask(6, 6, 1, 0.4, gen);
      auto mb = oracle::random_mask(6, 6, 1, 0.4, gen);
      const auto ra = to_labels(ma);
      auto rb = to_labels(mb);
      const auto ab = dice_2d(ra, rb, 1), ba = dice_2d(rb, ra, 1);
      REQUIRE(ab.has_value() == ba.has_value());
      if (!ab) continue;
      REQUIRE(*ab == *ba);
      // turning a false negative into a true positive never lowers the score
      for (std::size_t i = 0; i < ma.v.size(); ++i)
        if (ma.v[i] && !mb.v[i]) {
          rb.data()[i] = 1;
          REQUIRE(*dice_2d(ra, rb, 1) >= *ab);
          break;
        }
    }
  }

  TEST_CASE("aggregate splits by artifact flag") {
    std::vector<SliceClassScore> scores(2);
    scores[0] = {0, 0, 1, 0.8, 1.0, true};
    scores[1] = {0, 1, 1, 0.9, 2.0, false};
    const auto rep = aggregate(scores);
    CHECK(*rep.at(Subset::All, 1).dc == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(*rep.at(Subset::WithArtifact, 1).dc == 0.8);
    CHECK(*rep.at(Subset::WithoutArtifact, 1).dc == 0.9);
    CHECK(*rep.at(Subset::All, 1).msd == 1.5);
  }

  TEST_CASE("undefined values") {
    LabelSlice empty(4, 4, 1.0, 1.0);
    LabelSlice one = empty;
    one.at(1, 1) = 2;
    CHECK_FALSE(dice_2d(empty, empty, 2).has_value());
    CHECK(*dice_2d(one, empty, 2) == 0.0);
    CHECK_FALSE(msd_2d(one, empty, 2, 1.0, 1.0).has_value());
    CHECK_FALSE(msd_2d(empty, one, 2, 1.0, 1.0).has_value());
    CHECK(*dice_2d(one, one, 2) == 1.0);
    CHECK(*msd_2d(one, one, 2, 1.0, 1.0) == 0.0);
  }

  TEST_CASE("distance map is exact") {
    std::mt19937_64 gen(33);
    const Spacing sp{0.7, 0.9, 1.25};
    for (int t = 0; t < 50; ++t) {
      const auto m = oracle::random_mask(7, 5, 3, 0.1, gen);
      const auto d = squared_distance_map(m.v, 7, 5, 3, sp);
      bool any = false;
      for (auto v : m.v) any = any || v;
      for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 7; ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (int zz = 0; zz < 3; ++zz)
              for (int yy = 0; yy < 5; ++yy)
                for (int xx = 0; xx < 7; ++xx)
                  if (m.at(xx, yy, zz)) {
                    const double dx = (x - xx) * sp.x, dy = (y - yy) * sp.y, dz = (z - zz) * sp.z;
                    best = std::min(best, dx * dx + dy * dy + dz * dz);
                  }
            const double got = d[(static_cast<std::size_t>(z) * 5 + y) * 7 + x];
            if (!any) REQUIRE(std::isinf(got));
            else REQUIRE(std::abs(got - best) <= 1e-12);
          }
    }
  }

  TEST_CASE("boundary matches the face-neighbour rule") {
    std::mt19937_64 gen(34);
    for (int t = 0; t < 50; ++t) {
      const auto m = oracle::random_mask(5, 6, 2, 0.6, gen);
      for (bool use_z : {false, true}) {
        const auto b = mask_boundary(m.v, 5, 6, 2, use_z);
        std::vector<std::uint8_t> want(m.v.size(), 0);
        for (const auto& p : oracle::boundary(m, use_z)) want[(static_cast<std::size_t>(p[2]) * 6 + p[1]) * 5 + p[0]] = 1;
        REQUIRE(b == want);
      }
    }
  }

  TEST_CASE("score_volume and aggregate") {
    LabelVolume ref(4, 4, 2, {0.7, 0.7, 1.25});
    ref.at(1, 1, 0) = 1;
    ref.at(2, 2, 1) = 3;
    LabelVolume pred = ref;
    pred.at(1, 2, 0) = 1;
    const std::vector<std::uint8_t> flags{1, 0};
    const auto scores = score_volume(ref, pred, 5, flags);
    REQUIRE(scores.size() == 14);
    CHECK(scores[0].volume == 5);
    CHECK(scores[0].cls == 1);
    CHECK(scores[0].artifact);
    CHECK(*scores[0].dc == doctest::Approx(2.0 / 3.0));
    CHECK_FALSE(scores[1].dc.has_value());

    const auto rep = aggregate(scores);
    CHECK(rep.slice_counts[0] == 2);
    CHECK(rep.slice_counts[1] == 1);
    CHECK(rep.slice_counts[2] == 1);
    CHECK(*rep.at(Subset::All, 1).dc == doctest::Approx(2.0 / 3.0));
    CHECK(rep.at(Subset::All, 1).n_dc == 1);
    CHECK(*rep.at(Subset::All, 3).dc == 1.0);
    CHECK_FALSE(rep.at(Subset::WithArtifact, 3).dc.has_value());
    CHECK(*rep.mean(Subset::All).dc == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
    CHECK(rep.mean(Subset::All).n_dc == 2);
    CHECK_THROWS_AS(score_volume(ref, pred, 0, std::vector<std::uint8_t>{1}), ShapeError);
  }

  TEST_CASE("identical volumes score perfectly") {
    LabelVolume ref(6, 6, 3, {0.7, 0.7, 1.25});
    for (std::size_t i = 0; i < ref.size(); ++i) ref.data()[i] = static_cast<std::uint8_t>((i / 3) % 8);
    const auto rep = aggregate(score_volume(ref, ref, 0, {}));
    CHECK(*rep.mean(Subset::All).dc == 1.0);
    CHECK(*rep.mean(Subset::All).msd == 0.0);
  }

  TEST_CASE("number formatting round trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0, -2.5}) CHECK(std::stod(format_number(v)) == v);
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_optional(std::nullopt) == "NA");
  }

  TEST_CASE("scores CSV round trip") {
    const auto dir = oracle::scratch_dir("metrics_csv");
    std::vector<SliceClassScore> scores{{0, 1, 2, 0.25, std::nullopt, true}, {3, 0, 7, std::nullopt, std::nullopt, false},
                                        {1, 2, 1, 1.0 / 3.0, 0.7071067811865476, false}};
    write_scores_csv(scores, dir / "s.csv");
    const auto back = read_scores_csv(dir / "s.csv");
    REQUIRE(back.size() == scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      CHECK(back[i].volume == scores[i].volume);
      CHECK(back[i].slice == scores[i].slice);
      CHECK(back[i].cls == scores[i].cls);
      CHECK(back[i].dc == scores[i].dc);
      CHECK(back[i].msd == scores[i].msd);
      CHECK(back[i].artifact == scores[i].artifact);
    }
    std::ifstream in(dir / "s.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "volume,slice,class,dc,msd,artifact");
  }
}
