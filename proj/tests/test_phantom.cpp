#include <doctest.h>

#include <cmath>

#include "fetalseg/phantom.hpp"
#include "fetalseg/postprocess.hpp"
#include "oracles.hpp"

using namespace fseg;

namespace {

PhantomConfig small_config(std::uint64_t seed = 3) {
  PhantomConfig c;
  c.seed = seed;
  c.n_volumes = 4;
  return c;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("same seed is bit-identical, another seed differs") {
    const auto a = generate_case(small_config(), 1);
    const auto b = generate_case(small_config(), 1);
    CHECK(a.intensity == b.intensity);
    CHECK(a.truth == b.truth);
    const auto c = generate_case(small_config(4), 1);
    CHECK_FALSE(c.intensity == a.intensity);
    const auto d = generate_case(small_config(), 2);
    CHECK_FALSE(d.intensity == a.intensity);
  }

  TEST_CASE("dataset cases only depend on their index") {
    const auto ds = generate_dataset(small_config());
    REQUIRE(ds.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(ds[i].id == i);
      CHECK(ds[i].intensity == generate_case(small_config(), i).intensity);
    }
  }

  TEST_CASE("geometry, classes and a single ICV component") {
    const auto cfg = small_config();
    for (const auto& c : generate_dataset(cfg)) {
      CHECK(c.intensity.width() == cfg.image_size);
      CHECK(c.intensity.depth() == cfg.slices_per_volume);
      CHECK(c.intensity.spacing() == cfg.spacing);
      CHECK(c.truth.same_geometry(c.intensity));
      std::array<bool, kNumClasses> seen{};
      for (auto v : c.truth.data()) {
        REQUIRE(v < kNumClasses);
        seen[v] = true;
      }
      for (int k = 0; k < kNumClasses; ++k) CHECK(seen[k]);

      const auto icv = icv_from_labels(c.truth);
      oracle::Mask m{icv.width(), icv.height(), icv.depth(), std::vector<std::uint8_t>(icv.data().begin(), icv.data().end())};
      std::vector<std::size_t> counts;
      oracle::flood_fill(m, 26, &counts);
      REQUIRE(counts.size() == 1);
      CHECK(static_cast<double>(counts[0]) * cfg.spacing.voxel_volume() > 3000.0);

      for (float v : c.intensity.data()) REQUIRE(std::isfinite(v));
      CHECK(c.has_injected_artifact == std::vector<std::uint8_t>(cfg.slices_per_volume, 0));
    }
  }

  TEST_CASE("the brain is surrounded by non-empty maternal anatomy") {
    const auto c = generate_case(small_config(), 0);
    double outside = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < c.truth.size(); ++i)
      if (c.truth.data()[i] == 0) {
        outside += c.intensity.data()[i];
        ++n;
      }
    CHECK(n > 0);
    CHECK(outside / n > 0.1);
  }

  TEST_CASE("invalid configurations are rejected") {
    auto c = small_config();
    c.image_size = 60;  // not a multiple of 2^3
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.n_volumes = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("injection multiplies flagged slices by the normalised pattern") {
    const auto base = generate_case(small_config(), 0);
    TestArtifactConfig art;
    art.fraction = 0.5;
    RandomStream rng(77);
    const auto out = inject_test_artifact(base, rng, art);
    CHECK(out.truth == base.truth);
    int flagged = 0;
    const int w = base.intensity.width(), h = base.intensity.height();
    for (int z = 0; z < base.intensity.depth(); ++z) {
      const auto before = base.intensity.slice_view(z);
      const auto after = out.intensity.slice_view(z);
      if (!out.has_injected_artifact[z]) {
        CHECK_FALSE(out.artifact_draws[z].has_value());
        CHECK(std::equal(before.begin(), before.end(), after.begin()));
        continue;
      }
      ++flagged;
      REQUIRE(out.artifact_draws[z].has_value());
      const auto d = *out.artifact_draws[z];
      CHECK(art.x0.contains(d.x0_ref));
      CHECK(art.y0.contains(d.y0_ref));
      // ratio / field must be the same constant everywhere
      const double sx = w / 512.0, sy = h / 512.0;
      std::optional<double> k;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double b = before[static_cast<std::size_t>(y) * w + x];
          if (std::abs(b) < 1e-2) continue;
          const double f = oracle::field_value(x, y, w, h, d.x0_ref * sx, d.y0_ref * sy, d.theta_deg);
          const double r = after[static_cast<std::size_t>(y) * w + x] / b / f;
          if (!k) k = r;
          REQUIRE(r == doctest::Approx(*k).epsilon(1e-5));
        }
    }
    CHECK(flagged > 0);
  }

  TEST_CASE("zero strength leaves intensities unchanged") {
    const auto base = generate_case(small_config(), 1);
    TestArtifactConfig art;
    art.fraction = 1.0;
    art.strength = 0.0;
    RandomStream rng(5);
    const auto out = inject_test_artifact(base, rng, art);
    CHECK(out.intensity == base.intensity);
    for (auto f : out.has_injected_artifact) CHECK(f == 1);
  }

  TEST_CASE("artifact multiplier has unit mean at strength one") {
    const auto m = test_artifact_multiplier(32, 32, {300.0, 250.0, 10.0}, 1.0);
    double mean = 0.0;
    for (double v : m) mean += v;
    CHECK(mean / m.size() == doctest::Approx(1.0));
  }

  TEST_CASE("default artifact ranges are disjoint from the training ranges") {
    const TestArtifactConfig art;
    const IIAParams iia;
    CHECK((art.x0.lo > iia.x0.hi || art.x0.hi < iia.x0.lo || art.y0.lo > iia.y0.hi || art.y0.hi < iia.y0.lo));
  }
}
