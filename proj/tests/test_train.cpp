#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fetalseg/nnet/train.hpp"
#include "oracles.hpp"

using namespace fseg;
using namespace fseg::nn;

namespace {

TrainSample disk_sample(int size, double cx, double cy, double r) {
  TrainSample s{Slice2D(size, size, 1.0, 1.0), LabelSlice(size, size, 1.0, 1.0)};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool in = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      s.labels.at(x, y) = in ? 1 : 0;
      s.image.at(x, y) = in ? 0.8f : 0.2f + 0.01f * static_cast<float>((x * 7 + y * 3) % 5);
    }
  return s;
}

double train_mode_loss(UNet<float>& net, const TrainSample& s, LossKind kind) {
  Tensor4<float> x(1, 1, s.image.height(), s.image.width());
  fill_input(x, 0, normalize_slice(s.image));
  const auto p = net.forward(x, true);
  return compute_loss(kind, p, s.labels.data()).value;
}

TrainOptions plain_options() {
  TrainOptions o;
  o.augment.flip = false;
  o.augment.rotate = false;
  o.batch_size = 1;
  o.epochs = 1;
  return o;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("one epoch on a single slice lowers its loss") {
    const auto s = disk_sample(16, 7.5, 8.0, 4.0);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::SoftDice}) {
      UNet<float> net({2, 4, 1, 2}, RandomStream(5));
      const double before = train_mode_loss(net, s, kind);
      auto opt = plain_options();
      opt.loss = kind;
      const auto r = train(net, {s}, opt);
      REQUIRE(r.epoch_loss.size() == 1);
      CHECK(r.epoch_loss[0] == doctest::Approx(before).epsilon(1e-5));
      CHECK(train_mode_loss(net, s, kind) < before);
    }
  }

  TEST_CASE("identical seeds give identical histories and weights") {
    std::vector<TrainSample> data;
    for (int i = 0; i < 5; ++i) data.push_back(disk_sample(16, 5.0 + i, 8.0, 3.0 + 0.3 * i));
    TrainOptions opt;
    opt.batch_size = 2;
    opt.epochs = 3;
    opt.seed = 17;
    opt.augment.iia = IIAParams{};
    opt.augment.iia->proportion = 0.5;
    opt.log_draws = true;
    UNet<float> a({2, 4, 1, 2}, RandomStream(1));
    UNet<float> b({2, 4, 1, 2}, RandomStream(1));
    const auto ra = train(a, data, opt);
    const auto rb = train(b, data, opt);
    CHECK(ra.epoch_loss == rb.epoch_loss);
    const auto sa = a.state_buffers(), sb = b.state_buffers();
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(std::equal(sa[i].begin(), sa[i].end(), sb[i].begin()));
    // 3 batches per epoch (2 + 2 + 1); each visits every sample once
    CHECK(ra.draws.size() == 15);
    std::vector<int> seen(5, 0);
    for (const auto& d : ra.draws)
      if (d.epoch == 0) ++seen[d.sample];
    CHECK(seen == std::vector<int>(5, 1));

    opt.seed = 18;
    UNet<float> c({2, 4, 1, 2}, RandomStream(1));
    CHECK(train(c, data, opt).epoch_loss != ra.epoch_loss);
  }

  TEST_CASE("on_epoch reports every epoch") {
    std::vector<TrainSample> data{disk_sample(8, 3.0, 3.0, 2.0), disk_sample(8, 4.0, 4.0, 2.5)};
    auto opt = plain_options();
    opt.epochs = 4;
    std::vector<int> epochs;
    opt.on_epoch = [&](int e, double loss) {
      epochs.push_back(e);
      CHECK(std::isfinite(loss));
    };
    UNet<float> net({1, 2, 1, 2}, RandomStream(2));
    const auto r = train(net, data, opt);
    CHECK(r.epoch_loss.size() == 4);
    CHECK(epochs.size() == 4);
    CHECK(r.draws.empty());
  }

  TEST_CASE("invalid training inputs") {
    UNet<float> net({1, 2, 1, 2}, RandomStream(2));
    auto opt = plain_options();
    CHECK_THROWS_AS(train(net, {}, opt), ConfigError);
    auto s = disk_sample(8, 3, 3, 2);
    opt.batch_size = 2;
    CHECK_THROWS_AS(train(net, {s}, opt), ConfigError);
    opt.batch_size = 1;
    s.labels.at(0, 0) = 2;
    CHECK_THROWS_AS(train(net, {s}, opt), ConfigError);
    TrainSample mismatched{Slice2D(8, 8, 1, 1), LabelSlice(6, 8, 1, 1)};
    CHECK_THROWS_AS(train(net, {mismatched}, opt), ShapeError);
  }

  TEST_CASE("prediction pads and crops arbitrary slice sizes") {
    UNet<float> net({2, 2, 1, 3}, RandomStream(4));
    Slice2D s(13, 10, 1.0, 1.0);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 13; ++x) s.at(x, y) = static_cast<float>(x * y % 7);
    const auto p = predict_probs(net, s);
    CHECK(p.n() == 1);
    CHECK(p.c() == 3);
    CHECK(p.h() == 10);
    CHECK(p.w() == 13);
    const auto l = segment_slice(net, s);
    CHECK(l.width() == 13);
    CHECK(l.height() == 10);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 13; ++x) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
          if (p.at(0, c, y, x) > p.at(0, best, y, x)) best = c;
        CHECK(l.at(x, y) == best);
      }
  }

  TEST_CASE("fill_input scales and zero-pads") {
    Tensor4<float> t(2, 1, 4, 4, 9.0f);
    Slice2D s(3, 2, 1, 1, 1023.0f);
    fill_input(t, 1, s);
    CHECK(t.at(1, 0, 0, 0) == 1.0f);
    CHECK(t.at(1, 0, 1, 2) == 1.0f);
    CHECK(t.at(1, 0, 3, 3) == 0.0f);
    CHECK(t.at(1, 0, 0, 3) == 0.0f);
    CHECK(t.at(0, 0, 0, 0) == 9.0f);
    CHECK_THROWS_AS(fill_input(t, 0, Slice2D(5, 5, 1, 1)), ShapeError);
  }

  TEST_CASE("loss history file") {
    const auto dir = oracle::scratch_dir("loss_history");
    write_loss_history(dir / "l.csv", {0.5, 0.25});
    std::ifstream in(dir / "l.csv");
    std::string a, b, c;
    std::getline(in, a);
    std::getline(in, b);
    std::getline(in, c);
    CHECK(a == "epoch,loss");
    CHECK(b == "1,0.5");
    CHECK(c == "2,0.25");
  }
}
