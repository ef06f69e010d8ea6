#include <doctest.h>

#include <algorithm>

#include "fetalseg/pipeline/commands.hpp"

using namespace fseg;

// Desk-scale tissue network (depth 3, 16 channels, 64x64 phantom) on 40
// training slices. The bar was fixed after the first calibration run.
inline constexpr double kSoftDiceBar = 0.3;

TEST_SUITE("training_bar") {
  TEST_CASE("desk-scale tissue net reaches the soft-Dice bar within 200 epochs") {
    ExperimentConfig cfg;
    cfg.phantom.n_volumes = 10;
    cfg.learning_rate = 1e-3;
    cfg.validate();
    const Dataset ds = build_dataset(cfg);
    const auto samples = tissue_training_set(ds, cfg);
    REQUIRE(samples.size() == 40);

    nn::UNet<float> model(cfg.tissue.net, RandomStream(cfg.seed).derive("training-bar"));
    nn::TrainOptions opt;
    opt.loss = nn::LossKind::SoftDice;
    opt.batch_size = cfg.tissue.batch_size;
    opt.epochs = 200;
    opt.seed = 11;
    opt.augment = cfg.augment_for(cfg.tissue.arm);
    opt.optimizer.learning_rate = cfg.learning_rate;
    const auto result = nn::train(model, samples, opt);
    REQUIRE(result.epoch_loss.size() == 200);
    const double best = *std::min_element(result.epoch_loss.begin(), result.epoch_loss.end());
    MESSAGE("final loss " << result.epoch_loss.back() << ", best " << best);
    CHECK(best < kSoftDiceBar);
  }
}
