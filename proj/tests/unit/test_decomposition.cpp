#include <gtest/gtest.h>

#include <fstream>

#include "rpnr/decomposition.hpp"
#include "rpnr/discriminator.hpp"
#include "test_support.hpp"

namespace rpnr {
namespace {

const UNetSpec kTiny{
    .in_channels = 3, .out_channels = 4, .depth = 2, .base_width = 4, .max_width = 8};

std::vector<DecompositionSample> corpus(int n, int size, std::uint64_t seed) {
  std::vector<DecompositionSample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(make_decomposition_sample(
        {.height = size, .width = size, .seed = derive_seed(seed, 2 * i)},
        {.height = size, .width = size, .seed = derive_seed(seed, 2 * i + 1)}));
  }
  return out;
}

TrainConfig quick(int epochs = 3) {
  return {.epochs = epochs, .batch_size = 8, .learning_rate = 5e-3, .seed = 11};
}

class TrainedDecomposition : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    samples_ = new std::vector<DecompositionSample>(corpus(40, 16, 1));
    model_ = new DecompositionModel(train_decomposition(*samples_, quick(6), kTiny));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete samples_;
  }
  static std::vector<DecompositionSample>* samples_;
  static DecompositionModel* model_;
};
std::vector<DecompositionSample>* TrainedDecomposition::samples_ = nullptr;
DecompositionModel* TrainedDecomposition::model_ = nullptr;

TEST(DecompositionLossTest, SumOfThreeTerms) {
  const auto pred = torch::rand({2, 4, 8, 8});
  const auto img = torch::rand({2, 3, 8, 8});
  const auto rho = torch::rand({2, 3, 8, 8});
  const auto s = torch::rand({2, 1, 8, 8});
  const auto l = decomposition_loss(pred, img, rho, s);
  const auto p_rho = pred.slice(1, 0, 3), p_s = pred.slice(1, 3, 4);
  EXPECT_NEAR(l.albedo.item<double>(), (p_rho - rho).pow(2).mean().item<double>(), 1e-7);
  EXPECT_NEAR(l.reconstruction.item<double>(), (p_rho * p_s - img).pow(2).mean().item<double>(),
              1e-7);
  EXPECT_NEAR(l.total.item<double>(), (l.albedo + l.shading + l.reconstruction).item<double>(),
              1e-7);
}

TEST(DecompositionModelTest, UntrainedRefusesToDecompose) {
  DecompositionModel m(kTiny);
  EXPECT_FALSE(m.trained());
  EXPECT_THROW(m.decompose(Image(16, 16)), UntrainedModelError);
  EXPECT_THROW(DecompositionModel(UNetSpec{.in_channels = 3, .out_channels = 3}),
               std::invalid_argument);
}

TEST(DecompositionModelTest, RejectsBadDatasets) {
  const auto one = corpus(1, 16, 0);
  EXPECT_THROW(train_decomposition(one, quick(), kTiny), DatasetError);
  auto mixed = corpus(2, 16, 0);
  mixed.push_back(corpus(1, 8, 0)[0]);
  EXPECT_THROW(train_decomposition(mixed, quick(), kTiny), DatasetError);
  EXPECT_THROW(train_decomposition(TrainConfig{.dataset_dir = "/nonexistent"}, {}, kTiny),
               DatasetError);
  EXPECT_THROW((TrainConfig{.epochs = 0}).validate(), std::invalid_argument);
}

TEST_F(TrainedDecomposition, OutputsInRangeForAnyInput) {
  for (const double lo : {-5.0, 0.0, 0.9}) {
    const auto out = model_->forward(torch::rand({2, 3, 13, 21}) * 10.0 + lo);
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 4, 13, 21}));
    EXPECT_GE(out.min().item<float>(), 0.0f);
    EXPECT_LE(out.max().item<float>(), 1.0f);
  }
  const auto d = model_->decompose(test::random_field<Image>(19, 11, 3));
  EXPECT_EQ(d.albedo.channels(), 3);
  EXPECT_EQ(d.shading.channels(), 1);
  EXPECT_EQ(d.shading.height(), 19);
  EXPECT_EQ(d.albedo.width(), 11);
}

TEST_F(TrainedDecomposition, LogsEveryEpochAndValidationImproves) {
  EXPECT_EQ(model_->log().train_loss.size(), 6u);
  ASSERT_EQ(model_->log().validation_loss.size(), 6u);
  EXPECT_LE(model_->log().validation_loss.back(), model_->log().validation_loss.front());
  EXPECT_GE(reconstruction_mse(*model_, *samples_), 0.0);
}

TEST_F(TrainedDecomposition, SameSeedSameLoss) {
  const auto again = train_decomposition(*samples_, quick(6), kTiny);
  EXPECT_NEAR(again.log().train_loss.back(), model_->log().train_loss.back(), 1e-6);
  EXPECT_NEAR(again.log().validation_loss.back(), model_->log().validation_loss.back(), 1e-6);
}

TEST_F(TrainedDecomposition, CheckpointRoundTrip) {
  test::TempDir dir;
  model_->save(dir / "d.pt");
  EXPECT_TRUE(std::filesystem::exists(sidecar_path(dir / "d.pt")));
  const auto loaded = DecompositionModel::load(dir / "d.pt");
  EXPECT_EQ(loaded.architecture(), kTiny);
  EXPECT_EQ(loaded.seed(), 11u);
  EXPECT_EQ(loaded.log().train_loss, model_->log().train_loss);
  const Image img = (*samples_)[0].image;
  test::expect_rasters_equal(loaded.decompose(img).albedo, model_->decompose(img).albedo);
  test::expect_rasters_equal(loaded.decompose(img).shading, model_->decompose(img).shading);
}

TEST_F(TrainedDecomposition, CorruptCheckpointsRaise) {
  test::TempDir dir;
  model_->save(dir / "d.pt");
  EXPECT_THROW(DiscriminatorModel::load(dir / "d.pt"), CheckpointError);

  const auto size = std::filesystem::file_size(dir / "d.pt");
  std::filesystem::resize_file(dir / "d.pt", size / 2);
  EXPECT_THROW(DecompositionModel::load(dir / "d.pt"), CheckpointError);

  model_->save(dir / "e.pt");
  std::filesystem::remove(sidecar_path(dir / "e.pt"));
  EXPECT_THROW(DecompositionModel::load(dir / "e.pt"), CheckpointError);
  EXPECT_THROW(DecompositionModel::load(dir / "absent.pt"), CheckpointError);
}

TEST_F(TrainedDecomposition, TrainsFromDatasetDirectory) {
  test::TempDir dir;
  write_decomposition_dataset(
      {.out_dir = dir / "data", .count = 6, .seed = 2, .height = 16, .width = 16});
  TrainConfig cfg = quick(1);
  cfg.dataset_dir = dir / "data";
  const auto m = train_decomposition(cfg, dir / "m.pt", kTiny);
  EXPECT_TRUE(m.trained());
  EXPECT_TRUE(std::filesystem::exists(dir / "m.pt"));
}

}  // namespace
}  // namespace rpnr
