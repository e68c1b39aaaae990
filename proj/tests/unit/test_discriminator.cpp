#include <gtest/gtest.h>

#include <cmath>

#include "rpnr/discriminator.hpp"
#include "rpnr/metrics.hpp"
#include "test_support.hpp"

namespace rpnr {
namespace {

const UNetSpec kTiny{.in_channels = 4,
                     .out_channels = 1,
                     .depth = 2,
                     .base_width = 4,
                     .max_width = 8,
                     .global_head = true,
                     .batch_norm = true};

double bce(double logit, double target) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

TEST(DiscriminatorLossTest, DecoderTermIsSumOfPixelBce) {
  torch::manual_seed(2);
  const int n = 3, h = 6, w = 5;
  UNetOutput out{torch::randn({n, 1, h, w}, torch::kDouble) * 3, torch::randn({n}, torch::kDouble)};
  const auto pix = (torch::rand({n, 1, h, w}, torch::kDouble) > 0.5).to(torch::kDouble);
  const auto glob = torch::tensor({1.0, 0.0, 1.0}, torch::kDouble);
  const auto loss = discriminator_loss(out, glob, pix);

  double dec = 0.0, enc = 0.0;
  for (int i = 0; i < n; ++i) {
    enc += bce(out.global[i].item<double>(), glob[i].item<double>());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        dec += bce(out.map[i][0][y][x].item<double>(), pix[i][0][y][x].item<double>());
      }
    }
  }
  EXPECT_NEAR(loss.dec.item<double>(), dec / n, 1e-5);
  EXPECT_NEAR(loss.enc.item<double>(), enc / n, 1e-5);
  EXPECT_NEAR(loss.total.item<double>(), (enc + dec) / n, 1e-5);
}

TEST(DiscriminatorLossTest, ConstantRealPredictorOnAllRealData) {
  const int n = 2;
  const auto ones_map = torch::ones({n, 1, 8, 8});
  for (double logit : {10.0, 20.0, 40.0}) {
    UNetOutput out{torch::full({n, 1, 8, 8}, logit), torch::full({n}, logit)};
    const double l = discriminator_loss(out, torch::ones({n}), ones_map).total.item<double>();
    EXPECT_LT(l, 65.0 * std::exp(-logit) * 1.01 + 1e-12);
  }
}

TEST(Samples, LabelsFollowDistortion) {
  const auto scene = random_lit_scene(16, 16, 3);
  const auto real = make_real_sample(scene.normals, scene.shading);
  EXPECT_TRUE(real.real);
  EXPECT_EQ(mask_area(real.pixel_labels), 256u);
  const auto fake = make_fake_sample(scene.normals, distort_shading(scene.shading, 4));
  EXPECT_FALSE(fake.real);
  const auto d = distort_shading(scene.shading, 4);
  test::expect_rasters_equal(fake.pixel_labels, invert(d.distortion_mask));

  const auto corpus = make_discriminator_corpus(6, 16, 16, 1);
  ASSERT_EQ(corpus.size(), 6u);
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_EQ(corpus[i].real, i % 2 == 0);
}

DiscTrainSample labelled(std::uint64_t seed, bool real) {
  const auto scene = random_lit_scene(16, 16, seed);
  return real ? make_real_sample(scene.normals, scene.shading)
              : make_fake_sample(scene.normals, distort_shading(scene.shading, seed + 50));
}

TEST(CutMix, EmptyAndFullBoxes) {
  const auto a = labelled(1, true), b = labelled(2, false);
  const auto none = cutmix_with_box(a, b, Box{3, 3, 0, 0});
  test::expect_rasters_equal(none.shading, a.shading);
  test::expect_rasters_equal(none.normals, a.normals);
  EXPECT_TRUE(none.real);
  const auto all = cutmix_with_box(a, b, Box{0, 0, 16, 16});
  test::expect_rasters_equal(all.shading, b.shading);
  test::expect_rasters_equal(all.normals, b.normals);
  test::expect_rasters_equal(all.pixel_labels, b.pixel_labels);
  EXPECT_EQ(all.real, b.real);
}

TEST(CutMix, QuarterBoxCarriesExactlyTheParentsLabels) {
  const auto a = labelled(5, true), b = labelled(6, false);
  const Box box{4, 8, 8, 8};
  const auto mixed = cutmix_with_box(a, b, box);
  Mask region(16, 16);
  for (int y = 4; y < 12; ++y) {
    for (int x = 8; x < 16; ++x) region(y, x) = 1.0f;
  }
  EXPECT_EQ(mask_area(region), 64u);
  test::expect_rasters_equal(mixed.pixel_labels,
                             cut_and_paste(b.pixel_labels, a.pixel_labels, region));
  test::expect_rasters_equal(mixed.shading, cut_and_paste(b.shading, a.shading, region));
  test::expect_rasters_equal(mixed.normals, cut_and_paste(b.normals, a.normals, region));
  EXPECT_EQ(mixed.real, mask_area(mixed.pixel_labels) == 256u);
}

TEST(CutMix, RandomBoxesStayConsistent) {
  const auto a = labelled(7, true), b = labelled(8, false);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto m = cutmix_augment(a, b, seed);
    for (std::size_t i = 0; i < m.shading.size(); ++i) {
      const bool from_a = m.shading.values()[i] == a.shading.values()[i] &&
                          m.pixel_labels.values()[i] == a.pixel_labels.values()[i];
      const bool from_b = m.shading.values()[i] == b.shading.values()[i] &&
                          m.pixel_labels.values()[i] == b.pixel_labels.values()[i];
      ASSERT_TRUE(from_a || from_b);
    }
    EXPECT_EQ(m.real, mask_area(m.pixel_labels) == m.pixel_labels.size());
  }
  const DiscTrainSample small{NormalField(8, 8), ShadingField(8, 8), true, Mask(8, 8, 1.0f)};
  EXPECT_THROW(cutmix_augment(a, small, 0), ShapeError);
}

class TrainedDiscriminator : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new std::vector<DiscTrainSample>(make_discriminator_corpus(24, 16, 16, 3));
    model_ = new DiscriminatorModel(train_discriminator(
        *corpus_, TrainConfig{.epochs = 2, .batch_size = 8, .learning_rate = 2e-3, .seed = 4},
        DiscriminatorOptions{.cutmix_probability = 0.5}, kTiny));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete corpus_;
  }
  static std::vector<DiscTrainSample>* corpus_;
  static DiscriminatorModel* model_;
};
std::vector<DiscTrainSample>* TrainedDiscriminator::corpus_ = nullptr;
DiscriminatorModel* TrainedDiscriminator::model_ = nullptr;

TEST_F(TrainedDiscriminator, ScoresBoundedShapedDeterministic) {
  const auto s1 =
      model_->score(test::random_normals(13, 9, 1), test::random_field<ShadingField>(13, 9, 2));
  const auto s2 =
      model_->score(test::random_normals(13, 9, 1), test::random_field<ShadingField>(13, 9, 2));
  EXPECT_EQ(s1.global, s2.global);
  test::expect_rasters_equal(s1.map, s2.map);
  EXPECT_EQ(s1.map.height(), 13);
  EXPECT_EQ(s1.map.width(), 9);
  for (double scale : {1.0, 100.0}) {
    const auto p = model_->global_probability(torch::randn({2, 3, 16, 16}) * scale,
                                              torch::randn({2, 1, 16, 16}) * scale);
    EXPECT_GE(p.min().item<float>(), 0.0f);
    EXPECT_LE(p.max().item<float>(), 1.0f);
    const auto map = torch::sigmoid(
        model_->logits(torch::randn({1, 3, 16, 16}) * scale, torch::randn({1, 1, 16, 16}) * scale)
            .map);
    EXPECT_GE(map.min().item<float>(), 0.0f);
    EXPECT_LE(map.max().item<float>(), 1.0f);
  }
  EXPECT_THROW(model_->score(NormalField(8, 8), ShadingField(8, 9)), ShapeError);
}

TEST_F(TrainedDiscriminator, LogsBothTermsAndEvaluates) {
  EXPECT_EQ(model_->log().enc.size(), 2u);
  EXPECT_EQ(model_->log().dec.size(), 2u);
  const auto ev = evaluate_discriminator(*model_, *corpus_);
  EXPECT_GE(ev.auc, 0.0);
  EXPECT_LE(ev.auc, 1.0);
  EXPECT_GE(ev.mean_iou, 0.0);
  EXPECT_LE(ev.mean_iou, 1.0);
}

TEST_F(TrainedDiscriminator, CheckpointRoundTrip) {
  test::TempDir dir;
  model_->save(dir / "d.pt");
  const auto loaded = DiscriminatorModel::load(dir / "d.pt");
  EXPECT_EQ(loaded.options().cutmix_probability, 0.5);
  const auto& s = (*corpus_)[1];
  EXPECT_EQ(loaded.score(s.normals, s.shading).global, model_->score(s.normals, s.shading).global);
}

TEST(DiscriminatorTraining, RejectsSingleClassAndUntrainedUse) {
  std::vector<DiscTrainSample> reals{labelled(1, true), labelled(2, true)};
  EXPECT_THROW(train_discriminator(reals, TrainConfig{.epochs = 1}, {}, kTiny), DatasetError);
  DiscriminatorModel fresh(kTiny);
  EXPECT_THROW(fresh.score(NormalField(8, 8), ShadingField(8, 8)), UntrainedModelError);
}

TEST(DiscriminatorTraining, ShadingOnlyIgnoresNormals) {
  const auto corpus = make_discriminator_corpus(8, 16, 16, 9);
  const auto model = train_discriminator(corpus, TrainConfig{.epochs = 1, .batch_size = 4},
                                         DiscriminatorOptions{.shading_only = true}, kTiny);
  const auto s = test::random_field<ShadingField>(16, 16, 1);
  EXPECT_EQ(model.score(test::random_normals(16, 16, 2), s).global,
            model.score(test::random_normals(16, 16, 3), s).global);
}

TEST(Metrics, RocAuc) {
  const double pos[] = {0.8, 0.4}, neg[] = {0.5, 0.1};
  EXPECT_DOUBLE_EQ(roc_auc(pos, neg), 0.75);
  const double hi[] = {0.9, 0.95}, lo[] = {0.1, 0.2};
  EXPECT_DOUBLE_EQ(roc_auc(hi, lo), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(lo, hi), 0.0);
  const double tie[] = {0.5};
  EXPECT_DOUBLE_EQ(roc_auc(tie, tie), 0.5);
}

TEST(Metrics, IouAndThreshold) {
  Mask a(2, 2), b(2, 2);
  a(0, 0) = a(0, 1) = 1.0f;
  b(0, 1) = b(1, 1) = 1.0f;
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(Mask(2, 2), Mask(2, 2)), 1.0);
  Raster map(1, 3, 1);
  map(0, 0) = 0.2f;
  map(0, 1) = 0.5f;
  map(0, 2) = 0.7f;
  const Mask low = below_threshold(map, 0.5f);
  EXPECT_EQ(low(0, 0), 1.0f);
  EXPECT_EQ(low(0, 1), 0.0f);
  EXPECT_EQ(low(0, 2), 0.0f);
}

}  // namespace
}  // namespace rpnr
