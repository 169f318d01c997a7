#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ttfs/metrics.hpp"

using namespace ttfs;

TEST(PowerProxy, Examples) {
  EXPECT_EQ(power_proxy({12, 0}, 1.0), 12.0);
  EXPECT_EQ(power_proxy({0, 5}, 10.0), 50.0);
  EXPECT_EQ(power_proxy({}, 1.0), 0.0);
  EXPECT_THROW(power_proxy({1, 1}, -0.5), ConfigError);
}

TEST(PowerProxy, LinearInWeight) {
  const OpCounters c{1234, 567};
  for (double w : {0.0, 0.25, 1.0, 3.0}) {
    EXPECT_DOUBLE_EQ(power_proxy(c, w), power_proxy(c, 0.0) + w * 567.0);
  }
}

TEST(Accuracy, Examples) {
  const std::vector<int> labels{0, 1, 2, 3};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  EXPECT_EQ(accuracy(std::vector<int>{1, 2, 3, 0}, labels), 0.0);
  EXPECT_EQ(accuracy(std::vector<int>{0, 1, 2, 0}, labels), 0.75);
  EXPECT_THROW(accuracy(std::vector<int>{0}, labels), ShapeError);
}

TEST(Psnr, Examples) {
  const std::vector<double> a(100, 0.5);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  std::vector<double> b = a;
  for (auto& v : b) v += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_NEAR(psnr(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, std::vector<double>(3, 0.0)), ShapeError);
}

namespace {

std::vector<double> gradient_image(std::size_t n) {
  std::vector<double> img(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) img[y * n + x] = (x + 2.0 * y) / (3.0 * (n - 1));
  }
  return img;
}

// Direct two-pass evaluation with a 2-D Gaussian built in one go.
double ssim_oracle(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  const int r = 5;
  double w[11][11];
  double norm = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      w[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      norm += w[dy + r][dx + r];
    }
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (std::size_t cy = r; cy + r < n; ++cy) {
    for (std::size_t cx = r; cx + r < n; ++cx) {
      double ma = 0.0, mb = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const std::size_t i = (cy + dy) * n + cx + dx;
          ma += w[dy + r][dx + r] / norm * a[i];
          mb += w[dy + r][dx + r] / norm * b[i];
        }
      }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const std::size_t i = (cy + dy) * n + cx + dx;
          const double k = w[dy + r][dx + r] / norm;
          va += k * (a[i] - ma) * (a[i] - ma);
          vb += k * (b[i] - mb) * (b[i] - mb);
          cov += k * (a[i] - ma) * (b[i] - mb);
        }
      }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST(Ssim, IdenticalAndConstant) {
  const auto img = gradient_image(16);
  EXPECT_DOUBLE_EQ(ssim(img, img, 16, 16), 1.0);
  const std::vector<double> c(256, 0.3);
  EXPECT_DOUBLE_EQ(ssim(c, c, 16, 16), 1.0);
}

TEST(Ssim, InvertedImageMatchesDirectFormula) {
  const auto img = gradient_image(16);
  std::vector<double> inv(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) inv[i] = 1.0 - img[i];
  const double got = ssim(img, inv, 16, 16);
  EXPECT_LT(got, 0.0);
  EXPECT_NEAR(got, ssim_oracle(img, inv, 16), 1e-12);
}

TEST(Ssim, NoisyImageMatchesDirectFormula) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(20 * 20), b(20 * 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = u(rng);
    b[i] = std::clamp(a[i] + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
  }
  EXPECT_NEAR(ssim(a, b, 20, 20), ssim_oracle(a, b, 20), 1e-12);
}

TEST(Ssim, ConstantShiftOfBothImages) {
  const auto a = gradient_image(16);
  std::vector<double> b = a;
  for (std::size_t y = 0; y < 16; ++y) {
    for (std::size_t x = 0; x < 16; ++x) b[y * 16 + x] += ((x + y) % 2 ? 0.005 : -0.005);
  }
  const double base = ssim(a, b, 16, 16);
  for (double c : {0.01, 0.05, 0.1}) {
    std::vector<double> a2 = a, b2 = b;
    for (auto& v : a2) v += c;
    for (auto& v : b2) v += c;
    EXPECT_NEAR(ssim(a2, b2, 16, 16), base, 1e-6);
  }
}

TEST(Ssim, TooSmallImage) {
  const std::vector<double> img(100, 0.5);
  EXPECT_THROW(ssim(img, img, 10, 10), ShapeError);
}

TEST(ConversionError, MeanAndMax) {
  const auto e = conversion_error({{0.5, 0.2}, {1.0}}, {{0.5, 0.3}, {0.6}});
  ASSERT_EQ(e.size(), 2u);
  EXPECT_NEAR(e[0].mean, 0.05, 1e-15);
  EXPECT_NEAR(e[0].max, 0.1, 1e-15);
  EXPECT_NEAR(e[1].max, 0.4, 1e-15);
  ErrorAccumulator acc;
  acc.add({{0.5, 0.2}, {1.0}}, {{0.5, 0.3}, {0.6}});
  acc.add({{0.0, 0.0}, {0.0}}, {{0.0, 0.0}, {0.0}});
  EXPECT_NEAR(acc.result()[0].mean, 0.025, 1e-15);
  EXPECT_NEAR(acc.result()[1].max, 0.4, 1e-15);
}

TEST(Histogram, BoundarySpikesFillLastBin) {
  SpikeHistogram h(3, 10);
  h.add({1, std::vector<double>(7, 2.0)});
  EXPECT_EQ(h.counts(1)[19], 7u);
  for (std::size_t b = 0; b < 19; ++b) EXPECT_EQ(h.counts(1)[b], 0u);
  EXPECT_EQ(h.total_out_of_window(), 0u);
}

TEST(Histogram, UniformTimesAreFlat) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1.0, 2.0);
  const std::size_t n = 20000, bins = 10;
  SpikeFrame f{1, std::vector<double>(n)};
  for (auto& t : f.times) t = u(rng);
  SpikeHistogram h(2, bins);
  h.add(f);
  const double p = 1.0 / bins;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (std::size_t b = 0; b < bins; ++b) {
    EXPECT_NEAR(static_cast<double>(h.counts(1)[bins + b]), n * p, 3.0 * sigma);
  }
}

TEST(Histogram, OutOfWindowAndMissing) {
  SpikeHistogram h(3, 4);
  h.add({2, {0.4, 2.5, kNoSpike, 3.0}});
  EXPECT_EQ(h.out_of_window(2), 1u);
  EXPECT_EQ(h.missing(2), 1u);
  EXPECT_EQ(h.counts(2)[1], 1u);
  EXPECT_NEAR(h.out_of_window_fraction(), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(h.bin_start(5), 1.25);
  EXPECT_DOUBLE_EQ(h.bin_end(5), 1.5);
}

TEST(Histogram, MergeIsAssociative) {
  SpikeHistogram a(2, 5), b(2, 5), c(2, 5);
  a.add({0, {0.1, 0.2}});
  b.add({1, {1.5, 2.0}});
  c.add({1, {0.3, kNoSpike}});
  SpikeHistogram left = a;
  left.merge(b);
  left.merge(c);
  SpikeHistogram bc = b;
  bc.merge(c);
  SpikeHistogram right = a;
  right.merge(bc);
  for (std::size_t f = 0; f < 2; ++f) {
    EXPECT_EQ(left.counts(f), right.counts(f));
    EXPECT_EQ(left.out_of_window(f), right.out_of_window(f));
    EXPECT_EQ(left.missing(f), right.missing(f));
  }
  EXPECT_THROW(a.merge(SpikeHistogram(3, 5)), ShapeError);
}

TEST(RunReport, JsonRoundTrip) {
  RunReport r;
  r.task = "classification";
  r.split = "test";
  r.samples = 4;
  r.backend = "discrete";
  r.threshold = "dynamic";
  r.steps_per_window = 50;
  r.ann_accuracy = 0.75;
  r.snn_accuracy = 0.5;
  r.argmax_agreement = 0.75;
  r.conversion_error = {{0.01, 0.02}};
  r.counters = {100, 200};
  r.power_proxy = 300;
  r.histogram = SpikeHistogram(2, 3);
  r.histogram.add({1, {1.1, 1.9, 2.0, 0.5, kNoSpike}});
  const RunReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(back.task, r.task);
  EXPECT_EQ(back.samples, r.samples);
  EXPECT_EQ(back.ann_accuracy, r.ann_accuracy);
  EXPECT_EQ(back.snn_accuracy, r.snn_accuracy);
  EXPECT_EQ(back.counters, r.counters);
  EXPECT_EQ(back.conversion_error[0].max, 0.02);
  EXPECT_EQ(back.histogram.counts(1), r.histogram.counts(1));
  EXPECT_EQ(back.histogram.out_of_window(1), 1u);
  EXPECT_EQ(back.histogram.missing(1), 1u);
  EXPECT_DOUBLE_EQ(back.accuracy_delta(), 0.25);
}
