#include "surgirl/gaussian.hpp"

#include <algorithm>
#include <cmath>

namespace surgirl {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)
}

double clamp_log_std(double raw) {
  return std::clamp(raw, kLogStdMin, kLogStdMax);
}

double squash_action(double pre) {
  return std::clamp(std::tanh(pre), -kSquashMax, kSquashMax);
}

SquashedSample gaussian_sample(const GaussianHeadOutput& head,
                               std::span<const double> noise) {
  std::size_t d = head.mean.size();
  if (noise.size() != d || head.log_std.size() != d) {
    throw ShapeError("gaussian_sample: dimension mismatch");
  }
  SquashedSample out;
  out.action.resize(d);
  out.pre_squash.resize(d);
  double lp = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double ls = clamp_log_std(head.log_std[i]);
    double z = head.mean[i] + std::exp(ls) * noise[i];
    double a = squash_action(z);
    out.pre_squash[i] = z;
    out.action[i] = a;
    lp += -kHalfLog2Pi - ls - 0.5 * noise[i] * noise[i];
    lp -= std::log(1.0 - a * a + kSquashEps);
  }
  out.log_prob = lp;
  return out;
}

double sampled_log_prob(std::span<const double> log_std,
                        std::span<const double> noise,
                        std::span<const double> action) {
  std::size_t d = log_std.size();
  if (noise.size() != d || action.size() != d) {
    throw ShapeError("sampled_log_prob: dimension mismatch");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double ls = clamp_log_std(log_std[i]);
    double a = action[i];
    lp += -kHalfLog2Pi - ls - 0.5 * noise[i] * noise[i];
    lp -= std::log(1.0 - a * a + kSquashEps);
  }
  return lp;
}

double squashed_log_prob(std::span<const double> mean,
                         std::span<const double> log_std,
                         std::span<const double> action) {
  std::size_t d = mean.size();
  if (log_std.size() != d || action.size() != d) {
    throw ShapeError("squashed_log_prob: dimension mismatch");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double a = action[i];
    if (!(a > -1.0 && a < 1.0)) {
      throw NumericError("squashed_log_prob: action outside (-1,1)");
    }
    double ls = clamp_log_std(log_std[i]);
    double sigma = std::exp(ls);
    double z = std::atanh(a);
    double t = (z - mean[i]) / sigma;
    lp += -kHalfLog2Pi - ls - 0.5 * t * t;
    lp -= std::log(1.0 - a * a + kSquashEps);
  }
  return lp;
}

void squashed_log_prob_grad(std::span<const double> mean,
                            std::span<const double> log_std,
                            std::span<const double> action, double upstream,
                            std::span<double> d_mean, std::span<double> d_log_std,
                            std::span<double> d_action) {
  std::size_t d = mean.size();
  for (std::size_t i = 0; i < d; ++i) {
    double a = action[i];
    double ls = clamp_log_std(log_std[i]);
    double sigma = std::exp(ls);
    double z = std::atanh(a);
    double t = (z - mean[i]) / sigma;
    d_mean[i] += upstream * t / sigma;
    // Zero gradient where the clamp is active.
    if (log_std[i] > kLogStdMin && log_std[i] < kLogStdMax) {
      d_log_std[i] += upstream * (t * t - 1.0);
    }
    if (!d_action.empty()) {
      double dz_da = 1.0 / (1.0 - a * a);
      d_action[i] += upstream * (-(t / sigma) * dz_da + 2.0 * a / (1.0 - a * a + kSquashEps));
    }
  }
}

}  // namespace surgirl
