#pragma once

#include <span>
#include <vector>

#include "surgirl/mlp.hpp"

namespace surgirl {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;
// Largest squashed action magnitude. tanh rounds to exactly 1.0 in double
// precision once |pre| exceeds ~19, which would put the action outside the
// open interval where the squashed log-density is defined.
inline constexpr double kSquashMax = 1.0 - 1e-12;

// tanh squash nudged into the open interval (-1, 1).
double squash_action(double pre);

// Diagonal Gaussian head, log_std clamped to [kLogStdMin, kLogStdMax].
struct GaussianHeadOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
};

struct SquashedSample {
  std::vector<double> action;      // in (-1, 1)^d
  std::vector<double> pre_squash;  // mean + std * noise
  double log_prob = 0.0;
};

// Reparameterized tanh-squashed sample: action = tanh(mean + exp(log_std) * noise),
// log_prob with the change-of-variables correction.
SquashedSample gaussian_sample(const GaussianHeadOutput& head,
                               std::span<const double> noise);

// Log-density of the component's own reparameterized sample, evaluated from
// the standard-normal noise instead of inverting the squash. Identical in
// exact arithmetic to squashed_log_prob at action = tanh(mean + std * noise),
// but stays bounded when the pre-squash value saturates tanh.
double sampled_log_prob(std::span<const double> log_std,
                        std::span<const double> noise,
                        std::span<const double> action);

// Log-density of the tanh-squashed Gaussian at `action` (all |a_i| < 1).
double squashed_log_prob(std::span<const double> mean,
                         std::span<const double> log_std,
                         std::span<const double> action);

// Gradients of squashed_log_prob. Each output accumulates into the given
// buffers (sized d); d_action may be null.
void squashed_log_prob_grad(std::span<const double> mean,
                            std::span<const double> log_std,
                            std::span<const double> action, double upstream,
                            std::span<double> d_mean, std::span<double> d_log_std,
                            std::span<double> d_action);

double clamp_log_std(double raw);

}  // namespace surgirl
