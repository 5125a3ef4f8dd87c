#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "han/model.hpp"
#include "han/rng.hpp"
#include "han/skeleton.hpp"
#include "han/tensor.hpp"

namespace han::testing {

struct GradCheck {
  double max_relative_error = 0;
  std::string worst;  // "<name>[index]"
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares tape gradients of a scalar loss with central differences.
inline GradCheck check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                 const std::vector<std::pair<std::string, Tensor<double>>>& params,
                                 double step = 1e-5) {
  for (auto [name, p] : params) p.clear_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(loss_fn());
  }
  GradCheck result;
  for (auto [name, p] : params) {
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                     : std::vector<double>(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p.mutable_data()[i] = saved + step;
      const double up = loss_fn().item();
      p.mutable_data()[i] = saved - step;
      const double down = loss_fn().item();
      p.mutable_data()[i] = saved;
      const double err = relative_error(analytic[i], (up - down) / (2 * step));
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                                    double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

// Six single-joint parts over six joints.
inline HandPartition toy_partition() {
  return HandPartition("toy6", 6, {{{0}, {1}, {2}, {3}, {4}, {5}}});
}

// Two-joint fingers and a single palm joint over eleven joints.
inline HandPartition toy_partition_11() {
  return HandPartition("toy11", 11, {{{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {0}}});
}

inline SkeletonSequence random_sequence(std::size_t frames, std::size_t joints, Rng& rng,
                                        std::size_t label = 0) {
  std::vector<double> coords(frames * joints * 3);
  for (double& c : coords) c = rng.uniform(-1.0, 1.0);
  return SkeletonSequence(frames, joints, std::move(coords), label);
}

inline HanConfig tiny_config(std::size_t d_model = 8, std::size_t heads = 2, std::size_t d_head = 4,
                             std::size_t frames = 2) {
  HanConfig c;
  c.attention.d_model = d_model;
  c.attention.n_heads = heads;
  c.attention.d_head = d_head;
  c.frames = frames;
  c.class_count = 3;
  c.joint_count = 6;
  c.partition = toy_partition();
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("han_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace han::testing
