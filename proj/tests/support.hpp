#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "seediff/seediff.hpp"

namespace seediff::test {

/// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("seediff_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(element_count(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline SoftMask random_mask(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SoftMask m(rows, cols);
  for (auto& x : m.data) x = u(rng);
  return m;
}

/// SA tensor (s,s,s,s) from a slice function f(i, j, p, q).
template <typename F>
Tensor sa_from(int s, F&& f) {
  const auto n = static_cast<std::size_t>(s);
  std::vector<float> v;
  v.reserve(n * n * n * n);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      for (int p = 0; p < s; ++p)
        for (int q = 0; q < s; ++q) v.push_back(static_cast<float>(f(i, j, p, q)));
  return Tensor({n, n, n, n}, std::move(v));
}

/// Small synthetic case at the given scales, cheap enough for unit tests.
inline synth::SyntheticCase small_case(std::vector<int> sides, std::uint64_t seed = 1,
                                       DumpMode mode = DumpMode::aggregated) {
  auto spec = synth::clean_disk();
  spec.scales.clear();
  for (int s : sides) spec.scales.push_back(Scale::of(s));
  spec.seed_scale = spec.scales.front();
  spec.seed = seed;
  spec.mode = mode;
  return synth::make_synthetic_dump(spec);
}

inline PipelineConfig config_for(std::vector<int> sides) {
  PipelineConfig c;
  c.scale_schedule.clear();
  for (int s : sides) c.scale_schedule.push_back(Scale::of(s));
  c.ca_seed_scale = c.scale_schedule.front();
  c.ca_sa_scale = c.scale_schedule.size() > 1 ? c.scale_schedule[1] : c.scale_schedule[0];
  return c;
}

}  // namespace seediff::test
