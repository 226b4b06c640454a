#pragma once

// Writes a u.data-format file drawn from a low-rank rating model so the
// MovieLens pipeline can be exercised without the real dataset.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

inline std::string write_synthetic_ratings(const std::string& name, int users = 943, int items = 1682,
                                           double density = 0.03, unsigned seed = 17) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> ua(static_cast<std::size_t>(users)), ub(ua.size());
  std::vector<double> ia(static_cast<std::size_t>(items)), ib(ia.size());
  for (auto* v : {&ua, &ub, &ia, &ib}) for (double& x : *v) x = uni(rng);
  long timestamp = 874965758;
  for (int u = 0; u < users; ++u) {
    for (int i = 0; i < items; ++i) {
      if (uni(rng) > density) continue;
      const double score = ua[u] * ia[i] + ub[u] * ib[i];
      const int rating = std::clamp(static_cast<int>(std::lround(1.0 + 2.0 * score)), 1, 5);
      out << u + 1 << '\t' << i + 1 << '\t' << rating << '\t' << timestamp++ << '\n';
    }
  }
  return path.string();
}
