#include "moltailor/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moltailor/random.h"

namespace moltailor {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps, double floor) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return grad_check_params([&] { return f(leaf); }, {leaf}, eps, 0, 0, floor);
}

double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps,
                         std::size_t max_checks, std::uint64_t seed, double floor) {
  for (Tensor p : params) p.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  std::vector<std::pair<std::size_t, std::size_t>> sites;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].size(); ++i) sites.emplace_back(k, i);
  if (max_checks > 0 && sites.size() > max_checks) {
    Rng rng(seed);
    rng.shuffle(std::span(sites));
    sites.resize(max_checks);
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (const auto& [k, i] : sites) {
    Tensor p = params[k];
    double& v = p.mutable_data()[i];
    const double orig = v;
    v = orig + eps;
    const double up = f().item();
    v = orig - eps;
    const double down = f().item();
    v = orig;
    worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * eps), floor));
  }
  return worst;
}

}  // namespace moltailor
