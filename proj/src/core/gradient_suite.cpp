#include "gradient_suite.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "grad_check.hpp"
#include "viewnet.hpp"

namespace viewgen {

namespace {

template <typename T>
using LossFn = std::function<Tensor<T>(Tape<T>&)>;

template <typename T>
Tensor<T> uniform(Shape shape, double lo, double hi, std::uint64_t seed) {
  return make_tensor<T>(shape, Init::uniform(lo, hi, seed));
}

// Projects an op output onto a fixed random direction so every output
// element contributes to the scalar.
template <typename T>
Tensor<T> project(Tape<T>& tape, const Tensor<T>& out, const Tensor<T>& direction) {
  return ops::sum(tape, ops::mul(tape, out, direction));
}

template <typename T>
GradSuiteEntry check(const std::string& name, std::uint64_t seed, const LossFn<T>& f,
                     std::vector<Tensor<T>> targets, double eps) {
  const auto r = grad_check<T>(f, std::move(targets), eps);
  return {name, seed, r.max_relative_error, r.coordinates};
}

template <typename T>
void op_checks(std::uint64_t s, double eps, std::vector<GradSuiteEntry>& out) {
  const std::uint64_t k = s * 1000;
  {
    auto x = uniform<T>({2, 3, 6, 6}, -1, 1, k + 1);
    auto w = uniform<T>({4, 3, 3, 3}, -0.5, 0.5, k + 2);
    auto b = uniform<T>({4}, -0.5, 0.5, k + 3);
    auto d = uniform<T>({2, 4, 6, 6}, -1, 1, k + 4);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::conv2d(t, x, w, b), d); };
    out.push_back(check<T>("conv2d", s, f, {x, w, b}, eps));
  }
  {
    // Distinct values keep every window maximum away from a tie.
    const std::size_t n = 2 * 2 * 6 * 6;
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(0.01 * ((i * 37 + s * 11) % n));
    auto x = Tensor<T>({2, 2, 6, 6}, v);
    auto d = uniform<T>({2, 2, 3, 3}, -1, 1, k + 5);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::maxpool2x2(t, x), d); };
    out.push_back(check<T>("maxpool2x2", s, f, {x}, eps));
  }
  {
    auto x = uniform<T>({3, 7}, -1, 1, k + 6);
    auto w = uniform<T>({5, 7}, -1, 1, k + 7);
    auto b = uniform<T>({5}, -1, 1, k + 8);
    auto d = uniform<T>({3, 5}, -1, 1, k + 9);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::fully_connected(t, x, w, b), d); };
    out.push_back(check<T>("fully_connected", s, f, {x, w, b}, eps));
  }
  {
    // |x| >= 0.1, far from the kink relative to eps.
    auto x = uniform<T>({2, 3, 4, 4}, 0.1, 1, k + 10);
    auto xs = x.data_mut();
    for (std::size_t i = 0; i < xs.size(); i += 2) xs[i] = -xs[i];
    auto d = uniform<T>({2, 3, 4, 4}, -1, 1, k + 11);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::relu(t, x), d); };
    out.push_back(check<T>("relu", s, f, {x}, eps));
  }
  {
    auto x = uniform<T>({4, 3, 4, 4}, -1, 1, k + 12);
    auto g = uniform<T>({3}, 0.5, 1.5, k + 13);
    auto b = uniform<T>({3}, -0.5, 0.5, k + 14);
    auto d = uniform<T>({4, 3, 4, 4}, -1, 1, k + 15);
    auto state = std::make_shared<ops::BatchNormState<T>>(ops::BatchNormState<T>::create(3));
    LossFn<T> f = [=](Tape<T>& t) {
      return project(t, ops::batchnorm(t, x, g, b, *state, ops::Mode::kTrain), d);
    };
    out.push_back(check<T>("batchnorm", s, f, {x, g, b}, eps));
  }
  {
    auto x = uniform<T>({2, 2, 3, 5}, -1, 1, k + 16);
    auto d = uniform<T>({2, 2, 6, 10}, -1, 1, k + 17);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::bilinear_upsample2x(t, x), d); };
    out.push_back(check<T>("bilinear_upsample2x", s, f, {x}, eps));
  }
  {
    auto a = uniform<T>({2, 2, 3, 3}, -1, 1, k + 18);
    auto b = uniform<T>({2, 1, 3, 3}, -1, 1, k + 19);
    auto d = uniform<T>({2, 3, 3, 3}, -1, 1, k + 20);
    LossFn<T> f = [=](Tape<T>& t) { return project(t, ops::concat_channels(t, a, b), d); };
    out.push_back(check<T>("concat_channels", s, f, {a, b}, eps));
  }
  {
    auto p = uniform<T>({2, 3, 4, 4}, 0, 1, k + 21);
    auto q = uniform<T>({2, 3, 4, 4}, 0, 1, k + 22);
    LossFn<T> f = [=](Tape<T>& t) { return ops::mse_loss(t, p, q); };
    out.push_back(check<T>("mse_loss", s, f, {p}, eps));
  }
}

template <typename T>
GradSuiteEntry network_check(const std::string& model, std::uint64_t s, double eps) {
  const auto cfg = ViewNetConfig::preset(model);
  auto net = std::make_shared<ViewNet<T>>(ViewNet<T>::build(cfg, s));
  const auto n = static_cast<std::size_t>(cfg.input_size);
  const auto ch = static_cast<std::size_t>(cfg.input_channels);
  auto x = uniform<T>({2, ch, n, n}, 0, 1, s + 100);
  auto rgb = uniform<T>({2, 3, n, n}, 0, 1, s + 200);
  auto depth = uniform<T>({2, 1, n, n}, 0, 1, s + 300);
  const std::vector<AngleQuery> qs{{12.0 * static_cast<double>(s), 10}, {-48, 0}};
  LossFn<T> f = [=](Tape<T>& t) {
    auto o = net->forward(t, x, qs, ops::Mode::kTrain);
    return ops::add(t, ops::mse_loss(t, o.rgb, rgb), ops::mse_loss(t, o.depth, depth));
  };
  std::vector<Tensor<T>> params;
  for (auto& p : net->parameters()) params.push_back(p.second);
  return check<T>("viewnet", s, f, params, eps);
}

}  // namespace

template <typename T>
std::vector<GradSuiteEntry> gradient_suite(const std::string& model, int seeds, double eps,
                                           bool include_network) {
  require(seeds >= 1, ErrorCode::kInvalidArgument, "gradient check needs at least one seed");
  require(eps > 0, ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  std::vector<GradSuiteEntry> out;
  for (int i = 1; i <= seeds; ++i) {
    const auto s = static_cast<std::uint64_t>(i);
    op_checks<T>(s, eps, out);
    if (include_network) out.push_back(network_check<T>(model, s, eps));
  }
  return out;
}

double max_error(const std::vector<GradSuiteEntry>& entries) {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

template std::vector<GradSuiteEntry> gradient_suite<float>(const std::string&, int, double, bool);
template std::vector<GradSuiteEntry> gradient_suite<double>(const std::string&, int, double, bool);

}  // namespace viewgen
