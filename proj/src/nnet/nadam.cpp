#include "fetalseg/nnet/nadam.hpp"

#include <cmath>

namespace fseg::nn {

template <typename T>
Nadam<T>::Nadam(NadamConfig config, const std::vector<ParamRef<T>>& params) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

template <typename T>
void Nadam<T>::step(std::vector<ParamRef<T>>& params) {
  if (params.size() != m_.size()) throw ShapeError("nadam: parameter list changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].value.size() != m_[k].size() || params[k].grad.size() != m_[k].size())
      throw ShapeError("nadam: parameter shape changed: " + params[k].name);
    for (T g : params[k].grad)
      if (!std::isfinite(static_cast<double>(g))) throw DivergenceError("non-finite gradient in " + params[k].name);
  }

  const double t = static_cast<double>(++step_);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c_m = b1 / (1.0 - std::pow(b1, t + 1.0));
  const double c_g = (1.0 - b1) / (1.0 - std::pow(b1, t));
  const double c_v = 1.0 / (1.0 - std::pow(b2, t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].value;
    auto g = params[k].grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = c_m * m[i] + c_g * gi;
      const double v_hat = c_v * v[i];
      w[i] = static_cast<T>(w[i] - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

template class Nadam<float>;
template class Nadam<double>;

}  // namespace fseg::nn
