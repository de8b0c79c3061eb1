#include "proxbridge/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "proxbridge/core_model.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/rng.hpp"

namespace proxbridge {

using nlohmann::json;

namespace {

constexpr std::size_t kMedianRows = 2000;
constexpr std::uint64_t kMedianSeed = 0x6b65726e656cULL;

double sqdist(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

const char* family_name(BlockKernel::Family f) {
  switch (f) {
    case BlockKernel::Family::kConstant: return "constant";
    case BlockKernel::Family::kRbf: return "rbf";
    case BlockKernel::Family::kIndicator: return "indicator";
    case BlockKernel::Family::kPolynomial: return "polynomial";
    case BlockKernel::Family::kLinear: return "linear";
  }
  return "?";
}

json block_json(const BlockKernel& b) {
  json j{{"family", family_name(b.family)}};
  if (b.family == BlockKernel::Family::kRbf) j["bandwidth"] = b.bandwidth;
  if (b.family == BlockKernel::Family::kPolynomial) {
    j["degree"] = b.degree;
    j["offset"] = b.offset;
  }
  return j;
}

BlockKernel block_from(const json& j) {
  const std::string f = j.at("family").get<std::string>();
  if (f == "constant") return BlockKernel::constant();
  if (f == "rbf") return BlockKernel::rbf(j.value("bandwidth", 0.0));
  if (f == "indicator") return BlockKernel::indicator();
  if (f == "polynomial") return BlockKernel::polynomial(j.value("degree", 2), j.value("offset", 1.0));
  if (f == "linear") return BlockKernel::linear();
  throw ValidationError("unknown kernel family '" + f + "'");
}

void concat(const PointView& p, std::vector<double>& out) {
  out.assign(p.proxy.begin(), p.proxy.end());
  out.push_back(p.action.value);
  out.insert(out.end(), p.x.begin(), p.x.end());
}

// Median of nonzero pairwise distances among `rows` (each a vector).
double median_distance(const std::vector<std::vector<double>>& rows) {
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double s = std::sqrt(sqdist(rows[i], rows[j]));
      if (s > 0.0) d.push_back(s);
    }
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

}  // namespace

double BlockKernel::eval(std::span<const double> u, std::span<const double> v) const {
  switch (family) {
    case Family::kConstant:
      return 1.0;
    case Family::kRbf: {
      if (!(bandwidth > 0.0)) throw ConfigError("RBF bandwidth not resolved; call KernelSpec::resolved first");
      return std::exp(-sqdist(u, v) / (2.0 * bandwidth * bandwidth));
    }
    case Family::kIndicator: {
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] != v[i]) return 0.0;
      }
      return 1.0;
    }
    case Family::kPolynomial:
      return std::pow(dot(u, v) + offset, degree);
    case Family::kLinear:
      return dot(u, v);
  }
  return 0.0;
}

KernelSpec KernelSpec::product(BlockKernel proxy, BlockKernel action, BlockKernel x) {
  KernelSpec k;
  k.mode_ = Mode::kProduct;
  k.proxy_ = proxy;
  k.action_ = action;
  k.x_ = x;
  return k;
}

KernelSpec KernelSpec::joint(BlockKernel b) {
  KernelSpec k;
  k.mode_ = Mode::kJoint;
  k.proxy_ = b;
  return k;
}

KernelSpec KernelSpec::features(FeatureMap phi) {
  KernelSpec k;
  k.mode_ = Mode::kFeatures;
  k.phi_ = std::move(phi);
  return k;
}

KernelSpec KernelSpec::default_for(bool discrete_action) {
  return product(BlockKernel::rbf(), discrete_action ? BlockKernel::indicator() : BlockKernel::rbf(),
                 BlockKernel::rbf());
}

double KernelSpec::eval(const PointView& u, const PointView& v) const {
  switch (mode_) {
    case Mode::kProduct: {
      double k = proxy_.eval(u.proxy, v.proxy);
      if (k == 0.0) return 0.0;
      if (action_.family == BlockKernel::Family::kIndicator && u.action.index >= 0 && v.action.index >= 0) {
        if (u.action.index != v.action.index) return 0.0;
      } else {
        const double ua = u.action.value;
        const double va = v.action.value;
        k *= action_.eval({&ua, 1}, {&va, 1});
      }
      return k * x_.eval(u.x, v.x);
    }
    case Mode::kJoint: {
      thread_local std::vector<double> cu, cv;
      concat(u, cu);
      concat(v, cv);
      return proxy_.eval(cu, cv);
    }
    case Mode::kFeatures:
      return phi_->eval(u).dot(phi_->eval(v));
  }
  return 0.0;
}

bool KernelSpec::needs_resolution() const {
  if (mode_ == Mode::kFeatures) return false;
  if (mode_ == Mode::kJoint) return proxy_.needs_bandwidth();
  return proxy_.needs_bandwidth() || action_.needs_bandwidth() || x_.needs_bandwidth();
}

KernelSpec KernelSpec::resolved(const ObservationTable& table, ProxyRole role) const {
  if (!needs_resolution()) return *this;
  if (table.empty()) throw ConfigError("cannot resolve an automatic RBF bandwidth from an empty table");
  const auto n = static_cast<std::size_t>(table.n());
  std::vector<std::size_t> rows;
  if (n <= kMedianRows) {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  } else {
    Rng rng(kMedianSeed);
    rows = rng.permutation(n);
    rows.resize(kMedianRows);
  }
  auto block_median = [&](auto&& extract) {
    std::vector<std::vector<double>> pts;
    pts.reserve(rows.size());
    for (std::size_t r : rows) pts.push_back(extract(table.point(static_cast<Eigen::Index>(r), role)));
    return median_distance(pts);
  };
  KernelSpec out = *this;
  if (mode_ == Mode::kJoint) {
    out.proxy_.bandwidth = block_median([](const PointView& p) {
      std::vector<double> c;
      concat(p, c);
      return c;
    });
    return out;
  }
  if (proxy_.needs_bandwidth()) {
    out.proxy_.bandwidth = block_median([](const PointView& p) { return std::vector<double>(p.proxy.begin(), p.proxy.end()); });
  }
  if (action_.needs_bandwidth()) {
    out.action_.bandwidth = block_median([](const PointView& p) { return std::vector<double>{p.action.value}; });
  }
  if (x_.needs_bandwidth()) {
    out.x_.bandwidth = block_median([](const PointView& p) { return std::vector<double>(p.x.begin(), p.x.end()); });
  }
  return out;
}

json KernelSpec::to_json() const {
  switch (mode_) {
    case Mode::kProduct:
      return {{"mode", "product"}, {"proxy", block_json(proxy_)}, {"action", block_json(action_)}, {"x", block_json(x_)}};
    case Mode::kJoint:
      return {{"mode", "joint"}, {"kernel", block_json(proxy_)}};
    case Mode::kFeatures:
      return {{"mode", "features"}, {"features", phi_->to_json()}};
  }
  return {};
}

KernelSpec KernelSpec::from_json(const json& j) {
  const std::string mode = j.value("mode", "product");
  if (mode == "product") {
    return product(j.contains("proxy") ? block_from(j.at("proxy")) : BlockKernel::rbf(),
                   j.contains("action") ? block_from(j.at("action")) : BlockKernel::indicator(),
                   j.contains("x") ? block_from(j.at("x")) : BlockKernel::rbf());
  }
  if (mode == "joint") return joint(block_from(j.at("kernel")));
  if (mode == "features") return features(FeatureMap::from_json(j.at("features")));
  throw ValidationError("unknown kernel mode '" + mode + "'");
}

}  // namespace proxbridge
