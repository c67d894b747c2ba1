#include "numerics.hpp"

#include <cmath>
#include <limits>

#include "distributions.hpp"
#include "errors.hpp"

namespace maxmix {

double invert_increasing(const std::function<double(double)>& f, double target,
                         double lo, double hi, double rel_tol) {
  if (!(lo < hi)) throw DomainError("invert_increasing: need lo < hi");
  int guard = 0;
  while (f(lo) > target) {
    lo -= (hi - lo);
    if (++guard > 200) throw NumericError("invert_increasing: no lower bracket");
  }
  guard = 0;
  while (f(hi) < target) {
    hi += (hi - lo);
    if (++guard > 200) throw NumericError("invert_increasing: no upper bracket");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= rel_tol * std::max(1.0, std::fabs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

// 32-point Gauss-Legendre nodes/weights on [-1,1] (positive half; symmetric)
constexpr int kGlHalf = 16;
constexpr double kGlX[kGlHalf] = {
    0.0483076656877383162348126, 0.1444719615827964934851864,
    0.2392873622521370745446032, 0.3318686022821276497799168,
    0.4213512761306353453641194, 0.5068999089322293900237475,
    0.5877157572407623290407455, 0.6630442669302152009751152,
    0.7321821187402896803874267, 0.7944837959679424069630973,
    0.8493676137325699701336930, 0.8963211557660521239653072,
    0.9349060759377396891709191, 0.9647622555875064307738119,
    0.9856115115452683354001750, 0.9972638618494815635449811};
constexpr double kGlW[kGlHalf] = {
    0.0965400885147278005667648, 0.0956387200792748594190820,
    0.0938443990808045656391802, 0.0911738786957638847128686,
    0.0876520930044038111427715, 0.0833119242269467552221991,
    0.0781938957870703064717409, 0.0723457941088485062253994,
    0.0658222227763618468376501, 0.0586840934785355471452836,
    0.0509980592623761761961632, 0.0428358980222266806568786,
    0.0342738629130214331026877, 0.0253920653092620594557526,
    0.0162743947309056706051706, 0.0070186100094700966004071};

double phi(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

}  // namespace

double bivariate_normal_cdf(double h, double k, double rho) {
  if (!(rho > -1.0 && rho < 1.0)) {
    if (rho == 1.0) return normal_cdf(std::min(h, k));
    if (rho == -1.0) {
      const double s = normal_cdf(h) + normal_cdf(k) - 1.0;
      return s > 0.0 ? s : 0.0;
    }
    throw DomainError("bivariate_normal_cdf: |rho| must be <= 1");
  }
  // integrate Phi((k - rho z)/sqrt(1-rho^2)) phi(z) over z < h, z > -8.5,
  // panel by panel so the quadrature resolves the Gaussian bump
  const double lo = -8.5;
  const double hi = std::min(h, 8.5);
  if (hi <= lo) return 0.0;
  const double denom = std::sqrt(1.0 - rho * rho);
  const int panels = static_cast<int>(std::ceil(hi - lo));
  const double width = (hi - lo) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double c = 0.5 * width;
    const double m = a + c;
    for (int i = 0; i < kGlHalf; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double z = m + sgn * c * kGlX[i];
        acc += c * kGlW[i] * phi(z) * normal_cdf((k - rho * z) / denom);
      }
    }
  }
  return acc;
}

}  // namespace maxmix
