#include "crowdserve/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowdserve {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

double central_angle(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = lat1 * kDegToRad;
  const double p2 = lat2 * kDegToRad;
  const double dp = (lat2 - lat1) * kDegToRad;
  const double dl = (lon2 - lon1) * kDegToRad;
  const double sp = std::sin(0.5 * dp);
  const double sl = std::sin(0.5 * dl);
  const double a = sp * sp + std::cos(p1) * std::cos(p2) * sl * sl;
  return 2.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace

bool valid_coordinates(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

double haversine_m(GeoPoint a, GeoPoint b) {
  return kEarthRadiusM * central_angle(a.lat, a.lon, b.lat, b.lon);
}

double BoundingBox::width_m() const {
  double lat_widest;
  if (lat_min <= 0.0 && 0.0 <= lat_max) {
    lat_widest = 0.0;  // box spans the equator, the widest parallel
  } else {
    lat_widest = std::abs(lat_min) < std::abs(lat_max) ? lat_min : lat_max;
  }
  // Arc length along the parallel itself, not the great circle between corners.
  return (lon_max - lon_min) * kDegToRad * kEarthRadiusM * std::cos(lat_widest * kDegToRad);
}

double min_distance_m(GeoPoint q, const BoundingBox& box) {
  if (box.contains(q)) return 0.0;

  double best = std::numeric_limits<double>::infinity();
  const auto consider = [&](double lat, double lon) {
    best = std::min(best, haversine_m(q, {lat, lon}));
  };

  // Parallel edges (fixed lat): along a parallel the central angle is monotone
  // in |delta lon|, so the optimum is q.lon when inside the range, else an endpoint.
  for (double lat : {box.lat_min, box.lat_max}) {
    consider(lat, box.lon_min);
    consider(lat, box.lon_max);
    if (q.lon >= box.lon_min && q.lon <= box.lon_max) consider(lat, q.lon);
  }

  // Meridian edges (fixed lon): cos(angle) = A sin(lat) + B cos(lat) peaks at
  // atan2(A, B); evaluate it only when it falls inside the edge's lat range,
  // endpoints otherwise.
  const double phi = q.lat * kDegToRad;
  for (double lon : {box.lon_min, box.lon_max}) {
    consider(box.lat_min, lon);
    consider(box.lat_max, lon);
    const double dl = (lon - q.lon) * kDegToRad;
    const double peak_lat = std::atan2(std::sin(phi), std::cos(phi) * std::cos(dl)) / kDegToRad;
    if (peak_lat >= box.lat_min && peak_lat <= box.lat_max) consider(peak_lat, lon);
  }

  return best;
}

std::string cell_path(GeoPoint p, int depth, const BoundingBox& world) {
  std::string path;
  path.reserve(static_cast<std::size_t>(std::max(0, depth)));
  BoundingBox box = world;
  for (int level = 0; level < depth; ++level) {
    const int q = box.quadrant_of(p);
    path.push_back(static_cast<char>('0' + q));
    box = box.quadrant(q);
  }
  return path;
}

}  // namespace crowdserve
