#pragma once

#include <string>

namespace crowdserve {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  bool operator==(const GeoPoint&) const = default;
};

bool valid_coordinates(double lat, double lon);

// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine_m(GeoPoint a, GeoPoint b);

// Axis-aligned lat/lon rectangle. Edges are inclusive; sibling cells share
// edges, routing between them uses quadrant_of().
struct BoundingBox {
  double lat_min = -90.0;
  double lat_max = 90.0;
  double lon_min = -180.0;
  double lon_max = 180.0;

  static BoundingBox world() { return BoundingBox{}; }

  bool valid() const {
    return lat_min <= lat_max && lon_min <= lon_max &&
           valid_coordinates(lat_min, lon_min) && valid_coordinates(lat_max, lon_max);
  }
  bool contains(GeoPoint p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
  double lat_mid() const { return 0.5 * (lat_min + lat_max); }
  double lon_mid() const { return 0.5 * (lon_min + lon_max); }
  double width_m() const;  // length of the longer parallel edge

  // Quadrant layout: bit 0 = east (lon >= lon_mid), bit 1 = north (lat >= lat_mid).
  int quadrant_of(GeoPoint p) const {
    return (p.lat >= lat_mid() ? 2 : 0) | (p.lon >= lon_mid() ? 1 : 0);
  }
  BoundingBox quadrant(int q) const {
    BoundingBox b = *this;
    ((q & 2) ? b.lat_min : b.lat_max) = lat_mid();
    ((q & 1) ? b.lon_min : b.lon_max) = lon_mid();
    return b;
  }
};

// Exact great-circle distance from q to the nearest point of box, 0 if inside.
// Per-edge optima are solved on the sphere (not by naive lat/lon clamping),
// so the value is a true lower bound for the distance to any point in box.
double min_distance_m(GeoPoint q, const BoundingBox& box);

// Quadrant-digit path ('0'..'3') of the depth-`depth` cell containing p.
std::string cell_path(GeoPoint p, int depth, const BoundingBox& world = BoundingBox::world());

}  // namespace crowdserve
