/**
 * Equirectangular conversions shared with the lighting service.
 *
 * Convention: y is up, the panorama center column faces +z, longitude
 * increases eastward toward +x.  Continuous panorama coordinates (u, v)
 * with u in [0, W], v in [0, H] map to azimuth phi = 2*pi*u/W - pi and
 * polar angle theta = pi*v/H.
 */

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v.x, v.y, v.z);
  if (!(n > 1e-12)) {
    throw new Error("cannot normalize a zero vector");
  }
  return { x: v.x / n, y: v.y / n, z: v.z / n };
}

export function pixelToDir(u: number, v: number, width: number, height: number): Vec3 {
  const phi = (2.0 * Math.PI * u) / width - Math.PI;
  const theta = (Math.PI * v) / height;
  const st = Math.sin(theta);
  return { x: st * Math.sin(phi), y: Math.cos(theta), z: st * Math.cos(phi) };
}

export function dirToPixel(d: Vec3, width: number, height: number): { u: number; v: number } {
  const unit = normalize(d);
  const phi = Math.atan2(unit.x, unit.z);
  const theta = Math.acos(Math.min(1.0, Math.max(-1.0, unit.y)));
  const u = (((phi + Math.PI) / (2.0 * Math.PI)) * width) % width;
  return { u, v: (theta / Math.PI) * height };
}

/** Display form: longitude/latitude in degrees, latitude positive upward. */
export function dirToLonLat(d: Vec3): { lon: number; lat: number } {
  const unit = normalize(d);
  const lon = (Math.atan2(unit.x, unit.z) * 180.0) / Math.PI;
  const lat = (Math.asin(Math.min(1.0, Math.max(-1.0, unit.y))) * 180.0) / Math.PI;
  return { lon, lat };
}

export function lonLatToDir(lonDeg: number, latDeg: number): Vec3 {
  const lon = (lonDeg * Math.PI) / 180.0;
  const lat = (latDeg * Math.PI) / 180.0;
  const cl = Math.cos(lat);
  return { x: cl * Math.sin(lon), y: Math.sin(lat), z: cl * Math.cos(lon) };
}

export function angleBetweenDeg(a: Vec3, b: Vec3): number {
  const ua = normalize(a);
  const ub = normalize(b);
  const dot = ua.x * ub.x + ua.y * ub.y + ua.z * ub.z;
  return (Math.acos(Math.min(1.0, Math.max(-1.0, dot))) * 180.0) / Math.PI;
}
