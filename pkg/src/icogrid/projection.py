"""Conversions between equirectangular, cubemap and sphere-grid images.

Axis conventions:

* latitude = asin(z), longitude = atan2(y, x), both handled in degrees at
  the API surface,
* ERP row 0 is the northernmost row; the center of row r sits at latitude
  90 - (r + 0.5) * 180 / H, the center of column c at longitude
  -180 + (c + 0.5) * 360 / W,
* cubemap faces are ordered (+x, -x, +y, -y, +z, -z); face k maps in-face
  coordinates (u, v) in [-1, 1]^2 to the direction A + u * U + v * V with
  right-handed frames U x V = A (see FORMATS.md for the table).

Interpolation is bilinear with nested lerps so constant images are
reproduced bit exactly; sphere-grid rendering is nearest triangle with
optional supersampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SphereMesh, build_mesh, locate, pixel_centroids, pixel_count

CUBE_FACE_ORDER = ("+x", "-x", "+y", "-y", "+z", "-z")

# outward axis A, in-face axes U, V with U x V = A
CUBE_FACE_AXES = np.array(
    [
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[-1, 0, 0], [0, 0, 1], [0, 1, 0]],
        [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
        [[0, 0, 1], [1, 0, 0], [0, 1, 0]],
        [[0, 0, -1], [0, 1, 0], [1, 0, 0]],
    ],
    dtype=np.float64,
)


@dataclass
class ErpImage:
    """Equirectangular image, (H, W, C) float samples."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("ERP data must be (H, W) or (H, W, C) with H, W >= 1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class CubeMap:
    """Six square gnomonic faces, (6, F, F, C) float samples."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim == 3:
            self.data = self.data[:, :, :, None]
        if (
            self.data.ndim != 4
            or self.data.shape[0] != 6
            or self.data.shape[1] != self.data.shape[2]
            or self.data.shape[1] < 1
        ):
            raise ValueError("cubemap data must be (6, F, F) or (6, F, F, C)")

    @property
    def face_size(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[3]


@dataclass
class SphdImage:
    """Image on the triangulated sphere: channel-planar (C, N) values in
    canonical pixel order at a given subdivision."""

    subdivision: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim == 1:
            self.data = self.data[None, :]
        n = pixel_count(self.subdivision)
        if self.data.ndim != 2 or self.data.shape[1] != n:
            raise ValueError(
                f"sphd data must be (C, {n}) at subdivision {self.subdivision}"
            )

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_pixels(self) -> int:
        return self.data.shape[1]


def latlon_to_direction(lat_deg, lon_deg) -> np.ndarray:
    lat, lon = np.broadcast_arrays(
        np.deg2rad(np.asarray(lat_deg, dtype=np.float64)),
        np.deg2rad(np.asarray(lon_deg, dtype=np.float64)),
    )
    return np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def direction_to_latlon(dirs) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dirs, dtype=np.float64)
    lat = np.degrees(np.arcsin(np.clip(d[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(d[..., 1], d[..., 0]))
    return lat, lon


def erp_pixel_directions(height: int, width: int, supersample: int = 1) -> np.ndarray:
    """Unit directions of (sub)pixel centers, (H, W, s, s, 3)."""
    s = supersample
    r = (np.arange(height * s) + 0.5) / s - 0.5  # fractional row of each subsample
    c = (np.arange(width * s) + 0.5) / s - 0.5
    lat = 90.0 - (r + 0.5) * 180.0 / height
    lon = -180.0 + (c + 0.5) * 360.0 / width
    d = latlon_to_direction(lat[:, None], lon[None, :])
    return d.reshape(height, s, width, s, 3).transpose(0, 2, 1, 3, 4)


def _lerp(a, b, t):
    return a + t * (b - a)


def erp_sample(erp: ErpImage, dirs) -> np.ndarray:
    """Bilinear samples at unit directions, (..., C).

    Longitude wraps around; latitude clamps at the poles.
    """
    d = np.asarray(dirs, dtype=np.float64)
    lat, lon = direction_to_latlon(d)
    h, w = erp.height, erp.width
    rf = (90.0 - lat) * h / 180.0 - 0.5
    cf = (lon + 180.0) * w / 360.0 - 0.5
    r0 = np.floor(rf).astype(np.int64)
    c0 = np.floor(cf).astype(np.int64)
    tr = rf - r0
    tc = cf - c0
    r0c = np.clip(r0, 0, h - 1)
    r1c = np.clip(r0 + 1, 0, h - 1)
    c0w = c0 % w
    c1w = (c0 + 1) % w
    img = erp.data
    top = _lerp(img[r0c, c0w], img[r0c, c1w], tc[..., None])
    bot = _lerp(img[r1c, c0w], img[r1c, c1w], tc[..., None])
    return _lerp(top, bot, tr[..., None])


def erp_to_sphd(erp: ErpImage, subdivision: int, rotation: np.ndarray | None = None) -> SphdImage:
    """Project an ERP image onto the sphere grid.

    Each pixel samples the ERP at its (optionally rotated) centroid
    direction.
    """
    mesh = build_mesh(subdivision)
    dirs = pixel_centroids(mesh)
    if rotation is not None:
        dirs = dirs @ np.asarray(rotation, dtype=np.float64).T
    values = erp_sample(erp, dirs)  # (N, C)
    return SphdImage(subdivision, values.T.copy())


def sphd_to_erp(img: SphdImage, height: int, width: int, supersample: int = 1) -> ErpImage:
    """Render the sphere grid to ERP by nearest-triangle lookup.

    Each output pixel averages ``supersample**2`` sub-directions.
    """
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    mesh = build_mesh(img.subdivision)
    dirs = erp_pixel_directions(height, width, supersample)
    idx = locate(mesh, dirs.reshape(-1, 3)).reshape(height, width, -1)
    # contiguous buffer so the reduction is pairwise (keeps constants exact)
    vals = np.ascontiguousarray(img.data[:, idx])  # (C, H, W, s*s)
    return ErpImage(vals.mean(axis=-1).transpose(1, 2, 0).copy())


def cube_face_directions(face_size: int) -> np.ndarray:
    """Unit directions of all cubemap pixel centers, (6, F, F, 3).

    Index order is (face, v-row, u-column).
    """
    t = (np.arange(face_size) + 0.5) * 2.0 / face_size - 1.0
    a = CUBE_FACE_AXES[:, 0]
    u = CUBE_FACE_AXES[:, 1]
    v = CUBE_FACE_AXES[:, 2]
    d = (
        a[:, None, None, :]
        + t[None, :, None, None] * v[:, None, None, :]
        + t[None, None, :, None] * u[:, None, None, :]
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def cubemap_sample(cm: CubeMap, dirs) -> np.ndarray:
    """Sample a cubemap at unit directions: dominant-axis face selection,
    then bilinear within the face (clamped at face borders, no cross-face
    blending).  Axis ties resolve to the lowest face index."""
    d = np.asarray(dirs, dtype=np.float64)
    flat = d.reshape(-1, 3)
    comps = flat @ CUBE_FACE_AXES[:, 0].T  # (M, 6) projection on each outward axis
    face = comps.argmax(axis=1)
    a = comps[np.arange(len(flat)), face]
    u = np.einsum("ij,ij->i", flat, CUBE_FACE_AXES[face, 1]) / a
    v = np.einsum("ij,ij->i", flat, CUBE_FACE_AXES[face, 2]) / a

    f = cm.face_size
    uf = (u + 1.0) * f / 2.0 - 0.5
    vf = (v + 1.0) * f / 2.0 - 0.5
    u0 = np.floor(uf).astype(np.int64)
    v0 = np.floor(vf).astype(np.int64)
    tu = uf - u0
    tv = vf - v0
    u0c = np.clip(u0, 0, f - 1)
    u1c = np.clip(u0 + 1, 0, f - 1)
    v0c = np.clip(v0, 0, f - 1)
    v1c = np.clip(v0 + 1, 0, f - 1)
    img = cm.data
    row0 = _lerp(img[face, v0c, u0c], img[face, v0c, u1c], tu[..., None])
    row1 = _lerp(img[face, v1c, u0c], img[face, v1c, u1c], tu[..., None])
    out = _lerp(row0, row1, tv[..., None])
    return out.reshape(d.shape[:-1] + (cm.channels,))


def erp_to_cubemap(erp: ErpImage, face_size: int, rotation: np.ndarray | None = None) -> CubeMap:
    if face_size < 1:
        raise ValueError("face_size must be >= 1")
    dirs = cube_face_directions(face_size)
    if rotation is not None:
        dirs = dirs @ np.asarray(rotation, dtype=np.float64).T
    return CubeMap(erp_sample(erp, dirs))


def cubemap_to_erp(cm: CubeMap, height: int, width: int) -> ErpImage:
    dirs = erp_pixel_directions(height, width)[:, :, 0, 0, :]
    return ErpImage(cubemap_sample(cm, dirs))


def cubemap_to_sphd(cm: CubeMap, subdivision: int, rotation: np.ndarray | None = None) -> SphdImage:
    dirs = pixel_centroids(build_mesh(subdivision))
    if rotation is not None:
        dirs = dirs @ np.asarray(rotation, dtype=np.float64).T
    return SphdImage(subdivision, cubemap_sample(cm, dirs).T.copy())


def sphd_to_cubemap(img: SphdImage, face_size: int) -> CubeMap:
    mesh = build_mesh(img.subdivision)
    dirs = cube_face_directions(face_size)
    idx = locate(mesh, dirs.reshape(-1, 3)).reshape(6, face_size, face_size)
    return CubeMap(img.data[:, idx].transpose(1, 2, 3, 0).copy())


def tangent_frame(lat_deg: float, lon_deg: float, roll_deg: float = 0.0) -> np.ndarray:
    """Orthonormal frame (tangent point, east, north) rows at a sphere point.

    Positive roll turns the in-plane axes counterclockwise as seen from
    outside the sphere.  At the poles, where east is undefined, longitude 0
    fixes the reference meridian.
    """
    t = latlon_to_direction(lat_deg, lon_deg)
    z = np.array([0.0, 0.0, 1.0])
    east = np.cross(z, t)
    norm = np.linalg.norm(east)
    if norm < 1e-12:
        east = np.array([0.0, 1.0, 0.0]) * np.sign(t[2])
    else:
        east = east / norm
    north = np.cross(t, east)
    if roll_deg:
        r = np.deg2rad(roll_deg)
        east, north = (
            np.cos(r) * east + np.sin(r) * north,
            -np.sin(r) * east + np.cos(r) * north,
        )
    return np.stack([t, east, north])


def frame_from_rotation(rotation: np.ndarray) -> np.ndarray:
    """Image of the canonical frame at (lat, lon) = (0, 0) under a rotation."""
    base = tangent_frame(0.0, 0.0)
    return base @ np.asarray(rotation, dtype=np.float64).T


def _stamp_sample(dirs: np.ndarray, digit: np.ndarray, frame: np.ndarray,
                  angular_width_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Gnomonic samples of a planar image for unit directions.

    Returns (values (M, C), inside-footprint mask (M,)).  Directions behind
    the tangent plane or outside the footprint are masked out.
    """
    if not 0.0 < angular_width_deg < 120.0:
        raise ValueError("angular width must be in (0, 120) degrees")
    if digit.ndim == 2:
        digit = digit[:, :, None]
    hh, ww = digit.shape[:2]
    t, east, north = frame
    half_w = np.tan(np.deg2rad(angular_width_deg) / 2.0)
    half_h = half_w * hh / ww

    flat = dirs.reshape(-1, 3)
    depth = flat @ t
    front = depth > 1e-9
    safe = np.where(front, depth, 1.0)
    px = (flat @ east) / safe
    py = (flat @ north) / safe

    cf = (px / half_w + 1.0) * ww / 2.0 - 0.5
    rf = (1.0 - py / half_h) * hh / 2.0 - 0.5
    inside = front & (cf > -0.5) & (cf < ww - 0.5) & (rf > -0.5) & (rf < hh - 0.5)

    c0 = np.floor(cf).astype(np.int64)
    r0 = np.floor(rf).astype(np.int64)
    tc = cf - c0
    tr = rf - r0
    c0c = np.clip(c0, 0, ww - 1)
    c1c = np.clip(c0 + 1, 0, ww - 1)
    r0c = np.clip(r0, 0, hh - 1)
    r1c = np.clip(r0 + 1, 0, hh - 1)
    dig = digit.astype(np.float64)
    top = _lerp(dig[r0c, c0c], dig[r0c, c1c], tc[:, None])
    bot = _lerp(dig[r1c, c0c], dig[r1c, c1c], tc[:, None])
    vals = _lerp(top, bot, tr[:, None])
    return vals, inside


def gnomonic_stamp(canvas, digit: np.ndarray, lat_deg: float, lon_deg: float,
                   roll_deg: float, angular_width_deg: float):
    """Place a planar image on the sphere through the tangent plane.

    The image is centered at (lat, lon), rotated in plane by ``roll_deg``
    and scaled so its width subtends ``angular_width_deg``.  Pixels outside
    the footprint keep their canvas values.  Returns a new canvas of the
    same type.
    """
    frame = tangent_frame(lat_deg, lon_deg, roll_deg)
    return stamp_with_frame(canvas, digit, frame, angular_width_deg)


def stamp_with_frame(canvas, digit: np.ndarray, frame: np.ndarray,
                     angular_width_deg: float):
    """Like :func:`gnomonic_stamp` with an explicit (point, east, north) frame."""
    if isinstance(canvas, SphdImage):
        dirs = pixel_centroids(build_mesh(canvas.subdivision))
        vals, inside = _stamp_sample(dirs, digit, frame, angular_width_deg)
        if vals.shape[1] != canvas.channels:
            raise ValueError("digit channel count must match the canvas")
        out = canvas.data.copy()
        out[:, inside] = vals[inside].T
        return SphdImage(canvas.subdivision, out)
    if isinstance(canvas, ErpImage):
        dirs = erp_pixel_directions(canvas.height, canvas.width)[:, :, 0, 0, :]
        vals, inside = _stamp_sample(dirs, digit, frame, angular_width_deg)
        if vals.shape[1] != canvas.channels:
            raise ValueError("digit channel count must match the canvas")
        out = canvas.data.copy()
        out.reshape(-1, canvas.channels)[inside] = vals[inside]
        return ErpImage(out)
    raise TypeError("canvas must be a SphdImage or an ErpImage")


def rotation_about_z(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_rotation(seed_or_rng) -> np.ndarray:
    """Uniform random rotation matrix via a normalized Gaussian quaternion.

    Accepts an integer seed (deterministic per seed) or a Generator, from
    which one quaternion is drawn.
    """
    rng = np.random.default_rng(seed_or_rng) if not isinstance(
        seed_or_rng, np.random.Generator
    ) else seed_or_rng
    return quaternion_to_matrix(rng.standard_normal(4))
