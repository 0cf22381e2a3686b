"""Area-based irregularity of sphere image representations.

For a representation with per-pixel effective areas A_i (the solid angle
each pixel covers on the unit sphere), the irregularity of pixel i is the
natural-log ratio of its area to the geometric mean area,

    d_i = ln(A_i / A_mean),   A_mean = (prod A_i)^(1/N),

and the overall score is the root mean square of the d_i.  The geometric
mean makes the d_i sum to zero, and the score is invariant under uniform
rescaling of all areas.  The log base is fixed to e: orderings between
representations are base independent, absolute values are not.

Closed forms:

* ERP(H, W): a pixel in row r covers (2 pi / W) (sin phi_top - sin phi_bot),
* CubeMap(F): the solid angle of a gnomonic grid cell [u0,u1] x [v0,v1] is
  the four-corner combination of Omega(u, v) = atan(u v / sqrt(1+u^2+v^2)),
* the sphere grid uses the exact spherical triangle areas of the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import build_mesh, pixel_areas, pixel_centroids, pixel_count
from .projection import cube_face_directions, erp_pixel_directions


@dataclass(frozen=True)
class SphdRep:
    subdivision: int

    @property
    def tag(self) -> str:
        return f"sphd(n={self.subdivision})"


@dataclass(frozen=True)
class CubeRep:
    face_size: int

    @property
    def tag(self) -> str:
        return f"cube(F={self.face_size})"


@dataclass(frozen=True)
class ErpRep:
    height: int
    width: int

    @property
    def tag(self) -> str:
        return f"erp({self.height}x{self.width})"


Representation = SphdRep | CubeRep | ErpRep


@dataclass
class AreaVector:
    """Per-pixel effective areas (steradians) of one representation."""

    rep: Representation
    areas: np.ndarray

    @property
    def tag(self) -> str:
        return self.rep.tag


@dataclass
class IrregularityResult:
    mean_area: float
    d: np.ndarray
    score: float


@dataclass
class BinnedProfile:
    """Per-bin aggregates of |d| and d along one angular coordinate."""

    edges_deg: np.ndarray  # (bins + 1,)
    count: np.ndarray
    mean_abs_d: np.ndarray  # nan for empty bins
    max_abs_d: np.ndarray
    mean_d: np.ndarray


@dataclass
class IrregularityProfiles:
    latitude: BinnedProfile
    longitude: BinnedProfile


def _rectangle_solid_angle(u, v):
    # solid angle of [0,u] x [0,v] on the z=1 gnomonic plane, seen from origin
    return np.arctan(u * v / np.sqrt(1.0 + u * u + v * v))


def cube_cell_areas(face_size: int) -> np.ndarray:
    """Exact solid angles of one face's cells, (F, F); all faces are equal."""
    if face_size < 1:
        raise ValueError("face size must be >= 1")
    edges = np.arange(face_size + 1) * 2.0 / face_size - 1.0
    corner = _rectangle_solid_angle(edges[:, None], edges[None, :])
    return corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1]


def erp_row_areas(height: int, width: int) -> np.ndarray:
    """Exact per-row pixel solid angles, (H,)."""
    if height < 1 or width < 1:
        raise ValueError("ERP size must be at least 1x1")
    phi = np.deg2rad(90.0 - np.arange(height + 1) * 180.0 / height)
    return (2.0 * np.pi / width) * (np.sin(phi[:-1]) - np.sin(phi[1:]))


def effective_areas(rep: Representation) -> AreaVector:
    """Per-pixel solid angles for a representation, in its pixel order."""
    if isinstance(rep, SphdRep):
        areas = pixel_areas(build_mesh(rep.subdivision))
    elif isinstance(rep, CubeRep):
        areas = np.tile(cube_cell_areas(rep.face_size).ravel(), 6)
    elif isinstance(rep, ErpRep):
        areas = np.repeat(erp_row_areas(rep.height, rep.width), rep.width)
    else:
        raise TypeError(f"unknown representation {rep!r}")
    return AreaVector(rep, areas)


def pixel_directions(rep: Representation) -> np.ndarray:
    """Unit direction of each pixel's center, (N, 3), matching area order."""
    if isinstance(rep, SphdRep):
        return pixel_centroids(build_mesh(rep.subdivision))
    if isinstance(rep, CubeRep):
        return cube_face_directions(rep.face_size).reshape(-1, 3)
    if isinstance(rep, ErpRep):
        return erp_pixel_directions(rep.height, rep.width)[:, :, 0, 0, :].reshape(-1, 3)
    raise TypeError(f"unknown representation {rep!r}")


def irregularity(areas: AreaVector | np.ndarray) -> IrregularityResult:
    """Log-ratio irregularities and their RMS score.

    The geometric mean is evaluated in log space to stay finite for any
    pixel count.
    """
    a = areas.areas if isinstance(areas, AreaVector) else np.asarray(areas, float)
    if a.size == 0:
        raise ValueError("area vector is empty")
    if (a <= 0).any():
        raise ValueError("all effective areas must be positive")
    log_a = np.log(a)
    log_mean = log_a.mean()
    d = log_a - log_mean
    return IrregularityResult(
        mean_area=float(np.exp(log_mean)),
        d=d,
        score=float(np.sqrt(np.mean(d * d))),
    )


def binned_irregularity(
    areas: AreaVector | np.ndarray,
    directions: np.ndarray,
    bins: int = 36,
) -> IrregularityProfiles:
    """Latitude and longitude profiles of |d| (and signed d), uniform-degree
    bins: ``bins`` over latitude [-90, 90] and over longitude [-180, 180]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    d = irregularity(areas).d
    dirs = np.asarray(directions, dtype=np.float64)
    lat = np.degrees(np.arcsin(np.clip(dirs[:, 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(dirs[:, 1], dirs[:, 0]))

    def profile(values_deg, lo, hi):
        edges = np.linspace(lo, hi, bins + 1)
        which = np.clip(np.digitize(values_deg, edges) - 1, 0, bins - 1)
        count = np.bincount(which, minlength=bins)
        sum_abs = np.bincount(which, weights=np.abs(d), minlength=bins)
        sum_d = np.bincount(which, weights=d, minlength=bins)
        max_abs = np.zeros(bins)
        np.maximum.at(max_abs, which, np.abs(d))
        with np.errstate(invalid="ignore"):
            mean_abs = np.where(count > 0, sum_abs / np.maximum(count, 1), np.nan)
            mean_d = np.where(count > 0, sum_d / np.maximum(count, 1), np.nan)
        max_abs[count == 0] = np.nan
        return BinnedProfile(edges, count, mean_abs, max_abs, mean_d)

    return IrregularityProfiles(
        latitude=profile(lat, -90.0, 90.0),
        longitude=profile(lon, -180.0, 180.0),
    )
