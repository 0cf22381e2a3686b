"""Geodesic icosahedron mesh: construction, subdivision, and point location.

The sphere is tiled with triangular pixels obtained by repeatedly splitting
the faces of a pole-aligned icosahedron in four and pushing new vertices out
to the unit sphere.  Pixel identity is hierarchical: a pixel index at
subdivision n decomposes into a base face id (0..19) followed by n two-bit
child codes, so pooling between levels is pure integer arithmetic.

Frame and ordering conventions (load bearing for the kernel tables, and part
of the package's file-format contract):

* vertex 0 is the north pole (0, 0, 1) and vertex 11 the south pole
  (0, 0, -1); the upper ring sits at longitudes 18 + 72k degrees and the
  lower ring at 54 + 72k degrees, both at latitude +-atan(1/2),
* every face is listed apex first (the pole-ward vertex for upward
  triangles, the opposite one for downward triangles) and counterclockwise
  as seen from outside the sphere,
* base faces are ordered: 5 north-cap faces, 10 equatorial-band faces,
  5 south-cap faces, each band sorted by ascending centroid longitude,
* face children are appended per parent as code 0 = center (orientation
  flips), codes 1..3 = corner child at the parent's 1st/2nd/3rd vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORTH_POLE_VERTEX = 0
SOUTH_POLE_VERTEX = 11

# Non-polar vertices of a unit icosahedron with two polar vertices sit on two
# rings at z = +-1/sqrt(5), cylindrical radius 2/sqrt(5).
_RING_Z = 1.0 / np.sqrt(5.0)
_RING_R = 2.0 / np.sqrt(5.0)

MAX_SUBDIVISION = 10


@dataclass
class SphereMesh:
    """Immutable triangulated sphere at a fixed subdivision level.

    Attributes:
        subdivision: number of 4-way splits applied to the base icosahedron.
        vertices: (V, 3) float64 unit vectors.
        faces: (F, 3) int64 vertex ids per pixel, apex first, CCW from
            outside, ordered by pixel index.
        orientations: (F,) bool, True for upward pixels.
        pole_vertex_ids: ids of the two polar vertices.
    """

    subdivision: int
    vertices: np.ndarray
    faces: np.ndarray
    orientations: np.ndarray
    pole_vertex_ids: tuple[int, int] = (NORTH_POLE_VERTEX, SOUTH_POLE_VERTEX)

    def __post_init__(self):
        self.vertices.flags.writeable = False
        self.faces.flags.writeable = False
        self.orientations.flags.writeable = False

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return 3 * self.num_faces // 2

    def check_index(self, idx: int) -> int:
        idx = int(idx)
        if not 0 <= idx < self.num_faces:
            raise IndexError(
                f"pixel index {idx} out of range for subdivision "
                f"{self.subdivision} (valid: 0..{self.num_faces - 1})"
            )
        return idx


def _normalized(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _centroid_longitudes_deg(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    c = vertices[faces].mean(axis=1)
    return np.degrees(np.arctan2(c[:, 1], c[:, 0]))


def build_base_icosahedron() -> SphereMesh:
    """Build the canonical pole-aligned icosahedron (subdivision 0).

    The ring longitudes are offset by 18 degrees so that no face centroid
    falls on the +-180 degree seam, which keeps the longitude sort exact.
    """
    verts = np.zeros((12, 3))
    verts[NORTH_POLE_VERTEX] = (0.0, 0.0, 1.0)
    verts[SOUTH_POLE_VERTEX] = (0.0, 0.0, -1.0)
    upper = np.deg2rad(18.0 + 72.0 * np.arange(5))
    lower = np.deg2rad(54.0 + 72.0 * np.arange(5))
    verts[1:6, 0] = _RING_R * np.cos(upper)
    verts[1:6, 1] = _RING_R * np.sin(upper)
    verts[1:6, 2] = _RING_Z
    verts[6:11, 0] = _RING_R * np.cos(lower)
    verts[6:11, 1] = _RING_R * np.sin(lower)
    verts[6:11, 2] = -_RING_Z

    def u(k):
        return 1 + k % 5

    def low(k):
        return 6 + k % 5

    north = [(NORTH_POLE_VERTEX, u(k), u(k + 1)) for k in range(5)]
    band_down = [(low(k), u(k + 1), u(k)) for k in range(5)]
    band_up = [(u(k + 1), low(k), low(k + 1)) for k in range(5)]
    south = [(SOUTH_POLE_VERTEX, low(k + 1), low(k)) for k in range(5)]

    def sort_band(face_list):
        arr = np.array(face_list, dtype=np.int64)
        lon = _centroid_longitudes_deg(verts, arr)
        return arr[np.argsort(lon)]

    faces = np.vstack(
        [
            sort_band(north),
            sort_band(band_down + band_up),
            sort_band(south),
        ]
    )
    up = np.zeros(20, dtype=bool)
    up[:5] = True
    # band faces alternate orientation; upward ones have a single pole-ward
    # (upper ring) vertex, i.e. their apex is on the upper ring
    band = faces[5:15]
    up[5:15] = band[:, 0] < 6
    return SphereMesh(0, verts, faces, up)


def subdivide(mesh: SphereMesh) -> SphereMesh:
    """Split every face in four and extrude new vertices to the sphere.

    Children of parent j land at indices 4j..4j+3 (center, then the corner
    children at the parent's three vertices).  Midpoint vertices shared by
    adjacent parents are deduplicated; parent vertices keep their ids.
    """
    if mesh.subdivision >= MAX_SUBDIVISION:
        raise ValueError(f"subdivision above {MAX_SUBDIVISION} not supported")
    v, f = mesh.vertices, mesh.faces
    nf, nv = len(f), len(v)
    # edge k is opposite vertex k; m[:, k] is its midpoint vertex id
    edges = np.stack([f[:, [1, 2]], f[:, [0, 2]], f[:, [0, 1]]], axis=1)
    edges = np.sort(edges, axis=-1).reshape(-1, 2)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    mids = _normalized(v[uniq[:, 0]] + v[uniq[:, 1]])
    new_v = np.vstack([v, mids])
    m = nv + inverse.reshape(nf, 3)

    children = np.empty((4 * nf, 3), dtype=np.int64)
    children[0::4] = np.column_stack([m[:, 0], m[:, 1], m[:, 2]])
    children[1::4] = np.column_stack([f[:, 0], m[:, 2], m[:, 1]])
    children[2::4] = np.column_stack([m[:, 2], f[:, 1], m[:, 0]])
    children[3::4] = np.column_stack([m[:, 1], m[:, 0], f[:, 2]])

    up = np.empty(4 * nf, dtype=bool)
    up[0::4] = ~mesh.orientations
    up[1::4] = mesh.orientations
    up[2::4] = mesh.orientations
    up[3::4] = mesh.orientations
    return SphereMesh(mesh.subdivision + 1, new_v, children, up)


@lru_cache(maxsize=None)
def build_mesh(subdivision: int) -> SphereMesh:
    """Return the cached mesh at the requested subdivision level."""
    if subdivision < 0:
        raise ValueError("subdivision must be non-negative")
    if subdivision == 0:
        return build_base_icosahedron()
    return subdivide(build_mesh(subdivision - 1))


def pixel_count(subdivision: int) -> int:
    return 20 * 4**subdivision


def encode_pixel_index(subdivision: int, base_face: int, child_codes) -> int:
    """Compose a pixel index from a base face id and per-level child codes."""
    codes = list(child_codes)
    if len(codes) != subdivision:
        raise ValueError("need exactly one child code per subdivision level")
    if not 0 <= base_face < 20:
        raise ValueError("base face must be in 0..19")
    idx = base_face
    for c in codes:
        if not 0 <= c < 4:
            raise ValueError("child codes must be in 0..3")
        idx = idx * 4 + c
    return idx


def decode_pixel_index(subdivision: int, idx: int) -> tuple[int, tuple[int, ...]]:
    """Split a pixel index into (base_face, child_codes), coarse to fine."""
    if not 0 <= idx < pixel_count(subdivision):
        raise IndexError(f"pixel index {idx} out of range at subdivision {subdivision}")
    codes = []
    for _ in range(subdivision):
        codes.append(idx % 4)
        idx //= 4
    return idx, tuple(reversed(codes))


def pixel_centroids(mesh: SphereMesh) -> np.ndarray:
    """Unit sample directions for all pixels: normalized vertex means, (F, 3)."""
    return _normalized(mesh.vertices[mesh.faces].mean(axis=1))


def pixel_centroid(mesh: SphereMesh, idx: int) -> np.ndarray:
    idx = mesh.check_index(idx)
    return _normalized(mesh.vertices[mesh.faces[idx]].mean(axis=0))


def pixel_areas(mesh: SphereMesh) -> np.ndarray:
    """Spherical areas (steradians) of all pixels, (F,).

    Uses the solid-angle form of the spherical excess,
    tan(area/2) = det[a b c] / (1 + a.b + b.c + c.a), which is exact for
    unit-vector triangles and positive for CCW faces.
    """
    tri = mesh.vertices[mesh.faces]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def pixel_area(mesh: SphereMesh, idx: int) -> float:
    idx = mesh.check_index(idx)
    a, b, c = mesh.vertices[mesh.faces[idx]]
    num = float(np.dot(a, np.cross(b, c)))
    den = 1.0 + float(a @ b + b @ c + c @ a)
    return 2.0 * float(np.arctan2(num, den))


def vertex_degrees(mesh: SphereMesh) -> np.ndarray:
    """Number of incident faces per vertex (equals edge degree on a closed mesh)."""
    return np.bincount(mesh.faces.ravel(), minlength=mesh.num_vertices)


def _edge_normals(tri: np.ndarray) -> np.ndarray:
    """Great-circle edge normals of triangles (..., 3, 3) -> (..., 3, 3).

    Normal k spans the edge from vertex k to vertex k+1; a point x is inside
    a CCW triangle iff x . normal_k >= 0 for all three.
    """
    a = tri[..., 0, :]
    b = tri[..., 1, :]
    c = tri[..., 2, :]
    return np.stack([np.cross(a, b), np.cross(b, c), np.cross(c, a)], axis=-2)


def _containment_scores(tri: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """min over edges of dirs . edge_normal; >= 0 means contained."""
    normals = _edge_normals(tri)
    dots = np.einsum("...ej,...j->...e", normals, dirs)
    return dots.min(axis=-1)


def locate(mesh: SphereMesh, dirs) -> np.ndarray | int:
    """Pixel index containing each direction.

    Hierarchical descent: pick the containing base face among 20, then one
    4-way level per subdivision, recomputing child triangle corners on the
    fly.  Boundary ties break toward the lowest pixel index; directions that
    numerically miss every candidate are assigned to the closest one, so the
    function is total on the sphere.

    Accepts a single 3-vector or an (..., 3) array; returns an int or an
    int64 array of matching shape.
    """
    d = np.asarray(dirs, dtype=np.float64)
    single = d.ndim == 1
    flat = d.reshape(-1, 3)
    base = build_mesh(0)
    base_tri = base.vertices[base.faces]  # (20, 3, 3)
    scores = _containment_scores(base_tri[None, :, :, :], flat[:, None, :])
    idx = _first_nonneg_or_best(scores)

    tri = base_tri[idx]  # (M, 3, 3)
    for _ in range(mesh.subdivision):
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        m01 = _normalized(a + b)
        m12 = _normalized(b + c)
        m02 = _normalized(a + c)
        cand = np.stack(
            [
                np.stack([m12, m02, m01], axis=1),
                np.stack([a, m01, m02], axis=1),
                np.stack([m01, b, m12], axis=1),
                np.stack([m02, m12, c], axis=1),
            ],
            axis=1,
        )  # (M, 4, 3, 3)
        scores = _containment_scores(cand, flat[:, None, :])
        choice = _first_nonneg_or_best(scores)
        idx = idx * 4 + choice
        tri = np.take_along_axis(cand, choice[:, None, None, None], axis=1)[:, 0]

    if single:
        return int(idx[0])
    return idx.reshape(d.shape[:-1])


def _first_nonneg_or_best(scores: np.ndarray) -> np.ndarray:
    """Index of the first column with score >= 0, else the best-scoring one."""
    ok = scores >= 0.0
    first = ok.argmax(axis=1)
    return np.where(ok.any(axis=1), first, scores.argmax(axis=1))


def antipodal_pixels(mesh: SphereMesh) -> np.ndarray:
    """Map each pixel to the pixel containing its point-reflected centroid.

    The pole-aligned mesh is centrally symmetric, so this pairing is an
    orientation-flipping involution.
    """
    return locate(mesh, -pixel_centroids(mesh))


def mesh_statistics(mesh: SphereMesh) -> dict:
    """Summary counts and area statistics used by the inspection CLI."""
    areas = pixel_areas(mesh)
    degrees = vertex_degrees(mesh)
    return {
        "subdivision": mesh.subdivision,
        "faces": mesh.num_faces,
        "vertices": mesh.num_vertices,
        "edges": mesh.num_edges,
        "euler_characteristic": mesh.num_vertices - mesh.num_edges + mesh.num_faces,
        "degree5_vertices": int((degrees == 5).sum()),
        "area_min": float(areas.min()),
        "area_mean": float(areas.mean()),
        "area_max": float(areas.max()),
        "area_sum": float(areas.sum()),
    }
