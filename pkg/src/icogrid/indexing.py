"""Gather tables for convolution, pooling and unpooling on the sphere grid.

All neural ops consume precompiled integer tables rather than the mesh:

* conv: one row of 10 input pixel ids per output pixel,
* pool: one row of 4 child pixel ids per parent pixel (one level coarser),
* unpool: the same relation read in the opposite direction.

Tap layout contract (frozen; weight semantics depend on it):

    slot 0      the pixel itself
    slots 1..3  edge neighbors, by the edge opposite face vertex 1/2/3
    slots 4..5  the two other edge neighbors of neighbor 1: first the one on
                the counterclockwise side of the center-to-neighbor ray (as
                seen from outside the sphere), then the clockwise one;
                slots 6..7 and 8..9 likewise for neighbors 2 and 3

Because every face is listed apex first and counterclockwise from outside,
and the pair ordering is rotation equivariant, an upward pixel and a
downward pixel produce tap patches that are 180 degree point reflections of
each other in their shared tangent plane, so a single weight vector per slot
realizes a rotated kernel on both orientations; the slot permutation between
the two layouts is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    SphereMesh,
    build_mesh,
    pixel_areas,
    pixel_centroids,
    pixel_count,
    vertex_degrees,
)

CONV_ARITY = 10
POOL_ARITY = 4


class UnsupportedSubdivisionError(ValueError):
    """Raised when a table is requested below its minimum subdivision."""


@dataclass(frozen=True)
class KernelLayout:
    """Slot semantics of the convolution gather and the Up/Down relation.

    ``down_permutation`` maps an upward pixel's tap slot to the slot holding
    the point-reflected tap of a downward pixel.  With the apex-first face
    frames used here the reflection is absorbed by the frames themselves,
    so the permutation is the identity (trivially an involution).

    ``mirror_permutation`` is the slot relabeling induced by the mesh's
    central symmetry (pixel -> antipodal pixel), which flips the local frame
    handedness: taps[antipode(i)][mirror[k]] == antipode(taps[i][k]).
    """

    slot_roles: tuple[str, ...] = (
        "center",
        "edge1-neighbor",
        "edge2-neighbor",
        "edge3-neighbor",
        "edge1-ccw-flank",
        "edge1-cw-flank",
        "edge2-ccw-flank",
        "edge2-cw-flank",
        "edge3-ccw-flank",
        "edge3-cw-flank",
    )
    down_permutation: tuple[int, ...] = tuple(range(CONV_ARITY))
    mirror_permutation: tuple[int, ...] = (0, 1, 3, 2, 5, 4, 9, 8, 7, 6)


KERNEL_LAYOUT = KernelLayout()


@dataclass
class ConvTable:
    """Per-pixel gather lists: taps[i] are the 10 input pixels of output i."""

    subdivision: int
    taps: np.ndarray  # (F, 10) int64

    def __post_init__(self):
        self.taps.flags.writeable = False

    @property
    def arity(self) -> int:
        return self.taps.shape[1]

    @property
    def num_pixels(self) -> int:
        return self.taps.shape[0]


@dataclass
class PoolTable:
    """Rows map parent pixel j at level n-1 to its 4 children at level n.

    The same rows serve pooling (gather children, reduce) and unpooling
    (scatter a parent value back to a recorded child slot).
    """

    subdivision: int  # input (finer) level n
    children: np.ndarray  # (F/4, 4) int64

    def __post_init__(self):
        self.children.flags.writeable = False

    @property
    def num_parents(self) -> int:
        return self.children.shape[0]


def edge_neighbors_all(mesh: SphereMesh) -> np.ndarray:
    """(F, 3) face ids sharing an edge with each face, by edge slot.

    Edge slot k is the edge opposite face vertex k.
    """
    f = mesh.faces
    nf = len(f)
    edges = np.stack([f[:, [1, 2]], f[:, [0, 2]], f[:, [0, 1]]], axis=1)
    edges = np.sort(edges, axis=-1).reshape(-1, 2)  # row r = 3*face + slot
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    a, b = order[0::2], order[1::2]
    if not np.array_equal(edges[a], edges[b]):
        raise ValueError("mesh is not a closed triangulation")
    partner = np.empty(3 * nf, dtype=np.int64)
    partner[a] = b // 3
    partner[b] = a // 3
    return partner.reshape(nf, 3)


def edge_neighbors(mesh: SphereMesh, idx: int) -> np.ndarray:
    """The 3 pixels sharing an edge with ``idx``, ordered by edge slot."""
    idx = mesh.check_index(idx)
    f = mesh.faces[idx]
    out = np.empty(3, dtype=np.int64)
    for slot, (p, q) in enumerate([(f[1], f[2]), (f[0], f[2]), (f[0], f[1])]):
        both = np.where((mesh.faces == p).any(axis=1) & (mesh.faces == q).any(axis=1))[0]
        out[slot] = both[both != idx][0]
    return out


def build_conv_table(mesh: SphereMesh) -> ConvTable:
    """Compile the 10-tap convolution gather for every pixel.

    The patch is the center pixel plus its full edge-distance-2 ball: the 3
    edge neighbors and, for each of them, their 2 edge neighbors other than
    the center.  Were two slots ever to land on the same pixel (a wrapped
    patch), that pixel would simply be gathered twice; the arity is fixed.
    """
    if mesh.subdivision < 1:
        raise UnsupportedSubdivisionError(
            "convolution tables need subdivision >= 1"
        )
    nb = edge_neighbors_all(mesh)
    nf = len(nb)
    centers = np.arange(nf, dtype=np.int64)
    cen = pixel_centroids(mesh)

    def outer_pair(neighbor_ids):
        rows = nb[neighbor_ids]  # (F, 3)
        keep = rows != centers[:, None]
        if not (keep.sum(axis=1) == 2).all():
            raise ValueError("neighbor rows must contain the center exactly once")
        pair = rows[keep].reshape(nf, 2)
        # counterclockwise flank first; the two outer taps strictly straddle
        # the center-to-neighbor great circle, so the sign test is total
        det = np.einsum(
            "ij,ij->i", cen, np.cross(cen[neighbor_ids], cen[pair[:, 0]])
        )
        pair[det < 0] = pair[det < 0][:, ::-1]
        return pair

    taps = np.column_stack(
        [
            centers,
            nb,
            outer_pair(nb[:, 0]),
            outer_pair(nb[:, 1]),
            outer_pair(nb[:, 2]),
        ]
    )
    return ConvTable(mesh.subdivision, taps)


def build_pool_table(subdivision: int) -> PoolTable:
    """Pooling gather from level ``subdivision`` down to the next coarser one.

    Purely arithmetic under the hierarchical index: parent j gathers
    children 4j..4j+3.
    """
    if subdivision < 1:
        raise UnsupportedSubdivisionError("pooling tables need subdivision >= 1")
    n = pixel_count(subdivision)
    children = np.arange(n, dtype=np.int64).reshape(-1, POOL_ARITY)
    return PoolTable(subdivision, children)


def build_unpool_table(subdivision: int) -> PoolTable:
    """Unpooling scatter from level ``subdivision``-1 up to ``subdivision``.

    The exact inverse relation of :func:`build_pool_table`; the rows are
    identical, only the direction of use differs.
    """
    return build_pool_table(subdivision)


# ---------------------------------------------------------------------------
# verification against brute-force oracles


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class TableReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            suffix = f" ({c.detail})" if c.detail and not c.passed else ""
            lines.append(f"{status}  {c.name}{suffix}")
        return "\n".join(lines)


def _shared_vertex_counts(mesh: SphereMesh) -> np.ndarray:
    """(F, F) number of shared vertices between every pair of faces."""
    nf, nv = mesh.num_faces, mesh.num_vertices
    inc = np.zeros((nf, nv), dtype=np.float32)
    np.put_along_axis(inc, mesh.faces, 1.0, axis=1)
    return (inc @ inc.T).astype(np.int64)


def _bfs_distances(adj: np.ndarray, max_depth: int) -> list[set]:
    """Per-face set of faces within ``max_depth`` edge-adjacency steps."""
    balls = []
    for start in range(len(adj)):
        seen = {start}
        frontier = {start}
        for _ in range(max_depth):
            nxt = set()
            for x in frontier:
                nxt.update(adj[x])
            frontier = nxt - seen
            seen |= frontier
        balls.append(seen)
    return balls


def verify_tables(mesh: SphereMesh, conv: ConvTable, pool: PoolTable) -> TableReport:
    """Re-derive every table invariant from scratch and report pass/fail.

    Failures are reported with the first counterexample, never raised.
    """
    report = TableReport()
    taps = conv.taps
    nf = mesh.num_faces

    def add(name, passed, detail=""):
        report.checks.append(CheckResult(name, bool(passed), detail))

    # center criterion
    bad = np.where(taps[:, 0] != np.arange(nf))[0]
    add(
        "conv_center_tap",
        bad.size == 0,
        f"row {bad[0]}: tap0={taps[bad[0], 0]}" if bad.size else "",
    )

    # tap validity and vertex sharing, from the brute-force incidence matrix
    in_range = (taps >= 0).all() and (taps < nf).all()
    add("conv_taps_in_range", in_range)
    shared = _shared_vertex_counts(mesh)
    if in_range:
        share = shared[np.arange(nf)[:, None], taps]
        rows = np.where((share < 1).any(axis=1))[0]
        add(
            "conv_taps_share_vertex",
            rows.size == 0,
            f"row {rows[0]}" if rows.size else "",
        )
    else:
        add("conv_taps_share_vertex", False, "skipped: taps out of range")

    # adjacency oracle: slots 1..3 must be the shared-2-vertex faces and the
    # outer pairs must be their neighbors minus the center
    nbr_oracle = [np.where(shared[i] == 2)[0] for i in range(nf)]
    bad_row = -1
    for i in range(nf):
        if sorted(taps[i, 1:4].tolist()) != sorted(nbr_oracle[i].tolist()):
            bad_row = i
            break
        expect = []
        for j in taps[i, 1:4]:
            expect.extend(x for x in nbr_oracle[j] if x != i)
        if sorted(expect) != sorted(taps[i, 4:].tolist()):
            bad_row = i
            break
    add("conv_adjacency_oracle", bad_row < 0, f"row {bad_row}" if bad_row >= 0 else "")

    # locality: every tap within edge-graph distance 2 of the center
    adj = [set(nbr_oracle[i].tolist()) for i in range(nf)]
    balls = _bfs_distances(adj, 2)
    bad_row = next(
        (i for i in range(nf) if not set(taps[i].tolist()) <= balls[i]), -1
    )
    add("conv_locality_2", bad_row < 0, f"row {bad_row}" if bad_row >= 0 else "")

    # duplicate taps: at most 2 per row and only where the patch touches one
    # of the 12 original (degree 5) vertices
    deg5 = set(np.where(vertex_degrees(mesh) == 5)[0].tolist())
    bad_row = -1
    for i in range(nf):
        row = taps[i]
        n_dup = row.size - np.unique(row).size
        if n_dup == 0:
            continue
        patch_verts = set(mesh.faces[row].ravel().tolist())
        if n_dup > 2 or not (patch_verts & deg5):
            bad_row = i
            break
    add(
        "conv_duplicates_confined",
        bad_row < 0,
        f"row {bad_row}" if bad_row >= 0 else "",
    )

    # Up/Down congruence: under the central symmetry of the mesh, the
    # multiset of tap-to-center distances is preserved exactly.  Chord
    # lengths are used because they stay well conditioned at zero distance.
    cen = pixel_centroids(mesh)
    anti = _antipodal_via_centroids(mesh, cen)
    dist = np.linalg.norm(cen[:, None, :] - cen[taps], axis=-1)
    d_sorted = np.sort(dist, axis=1)
    err = np.abs(d_sorted - d_sorted[anti]).max()
    add(
        "conv_updown_congruence",
        err < 1e-9,
        f"max distance-multiset deviation {err:.2e}" if err >= 1e-9 else "",
    )

    # pooling: partition + pure index arithmetic + inverse relation
    kids = pool.children
    n = pixel_count(pool.subdivision)
    flat = np.sort(kids.ravel())
    add(
        "pool_partition",
        kids.shape == (n // 4, 4) and np.array_equal(flat, np.arange(n)),
        "children do not partition the index set"
        if not np.array_equal(flat, np.arange(n))
        else "",
    )
    arith = np.arange(n, dtype=np.int64).reshape(-1, 4)
    add("pool_index_arithmetic", np.array_equal(kids, arith))
    parent_of = np.empty(n, dtype=np.int64)
    parent_of[kids.ravel()] = np.repeat(np.arange(n // 4), 4)
    add(
        "pool_unpool_identity",
        np.array_equal(parent_of[kids][:, 0], np.arange(n // 4))
        and (parent_of[kids] == parent_of[kids][:, :1]).all(),
    )
    return report


def _antipodal_via_centroids(mesh: SphereMesh, centroids: np.ndarray) -> np.ndarray:
    # nearest-centroid matching; exact because the mesh is centrally symmetric
    from .geometry import locate

    return locate(mesh, -centroids)
