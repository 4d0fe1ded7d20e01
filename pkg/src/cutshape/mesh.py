"""Uniform background triangulation of the unit square and its face topology.

The mesh is fixed for the whole identification run: every moving-boundary
quantity lives on top of it as a nodal field.  Each square cell is split
along its lower-left to upper-right diagonal, so geometry caches
(per-triangle basis gradients, areas, face normals) can be precomputed
once and reused by all assembly routines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BackgroundMesh:
    """Triangulation of [0,1]^2 with n*n cells, two triangles per cell.

    Nodes are laid out row-major: node (i, j) -> index j*(n+1)+i at
    coordinates (i/n, j/n).  ``interior_faces`` rows are
    (node_a, node_b, tri_left, tri_right) with node_a < node_b and the
    face normal pointing from tri_left into tri_right; ``boundary_faces``
    rows are (node_a, node_b, tri) with the outward unit normal stored in
    ``boundary_normals``.
    """

    n: int
    nodes: np.ndarray            # (N, 2)
    triangles: np.ndarray        # (T, 3) counterclockwise
    interior_faces: np.ndarray   # (Fi, 4)
    boundary_faces: np.ndarray   # (Fb, 3)
    boundary_normals: np.ndarray  # (Fb, 2)
    h: float

    # geometry caches, filled in __post_init__
    tri_areas: np.ndarray = field(default=None, repr=False)     # (T,)
    tri_grads: np.ndarray = field(default=None, repr=False)     # (T, 3, 2)
    face_normals: np.ndarray = field(default=None, repr=False)  # (Fi, 2) left->right
    face_lengths: np.ndarray = field(default=None, repr=False)  # (Fi,)
    face_tangents: np.ndarray = field(default=None, repr=False)  # (Fi, 2) a->b unit

    def __post_init__(self):
        self._compute_geometry()

    # ------------------------------------------------------------------
    def _compute_geometry(self):
        X = self.nodes[self.triangles]           # (T, 3, 2)
        e1 = X[:, 1] - X[:, 0]
        e2 = X[:, 2] - X[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise ValueError(f"triangle {bad} has non-positive area {det[bad] / 2.0}")
        self.tri_areas = 0.5 * det
        # gradients of barycentric basis functions (P1): rows of inv(J)^T
        inv_det = 1.0 / det
        g1 = np.stack([e2[:, 1] * inv_det, -e2[:, 0] * inv_det], axis=1)
        g2 = np.stack([-e1[:, 1] * inv_det, e1[:, 0] * inv_det], axis=1)
        g0 = -(g1 + g2)
        self.tri_grads = np.stack([g0, g1, g2], axis=1)

        if len(self.interior_faces):
            a = self.nodes[self.interior_faces[:, 0]]
            b = self.nodes[self.interior_faces[:, 1]]
            t = b - a
            lengths = np.linalg.norm(t, axis=1)
            t = t / lengths[:, None]
            normals = np.stack([t[:, 1], -t[:, 0]], axis=1)
            # orient each normal from tri_left into tri_right
            cl = self.nodes[self.triangles[self.interior_faces[:, 2]]].mean(axis=1)
            mid = 0.5 * (a + b)
            flip = np.sum((cl - mid) * normals, axis=1) > 0.0
            normals[flip] *= -1.0
            self.face_normals = normals
            self.face_lengths = lengths
            self.face_tangents = t
        else:
            self.face_normals = np.zeros((0, 2))
            self.face_lengths = np.zeros(0)
            self.face_tangents = np.zeros((0, 2))

    # ------------------------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def tri_coords(self, tri: int) -> np.ndarray:
        return self.nodes[self.triangles[tri]]

    def with_nodes(self, new_nodes: np.ndarray) -> "BackgroundMesh":
        """Same topology on displaced nodes (mesh-map perturbations).

        The global mesh size ``h`` is kept at its unperturbed value: it is a
        method parameter of the weak forms, not a geometric quantity of the
        perturbed configuration.
        """
        return BackgroundMesh(
            n=self.n,
            nodes=np.asarray(new_nodes, dtype=float),
            triangles=self.triangles,
            interior_faces=self.interior_faces,
            boundary_faces=self.boundary_faces,
            boundary_normals=self.boundary_normals,
            h=self.h,
        )


def _face_tables(nodes: np.ndarray, triangles: np.ndarray):
    """Classify all edges by adjacency count; deterministic lexicographic order."""
    T = len(triangles)
    raw = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                          triangles[:, [2, 0]]])
    tri_of = np.tile(np.arange(T), 3)
    lo = raw.min(axis=1)
    hi = raw.max(axis=1)
    key = lo * len(nodes) + hi
    order = np.argsort(key, kind="stable")
    key_s, lo_s, hi_s, tri_s = key[order], lo[order], hi[order], tri_of[order]

    is_dup = np.zeros(len(key_s), dtype=bool)
    is_dup[1:] = key_s[1:] == key_s[:-1]
    if np.any(is_dup[1:] & is_dup[:-1]):
        raise ValueError("an edge is shared by more than two triangles")

    first = np.flatnonzero(~is_dup)
    counts = np.diff(np.append(first, len(key_s)))
    int_first = first[counts == 2]
    bd_first = first[counts == 1]

    a = lo_s[int_first]
    b = hi_s[int_first]
    ta = tri_s[int_first]
    tb = tri_s[int_first + 1]
    # tri_left = triangle behind the normal (t_y, -t_x) of a->b
    t_vec = nodes[b] - nodes[a]
    nrm = np.stack([t_vec[:, 1], -t_vec[:, 0]], axis=1)
    mid = 0.5 * (nodes[a] + nodes[b])
    ca = nodes[triangles[ta]].mean(axis=1)
    swap = np.sum((ca - mid) * nrm, axis=1) >= 0.0
    ta, tb = np.where(swap, tb, ta), np.where(swap, ta, tb)
    interior_faces = np.column_stack([a, b, ta, tb]).astype(np.int64)

    a = lo_s[bd_first]
    b = hi_s[bd_first]
    t = tri_s[bd_first]
    boundary_arr = np.column_stack([a, b, t]).astype(np.int64)
    t_vec = nodes[b] - nodes[a]
    nrm = np.stack([t_vec[:, 1], -t_vec[:, 0]], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    mid = 0.5 * (nodes[a] + nodes[b])
    c = nodes[triangles[t]].mean(axis=1)
    flip = np.sum(nrm * (mid - c), axis=1) < 0.0
    nrm[flip] *= -1.0
    return interior_faces, boundary_arr, nrm


def collect_faces(mesh: BackgroundMesh):
    """Partition of all mesh edges into (interior_faces, boundary_faces)."""
    interior, boundary, _ = _face_tables(mesh.nodes, mesh.triangles)
    return interior, boundary


def build_uniform_mesh(n: int) -> BackgroundMesh:
    """Uniform n x n triangulation of the unit square.

    Each cell is split along the lower-left to upper-right diagonal, giving
    2*n^2 congruent right triangles and h = sqrt(2)/n.
    """
    if n < 2:
        raise ValueError(f"need at least 2 cells per side, got n={n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    a = jj * (n + 1) + ii
    b = jj * (n + 1) + ii + 1
    c = (jj + 1) * (n + 1) + ii + 1
    d = (jj + 1) * (n + 1) + ii
    # cell (i, j) owns triangles 2*(j*n+i) (lower) and 2*(j*n+i)+1 (upper)
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.stack([a, b, c], axis=1)
    triangles[1::2] = np.stack([a, c, d], axis=1)

    interior, boundary, normals = _face_tables(nodes, triangles)
    return BackgroundMesh(
        n=n,
        nodes=nodes,
        triangles=triangles,
        interior_faces=interior,
        boundary_faces=boundary,
        boundary_normals=normals,
        h=np.sqrt(2.0) / n,
    )


def barycentric(tri_coords: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts`` (m, 2) in one triangle (3, 2)."""
    v0, v1, v2 = tri_coords
    e1 = v1 - v0
    e2 = v2 - v0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    d = pts - v0
    l1 = (d[:, 0] * e2[1] - d[:, 1] * e2[0]) / det
    l2 = (e1[0] * d[:, 1] - e1[1] * d[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])
