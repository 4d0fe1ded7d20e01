"""Nodal P1 level-set fields: preset geometries, cell classification, isolines.

Sign convention: phi < 0 in the computational domain (the annulus between
the free boundary and the outer square), phi > 0 inside the excluded hole.
Nodal values are snapped away from zero so every triangle has a clean
sign pattern and the cut topology is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .mesh import BackgroundMesh

SNAP_TOL = 1e-10


class CellClass(IntEnum):
    INSIDE = 0    # all three nodal values < 0 (triangle inside the annulus)
    OUTSIDE = 1   # all three > 0 (triangle inside the hole)
    CUT = 2


@dataclass
class LevelSetField:
    mesh: BackgroundMesh
    values: np.ndarray  # (N,), snapped

    def copy(self) -> "LevelSetField":
        return LevelSetField(self.mesh, self.values.copy())


def snap_values(values: np.ndarray) -> np.ndarray:
    """Replace near-zero nodal values by -SNAP_TOL (counted as inside)."""
    v = np.asarray(values, dtype=float).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("level-set values must be finite")
    v[np.abs(v) <= SNAP_TOL] = -SNAP_TOL
    return v


def from_values(mesh: BackgroundMesh, values: np.ndarray) -> LevelSetField:
    return LevelSetField(mesh, snap_values(values))


def from_function(mesh: BackgroundMesh, fn) -> LevelSetField:
    return from_values(mesh, fn(mesh.nodes))


# ----------------------------------------------------------------------
# preset geometries
# ----------------------------------------------------------------------

def _circle(pts, center, radius):
    return radius - np.linalg.norm(pts - np.asarray(center), axis=1)


def _ellipse(pts, center, c1, c2):
    dx = (pts[:, 0] - center[0]) / c1
    dy = (pts[:, 1] - center[1]) / c2
    return 1.0 - dx * dx - dy * dy


def _lame(pts, center, a, b, power):
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    return 1.0 - a * dx**power - b * dy**power


def _cassini(pts, center, scale, b):
    xh = scale * (pts[:, 0] - center[0])
    yh = scale * (pts[:, 1] - center[1])
    r2 = xh * xh + yh * yh
    return -(r2 * r2) + 2.0 * (xh * xh - yh * yh) - 1.0 + b**4


PRESETS = {
    "circle": (_circle, ("center", "radius")),
    "ellipse": (_ellipse, ("center", "c1", "c2")),
    "lame": (_lame, ("center", "a", "b", "power")),
    "cassini": (_cassini, ("center", "scale", "b")),
}


def preset_levelset(name: str, params: dict, mesh: BackgroundMesh) -> LevelSetField:
    """Nodal interpolation of one of the preset geometries, then snapping.

    Composite presets ``two_circles`` and ``two_lame`` take parameter dicts
    ``first`` and ``second`` and combine the parts with a nodewise maximum.
    """
    if name in ("two_circles", "two_lame"):
        sub = "circle" if name == "two_circles" else "lame"
        try:
            a = preset_levelset(sub, params["first"], mesh)
            b = preset_levelset(sub, params["second"], mesh)
        except KeyError as exc:
            raise KeyError(f"preset '{name}' missing parameter {exc}") from exc
        return combine_max(a, b)
    if name not in PRESETS:
        raise ValueError(f"unknown level-set preset '{name}'")
    fn, keys = PRESETS[name]
    missing = [k for k in keys if k not in params]
    if missing:
        raise KeyError(f"preset '{name}' missing parameters {missing}")
    args = [params[k] for k in keys]
    return from_values(mesh, fn(mesh.nodes, *args))


def combine_max(a: LevelSetField, b: LevelSetField) -> LevelSetField:
    if a.mesh is not b.mesh and a.mesh.n != b.mesh.n:
        raise ValueError("level-set fields live on different meshes")
    return from_values(a.mesh, np.maximum(a.values, b.values))


# ----------------------------------------------------------------------
# classification
# ----------------------------------------------------------------------

@dataclass
class Classification:
    classes: np.ndarray        # (T,) CellClass values
    inside: np.ndarray         # triangle indices, all nodes negative
    outside: np.ndarray
    cut: np.ndarray
    active_primal: np.ndarray  # inside + cut (K intersects the annulus)
    active_plus: np.ndarray    # same set: the annulus is the '+' region
    active_minus: np.ndarray   # outside + cut (K intersects the hole)


def classify(mesh: BackgroundMesh, phi: LevelSetField) -> Classification:
    neg = phi.values[mesh.triangles] < 0.0   # (T, 3)
    nneg = neg.sum(axis=1)
    classes = np.full(mesh.num_triangles, CellClass.CUT, dtype=np.int8)
    classes[nneg == 3] = CellClass.INSIDE
    classes[nneg == 0] = CellClass.OUTSIDE
    inside = np.flatnonzero(classes == CellClass.INSIDE)
    outside = np.flatnonzero(classes == CellClass.OUTSIDE)
    cut = np.flatnonzero(classes == CellClass.CUT)
    active_primal = np.flatnonzero(classes != CellClass.OUTSIDE)
    active_minus = np.flatnonzero(classes != CellClass.INSIDE)
    return Classification(
        classes=classes,
        inside=inside,
        outside=outside,
        cut=cut,
        active_primal=active_primal,
        active_plus=active_primal,
        active_minus=active_minus,
    )


def min_cut_gradient(mesh: BackgroundMesh, phi: LevelSetField) -> float:
    """Smallest |grad phi| over cut triangles (diagnostic only).

    A vanishing gradient near the interface degrades the accuracy of the
    transported front; we log it but take no corrective action.  A
    re-distancing hook could be added here; none was needed in practice.
    """
    cls = classify(mesh, phi)
    if len(cls.cut) == 0:
        return np.inf
    vals = phi.values[mesh.triangles[cls.cut]]          # (k, 3)
    grads = np.einsum("kj,kjd->kd", vals, mesh.tri_grads[cls.cut])
    return float(np.linalg.norm(grads, axis=1).min())


# ----------------------------------------------------------------------
# isoline extraction
# ----------------------------------------------------------------------

def _cut_edges(tri_nodes, vals):
    """The two edges of a cut triangle crossed by the zero level."""
    edges = []
    for k in range(3):
        a, b = k, (k + 1) % 3
        if (vals[a] < 0.0) != (vals[b] < 0.0):
            edges.append((tri_nodes[a], tri_nodes[b], vals[a], vals[b]))
    return edges


def _crossing(mesh, na, nb, va, vb):
    s = va / (va - vb)
    return mesh.nodes[na] + s * (mesh.nodes[nb] - mesh.nodes[na])


def extract_isoline(mesh: BackgroundMesh, phi: LevelSetField) -> list[np.ndarray]:
    """Zero isoline of the P1 interpolant as closed point chains.

    Returns one (k, 2) array per connected component, first point repeated
    at the end, oriented with the annulus (phi < 0) on the left.  Raises if
    a chain fails to close, which indicates broken cut topology.
    """
    cls = classify(mesh, phi)
    if len(cls.cut) == 0:
        return []

    # per cut triangle: its two crossed edges (keyed by sorted node pair)
    tri_edges = {}
    edge_tris: dict[tuple[int, int], list[int]] = {}
    for t in cls.cut:
        tn = mesh.triangles[t]
        vals = phi.values[tn]
        crossings = _cut_edges(tn, vals)
        assert len(crossings) == 2
        keys = []
        for (na, nb, va, vb) in crossings:
            key = (na, nb) if na < nb else (nb, na)
            keys.append(key)
            edge_tris.setdefault(key, []).append(t)
        tri_edges[int(t)] = keys

    points = {key: _crossing(mesh, key[0], key[1],
                             phi.values[key[0]], phi.values[key[1]])
              for key in edge_tris}

    chains = []
    visited: set[int] = set()
    for t0 in map(int, cls.cut):
        if t0 in visited:
            continue
        # walk the cut-triangle cycle through shared crossed edges
        chain_pts = []
        t = t0
        enter = tri_edges[t][0]
        while True:
            visited.add(t)
            e_in, e_out = tri_edges[t]
            if e_in != enter:
                e_in, e_out = e_out, e_in
            chain_pts.append(points[e_in])
            nbrs = [x for x in edge_tris[e_out] if x != t]
            if not nbrs:
                raise ValueError(
                    f"open isoline chain: crossed edge {e_out} has no neighbour")
            t = nbrs[0]
            enter = e_out
            if t == t0:
                chain_pts.append(points[tri_edges[t0][0]])
                break
            if t in visited:
                raise ValueError("isoline stitching revisited a triangle")
        chain = np.array(chain_pts)
        chains.append(_orient(mesh, phi, chain, t0))
    return chains


def _orient(mesh, phi, chain, tri):
    """Flip the chain so the phi<0 side lies to the left of travel."""
    tn = mesh.triangles[tri]
    grad = phi.values[tn] @ mesh.tri_grads[tri]
    d = chain[1] - chain[0]
    want = np.array([-grad[1], grad[0]])
    if np.dot(d, want) < 0.0:
        chain = chain[::-1].copy()
    return chain


# ----------------------------------------------------------------------
# plain-text snapshot formats
# ----------------------------------------------------------------------

def write_snapshot(path, phi: LevelSetField, iteration: int):
    with open(path, "w") as f:
        f.write(f"levelset n={phi.mesh.n} iter={iteration}\n")
        for v in phi.values:
            f.write(f"{v:.17g}\n")


def read_snapshot(path, mesh: BackgroundMesh) -> LevelSetField:
    with open(path) as f:
        header = f.readline().split()
        if not header or header[0] != "levelset":
            raise ValueError(f"{path}: not a level-set snapshot")
        vals = np.array([float(line) for line in f if line.strip()])
    if len(vals) != mesh.num_nodes:
        raise ValueError(f"{path}: {len(vals)} values for {mesh.num_nodes} nodes")
    return LevelSetField(mesh, vals)


def write_polylines(path, chains: list[np.ndarray]):
    with open(path, "w") as f:
        for k, chain in enumerate(chains):
            if k:
                f.write("\n")
            for x, y in chain:
                f.write(f"{x:.17g} {y:.17g}\n")


def read_polylines(path) -> list[np.ndarray]:
    chains = []
    current = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                if current:
                    chains.append(np.array(current))
                    current = []
                continue
            x, y = line.split()
            current.append((float(x), float(y)))
    if current:
        chains.append(np.array(current))
    return chains
