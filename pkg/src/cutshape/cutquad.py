"""Quadrature on cut triangles, interface segments, and mesh faces.

The interface inside each cut triangle is the zero segment of the linear
interpolant, so the negative region is either a triangle or a quadrilateral
(split into two sub-triangles).  All rules are exact for polynomials up to
the declared order on their sub-region; interface normals point out of the
annulus (the phi < 0 region).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import BackgroundMesh
from .levelset import CellClass, Classification, LevelSetField, classify

# reference triangle rules in barycentric coordinates, weights sum to 1
_TRI_RULES = {
    2: (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.array([1.0, 1.0, 1.0]) / 3.0,
    ),
    4: (
        np.array(
            [
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459],
            ]
        ),
        np.array(
            [
                0.223381589678011, 0.223381589678011, 0.223381589678011,
                0.109951743655322, 0.109951743655322, 0.109951743655322,
            ]
        ),
    ),
}

# Gauss-Legendre on [0,1]
_SEG_RULES = {
    2: (
        0.5 + 0.5 * np.array([-1.0, 1.0]) / np.sqrt(3.0),
        np.array([0.5, 0.5]),
    ),
    4: (
        0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]),
        np.array([5.0, 8.0, 5.0]) / 18.0,
    ),
}


def tri_reference_rule(order: int):
    if order not in _TRI_RULES:
        raise ValueError(f"unsupported triangle quadrature order {order}")
    return _TRI_RULES[order]


def seg_reference_rule(order: int):
    if order not in _SEG_RULES:
        raise ValueError(f"unsupported segment quadrature order {order}")
    return _SEG_RULES[order]


@dataclass
class VolumeRule:
    points: np.ndarray   # (q, 2)
    weights: np.ndarray  # (q,), sum to the sub-region area


@dataclass
class InterfaceRule:
    points: np.ndarray
    weights: np.ndarray  # sum to the segment length
    normal: np.ndarray   # unit, out of the annulus


def map_tri_rule(coords: np.ndarray, order: int) -> VolumeRule:
    """Reference rule mapped to one triangle given by (3, 2) coordinates."""
    bary, w = tri_reference_rule(order)
    pts = bary @ coords
    e1 = coords[1] - coords[0]
    e2 = coords[2] - coords[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    return VolumeRule(points=pts, weights=w * area)


# ----------------------------------------------------------------------
# cut-cell geometry
# ----------------------------------------------------------------------

@dataclass
class CutCell:
    """Sub-cell geometry of one cut triangle."""

    tri: int
    neg_subtris: np.ndarray  # (k, 3, 2) covering K intersect {phi<0}
    pos_subtris: np.ndarray  # (m, 3, 2) covering K intersect {phi>0}
    segment: np.ndarray      # (2, 2) zero-segment endpoints
    normal: np.ndarray       # (2,) unit, grad(phi)/|grad(phi)|
    neg_area: float
    pos_area: float


def split_cut_triangle(coords: np.ndarray, vals: np.ndarray) -> tuple:
    """Negative/positive sub-triangles and the zero segment of one cut cell.

    ``coords`` (3, 2), ``vals`` (3,) with mixed signs and no exact zeros.
    """
    neg = vals < 0.0
    nneg = int(neg.sum())
    if nneg not in (1, 2):
        raise ValueError("split_cut_triangle needs mixed nodal signs")
    # lone vertex: the single node whose sign differs from the other two
    lone = int(np.flatnonzero(neg)[0]) if nneg == 1 else int(np.flatnonzero(~neg)[0])
    j, k = (lone + 1) % 3, (lone + 2) % 3
    sj = vals[lone] / (vals[lone] - vals[j])
    sk = vals[lone] / (vals[lone] - vals[k])
    pj = coords[lone] + sj * (coords[j] - coords[lone])
    pk = coords[lone] + sk * (coords[k] - coords[lone])
    tri_part = np.array([[coords[lone], pj, pk]])
    quad_part = np.array([[pj, coords[j], coords[k]], [pj, coords[k], pk]])
    if nneg == 1:
        neg_subtris, pos_subtris = tri_part, quad_part
    else:
        neg_subtris, pos_subtris = quad_part, tri_part
    segment = np.array([pj, pk])
    return neg_subtris, pos_subtris, segment


def _subtri_areas(subtris: np.ndarray) -> float:
    e1 = subtris[:, 1] - subtris[:, 0]
    e2 = subtris[:, 2] - subtris[:, 0]
    return float(np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]).sum() * 0.5)


def make_cut_cell(tri: int, coords: np.ndarray, vals: np.ndarray,
                  grads: np.ndarray) -> CutCell:
    neg_subtris, pos_subtris, segment = split_cut_triangle(coords, vals)
    grad = vals @ grads
    nrm = grad / np.linalg.norm(grad)
    return CutCell(
        tri=tri,
        neg_subtris=neg_subtris,
        pos_subtris=pos_subtris,
        segment=segment,
        normal=nrm,
        neg_area=_subtri_areas(neg_subtris),
        pos_area=_subtri_areas(pos_subtris),
    )


@dataclass
class InterfaceBatch:
    """All interface segments of a decomposition as flat arrays.

    ``lam`` holds the host-triangle P1 basis values at the segment
    quadrature points, so interface integrals reduce to einsums.
    """

    tris: np.ndarray     # (k,) cut triangle ids
    tn: np.ndarray       # (k, 3) node ids
    grads: np.ndarray    # (k, 3, 2)
    normals: np.ndarray  # (k, 2)
    lengths: np.ndarray  # (k,)
    points: np.ndarray   # (k, q, 2)
    weights: np.ndarray  # (k, q)
    lam: np.ndarray      # (k, q, 3)


@dataclass
class SubcellQuadrature:
    """Volume rule over all negative (or positive) sub-triangles, flattened."""

    host: np.ndarray     # (M,) position into cls.cut
    tn: np.ndarray       # (M, 3) host node ids
    points: np.ndarray   # (M, 2)
    weights: np.ndarray  # (M,)
    lam: np.ndarray      # (M, 3) host-barycentric


@dataclass
class CutDecomposition:
    """Per-triangle classification plus sub-cell geometry for cut cells."""

    mesh: BackgroundMesh
    phi: LevelSetField
    cls: Classification
    cutcells: list  # CutCell, aligned with cls.cut

    def __post_init__(self):
        self._batches = {}

    @property
    def cut_index(self) -> dict:
        if not hasattr(self, "_cut_index"):
            self._cut_index = {int(c.tri): c for c in self.cutcells}
        return self._cut_index

    def omega_area(self) -> float:
        area = self.mesh.tri_areas[self.cls.inside].sum()
        return float(area + sum(c.neg_area for c in self.cutcells))

    def interface_length(self) -> float:
        return float(sum(np.linalg.norm(c.segment[1] - c.segment[0])
                         for c in self.cutcells))

    def neg_areas(self) -> np.ndarray:
        return np.array([c.neg_area for c in self.cutcells])

    def pos_areas(self) -> np.ndarray:
        return np.array([c.pos_area for c in self.cutcells])

    def interface_batch(self, order: int = 2) -> InterfaceBatch:
        key = ("iface", order)
        if key not in self._batches:
            mesh = self.mesh
            tris = np.array([c.tri for c in self.cutcells], dtype=np.int64)
            tn = mesh.triangles[tris]
            segs = np.array([c.segment for c in self.cutcells])  # (k, 2, 2)
            normals = np.array([c.normal for c in self.cutcells])
            s_ref, w_ref = seg_reference_rule(order)
            d = segs[:, 1] - segs[:, 0]
            lengths = np.linalg.norm(d, axis=1)
            pts = segs[:, None, 0, :] + s_ref[None, :, None] * d[:, None, :]
            weights = w_ref[None, :] * lengths[:, None]
            lam = _batch_barycentric(mesh.nodes[tn], pts)
            self._batches[key] = InterfaceBatch(
                tris=tris, tn=tn, grads=mesh.tri_grads[tris], normals=normals,
                lengths=lengths, points=pts, weights=weights, lam=lam)
        return self._batches[key]

    def subcell_quadrature(self, region: str, order: int = 2) -> SubcellQuadrature:
        key = ("sub", region, order)
        if key not in self._batches:
            mesh = self.mesh
            hosts = []
            subs = []
            for pos, cc in enumerate(self.cutcells):
                chosen = cc.neg_subtris if region == "neg" else cc.pos_subtris
                for sub in chosen:
                    hosts.append(pos)
                    subs.append(sub)
            if not hosts:
                empty = np.zeros(0)
                self._batches[key] = SubcellQuadrature(
                    host=np.zeros(0, np.int64), tn=np.zeros((0, 3), np.int64),
                    points=empty.reshape(0, 2), weights=empty,
                    lam=empty.reshape(0, 3))
                return self._batches[key]
            hosts = np.array(hosts)
            subs = np.array(subs)                 # (S, 3, 2)
            bary, w_ref = tri_reference_rule(order)
            pts = np.einsum("qj,sjd->sqd", bary, subs)
            e1 = subs[:, 1] - subs[:, 0]
            e2 = subs[:, 2] - subs[:, 0]
            areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            weights = w_ref[None, :] * areas[:, None]
            tris = np.array([self.cutcells[h].tri for h in hosts])
            tn = mesh.triangles[tris]
            lam = _batch_barycentric(mesh.nodes[tn], pts)
            q = pts.shape[1]
            self._batches[key] = SubcellQuadrature(
                host=np.repeat(hosts, q),
                tn=np.repeat(tn, q, axis=0),
                points=pts.reshape(-1, 2),
                weights=weights.ravel(),
                lam=lam.reshape(-1, 3))
        return self._batches[key]


def _batch_barycentric(tri_coords: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates for (k, 3, 2) triangles at (k, q, 2) points."""
    v0 = tri_coords[:, 0]
    e1 = tri_coords[:, 1] - v0
    e2 = tri_coords[:, 2] - v0
    det = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])[:, None]
    d = pts - v0[:, None, :]
    l1 = (d[:, :, 0] * e2[:, None, 1] - d[:, :, 1] * e2[:, None, 0]) / det
    l2 = (e1[:, None, 0] * d[:, :, 1] - e1[:, None, 1] * d[:, :, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=2)


def decompose(mesh: BackgroundMesh, phi: LevelSetField) -> CutDecomposition:
    cls = classify(mesh, phi)
    cells = []
    for t in cls.cut:
        tn = mesh.triangles[t]
        cells.append(make_cut_cell(int(t), mesh.nodes[tn], phi.values[tn],
                                   mesh.tri_grads[t]))
    return CutDecomposition(mesh=mesh, phi=phi, cls=cls, cutcells=cells)


# ----------------------------------------------------------------------
# rules on cut cells and faces
# ----------------------------------------------------------------------

def cut_volume_rule(tri_coords: np.ndarray, phi_vals: np.ndarray,
                    order: int = 2) -> VolumeRule:
    """Quadrature over the phi<0 part of one triangle."""
    vals = np.asarray(phi_vals, dtype=float)
    if np.all(vals > 0.0):
        raise ValueError("triangle has no phi<0 part")
    if np.all(vals < 0.0):
        return map_tri_rule(np.asarray(tri_coords, dtype=float), order)
    neg_subtris, _, _ = split_cut_triangle(np.asarray(tri_coords, float), vals)
    rules = [map_tri_rule(s, order) for s in neg_subtris]
    return VolumeRule(
        points=np.vstack([r.points for r in rules]),
        weights=np.concatenate([r.weights for r in rules]),
    )


def interface_rule(tri_coords: np.ndarray, phi_vals: np.ndarray,
                   order: int = 2) -> InterfaceRule:
    """Rule on the zero segment of one cut triangle, normal out of the annulus."""
    coords = np.asarray(tri_coords, dtype=float)
    vals = np.asarray(phi_vals, dtype=float)
    if np.all(vals > 0.0) or np.all(vals < 0.0):
        raise ValueError("triangle is not cut")
    _, _, segment = split_cut_triangle(coords, vals)
    # gradient of the linear interpolant on this triangle
    e1 = coords[1] - coords[0]
    e2 = coords[2] - coords[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    g1 = np.array([e2[1], -e2[0]]) / det
    g2 = np.array([-e1[1], e1[0]]) / det
    grad = (vals[1] - vals[0]) * g1 + (vals[2] - vals[0]) * g2
    normal = grad / np.linalg.norm(grad)
    return segment_rule(segment[0], segment[1], normal, order)


def segment_rule(p0: np.ndarray, p1: np.ndarray, normal: np.ndarray,
                 order: int = 2) -> InterfaceRule:
    s, w = seg_reference_rule(order)
    pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    length = float(np.linalg.norm(p1 - p0))
    return InterfaceRule(points=pts, weights=w * length, normal=np.asarray(normal))


def boundary_face_rule(mesh: BackgroundMesh, face: int,
                       order: int = 2) -> InterfaceRule:
    """Gauss rule on one boundary face with the square's outward normal."""
    a, b, _tri = mesh.boundary_faces[face]
    return segment_rule(mesh.nodes[a], mesh.nodes[b],
                        mesh.boundary_normals[face], order)


def ghost_face_set(mesh: BackgroundMesh, cls: Classification,
                   mode: str = "all_interior",
                   region: str = "plus") -> np.ndarray:
    """Interior faces carrying the gradient-jump penalty for one region.

    ``all_interior``: every interior face between two active cells of the
    region (the default, matching the globally-acting stabilization);
    ``interface_zone``: only those with at least one cut neighbour.
    """
    if region == "plus":
        active = cls.classes != CellClass.OUTSIDE
    elif region == "minus":
        active = cls.classes != CellClass.INSIDE
    else:
        raise ValueError(f"unknown region '{region}'")
    tl = mesh.interior_faces[:, 2]
    tr = mesh.interior_faces[:, 3]
    both_active = active[tl] & active[tr]
    if mode == "all_interior":
        keep = both_active
    elif mode == "interface_zone":
        is_cut = cls.classes == CellClass.CUT
        keep = both_active & (is_cut[tl] | is_cut[tr])
    else:
        raise ValueError(f"unknown ghost mode '{mode}'")
    return np.flatnonzero(keep)
