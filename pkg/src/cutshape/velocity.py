"""Steepest-descent velocity: a two-phase interface problem on one mesh.

The velocity lives in a doubled space with independent fields on each side
of the free boundary, coupled by Nitsche terms on the interface and pinned
to zero on the outer square.  Both components of the vector field see the
same scalar operator, so the system is assembled once and solved per
component.  Region-wise mass terms are included so the bilinear form
realizes the full H1 inner product used by the descent construction (and
keeps the hole-side block nonsingular).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import assembly
from .cutquad import CutDecomposition, ghost_face_set, seg_reference_rule
from .fem import SolverError, _check_residual, factorize
from .levelset import CellClass
from .mesh import BackgroundMesh


@dataclass
class VelocityParams:
    beta1: float = 10.0   # interface-jump penalty
    beta2: float = 10.0   # outer-boundary penalty
    gamma: float = 1.0    # ghost penalty per region


@dataclass
class DoubledVelocitySpace:
    """Scalar dof layout (node, side); vector dofs add a component axis.

    Plus dofs cover nodes of triangles meeting the annulus, minus dofs
    nodes of triangles meeting the hole; cut-cell nodes carry both.
    """

    mesh: BackgroundMesh
    plus_index: np.ndarray   # (N,) -> dof in [0, n_plus) or -1
    minus_index: np.ndarray  # (N,) -> dof in [n_plus, n_plus+n_minus) or -1
    n_plus: int
    n_minus: int

    @property
    def ndof(self) -> int:
        return self.n_plus + self.n_minus


def build_velocity_space(mesh: BackgroundMesh,
                         decomp: CutDecomposition) -> DoubledVelocitySpace:
    cls = decomp.cls
    plus_nodes = np.unique(mesh.triangles[cls.active_plus])
    plus_index = np.full(mesh.num_nodes, -1, dtype=np.int64)
    plus_index[plus_nodes] = np.arange(len(plus_nodes))
    minus_index = np.full(mesh.num_nodes, -1, dtype=np.int64)
    if len(cls.active_minus):
        minus_nodes = np.unique(mesh.triangles[cls.active_minus])
        minus_index[minus_nodes] = len(plus_nodes) + np.arange(len(minus_nodes))
        n_minus = len(minus_nodes)
    else:
        n_minus = 0
    return DoubledVelocitySpace(mesh=mesh, plus_index=plus_index,
                                minus_index=minus_index,
                                n_plus=len(plus_nodes), n_minus=n_minus)


@dataclass
class VelocityField:
    space: DoubledVelocitySpace
    coeffs: np.ndarray   # (ndof_scalar, 2)
    h1_norm: float

    def nodal(self) -> np.ndarray:
        """Single-valued nodal field for the transport step.

        At doubled nodes the annulus-side value wins; hole-only nodes take
        the minus value, so the advecting field is defined mesh-wide.
        """
        space = self.space
        out = np.zeros((space.mesh.num_nodes, 2))
        has_minus = space.minus_index >= 0
        out[has_minus] = self.coeffs[space.minus_index[has_minus]]
        has_plus = space.plus_index >= 0
        out[has_plus] = self.coeffs[space.plus_index[has_plus]]
        return out


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def _region_bulk_coo(mesh, decomp, index, region):
    """Stiffness + mass over one region, restricted to its own dofs."""
    cls = decomp.cls
    k_elem = assembly.tri_stiffness_elements(mesh)
    m_elem = assembly.tri_mass_elements(mesh)
    full = cls.inside if region == "plus" else cls.outside
    rows_l, cols_l, vals_l = [], [], []
    if len(full):
        r, c, v = assembly.coo_from_elements(mesh.triangles[full],
                                             k_elem[full] + m_elem[full])
        rows_l.append(index[r]), cols_l.append(index[c]), vals_l.append(v)
    if decomp.cutcells:
        cut = cls.cut
        tn = mesh.triangles[cut]
        areas = decomp.neg_areas() if region == "plus" else decomp.pos_areas()
        elem = (areas / mesh.tri_areas[cut])[:, None, None] * k_elem[cut]
        # sub-region mass via the batched quadrature (grouped per host cell)
        sq = decomp.subcell_quadrature("neg" if region == "plus" else "pos",
                                       order=2)
        if len(sq.weights):
            mass = np.einsum("m,mi,mj->mij", sq.weights, sq.lam, sq.lam)
            np.add.at(elem, sq.host, mass)
        r, c, v = assembly.coo_from_elements(tn, elem)
        rows_l.append(index[r]), cols_l.append(index[c]), vals_l.append(v)
    if not rows_l:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    return (np.concatenate(rows_l), np.concatenate(cols_l),
            np.concatenate(vals_l))


def _interface_coupling_coo(mesh, decomp, space, beta1):
    """Nitsche coupling across the free boundary on the 6 doubled dofs."""
    if not decomp.cutcells:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    ib = decomp.interface_batch(order=2)
    dn = np.einsum("kjd,kd->kj", ib.grads, ib.normals)       # (k, 3)
    avg = 0.5 * np.concatenate([dn, dn], axis=1)             # (k, 6)
    jmp = np.concatenate([ib.lam, -ib.lam], axis=2)          # (k, q, 6)
    jmp_int = np.einsum("kq,kqi->ki", ib.weights, jmp)
    jmp_mass = np.einsum("kq,kqi,kqj->kij", ib.weights, jmp, jmp)
    elem = (-np.einsum("ki,kj->kij", jmp_int, avg)
            - np.einsum("ki,kj->kij", avg, jmp_int)
            + (beta1 / mesh.h) * jmp_mass)
    dofs = np.concatenate([space.plus_index[ib.tn], space.minus_index[ib.tn]],
                          axis=1)
    assert dofs.min() >= 0, "cut-cell node missing a doubled dof"
    return assembly.coo_from_elements(dofs, elem)


def _outer_boundary_elements(mesh, beta2):
    """Per-face Nitsche element matrices on the outer square (mesh-static)."""
    cache = assembly._cache(mesh)
    key = ("vel_outer", beta2)
    if key not in cache:
        from .cutquad import _batch_barycentric

        s_ref, w_ref = seg_reference_rule(2)
        tris = mesh.boundary_faces[:, 2]
        tn = mesh.triangles[tris]                       # (F, 3)
        p0 = mesh.nodes[mesh.boundary_faces[:, 0]]
        p1 = mesh.nodes[mesh.boundary_faces[:, 1]]
        d = p1 - p0
        lengths = np.linalg.norm(d, axis=1)
        pts = p0[:, None, :] + s_ref[None, :, None] * d[:, None, :]
        lam = _batch_barycentric(mesh.nodes[tn], pts)   # (F, q, 3)
        wq = w_ref[None, :] * lengths[:, None]
        dn = np.einsum("fjd,fd->fj", mesh.tri_grads[tris],
                       mesh.boundary_normals)
        phi_int = np.einsum("fq,fqj->fj", wq, lam)
        mass = np.einsum("fq,fqi,fqj->fij", wq, lam, lam)
        elem = (-np.einsum("fi,fj->fij", phi_int, dn)
                - np.einsum("fi,fj->fij", dn, phi_int)
                + (beta2 / mesh.h) * mass)
        cache[key] = (tn, elem)
    return cache[key]


def _outer_boundary_coo(mesh, decomp, space, beta2):
    """Weak zero condition on the outer square (annulus-side trace)."""
    if np.any(decomp.cls.classes[mesh.boundary_faces[:, 2]] == CellClass.OUTSIDE):
        raise SolverError("hole reaches the outer boundary")
    tn, elem = _outer_boundary_elements(mesh, beta2)
    dofs = space.plus_index[tn]
    assert dofs.min() >= 0
    return assembly.coo_from_elements(dofs, elem)


def _region_ghost_coo(mesh, decomp, index, region, gamma):
    faces = ghost_face_set(mesh, decomp.cls, mode="all_interior", region=region)
    if len(faces) == 0 or gamma == 0.0:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    r, c, v = assembly.jump_penalty_coo(mesh, faces, gamma * mesh.h)
    return index[r], index[c], v


def assemble_velocity_system(mesh: BackgroundMesh, decomp: CutDecomposition,
                             space: DoubledVelocitySpace,
                             params: VelocityParams):
    """Returns (A, H): the full operator and the broken-H1 block.

    A = region stiffness+mass + interface Nitsche coupling + outer-boundary
    Nitsche terms + region-wise ghost penalties.  H keeps only the region
    stiffness+mass and is used for H1 norms.
    """
    if params.beta1 <= 0 or params.beta2 <= 0 or params.gamma <= 0:
        raise ValueError("velocity penalties must be positive")
    if space.n_plus == 0:
        raise ValueError("empty annulus region")
    parts_h = [
        _region_bulk_coo(mesh, decomp, space.plus_index, "plus"),
        _region_bulk_coo(mesh, decomp, space.minus_index, "minus"),
    ]
    parts_a = parts_h + [
        _interface_coupling_coo(mesh, decomp, space, params.beta1),
        _outer_boundary_coo(mesh, decomp, space, params.beta2),
        _region_ghost_coo(mesh, decomp, space.plus_index, "plus", params.gamma),
        _region_ghost_coo(mesh, decomp, space.minus_index, "minus", params.gamma),
    ]

    def cat(parts, k):
        return np.concatenate([p[k] for p in parts])

    A = assembly.build_csr(cat(parts_a, 0), cat(parts_a, 1), cat(parts_a, 2),
                           space.ndof)
    H = assembly.build_csr(cat(parts_h, 0), cat(parts_h, 1), cat(parts_h, 2),
                           space.ndof)
    return A, H


# ----------------------------------------------------------------------
# solve / normalize
# ----------------------------------------------------------------------

def broken_h1_norm(H: sp.csr_matrix, coeffs: np.ndarray) -> float:
    return float(np.sqrt(sum(coeffs[:, c] @ (H @ coeffs[:, c])
                             for c in range(coeffs.shape[1]))))


def solve_velocity(A: sp.csr_matrix, H: sp.csr_matrix,
                   space: DoubledVelocitySpace,
                   sd_values: np.ndarray) -> VelocityField:
    """Riesz-represent the negated shape gradient in the doubled space."""
    if sd_values.shape != (space.ndof, 2):
        raise ValueError("shape-gradient vector does not match the space")
    lu = factorize(A)
    anorm = abs(A).sum(axis=1).max()
    coeffs = np.empty((space.ndof, 2))
    for c in range(2):
        rhs = -sd_values[:, c]
        coeffs[:, c] = lu.solve(rhs)
        _check_residual(A, coeffs[:, c], rhs, anorm)
    return VelocityField(space=space, coeffs=coeffs,
                         h1_norm=broken_h1_norm(H, coeffs))


def normalize(field: VelocityField) -> VelocityField:
    if field.h1_norm <= 0.0:
        raise ValueError("cannot normalize a zero velocity field")
    return VelocityField(space=field.space,
                         coeffs=field.coeffs / field.h1_norm,
                         h1_norm=1.0)
