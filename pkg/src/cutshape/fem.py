"""Primal/dual cut finite element solves and the boundary-misfit cost.

The bilinear form combines the stiffness over the annulus, symmetric
Nitsche terms on the free boundary, and a gradient-jump penalty on the
interior faces between active cells.  Dirichlet data on the free boundary
is homogeneous, Neumann data on the outer square is natural, and the dual
problem reuses the primal matrix (the form is symmetric).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .cutquad import (CutDecomposition, ghost_face_set, map_tri_rule,
                      seg_reference_rule, tri_reference_rule)
from .mesh import BackgroundMesh, barycentric
from .problems import ProblemData


@dataclass
class FemParams:
    beta: float = 10.0            # Nitsche penalty coefficient
    gamma: float = 0.1            # ghost-penalty coefficient
    quad_order: int = 2           # volume data terms
    data_quad_order: int = 2      # boundary data terms (g_N, g_D, cost)
    ghost_mode: str = "all_interior"
    solver: str = "direct"

    def __post_init__(self):
        if self.beta <= 0.0 or self.gamma < 0.0:
            raise ValueError("penalties must be positive (gamma may be 0 in diagnostics)")


@dataclass
class DofMap:
    nodes: np.ndarray    # active node indices, ascending
    index: np.ndarray    # (N,) node -> dof, -1 if inactive
    ndof: int

    @classmethod
    def from_triangles(cls, mesh: BackgroundMesh, tris: np.ndarray) -> "DofMap":
        if len(tris) == 0:
            raise ValueError("empty active set: no degrees of freedom")
        nodes = np.unique(mesh.triangles[tris])
        index = np.full(mesh.num_nodes, -1, dtype=np.int64)
        index[nodes] = np.arange(len(nodes))
        return cls(nodes=nodes, index=index, ndof=len(nodes))


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    ndof: int


@dataclass
class FEFunction:
    dofmap: DofMap
    coeffs: np.ndarray

    def nodal(self, num_nodes: int) -> np.ndarray:
        full = np.zeros(num_nodes)
        full[self.dofmap.nodes] = self.coeffs
        return full


# ----------------------------------------------------------------------
# matrix
# ----------------------------------------------------------------------

def assemble_ah(mesh: BackgroundMesh, decomp: CutDecomposition,
                params: FemParams) -> tuple[sp.csr_matrix, DofMap]:
    """Stiffness + Nitsche free-boundary terms + ghost penalty, restricted
    to the active dofs."""
    cls = decomp.cls
    dofmap = DofMap.from_triangles(mesh, cls.active_primal)

    k_elem = assembly.tri_stiffness_elements(mesh)
    rows_l, cols_l, vals_l = [], [], []

    # full stiffness on inside triangles
    if len(cls.inside):
        r, c, v = assembly.coo_from_elements(mesh.triangles[cls.inside],
                                             k_elem[cls.inside])
        rows_l.append(r), cols_l.append(c), vals_l.append(v)

    # cut triangles: the P1 gradients are constant, so the annulus part of
    # the stiffness is the full element matrix scaled by the area fraction
    if decomp.cutcells:
        cut = cls.cut
        neg_areas = np.array([cc.neg_area for cc in decomp.cutcells])
        scaled = (neg_areas / mesh.tri_areas[cut])[:, None, None] * k_elem[cut]
        r, c, v = assembly.coo_from_elements(mesh.triangles[cut], scaled)
        rows_l.append(r), cols_l.append(c), vals_l.append(v)

        # Nitsche terms on the interface segments
        r, c, v = _nitsche_interface_coo(mesh, decomp, params.beta)
        rows_l.append(r), cols_l.append(c), vals_l.append(v)

    # ghost penalty
    faces = ghost_face_set(mesh, cls, mode=params.ghost_mode, region="plus")
    if len(faces) and params.gamma > 0.0:
        r, c, v = assembly.jump_penalty_coo(mesh, faces,
                                            params.gamma * mesh.h)
        rows_l.append(r), cols_l.append(c), vals_l.append(v)

    rows = np.concatenate(rows_l)
    cols = np.concatenate(cols_l)
    vals = np.concatenate(vals_l)
    ri = dofmap.index[rows]
    ci = dofmap.index[cols]
    assert ri.min() >= 0 and ci.min() >= 0, "contribution outside active set"
    return assembly.build_csr(ri, ci, vals, dofmap.ndof), dofmap


def _nitsche_interface_coo(mesh, decomp, beta):
    """- <Dn w, v> - <Dn v, w> + beta/h <w, v> over all interface segments."""
    ib = decomp.interface_batch(order=2)
    dn = np.einsum("kjd,kd->kj", ib.grads, ib.normals)      # (k, 3)
    phi_int = np.einsum("kq,kqj->kj", ib.weights, ib.lam)   # (k, 3)
    mass = np.einsum("kq,kqi,kqj->kij", ib.weights, ib.lam, ib.lam)
    elem = (-np.einsum("ki,kj->kij", phi_int, dn)
            - np.einsum("ki,kj->kij", dn, phi_int)
            + (beta / mesh.h) * mass)
    return assembly.coo_from_elements(ib.tn, elem)


# ----------------------------------------------------------------------
# right-hand sides and cost
# ----------------------------------------------------------------------

def _volume_load(mesh, decomp, dofmap, f, order) -> np.ndarray:
    """(f, v) over the annulus."""
    b = np.zeros(dofmap.ndof)
    if f is None:
        return b
    cls = decomp.cls
    bary, w_ref = tri_reference_rule(order)
    if len(cls.inside):
        tn = mesh.triangles[cls.inside]
        coords = mesh.nodes[tn]                      # (k, 3, 2)
        pts = np.einsum("qj,kjd->kqd", bary, coords)  # (k, q, 2)
        fv = f(pts.reshape(-1, 2)).reshape(len(tn), -1)
        wq = w_ref[None, :] * mesh.tri_areas[cls.inside][:, None]
        contrib = np.einsum("kq,qj->kj", fv * wq, bary)
        np.add.at(b, dofmap.index[tn], contrib)
    sq = decomp.subcell_quadrature("neg", order)
    if len(sq.weights):
        fv = f(sq.points)
        contrib = (sq.weights * fv)[:, None] * sq.lam
        np.add.at(b, dofmap.index[sq.tn].ravel(), contrib.ravel())
    return b


def _boundary_pairs(mesh, order):
    """Quadrature points/weights and the two face nodes for every outer face."""
    cache = assembly._cache(mesh)
    key = ("bd_rule", order)
    if key not in cache:
        s_ref, w_ref = seg_reference_rule(order)
        a = mesh.boundary_faces[:, 0]
        b = mesh.boundary_faces[:, 1]
        pa = mesh.nodes[a]
        pb = mesh.nodes[b]
        pts = pa[:, None, :] + s_ref[None, :, None] * (pb - pa)[:, None, :]
        lengths = np.linalg.norm(pb - pa, axis=1)
        wq = w_ref[None, :] * lengths[:, None]
        lam = np.stack([1.0 - s_ref, s_ref], axis=1)  # (q, 2) trace basis
        cache[key] = (a, b, pts, wq, lam)
    return cache[key]


def assemble_primal_rhs(mesh, decomp, dofmap, data: ProblemData,
                        params: FemParams) -> np.ndarray:
    """(f, v) over the annulus plus <g_N, v> on the outer boundary."""
    b = _volume_load(mesh, decomp, dofmap, data.f, params.quad_order)
    a, bb, pts, wq, lam = _boundary_pairs(mesh, params.data_quad_order)
    assert dofmap.index[a].min() >= 0 and dofmap.index[bb].min() >= 0, \
        "outer boundary node outside active set"
    gv = np.empty(pts.shape[:2])
    # the outer boundary has only four distinct normals: batch per side
    for nrm in np.unique(mesh.boundary_normals, axis=0):
        side = np.flatnonzero((mesh.boundary_normals == nrm).all(axis=1))
        gv[side] = data.g_N(pts[side].reshape(-1, 2), nrm).reshape(len(side), -1)
    contrib = np.einsum("kq,qj->kj", wq * gv, lam)
    np.add.at(b, dofmap.index[a], contrib[:, 0])
    np.add.at(b, dofmap.index[bb], contrib[:, 1])
    return b


def assemble_dual_rhs(mesh, dofmap, u: FEFunction, data: ProblemData,
                      params: FemParams) -> np.ndarray:
    """h^-1 <u_h - g_D, v> on the outer boundary."""
    b = np.zeros(dofmap.ndof)
    un = u.nodal(mesh.num_nodes)
    a, bb, pts, wq, lam = _boundary_pairs(mesh, params.data_quad_order)
    gd = data.g_D(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    uh = un[a][:, None] * lam[None, :, 0] + un[bb][:, None] * lam[None, :, 1]
    contrib = np.einsum("kq,qj->kj", wq * (uh - gd), lam) / mesh.h
    np.add.at(b, dofmap.index[a], contrib[:, 0])
    np.add.at(b, dofmap.index[bb], contrib[:, 1])
    return b


def cost(mesh, u: FEFunction, data: ProblemData, params: FemParams) -> float:
    """J = 1/(2h) * integral over the outer boundary of (g_D - u_h)^2."""
    un = u.nodal(mesh.num_nodes)
    a, bb, pts, wq, lam = _boundary_pairs(mesh, params.data_quad_order)
    gd = data.g_D(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    uh = un[a][:, None] * lam[None, :, 0] + un[bb][:, None] * lam[None, :, 1]
    return float(0.5 / mesh.h * np.sum(wq * (gd - uh) ** 2))


# ----------------------------------------------------------------------
# solvers
# ----------------------------------------------------------------------

class SolverError(RuntimeError):
    pass


def _check_residual(matrix, x, rhs, anorm=None):
    res = np.linalg.norm(matrix @ x - rhs)
    if anorm is None:
        anorm = spla.norm(matrix, np.inf)
    bound = 1e-10 * (np.linalg.norm(rhs) + anorm * np.linalg.norm(x))
    if res > bound:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {bound:.3e}")
    return res


def solve_sparse(system: SparseSystem, method: str = "direct") -> np.ndarray:
    """Solve with the residual contract ||Ax-b|| <= 1e-10(||b|| + ||A|| ||x||).

    ``direct`` factorizes once (the default: fastest and deterministic at
    these sizes); ``cg`` runs Jacobi-preconditioned conjugate gradients and
    is only appropriate for the symmetric systems.
    """
    if system.matrix.shape[0] != system.ndof:
        raise ValueError("system size mismatch")
    if method == "direct":
        lu = factorize(system.matrix)
        x = lu.solve(system.rhs)
        _check_residual(system.matrix, x, system.rhs)
        return x
    if method == "cg":
        x = _pcg(system.matrix, system.rhs)
        _check_residual(system.matrix, x, system.rhs)
        return x
    raise ValueError(f"unknown solver '{method}'")


def factorize(matrix: sp.spmatrix):
    try:
        return spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc


def _pcg(matrix, rhs, rtol=1e-13, max_iter=None):
    diag = matrix.diagonal()
    if np.any(diag == 0.0):
        raise SolverError("zero diagonal entry: matrix is structurally singular")
    inv_diag = 1.0 / diag
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return x
    if max_iter is None:
        max_iter = 20 * len(rhs)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        ap = matrix @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(r)
    if res <= 1e-10 * bnorm:
        return x
    raise SolverError(f"conjugate gradients stalled at residual {res:.3e}")


# ----------------------------------------------------------------------
# primal / dual drivers
# ----------------------------------------------------------------------

@dataclass
class PrimalSystem:
    """Assembled operator shared by the primal and dual solves."""

    matrix: sp.csr_matrix
    dofmap: DofMap
    lu: object = field(default=None, repr=False)
    anorm: float = field(default=None, repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.lu is None:
            self.lu = factorize(self.matrix)
            self.anorm = spla.norm(self.matrix, np.inf)
        x = self.lu.solve(rhs)
        _check_residual(self.matrix, x, rhs, self.anorm)
        return x


def assemble_system(mesh, decomp, params: FemParams) -> PrimalSystem:
    matrix, dofmap = assemble_ah(mesh, decomp, params)
    return PrimalSystem(matrix=matrix, dofmap=dofmap)


def solve_primal(mesh, decomp, data: ProblemData, params: FemParams,
                 system: PrimalSystem | None = None):
    if system is None:
        system = assemble_system(mesh, decomp, params)
    rhs = assemble_primal_rhs(mesh, decomp, system.dofmap, data, params)
    u = FEFunction(system.dofmap, system.solve(rhs))
    return u, system


def solve_dual(mesh, decomp, system: PrimalSystem, u: FEFunction,
               data: ProblemData, params: FemParams) -> FEFunction:
    rhs = assemble_dual_rhs(mesh, system.dofmap, u, data, params)
    return FEFunction(system.dofmap, system.solve(rhs))


# ----------------------------------------------------------------------
# error norms over the annulus (for convergence studies)
# ----------------------------------------------------------------------

def l2_h1_errors(mesh, decomp, u: FEFunction, exact, exact_grad,
                 order: int = 4):
    un = u.nodal(mesh.num_nodes)
    cls = decomp.cls
    bary, w_ref = tri_reference_rule(order)
    l2 = 0.0
    h1 = 0.0
    if len(cls.inside):
        tn = mesh.triangles[cls.inside]
        coords = mesh.nodes[tn]
        pts = np.einsum("qj,kjd->kqd", bary, coords)
        wq = w_ref[None, :] * mesh.tri_areas[cls.inside][:, None]
        uv = np.einsum("kj,qj->kq", un[tn], bary)
        ev = exact(pts.reshape(-1, 2)).reshape(uv.shape)
        l2 += np.sum(wq * (uv - ev) ** 2)
        gh = np.einsum("kj,kjd->kd", un[tn], mesh.tri_grads[cls.inside])
        ge = exact_grad(pts.reshape(-1, 2)).reshape(*uv.shape, 2)
        diff = gh[:, None, :] - ge
        h1 += np.sum(wq * np.sum(diff * diff, axis=2))
    for cc in decomp.cutcells:
        tn = mesh.triangles[cc.tri]
        coords = mesh.nodes[tn]
        gh = un[tn] @ mesh.tri_grads[cc.tri]
        for sub in cc.neg_subtris:
            rule = map_tri_rule(sub, order)
            lam = barycentric(coords, rule.points)
            uv = lam @ un[tn]
            ev = exact(rule.points)
            l2 += np.sum(rule.weights * (uv - ev) ** 2)
            ge = exact_grad(rule.points)
            diff = gh[None, :] - ge
            h1 += np.sum(rule.weights * np.sum(diff * diff, axis=1))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def l2_norm_omega(mesh, decomp, u: FEFunction) -> float:
    zero = lambda pts: np.zeros(len(pts))
    zero_grad = lambda pts: np.zeros((len(pts), 2))
    l2, _ = l2_h1_errors(mesh, decomp, u, zero, zero_grad, order=2)
    return l2
