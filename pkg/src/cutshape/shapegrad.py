"""Shape gradients of the boundary-misfit functional over a velocity space.

Three variants are assembled as linear functionals over the doubled
velocity basis:

* ``continuous``: volume integrals only (gradient of the continuous
  Lagrangian, evaluated with the discrete solutions);
* ``discrete``: volume terms plus interface transport terms, a tangential
  penalty term, and face corrections for the ghost penalty -- the exact
  derivative of the discrete Lagrangian under mesh-map perturbations;
* ``boundary``: interface terms only, the exact derivative when the domain
  perturbation is encoded in composed traces in the weak boundary
  condition.

On the free boundary the test fields are taken from the annulus side of
the doubled space.  ``perturbed_cost`` provides both perturbation families
so every "exact" claim is checkable by central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import assembly
from .cutquad import (decompose, ghost_face_set, seg_reference_rule,
                      tri_reference_rule)
from .fem import (FEFunction, FemParams, _check_residual,
                  assemble_primal_rhs, assemble_system, cost, factorize,
                  solve_primal)
from .levelset import LevelSetField
from .mesh import BackgroundMesh, barycentric
from .problems import ProblemData
from .velocity import DoubledVelocitySpace

# The face correction enters the assembled functional with a minus sign:
# the derivative of the penalized Lagrangian subtracts the geometric
# variation of the penalty term.  The finite-difference oracle pins this.
GHOST_SD_SIGN = -1.0


class SDVariant(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    BOUNDARY = "boundary"


@dataclass
class SDFunctional:
    variant: SDVariant
    values: np.ndarray            # (ndof_scalar, 2)
    space: DoubledVelocitySpace


def theta_to_coeffs(space: DoubledVelocitySpace, nodal: np.ndarray) -> np.ndarray:
    """Coefficients of a single-valued nodal field in the doubled space."""
    coeffs = np.zeros((space.ndof, 2))
    has = space.plus_index >= 0
    coeffs[space.plus_index[has]] = nodal[has]
    has = space.minus_index >= 0
    coeffs[space.minus_index[has]] = nodal[has]
    return coeffs


def evaluate_sd(functional: SDFunctional, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (functional.space.mesh.num_nodes, 2) \
            and functional.space.ndof != functional.space.mesh.num_nodes:
        theta = theta_to_coeffs(functional.space, theta)
    if theta.shape != functional.values.shape:
        raise ValueError(
            f"velocity coefficients {theta.shape} do not match the "
            f"functional {functional.values.shape}")
    return float(np.sum(functional.values * theta))


# ----------------------------------------------------------------------
# volume terms (shared by continuous and discrete variants)
# ----------------------------------------------------------------------

def _volume_terms(mesh, decomp, space, un, pn, data, order) -> np.ndarray:
    if data.f is not None and data.grad_f is None:
        raise ValueError(f"data preset '{data.name}' has f but no grad_f")
    vals = np.zeros((space.ndof, 2))
    cls = decomp.cls
    bary, w_ref = tri_reference_rule(order)

    # inside triangles, vectorized
    if len(cls.inside):
        tn = mesh.triangles[cls.inside]
        G = mesh.tri_grads[cls.inside]                 # (k, 3, 2)
        coords = mesh.nodes[tn]
        pts = np.einsum("qj,kjd->kqd", bary, coords)   # (k, q, 2)
        wq = w_ref[None, :] * mesh.tri_areas[cls.inside][:, None]
        gu = np.einsum("kj,kjd->kd", un[tn], G)
        gp = np.einsum("kj,kjd->kd", pn[tn], G)
        pv = np.einsum("kj,qj->kq", pn[tn], bary)      # p at quad points
        gugp = np.sum(gu * gp, axis=1)
        if data.f is not None:
            fv = data.f(pts.reshape(-1, 2)).reshape(pv.shape)
            i_fp = np.sum(wq * fv * pv, axis=1)
            gf = data.grad_f(pts.reshape(-1, 2)).reshape(*pv.shape, 2)
            i_gfp = np.einsum("kq,kqc,qj->kjc", wq * pv, gf, bary)
        else:
            i_fp = np.zeros(len(tn))
            i_gfp = 0.0
        area = mesh.tri_areas[cls.inside]
        gp_i = np.einsum("kjd,kd->kj", G, gp)
        gu_i = np.einsum("kjd,kd->kj", G, gu)
        contrib = (G * (i_fp - area * gugp)[:, None, None]
                   + area[:, None, None] * (gp_i[:, :, None] * gu[:, None, :]
                                            + gu_i[:, :, None] * gp[:, None, :])
                   + i_gfp)
        np.add.at(vals, space.plus_index[tn].ravel(), contrib.reshape(-1, 2))

    # cut triangles, annulus part (batched over all sub-triangle points)
    sq = decomp.subcell_quadrature("neg", order)
    if len(sq.weights):
        cut = decomp.cls.cut
        G_cells = mesh.tri_grads[cut]                           # (k, 3, 2)
        tn_cells = mesh.triangles[cut]
        gu_c = np.einsum("kj,kjd->kd", un[tn_cells], G_cells)
        gp_c = np.einsum("kj,kjd->kd", pn[tn_cells], G_cells)
        gugp_c = np.sum(gu_c * gp_c, axis=1)
        Gp_c = np.einsum("kjd,kd->kj", G_cells, gp_c)
        Gu_c = np.einsum("kjd,kd->kj", G_cells, gu_c)

        host = sq.host
        w = sq.weights
        pv = np.einsum("mi,mi->m", sq.lam, pn[sq.tn])
        if data.f is not None:
            fv = data.f(sq.points)
            gf = data.grad_f(sq.points)
            scal = w * (fv * pv - gugp_c[host])
            contrib = ((w * pv)[:, None, None] * sq.lam[:, :, None]
                       * gf[:, None, :])
        else:
            scal = -w * gugp_c[host]
            contrib = np.zeros((len(w), 3, 2))
        contrib += scal[:, None, None] * G_cells[host]
        contrib += w[:, None, None] * (
            Gp_c[host][:, :, None] * gu_c[host][:, None, :]
            + Gu_c[host][:, :, None] * gp_c[host][:, None, :])
        np.add.at(vals, space.plus_index[sq.tn].ravel(), contrib.reshape(-1, 2))
    return vals


# ----------------------------------------------------------------------
# interface and face terms (discrete variant)
# ----------------------------------------------------------------------

def _interface_terms(mesh, decomp, space, un, pn, beta) -> np.ndarray:
    vals = np.zeros((space.ndof, 2))
    if not decomp.cutcells:
        return vals
    ib = decomp.interface_batch(order=2)
    G = ib.grads                                        # (k, 3, 2)
    n = ib.normals                                      # (k, 2)
    gu = np.einsum("kj,kjd->kd", un[ib.tn], G)
    gp = np.einsum("kj,kjd->kd", pn[ib.tn], G)
    dnu = np.sum(gu * n, axis=1)
    dnp = np.sum(gp * n, axis=1)
    uq = np.einsum("kqj,kj->kq", ib.lam, un[ib.tn])
    pq = np.einsum("kqj,kj->kq", ib.lam, pn[ib.tn])
    Gn = np.einsum("kjd,kd->kj", G, n)
    Ggu = np.einsum("kjd,kd->kj", G, gu)
    Ggp = np.einsum("kjd,kd->kj", G, gp)
    # per basis (i, c): transported normal-flux integrands
    a_ic = (G * dnu[:, None, None] - n[:, None, :] * Ggu[:, :, None]
            - Gn[:, :, None] * gu[:, None, :])
    b_ic = (G * dnp[:, None, None] - n[:, None, :] * Ggp[:, :, None]
            - Gn[:, :, None] * gp[:, None, :])
    tdiv = G - n[:, None, :] * Gn[:, :, None]           # tangential divergence
    int_p = np.sum(ib.weights * pq, axis=1)
    int_u = np.sum(ib.weights * uq, axis=1)
    int_up = np.sum(ib.weights * uq * pq, axis=1)
    contrib = (a_ic * int_p[:, None, None] + b_ic * int_u[:, None, None]
               - (beta / mesh.h) * tdiv * int_up[:, None, None])
    np.add.at(vals, space.plus_index[ib.tn].ravel(), contrib.reshape(-1, 2))
    return vals


def _face_correction_terms(mesh, decomp, space, un, pn, gamma, mode) -> np.ndarray:
    vals = np.zeros((space.ndof, 2))
    faces = ghost_face_set(mesh, decomp.cls, mode=mode, region="plus")
    if len(faces) == 0 or gamma == 0.0:
        return vals
    iface = mesh.interior_faces[faces]
    n = mesh.face_normals[faces]
    tvec = mesh.face_tangents[faces]
    lengths = mesh.face_lengths[faces]
    scale = GHOST_SD_SIGN * gamma * mesh.h * lengths

    # jumps are global per face: compute from both sides first
    tl = iface[:, 2]
    tr = iface[:, 3]
    tn_l = mesh.triangles[tl]
    tn_r = mesh.triangles[tr]
    G_l = mesh.tri_grads[tl]
    G_r = mesh.tri_grads[tr]
    gu_l = np.einsum("fj,fjd->fd", un[tn_l], G_l)
    gu_r = np.einsum("fj,fjd->fd", un[tn_r], G_r)
    gp_l = np.einsum("fj,fjd->fd", pn[tn_l], G_l)
    gp_r = np.einsum("fj,fjd->fd", pn[tn_r], G_r)
    ju = np.sum((gu_l - gu_r) * n, axis=1)               # [[grad u . n]]
    jp = np.sum((gp_l - gp_r) * n, axis=1)

    for sign, tn_s, G_s, gu_s, gp_s in ((+1.0, tn_l, G_l, gu_l, gp_l),
                                        (-1.0, tn_r, G_r, gu_r, gp_r)):
        dnu = np.sum(gu_s * n, axis=1)                   # (F,)
        dnp = np.sum(gp_s * n, axis=1)
        Gn = np.einsum("fjd,fd->fj", G_s, n)             # (F, 3)
        Ggu = np.einsum("fjd,fd->fj", G_s, gu_s)
        Ggp = np.einsum("fjd,fd->fj", G_s, gp_s)
        # per-side value of (div theta) grad(w).n - S(theta) grad(w).n
        a_side = (G_s * dnu[:, None, None]
                  - n[:, None, :] * Ggu[:, :, None]
                  - Gn[:, :, None] * gu_s[:, None, :])
        b_side = (G_s * dnp[:, None, None]
                  - n[:, None, :] * Ggp[:, :, None]
                  - Gn[:, :, None] * gp_s[:, None, :])
        contrib = sign * (a_side * jp[:, None, None] + b_side * ju[:, None, None])
        contrib *= scale[:, None, None]
        np.add.at(vals, space.plus_index[tn_s].ravel(), contrib.reshape(-1, 2))

    # third integral: -[[grad u . n]][[grad v . n]] (t . D(theta) t), which is
    # single-valued: the tangential stretch rate of the face
    jj = ju * jp * scale
    a_nodes = iface[:, 0]
    b_nodes = iface[:, 1]
    dpsi = 1.0 / lengths
    contrib_a = -(jj * -dpsi)[:, None] * tvec
    contrib_b = -(jj * +dpsi)[:, None] * tvec
    np.add.at(vals, space.plus_index[a_nodes], contrib_a)
    np.add.at(vals, space.plus_index[b_nodes], contrib_b)
    return vals


# ----------------------------------------------------------------------
# the three assemblers
# ----------------------------------------------------------------------

def assemble_continuous_sd(mesh, decomp, space, u: FEFunction, p: FEFunction,
                           data: ProblemData, params: FemParams) -> SDFunctional:
    un = u.nodal(mesh.num_nodes)
    pn = p.nodal(mesh.num_nodes)
    vals = _volume_terms(mesh, decomp, space, un, pn, data, params.quad_order)
    return SDFunctional(SDVariant.CONTINUOUS, vals, space)


def assemble_discrete_sd(mesh, decomp, space, u: FEFunction, p: FEFunction,
                         data: ProblemData, params: FemParams) -> SDFunctional:
    un = u.nodal(mesh.num_nodes)
    pn = p.nodal(mesh.num_nodes)
    vals = _volume_terms(mesh, decomp, space, un, pn, data, params.quad_order)
    vals += _interface_terms(mesh, decomp, space, un, pn, params.beta)
    vals += _face_correction_terms(mesh, decomp, space, un, pn,
                                   params.gamma, params.ghost_mode)
    return SDFunctional(SDVariant.DISCRETE, vals, space)


def assemble_boundary_sd(mesh, decomp, space, u: FEFunction, p: FEFunction,
                         params: FemParams) -> SDFunctional:
    un = u.nodal(mesh.num_nodes)
    pn = p.nodal(mesh.num_nodes)
    vals = np.zeros((space.ndof, 2))
    if not decomp.cutcells:
        return SDFunctional(SDVariant.BOUNDARY, vals, space)
    beta = params.beta
    ib = decomp.interface_batch(order=2)
    G = ib.grads
    gu = np.einsum("kj,kjd->kd", un[ib.tn], G)
    gp = np.einsum("kj,kjd->kd", pn[ib.tn], G)
    dnp = np.sum(gp * ib.normals, axis=1)
    uq = np.einsum("kqj,kj->kq", ib.lam, un[ib.tn])
    pq = np.einsum("kqj,kj->kq", ib.lam, pn[ib.tn])
    psi_int = np.einsum("kq,kqi->ki", ib.weights, ib.lam)
    psi_p = np.einsum("kq,kqi->ki", ib.weights * pq, ib.lam)
    psi_u = np.einsum("kq,kqi->ki", ib.weights * uq, ib.lam)
    contrib = (dnp[:, None, None] * psi_int[:, :, None] * gu[:, None, :]
               - (beta / mesh.h) * (psi_p[:, :, None] * gu[:, None, :]
                                    + psi_u[:, :, None] * gp[:, None, :]))
    np.add.at(vals, space.plus_index[ib.tn].ravel(), contrib.reshape(-1, 2))
    return SDFunctional(SDVariant.BOUNDARY, vals, space)


# ----------------------------------------------------------------------
# standalone face correction (reference implementation for one face)
# ----------------------------------------------------------------------

def eps_face_term(mesh: BackgroundMesh, face: int, w_nodal: np.ndarray,
                  v_nodal: np.ndarray, theta_nodal: np.ndarray) -> float:
    """The three-integral face correction for given P1 fields on one face.

    ``theta_nodal`` is a single-valued nodal vector field; the jump terms
    use each side's own velocity gradient, while the tangential stretch
    factor is computed from the trace of theta on the face (single-valued).
    """
    a, b, tl, tr = mesh.interior_faces[face]
    n = mesh.face_normals[face]
    length = mesh.face_lengths[face]
    tvec = mesh.face_tangents[face]

    def side(tri):
        tn = mesh.triangles[tri]
        G = mesh.tri_grads[tri]
        gw = w_nodal[tn] @ G
        gv = v_nodal[tn] @ G
        Dtheta = theta_nodal[tn].T @ G                # (2, 2): D theta
        div = np.trace(Dtheta)
        S = Dtheta + Dtheta.T
        return gw, gv, div, S

    gw_l, gv_l, div_l, S_l = side(tl)
    gw_r, gv_r, div_r, S_r = side(tr)
    jw = (gw_l - gw_r) @ n
    jv = (gv_l - gv_r) @ n
    aw = (div_l * gw_l - S_l @ gw_l) @ n - ((div_r * gw_r - S_r @ gw_r) @ n)
    av = (div_l * gv_l - S_l @ gv_l) @ n - ((div_r * gv_r - S_r @ gv_r) @ n)
    # tangential stretch rate from the trace of theta along the face
    dtheta_dt = (theta_nodal[b] - theta_nodal[a]) / length
    stretch = float(dtheta_dt @ tvec)
    return length * (aw * jv + av * jw - jw * jv * stretch)


# ----------------------------------------------------------------------
# perturbed reduced costs (finite-difference oracles)
# ----------------------------------------------------------------------

class PerturbationKind(str, Enum):
    MESH_MAP = "mesh_map"
    BOUNDARY_CORRECTION = "boundary_correction"


def zero_on_outer_boundary(mesh: BackgroundMesh,
                           theta_nodal: np.ndarray) -> np.ndarray:
    theta = np.array(theta_nodal, dtype=float, copy=True)
    theta[np.unique(mesh.boundary_faces[:, :2])] = 0.0
    return theta


def perturbed_cost(mesh: BackgroundMesh, phi: LevelSetField,
                   theta_nodal: np.ndarray, t: float, kind: PerturbationKind,
                   data: ProblemData, params: FemParams) -> float:
    """Reduced cost of the perturbed problem for one perturbation family.

    ``mesh_map`` displaces the nodes by t*theta keeping nodal level-set
    values attached; ``boundary_correction`` keeps the geometry fixed and
    perturbs the composed traces in the free-boundary terms.
    """
    theta = zero_on_outer_boundary(mesh, theta_nodal)
    if t == 0.0:
        decomp = decompose(mesh, phi)
        u, _ = solve_primal(mesh, decomp, data, params)
        return cost(mesh, u, data, params)
    if kind == PerturbationKind.MESH_MAP:
        moved = mesh.with_nodes(mesh.nodes + t * theta)
        phi_m = LevelSetField(moved, phi.values)
        decomp = decompose(moved, phi_m)
        u, _ = solve_primal(moved, decomp, data, params)
        return cost(moved, u, data, params)
    if kind == PerturbationKind.BOUNDARY_CORRECTION:
        decomp = decompose(mesh, phi)
        u = _solve_boundary_corrected(mesh, decomp, theta, t, data, params)
        return cost(mesh, u, data, params)
    raise ValueError(f"unknown perturbation kind {kind}")


def _solve_boundary_corrected(mesh, decomp, theta, t, data, params):
    """Primal solve with first-order composed traces on the free boundary."""
    system = assemble_system(mesh, decomp, params)
    dofmap = system.dofmap
    s_ref, w_ref = seg_reference_rule(2)
    h = mesh.h
    rows_l, cols_l, vals_l = [], [], []
    for cc in decomp.cutcells:
        tn = mesh.triangles[cc.tri]
        coords = mesh.nodes[tn]
        G = mesh.tri_grads[cc.tri]
        p0, p1 = cc.segment
        length = np.linalg.norm(p1 - p0)
        if length == 0.0:
            continue
        pts = p0[None, :] + s_ref[:, None] * (p1 - p0)[None, :]
        lam = barycentric(coords, pts)
        wq = w_ref * length
        dn = G @ cc.normal
        theta_q = lam @ theta[tn]             # (q, 2)
        shift = t * (theta_q @ G.T)           # (q, 3): t grad(phi_j).theta
        elem = np.zeros((3, 3))
        for q in range(len(wq)):
            W = lam[q] + shift[q]             # trial composed trace
            V = lam[q] + shift[q]             # test composed trace (penalty)
            # difference to the uncorrected Nitsche terms already assembled:
            # -<Dn v, w o T_t - w> + beta/h (<w o T_t, v o T_t> - <w, v>)
            elem += wq[q] * (-np.outer(dn, W - lam[q])
                             + (params.beta / h) * (np.outer(V, W)
                                                    - np.outer(lam[q], lam[q])))
        r, c, v = assembly.coo_from_elements(tn[None, :], elem[None])
        rows_l.append(dofmap.index[r])
        cols_l.append(dofmap.index[c])
        vals_l.append(v)
    matrix = system.matrix
    if rows_l:
        corr = assembly.build_csr(np.concatenate(rows_l), np.concatenate(cols_l),
                                  np.concatenate(vals_l), dofmap.ndof)
        matrix = (matrix + corr).tocsc()
    rhs = assemble_primal_rhs(mesh, decomp, dofmap, data, params)
    lu = factorize(matrix)
    x = lu.solve(rhs)
    _check_residual(matrix, x, rhs)
    return FEFunction(dofmap, x)


# ----------------------------------------------------------------------
# smooth test fields for the oracles
# ----------------------------------------------------------------------

def random_smooth_field(mesh: BackgroundMesh, rng: np.random.Generator,
                        modes: int = 2, amplitude: float = 1.0) -> np.ndarray:
    """Random low-frequency vector field vanishing on the outer boundary."""
    x = mesh.nodes[:, 0]
    y = mesh.nodes[:, 1]
    bump = 16.0 * x * (1.0 - x) * y * (1.0 - y)
    out = np.zeros((mesh.num_nodes, 2))
    for c in range(2):
        field = np.zeros(mesh.num_nodes)
        for k in range(1, modes + 1):
            for l in range(1, modes + 1):
                a, b_, cc, d = rng.uniform(-1.0, 1.0, size=4)
                field += (a * np.sin(np.pi * k * x) * np.sin(np.pi * l * y)
                          + b_ * np.cos(np.pi * k * x) * np.sin(np.pi * l * y)
                          + cc * np.sin(np.pi * k * x) * np.cos(np.pi * l * y)
                          + d * np.cos(np.pi * k * x) * np.cos(np.pi * l * y))
        out[:, c] = amplitude * bump * field
    return out
