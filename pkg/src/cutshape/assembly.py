"""Low-level vectorized assembly building blocks shared by all systems.

Everything here works in global *node* indices; callers restrict to their
own dof numbering afterwards.  Per-mesh data (element matrices, face jump
stencils) is cached on the mesh object since the background mesh never
changes during a run.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import BackgroundMesh

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _cache(mesh: BackgroundMesh) -> dict:
    if not hasattr(mesh, "_assembly_cache"):
        mesh._assembly_cache = {}
    return mesh._assembly_cache


def tri_stiffness_elements(mesh: BackgroundMesh) -> np.ndarray:
    """Per-triangle 3x3 stiffness matrices area * G G^T, shape (T, 3, 3)."""
    cache = _cache(mesh)
    if "k_elem" not in cache:
        G = mesh.tri_grads
        cache["k_elem"] = mesh.tri_areas[:, None, None] * np.einsum(
            "tid,tjd->tij", G, G)
    return cache["k_elem"]


def tri_mass_elements(mesh: BackgroundMesh) -> np.ndarray:
    cache = _cache(mesh)
    if "m_elem" not in cache:
        cache["m_elem"] = mesh.tri_areas[:, None, None] * _MASS_REF[None]
    return cache["m_elem"]


def face_jump_stencils(mesh: BackgroundMesh):
    """Nodal stencil of the normal-gradient jump on every interior face.

    Returns (slots, coefs), both (Fi, 6): the jump of grad(w).n across face
    F equals sum_k coefs[F, k] * w[slots[F, k]], with the left triangle's
    nodes in slots 0..2 and the right triangle's in 3..5.
    """
    cache = _cache(mesh)
    if "face_jump" not in cache:
        fl = mesh.interior_faces[:, 2]
        fr = mesh.interior_faces[:, 3]
        slots = np.concatenate([mesh.triangles[fl], mesh.triangles[fr]], axis=1)
        n = mesh.face_normals
        cl = np.einsum("fid,fd->fi", mesh.tri_grads[fl], n)
        cr = np.einsum("fid,fd->fi", mesh.tri_grads[fr], n)
        coefs = np.concatenate([cl, -cr], axis=1)
        cache["face_jump"] = (slots, coefs)
    return cache["face_jump"]


def coo_from_elements(tri_nodes: np.ndarray, elems: np.ndarray):
    """Flatten per-element (k, m, m) matrices into COO triplets."""
    m = tri_nodes.shape[1]
    rows = np.repeat(tri_nodes, m, axis=1).ravel()
    cols = np.tile(tri_nodes, (1, m)).ravel()
    return rows, cols, elems.reshape(len(tri_nodes), -1).ravel()


def jump_penalty_coo(mesh: BackgroundMesh, faces: np.ndarray, scale: np.ndarray):
    """COO triplets of sum_F scale_F * int_F [grad w . n][grad v . n] ds.

    ``scale`` carries everything except the face length (which is folded in
    here since the jump integrand is constant along each face).
    """
    slots, coefs = face_jump_stencils(mesh)
    slots = slots[faces]
    coefs = coefs[faces]
    w = scale * mesh.face_lengths[faces]
    mats = w[:, None, None] * np.einsum("fi,fj->fij", coefs, coefs)
    return coo_from_elements(slots, mats)


def build_csr(rows, cols, vals, nrows, ncols=None) -> sp.csr_matrix:
    if ncols is None:
        ncols = nrows
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return mat.tocsr()
