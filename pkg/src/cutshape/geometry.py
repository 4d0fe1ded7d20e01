"""Curve utilities: distances between polylines and reference interfaces."""

from __future__ import annotations

import numpy as np


def _point_segment_dist(pts: np.ndarray, seg_a: np.ndarray,
                        seg_b: np.ndarray) -> np.ndarray:
    """Min distance of each point to any segment; (P,) from (P,2),(S,2),(S,2)."""
    d = seg_b - seg_a                     # (S, 2)
    l2 = np.sum(d * d, axis=1)
    l2[l2 == 0.0] = 1.0
    w = pts[:, None, :] - seg_a[None, :, :]   # (P, S, 2)
    t = np.clip(np.einsum("psd,sd->ps", w, d) / l2[None, :], 0.0, 1.0)
    proj = seg_a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(pts[:, None, :] - proj, axis=2)
    return dist.min(axis=1)


def _segments(chain: np.ndarray):
    return chain[:-1], chain[1:]


def hausdorff_distance(chains_a: list[np.ndarray],
                       chains_b: list[np.ndarray]) -> float:
    """Symmetric Hausdorff distance between two families of polylines."""
    pa = np.vstack(chains_a)
    pb = np.vstack(chains_b)
    sa = [np.vstack([_segments(c)[0] for c in chains_a]),
          np.vstack([_segments(c)[1] for c in chains_a])]
    sb = [np.vstack([_segments(c)[0] for c in chains_b]),
          np.vstack([_segments(c)[1] for c in chains_b])]
    d_ab = _point_segment_dist(pa, sb[0], sb[1]).max()
    d_ba = _point_segment_dist(pb, sa[0], sa[1]).max()
    return float(max(d_ab, d_ba))


def polygon_centroid(chain: np.ndarray) -> np.ndarray:
    """Area centroid of one closed chain (first point = last point)."""
    x = chain[:-1, 0]
    y = chain[:-1, 1]
    xn = chain[1:, 0]
    yn = chain[1:, 1]
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def circle_curve(center, radius, num=720) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(t),
                           center[1] + radius * np.sin(t)])
    return np.vstack([pts, pts[:1]])


def ellipse_curve(center, c1, c2, num=720) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
    pts = np.column_stack([center[0] + c1 * np.cos(t),
                           center[1] + c2 * np.sin(t)])
    return np.vstack([pts, pts[:1]])


def lame_curve(center, a, b, power, num=720) -> np.ndarray:
    """Zero set of 1 - a (x-cx)^p - b (y-cy)^p for even p (superellipse)."""
    t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
    e = 2.0 / power
    x = np.sign(np.cos(t)) * np.abs(np.cos(t)) ** e / a ** (1.0 / power)
    y = np.sign(np.sin(t)) * np.abs(np.sin(t)) ** e / b ** (1.0 / power)
    pts = np.column_stack([center[0] + x, center[1] + y])
    return np.vstack([pts, pts[:1]])
