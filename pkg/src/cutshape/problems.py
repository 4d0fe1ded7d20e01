"""Data presets: volume source, Neumann and Dirichlet data on the outer square.

Each preset fixes (f, g_N) analytically.  The Dirichlet target g_D is either
analytic (circle preset, where the exact solution is known) or a tabulated
trace produced by a fine-mesh forward solve; ``grad_f`` is supplied in
closed form wherever f is nonzero so shape-gradient assembly never
differentiates data numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class ProblemData:
    name: str
    f: callable | None = None            # f(pts (q,2)) -> (q,)
    grad_f: callable | None = None       # -> (q,2)
    g_N: callable | None = None          # g_N(pts, outward_normal (2,)) -> (q,)
    g_D: callable | None = None          # g_D(pts) -> (q,)
    exact_u: callable | None = None
    exact_grad_u: callable | None = None

    def with_g_D(self, g_D) -> "ProblemData":
        return replace(self, g_D=g_D)


def circle_data(center=(0.5, 0.5)) -> ProblemData:
    """Annulus with exact solution u = 4r - 1, f = -4/r around ``center``."""
    cx, cy = center

    def rad(pts):
        return np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)

    def f(pts):
        return -4.0 / rad(pts)

    def grad_f(pts):
        r = rad(pts)
        return 4.0 * (pts - np.array([cx, cy])) / (r**3)[:, None]

    def exact_u(pts):
        return 4.0 * rad(pts) - 1.0

    def exact_grad_u(pts):
        r = rad(pts)
        return 4.0 * (pts - np.array([cx, cy])) / r[:, None]

    def g_N(pts, normal):
        return exact_grad_u(pts) @ normal

    def g_D(pts):
        return exact_u(pts)

    return ProblemData(name="circle", f=f, grad_f=grad_f, g_N=g_N, g_D=g_D,
                       exact_u=exact_u, exact_grad_u=exact_grad_u)


def ellipse_data() -> ProblemData:
    """f = 0, g_N = (sin(x+y), cos(x+y)) . n; g_D from a forward solve."""

    def g_N(pts, normal):
        s = pts[:, 0] + pts[:, 1]
        return np.sin(s) * normal[0] + np.cos(s) * normal[1]

    return ProblemData(name="ellipse", g_N=g_N)


def lame_data() -> ProblemData:
    """f = 0, g_N = (5 sin t, 5 cos t) . n with t the polar angle at (.5,.5)."""

    def g_N(pts, normal):
        t = np.arctan2(pts[:, 1] - 0.5, pts[:, 0] - 0.5)
        return 5.0 * np.sin(t) * normal[0] + 5.0 * np.cos(t) * normal[1]

    return ProblemData(name="lame", g_N=g_N)


def cassini_data() -> ProblemData:
    """f = 0, g_N = (x - 0.5, y - 0.5) . n; g_D from a forward solve."""

    def g_N(pts, normal):
        return (pts[:, 0] - 0.5) * normal[0] + (pts[:, 1] - 0.5) * normal[1]

    return ProblemData(name="cassini", g_N=g_N)


def zero_data() -> ProblemData:
    zero = lambda pts: np.zeros(len(pts))
    return ProblemData(name="zero", f=None, g_N=lambda pts, n: np.zeros(len(pts)),
                       g_D=zero)


DATA_PRESETS = {
    "circle": circle_data,
    "ellipse": ellipse_data,
    "lame": lame_data,
    "cassini": cassini_data,
    "zero": zero_data,
}


# ----------------------------------------------------------------------
# tabulated boundary traces
# ----------------------------------------------------------------------

def boundary_arclength(pts: np.ndarray) -> np.ndarray:
    """Arclength on the unit-square boundary, counterclockwise from (0,0)."""
    x, y = pts[:, 0], pts[:, 1]
    s = np.empty(len(pts))
    on_bottom = y <= 0.0 + 1e-12
    on_right = x >= 1.0 - 1e-12
    on_top = y >= 1.0 - 1e-12
    on_left = x <= 0.0 + 1e-12
    s[on_left] = 4.0 - y[on_left]
    s[on_top] = 3.0 - x[on_top]
    s[on_right] = 1.0 + y[on_right]
    s[on_bottom] = x[on_bottom]
    return s


@dataclass
class TraceTable:
    """Periodic piecewise-linear boundary trace keyed by arclength."""

    s: np.ndarray      # sorted in [0, 4)
    values: np.ndarray

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.interp(boundary_arclength(pts))

    def interp(self, s: np.ndarray) -> np.ndarray:
        sp = np.concatenate([self.s, [self.s[0] + 4.0]])
        vp = np.concatenate([self.values, [self.values[0]]])
        return np.interp(np.mod(s, 4.0), sp, vp)

    def write(self, path):
        with open(path, "w") as f:
            for sk, vk in zip(self.s, self.values):
                f.write(f"{sk:.17g} {vk:.17g}\n")

    @classmethod
    def read(cls, path) -> "TraceTable":
        rows = np.loadtxt(path, ndmin=2)
        order = np.argsort(rows[:, 0])
        return cls(s=rows[order, 0], values=rows[order, 1])
