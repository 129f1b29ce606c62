"""Strictly convex / strictly concave C^2 interpolation on an interval.

The central primitive behind the curved hypersurface pieces: join two end
jets ``(value, deriv)`` by a function whose second derivative has a fixed
strict sign, or extend a concave germ until its slope drops below a target.

Strategy: parametrize the second derivative as a strictly positive piecewise
linear *density* on the interval (so strict convexity is structural), then
integrate twice and solve the linear endpoint-matching system exactly.  The
density shape is two end "walls" over a thin constant middle; wall widths are
set from a chord-depth target, so the dish depth below the chord is a control
knob rather than an accident.  All arithmetic is closed-form, which makes
repeated solves bit-identical.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PPoly

from .errors import CorridorViolation, FeasibilityError, Infeasible

__all__ = [
    "Sign",
    "EndpointData",
    "JoinProblem",
    "SplineC2",
    "feasible",
    "solve",
    "extend_concave",
]

_MAX_HALVINGS = 30


class Sign(enum.Enum):
    CONVEX = 1
    CONCAVE = -1


@dataclass(frozen=True)
class EndpointData:
    x: float
    value: float
    deriv: float

    def __post_init__(self):
        for v in (self.x, self.value, self.deriv):
            if not math.isfinite(v):
                raise ValueError("EndpointData fields must be finite")


@dataclass(frozen=True)
class JoinProblem:
    """Join ``left`` to ``right`` by a strictly ``sign``-curved C^2 function.

    ``bounds`` is an optional pair ``(lower, upper)`` of callables (either may
    be ``None``) that the solution must respect pointwise.
    """

    left: EndpointData
    right: EndpointData
    sign: Sign = Sign.CONVEX
    bounds: tuple | None = None

    def __post_init__(self):
        if not self.left.x < self.right.x:
            raise ValueError("JoinProblem needs left.x < right.x")


@dataclass(frozen=True)
class SplineC2:
    """A C^2 piecewise-cubic with strictly signed second derivative.

    ``margin`` is the structural minimum of ``|f''|`` on the domain.
    """

    ppoly: PPoly
    x_lo: float
    x_hi: float
    second_sign: int
    margin: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_d1", self.ppoly.derivative())
        object.__setattr__(self, "_d2", self.ppoly.derivative(2))

    @property
    def domain(self) -> tuple[float, float]:
        return (self.x_lo, self.x_hi)

    def f(self, x):
        return self.ppoly(x)

    def df(self, x):
        return self._d1(x)

    def d2f(self, x):
        return self._d2(x)

    def to_dict(self) -> dict:
        return {
            "breakpoints": self.ppoly.x.tolist(),
            "coefficients": self.ppoly.c.tolist(),
            "x_lo": self.x_lo,
            "x_hi": self.x_hi,
            "second_sign": self.second_sign,
            "margin": self.margin,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "SplineC2":
        pp = PPoly(np.asarray(blob["coefficients"]), np.asarray(blob["breakpoints"]))
        return cls(pp, blob["x_lo"], blob["x_hi"], blob["second_sign"], blob["margin"])


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------

def feasible(problem: JoinProblem) -> tuple[bool, dict]:
    """Slope-chord feasibility of the join, with named diagnostics.

    Convex needs ``left.deriv < chord < right.deriv`` strictly (mirrored for
    concave).  The diagnostic dict carries the chord, both margins, and the
    name of the violated inequality if any.
    """
    l, r = problem.left, problem.right
    chord = (r.value - l.value) / (r.x - l.x)
    if problem.sign is Sign.CONVEX:
        m_left, m_right = chord - l.deriv, r.deriv - chord
        names = ("left.deriv < chord", "chord < right.deriv")
    else:
        m_left, m_right = l.deriv - chord, chord - r.deriv
        names = ("chord < left.deriv", "right.deriv < chord")
    violated = None
    if m_left <= 0:
        violated = names[0]
    elif m_right <= 0:
        violated = names[1]
    diag = {
        "chord": chord,
        "margin_left": m_left,
        "margin_right": m_right,
        "violated": violated,
    }
    return violated is None, diag


# ---------------------------------------------------------------------------
# Core convex solver
# ---------------------------------------------------------------------------

def _integrate_density(breaks: np.ndarray, values: np.ndarray,
                       x_lo: float, v_lo: float, d_lo: float) -> PPoly:
    """Second antiderivative of a PL density, seeded with a linear jet."""
    slopes = np.diff(values) / np.diff(breaks)
    coeffs = np.vstack([slopes, values[:-1]])
    dens = PPoly(coeffs, breaks)
    F = dens.antiderivative(2)
    # antiderivative(2) vanishes to first order at breaks[0] == x_lo; add the
    # linear seed piecewise so the representation stays a plain PPoly.
    F.c[-1, :] += v_lo + d_lo * (breaks[:-1] - x_lo)
    F.c[-2, :] += d_lo
    return F

def _wall_density(x_lo: float, x_hi: float, h_l: float, h_r: float,
                  eps_mid: float, A: float, B: float, knots: int):
    """PL density: eps_mid base + left wall of height A + right wall B."""
    grid = np.unique(np.concatenate([
        np.linspace(x_lo, x_hi, max(4, knots)),
        np.array([x_lo + h_l, x_hi - h_r]),
    ]))
    vals = np.full_like(grid, eps_mid)
    left = grid <= x_lo + h_l
    vals[left] += A * (1.0 - (grid[left] - x_lo) / h_l)
    right = grid >= x_hi - h_r
    vals[right] += B * (1.0 - (x_hi - grid[right]) / h_r)
    return grid, vals


def _solve_convex(left: EndpointData, right: EndpointData, knots: int,
                  target_depth, bounds, mirrored: bool) -> SplineC2:
    ok, diag = feasible(JoinProblem(left, right, Sign.CONVEX))
    if not ok:
        raise Infeasible(diag["violated"],
                         f"chord={diag['chord']:.6g}, "
                         f"margins=({diag['margin_left']:.3g}, {diag['margin_right']:.3g})")

    x_l, v_l, d_l = left.x, left.value, left.deriv
    x_r, v_r, d_r = right.x, right.value, right.deriv
    span = x_r - x_l
    chord = diag["chord"]
    mass = d_r - d_l                       # integral of F''
    moment = v_r - v_l - d_l * span        # integral of (x_r - xi) F''

    # Depth of the tangent-envelope dish below the chord: the deepest any
    # convex interpolant can go.  Used to cap the requested depth.
    xi_star = span * (chord - d_r) / (d_l - d_r)
    depth_max = xi_star * (chord - d_l)
    depth = 0.4 * depth_max if target_depth is None else float(target_depth)
    depth = min(depth, 0.9 * depth_max)
    if depth <= 0:
        depth = 0.4 * depth_max

    lower = upper = None
    if bounds is not None:
        lower, upper = bounds

    # Exact a-priori screen: every convex interpolant lies between the
    # tangent envelope and the chord.  A corridor excluded by those bounds
    # can never be met, and the tightest point is reported exactly.
    if lower is not None or upper is not None:
        xs = np.linspace(x_l, x_r, 1024)
        chord_line = v_l + chord * (xs - x_l)
        envelope = np.maximum(v_l + d_l * (xs - x_l), v_r + d_r * (xs - x_r))
        if lower is not None:
            lo = np.asarray([lower(x) for x in xs], dtype=float)
            if mirrored:
                lo = -lo
            gap = chord_line - lo
            i = int(np.argmin(gap))
            if gap[i] <= 0:
                side = "upper" if mirrored else "lower"
                raise CorridorViolation(
                    f"{side} bound excludes every admissible join "
                    f"(tightest at x={xs[i]:.6g}, gap={abs(gap[i]):.3g})")
        if upper is not None:
            up = np.asarray([upper(x) for x in xs], dtype=float)
            if mirrored:
                up = -up
            gap = up - envelope
            i = int(np.argmin(gap))
            if gap[i] <= 0:
                side = "lower" if mirrored else "upper"
                raise CorridorViolation(
                    f"{side} bound excludes every admissible join "
                    f"(tightest at x={xs[i]:.6g}, gap={abs(gap[i]):.3g})")

    last_err = None
    for _ in range(_MAX_HALVINGS + 1):
        h_l = min(3.0 * depth / (chord - d_l), 0.45 * span)
        h_r = min(3.0 * depth / (d_r - chord), 0.45 * span)
        eps_mid = 1e-3 * mass / span

        # Masses/moments (about the right end) of the three density pieces:
        # the eps_mid base and the two unit walls.
        s0 = eps_mid * span
        t0 = eps_mid * span * span / 2.0
        sL, tL = h_l / 2.0, (h_l / 2.0) * (span - h_l / 3.0)
        sR, tR = h_r / 2.0, (h_r / 2.0) * (h_r / 3.0)

        det = sL * tR - sR * tL
        rhs_s, rhs_t = mass - s0, moment - t0
        A = (rhs_s * tR - rhs_t * sR) / det
        B = (sL * rhs_t - tL * rhs_s) / det

        if A < 0 or B < 0 or not math.isfinite(A) or not math.isfinite(B):
            last_err = ("wall heights", f"A={A:.3g}, B={B:.3g} at depth={depth:.3g}")
            depth *= 0.5
            continue

        grid, vals = _wall_density(x_l, x_r, h_l, h_r, eps_mid, A, B, knots)
        F = _integrate_density(grid, vals, x_l, v_l, d_l)

        if lower is not None or upper is not None:
            xs = np.linspace(x_l, x_r, 10 * max(4, knots))
            fx = F(xs)
            bad = None
            if lower is not None:
                lo = np.asarray([lower(x) for x in xs], dtype=float)
                if mirrored:
                    lo = -lo
                gap = fx - lo
                i = int(np.argmin(gap))
                if gap[i] <= 0:
                    bad = ("lower", xs[i], gap[i])
            if bad is None and upper is not None:
                up = np.asarray([upper(x) for x in xs], dtype=float)
                if mirrored:
                    up = -up
                gap = up - fx
                i = int(np.argmin(gap))
                if gap[i] <= 0:
                    bad = ("upper", xs[i], gap[i])
            if bad is not None:
                last_err = ("corridor", bad)
                depth *= 0.5
                continue

        diags = {
            "depth": depth,
            "depth_max": depth_max,
            "wall_widths": (h_l, h_r),
            "wall_heights": (A + eps_mid, B + eps_mid),
            "eps_mid": eps_mid,
            "chord": chord,
        }
        return SplineC2(F, x_l, x_r, +1, eps_mid, diags)

    if last_err is not None and last_err[0] == "corridor":
        side, x_bad, gap = last_err[1]
        if mirrored:
            side = {"lower": "upper", "upper": "lower"}[side]
            x_desc = f"x={x_bad:.6g}, gap={-gap:.3g}"
        else:
            x_desc = f"x={x_bad:.6g}, gap={gap:.3g}"
        raise CorridorViolation(
            f"cannot meet {side} bound after {_MAX_HALVINGS} depth halvings "
            f"(tightest at {x_desc})")
    raise Infeasible("wall heights",
                     f"no positive wall solution after {_MAX_HALVINGS} halvings: {last_err}")


def solve(problem: JoinProblem, knots: int = 16, target_depth: float | None = None) -> SplineC2:
    """Solve the join; returns a strictly curved C^2 piecewise cubic.

    ``target_depth`` (optional) prescribes how far below (convex) or above
    (concave) the chord the middle of the solution should sit; it is capped
    by the tangent envelope and halved automatically when the corridor or the
    positivity of the density demands it.
    """
    if problem.sign is Sign.CONVEX:
        return _solve_convex(problem.left, problem.right, knots,
                             target_depth, problem.bounds, mirrored=False)
    # Concave: mirror through negation, then flip back.
    left = EndpointData(problem.left.x, -problem.left.value, -problem.left.deriv)
    right = EndpointData(problem.right.x, -problem.right.value, -problem.right.deriv)
    bounds = None
    if problem.bounds is not None:
        lo, up = problem.bounds
        bounds = (up, lo)  # negation swaps the roles; signs handled in core
    sol = _solve_convex(left, right, knots, target_depth, bounds, mirrored=True)
    flipped = PPoly(-sol.ppoly.c, sol.ppoly.x)
    return SplineC2(flipped, sol.x_lo, sol.x_hi, -1, sol.margin, dict(sol.diagnostics))


# ---------------------------------------------------------------------------
# Concave germ extension
# ---------------------------------------------------------------------------

def extend_concave(x_switch: float, value: float, deriv: float, second: float,
                   target_slope: float, x_end: float, floor: float,
                   knots: int = 16, frac: float = 0.5) -> SplineC2:
    """Concave C^2 extension of a germ jet until the slope reaches a target.

    Matches ``(value, deriv, second)`` at ``x_switch`` (full C^2 contact with
    the germ), is strictly concave on ``[x_switch, x_end]``, reaches
    derivative ``target_slope`` exactly at ``x_end``, and stays above
    ``floor``.  ``frac`` places the end value inside the feasible window
    ``(floor, tangent value)``.

    The density of ``-G''`` is a junction wedge (continuity with the germ's
    curvature) over a thin base, plus an end ramp whose width is solved in
    closed form from the moment condition.
    """
    if not x_end > x_switch:
        raise ValueError("extend_concave needs x_end > x_switch")
    if second >= 0:
        raise FeasibilityError("germ concavity", f"second={second} at x_switch")
    if target_slope >= deriv:
        raise FeasibilityError(
            "target_slope < germ slope at x_switch",
            f"target_slope={target_slope} >= deriv={deriv}")
    span = x_end - x_switch
    v_tan = value + deriv * span
    if floor >= v_tan:
        raise FeasibilityError(
            "floor below tangent value at x_end",
            f"floor={floor} >= tangent={v_tan:.6g}: floor reached before slope target")
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must be in (0, 1)")

    w0 = -second
    mass = deriv - target_slope
    v_end = floor + frac * (v_tan - floor)
    moment = value + deriv * span - v_end  # = (1 - frac) * (v_tan - floor)

    h_d = span / 8.0
    last = None
    for _ in range(_MAX_HALVINGS + 1):
        base = min(1e-3 * mass / span, 0.5 * w0)
        wedge_mass = (w0 - base) * h_d / 2.0
        wedge_moment = (w0 - base) * (h_d / 2.0) * (span - h_d / 3.0)
        c0 = wedge_moment + base * span * span / 2.0
        m_ramp = mass - wedge_mass - base * span
        if m_ramp <= 0:
            raise FeasibilityError(
                "curvature mass", f"junction wedge already exceeds the slope drop "
                f"({wedge_mass + base * span:.3g} > {mass:.3g})")
        h_r = 3.0 * (moment - c0) / m_ramp
        # The ramp may overlap the junction wedge (densities superpose) but
        # must not reach the junction itself, or C^2 contact is lost.
        if 0.0 < h_r <= 0.98 * span:
            break
        last = h_r
        h_d *= 0.5
    else:
        raise FeasibilityError(
            "curvature placement",
            f"end ramp width {last:.3g} outside (0, {0.98 * span:.3g}] after halvings")
    H = 2.0 * m_ramp / h_r

    grid = np.unique(np.concatenate([
        np.linspace(x_switch, x_end, max(4, knots)),
        np.array([x_switch + h_d, x_end - h_r]),
    ]))
    vals = np.full_like(grid, base)
    in_wedge = grid <= x_switch + h_d
    vals[in_wedge] += (w0 - base) * (1.0 - (grid[in_wedge] - x_switch) / h_d)
    in_ramp = grid >= x_end - h_r
    vals[in_ramp] += H * (1.0 - (x_end - grid[in_ramp]) / h_r)

    G = _integrate_density(grid, -vals, x_switch, value, deriv)
    diags = {
        "junction_wedge": (w0, h_d),
        "base": base,
        "ramp": (H, h_r),
        "end_value": v_end,
        "tangent_value": v_tan,
        "floor": floor,
    }
    return SplineC2(G, x_switch, x_end, -1, base, diags)
