"""Charts, parameters and gluing maps of the annulus-fibered surface model.

The model is assembled from three coordinate charts:

* ``V``        -- product of an annulus ``1 < |z1| < rho2`` with the disk
  ``|z2| < 1/rho0`` (``z2 = 0`` allowed),
* ``V'``       -- a thinner strip ``1 < |z1| < s`` over the annulus
  ``1/rho1 < |z2| < 1/rho0``,
* ``W``        -- the quotient of ``C* x {rho0 < |w2| < rho1}`` by the
  integer action ``n . (w1, w2) = (w1 * w2**n, w2)``; points are stored as
  canonical orbit representatives.

``V`` and ``V'`` overlap as subsets of C^2 and are additionally glued along
``U' = {|z2| < |z1|}`` by ``psi(z1, z2) = (z1/z2, z2)``.  The map ``Phi``
carries both into the quotient annulus chart via the multivalued factor
:func:`phi`.  All verification modules sit on top of the operations here.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ChainViolation, ConfigError, DomainError

__all__ = [
    "Chart",
    "ChartPoint",
    "Params",
    "DEFAULT_PARAM_VALUES",
    "validate_params",
    "default_params",
    "phi",
    "z_action",
    "canonical_rep",
    "map_Phi",
    "map_psi",
    "same_point",
    "fibration_f",
    "in_complement_C",
]

# Orbit shifts larger than this are treated as out of the supported range;
# every point of the model needs |n| of at most a few to canonicalize.
MAX_ORBIT_SHIFT = 64

_RAW_FIELDS = ("rho0", "rho1", "rho2", "s", "c", "eps", "c1", "c2", "zeta1", "zeta2")

#: Shipped defaults.  The removed band (zeta1, zeta2) sits strictly between
#: the inner sphere radii (~c2) and the outer sphere radii (>= c1) so that
#: membership sweeps of hypersurface samples in the complement are meaningful.
DEFAULT_PARAM_VALUES: dict[str, float] = {
    "rho0": 0.88,
    "rho1": 0.9,
    "rho2": 1.05,
    "s": 1.15,
    "c": 0.89,
    "eps": 0.01,
    "c1": 1.04,
    "c2": 1.02,
    "zeta1": 1.036,
    "zeta2": 1.039,
}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Params:
    """Validated model parameters plus the derived page radii ``a`` and ``b``.

    Instances are only built through :func:`validate_params`, which checks the
    full inequality chain.  ``a = rho2 - eps`` and ``b = 1/c + eps`` are the
    inner/outer radii of the page annulus ``A``.
    """

    rho0: float
    rho1: float
    rho2: float
    s: float
    c: float
    eps: float
    c1: float
    c2: float
    zeta1: float
    zeta2: float
    a: float
    b: float

    def raw_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in _RAW_FIELDS}

    def to_dict(self) -> dict:
        out = self.raw_dict()
        out["a"] = self.a
        out["b"] = self.b
        out["validated"] = True
        return out

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


def validate_params(values: dict) -> Params:
    """Check the ordered inequality chain and return a frozen Params.

    Raises ``ConfigError`` on missing/non-finite fields and ``ChainViolation``
    naming the first violated inequality otherwise.
    """
    missing = [name for name in _RAW_FIELDS if name not in values]
    if missing:
        raise ConfigError(f"missing parameter fields: {', '.join(missing)}")
    vals = {}
    for name in _RAW_FIELDS:
        v = float(values[name])
        if not math.isfinite(v) or v <= 0.0:
            raise ConfigError(f"parameter {name} must be finite and positive, got {v!r}")
        vals[name] = v

    rho0, rho1, rho2 = vals["rho0"], vals["rho1"], vals["rho2"]
    s, c, eps = vals["s"], vals["c"], vals["eps"]
    c1, c2 = vals["c1"], vals["c2"]
    zeta1, zeta2 = vals["zeta1"], vals["zeta2"]

    a = rho2 - eps
    b = 1.0 / c + eps

    # The chain is checked in order; the first failure wins.
    chain = [
        ("1 < rho2", 1.0 < rho2),
        ("rho2 < 1/rho1", rho2 < 1.0 / rho1),
        ("rho1/rho2 < rho0", rho1 / rho2 < rho0),
        ("rho0 < rho1", rho0 < rho1),
        ("1/rho0 < s", 1.0 / rho0 < s),
        ("s < rho2/rho1", s < rho2 / rho1),
        ("rho0 < c", rho0 < c),
        ("c < rho1", c < rho1),
        ("eps < (rho0 - rho1/rho2)/2", eps < 0.5 * (rho0 - rho1 / rho2)),
        ("rho1*b < a", rho1 * b < a),
        ("b < a/rho1", b < a / rho1),
        ("1 < c2", 1.0 < c2),
        ("c2 < s*rho1", c2 < s * rho1),
        ("s*rho1 < c1", s * rho1 < c1),
        ("c1 < rho2", c1 < rho2),
        ("s*rho1 < zeta1", s * rho1 < zeta1),
        ("zeta1 < zeta2", zeta1 < zeta2),
        ("zeta2 < rho2", zeta2 < rho2),
    ]
    for name, ok in chain:
        if not ok:
            raise ChainViolation(name)

    return Params(a=a, b=b, **vals)


def default_params() -> Params:
    return validate_params(DEFAULT_PARAM_VALUES)


# ---------------------------------------------------------------------------
# Chart points
# ---------------------------------------------------------------------------

class Chart(enum.Enum):
    V = "V"
    V_PRIME = "V_prime"
    W_ANNULUS = "W_annulus"


@dataclass(frozen=True)
class ChartPoint:
    """A point of the model in one fixed chart.

    ``z1, z2`` are the coordinates in that chart; for ``W_ANNULUS`` they are
    the canonical orbit representative ``(w1, w2)``.  Use the classmethods,
    which validate chart membership against a parameter set.
    """

    chart: Chart
    z1: complex
    z2: complex

    @classmethod
    def v(cls, params: Params, z1: complex, z2: complex) -> "ChartPoint":
        r1, r2 = abs(z1), abs(z2)
        if not (1.0 < r1 < params.rho2):
            raise DomainError(f"V chart needs 1 < |z1| < rho2, got |z1|={r1}")
        if not (r2 < 1.0 / params.rho0):
            raise DomainError(f"V chart needs |z2| < 1/rho0, got |z2|={r2}")
        return cls(Chart.V, complex(z1), complex(z2))

    @classmethod
    def v_prime(cls, params: Params, z1: complex, z2: complex) -> "ChartPoint":
        r1, r2 = abs(z1), abs(z2)
        if not (1.0 < r1 < params.s):
            raise DomainError(f"V' chart needs 1 < |z1| < s, got |z1|={r1}")
        if not (1.0 / params.rho1 < r2 < 1.0 / params.rho0):
            raise DomainError(f"V' chart needs 1/rho1 < |z2| < 1/rho0, got |z2|={r2}")
        return cls(Chart.V_PRIME, complex(z1), complex(z2))

    @classmethod
    def w(cls, params: Params, w1: complex, w2: complex) -> "ChartPoint":
        if w1 == 0:
            raise DomainError("W chart needs w1 != 0")
        if not (params.rho0 < abs(w2) < params.rho1):
            raise DomainError(f"W chart needs rho0 < |w2| < rho1, got |w2|={abs(w2)}")
        w1c, w2c, _ = canonical_rep(w1, w2)
        return cls(Chart.W_ANNULUS, w1c, w2c)


# ---------------------------------------------------------------------------
# The multivalued gluing factor and the integer action
# ---------------------------------------------------------------------------

def phi(w, k: int = 0):
    """Branch ``k`` of the multivalued gluing factor.

    With ``l = Log w + 2*pi*i*k`` (principal log), returns
    ``exp(l**2 / (4*pi*i) - l/2)``.  Consecutive branches satisfy the exact
    relation ``phi(w, k) = w**k * phi(w, 0)``.  Accepts scalars or numpy
    arrays of nonzero complex numbers.
    """
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise DomainError("phi is undefined at w = 0")
    ell = np.log(w) + 2j * np.pi * k
    out = np.exp(ell * ell / (4j * np.pi) - 0.5 * ell)
    if out.ndim == 0:
        return complex(out)
    return out


def z_action(n: int, w1: complex, w2: complex) -> tuple[complex, complex]:
    """Integer action on the covering annulus: ``n . (w1, w2) = (w1*w2**n, w2)``."""
    if w1 == 0:
        raise DomainError("z_action needs w1 != 0")
    if not (0.0 < abs(w2) < 1.0):
        raise DomainError(f"z_action needs 0 < |w2| < 1, got |w2|={abs(w2)}")
    return w1 * w2 ** n, w2


def canonical_rep(w1: complex, w2: complex) -> tuple[complex, complex, int]:
    """Canonical orbit representative of ``(w1, w2)`` under the integer action.

    Returns ``(w1', w2, n)`` where ``w1' = w1 * w2**n`` and
    ``|w2|**(1/2) <= |w1'| < |w2|**(-1/2)``.  The shift ``n`` is unique
    because each orbit meets the band exactly once.
    """
    if w1 == 0:
        raise DomainError("canonical_rep needs w1 != 0")
    r2 = abs(w2)
    if not (0.0 < r2 < 1.0):
        raise DomainError(f"canonical_rep needs 0 < |w2| < 1, got {r2}")
    u = math.log(abs(w1)) / (-math.log(r2))
    n = math.floor(u + 0.5)
    if abs(n) > MAX_ORBIT_SHIFT:
        raise DomainError(f"orbit shift {n} exceeds supported range {MAX_ORBIT_SHIFT}")
    return w1 * w2 ** n, w2, n


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------

def map_Phi(params: Params, z1: complex, z2: complex, k: int = 0) -> ChartPoint:
    """Send a point of the gluing region into the quotient annulus chart.

    ``(z1, z2) -> [(z1 * phi(1/z2, k), 1/z2)]``, canonicalized.  The result is
    independent of the branch ``k`` (exactly, up to the integer action).
    """
    if z1 == 0:
        raise DomainError("map_Phi needs z1 != 0")
    r2 = abs(z2)
    if not (1.0 / params.rho1 < r2 < 1.0 / params.rho0):
        raise DomainError(
            f"map_Phi needs 1/rho1 < |z2| < 1/rho0, got |z2|={r2}")
    w2 = 1.0 / z2
    w1 = z1 * phi(w2, k)
    return ChartPoint.w(params, w1, w2)


def map_psi(params: Params, z1: complex, z2: complex) -> ChartPoint:
    """Gluing of the strip into ``V``: ``(z1, z2) -> (z1/z2, z2)`` on ``U'``.

    Defined on ``U' = {(z1, z2) in V' : |z2| < |z1|}``; the image modulus
    satisfies ``1 < |z1/z2| < s*rho1``.
    """
    r1, r2 = abs(z1), abs(z2)
    if not (1.0 < r1 < params.s) or not (1.0 / params.rho1 < r2 < 1.0 / params.rho0):
        raise DomainError("map_psi input must lie in V'")
    if r2 >= r1:
        raise DomainError(f"map_psi needs |z2| < |z1|, got |z2|={r2} >= |z1|={r1}")
    return ChartPoint.v(params, z1 / z2, z2)


def _in_phi_band(params: Params, p: ChartPoint) -> bool:
    """Does the chart point have a representative in the quotient annulus?"""
    if p.chart is Chart.W_ANNULUS:
        return True
    if p.z1 == 0:
        return False
    return 1.0 / params.rho1 < abs(p.z2) < 1.0 / params.rho0


def _to_annulus(params: Params, p: ChartPoint) -> ChartPoint:
    if p.chart is Chart.W_ANNULUS:
        return p
    return map_Phi(params, p.z1, p.z2, k=0)


def _close(a: complex, b: complex, tol: float) -> bool:
    return abs(a - b) <= tol


def _same_annulus_point(p: ChartPoint, q: ChartPoint, tol: float) -> bool:
    # Canonical representatives of nearly-equal points can disagree by one
    # shift when |w1| sits at the band edge, so compare a few neighbors.
    if not _close(p.z2, q.z2, tol):
        return False
    for n in (-1, 0, 1):
        if _close(p.z1 * p.z2 ** n, q.z1, tol * max(1.0, abs(q.z1))):
            return True
    return False


def same_point(params: Params, p: ChartPoint, q: ChartPoint, tol: float = 1e-9) -> bool:
    """Do two chart points represent the same point of the glued model?

    Handles identity overlap of ``V`` and ``V'`` (literal coordinate
    equality), the ``psi`` gluing, and identification through the quotient
    annulus chart, all within ``tol``.
    """
    if p.chart == q.chart:
        if p.chart is Chart.W_ANNULUS:
            return _same_annulus_point(p, q, tol)
        if _close(p.z1, q.z1, tol) and _close(p.z2, q.z2, tol):
            return True
    # V and V' overlap as subsets of C^2: same literal coordinates.
    charts = {p.chart, q.chart}
    if charts == {Chart.V, Chart.V_PRIME}:
        if _close(p.z1, q.z1, tol) and _close(p.z2, q.z2, tol):
            return True
        vp = p if p.chart is Chart.V_PRIME else q
        v = q if p.chart is Chart.V_PRIME else p
        if abs(vp.z2) < abs(vp.z1):  # psi applies
            if _close(vp.z1 / vp.z2, v.z1, tol) and _close(vp.z2, v.z2, tol):
                return True
    # Fall through: compare in the quotient annulus when both sides admit it.
    if _in_phi_band(params, p) and _in_phi_band(params, q):
        return _same_annulus_point(_to_annulus(params, p), _to_annulus(params, q), tol)
    return False


def fibration_f(params: Params, p: ChartPoint) -> tuple[complex, str]:
    """Value of the holomorphic fibration under the point, with a chart tag.

    Points of ``V``/``V'`` project to ``z2`` in the base-disk chart; annulus
    points project to ``w2`` in the opposite disk chart of the base sphere.
    """
    if p.chart is Chart.W_ANNULUS:
        return p.z2, "fiber_disk"
    return p.z2, "base_disk"


def in_complement_C(params: Params, p: ChartPoint) -> bool:
    """Is the point outside the removed band ``Z = {zeta1 < |z1| < zeta2}``?

    ``Z`` lives in ``V``; a point fails the test iff some representative of
    it in ``V`` has modulus inside the band.  Strip points reachable through
    ``psi`` land at moduli below ``s*rho1 < zeta1`` and never meet ``Z``.
    """
    z1_lo, z1_hi = params.zeta1, params.zeta2
    if p.chart in (Chart.V, Chart.V_PRIME):
        # For strip points the only V-representatives are the identity
        # overlap (same modulus) and the psi image (modulus < s*rho1 < zeta1).
        return not (z1_lo < abs(p.z1) < z1_hi)
    # Quotient annulus point: enumerate orbit representatives that pull back
    # into V.  Pulling back through any branch of Phi gives
    # |z1| = |w1| / |phi(w2, 0)| * |w2|**(-k).
    base = abs(p.z1) / abs(phi(p.z2, 0))
    lw2 = math.log(abs(p.z2))
    for k in range(-MAX_ORBIT_SHIFT, MAX_ORBIT_SHIFT + 1):
        m = math.exp(math.log(base) - k * lw2)
        if 1.0 < m < params.rho2 and z1_lo < m < z1_hi:
            return False
    return True
