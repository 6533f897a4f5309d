"""Shear-profile library: outer flow U^E, boundary-layer profile U, and the
combined profile V(Y) = U^E(sqrt(nu) Y) - U^E(0) + U(Y).

Profiles are immutable and carry analytic derivatives where closed-form
(exp / erf families) or spline derivatives (tabulated / heat-evolved via
kernel quadrature).  Concavity certification and the integral condition on
the critical-layer denominator are grid-measured with safety margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfc, roots_legendre

from .grid import HalfLineGrid, make_grid


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ShearProfile:
    """The pair (U^E, U) with derivatives and weighted norms.

    u_fn(Y, k) and uE_fn(y, k) evaluate the k-th derivative (k <= 3 for u,
    k <= 2 for uE), vectorized over the first argument.
    """

    kind: str
    uE0: float
    u_fn: object
    uE_fn: object
    params: dict = field(default_factory=dict)
    y_ref: float = 40.0

    # -- evaluation ---------------------------------------------------------
    def u(self, Y, k=0):
        return self.u_fn(np.asarray(Y, dtype=float), k)

    def uE(self, y, k=0):
        return self.uE_fn(np.asarray(y, dtype=float), k)

    def V(self, Y, nu, k=0):
        """k-th Y-derivative of V(Y) = U^E(sqrt(nu) Y) - U^E(0) + U(Y)."""
        Y = np.asarray(Y, dtype=float)
        root = math.sqrt(nu)
        out = root**k * self.uE(root * Y, k) + self.u(Y, k)
        if k == 0:
            out = out - self.uE0
        return out

    # -- norms (grid suprema on a dyadic refinement of the reference grid) ---
    def _ref_nodes(self, refine=2):
        n = 513 * refine
        return make_grid(n, self.y_ref, "sinh").nodes

    @property
    def norm_U(self) -> float:
        """||U|| = sum_k sup (1+Y)^k |d^k U|, k = 0, 1, 2."""
        Y = self._ref_nodes()
        return float(sum(np.max((1 + Y) ** k * np.abs(self.u(Y, k))) for k in range(3)))

    @property
    def dU_sup(self) -> float:
        return float(np.max(np.abs(self.u(self._ref_nodes(), 1))))

    @property
    def y_dU_sup(self) -> float:
        Y = self._ref_nodes()
        return float(np.max(Y * np.abs(self.u(Y, 1))))

    @property
    def u_sup(self) -> float:
        return float(np.max(np.abs(self.u(self._ref_nodes(), 0))))

    @property
    def uE_c1_sup(self) -> float:
        y = self._ref_nodes()
        return float(np.max(np.abs(self.uE(y, 1))))

    @property
    def uE_c2(self) -> float:
        y = self._ref_nodes()
        return float(sum(np.max(np.abs(self.uE(y, k))) for k in range(3)))

    def v_c2(self, nu) -> float:
        Y = self._ref_nodes()
        return float(sum(np.max(np.abs(self.V(Y, nu, k))) for k in range(3)))

    def check_boundary(self, tol=1e-6):
        """u(0) = 0 and u(Y_ref) -> uE0 within truncation tolerance."""
        u0 = float(self.u(0.0, 0))
        uinf = float(self.u(self.y_ref, 0))
        return abs(u0) <= tol and abs(uinf - self.uE0) <= max(tol, 1e-3 * abs(self.uE0))


def _exp_family(uE0, ell):
    def u_fn(Y, k):
        if k == 0:
            return uE0 * (1.0 - np.exp(-Y / ell))
        return uE0 * (-1.0) ** (k + 1) * ell ** (-k) * np.exp(-Y / ell)
    return u_fn


def _erf_family(uE0, t0):
    s = 2.0 * math.sqrt(t0)

    def u_fn(Y, k):
        if k == 0:
            return uE0 * erf(Y / s)
        g = uE0 * 2.0 / (s * math.sqrt(math.pi)) * np.exp(-((Y / s) ** 2))
        if k == 1:
            return g
        if k == 2:
            return -2.0 * Y / s**2 * g
        if k == 3:
            return (-2.0 / s**2 + 4.0 * Y**2 / s**4) * g
        raise ProfileError(f"erf profile derivative order {k} unavailable")
    return u_fn


def _uE_family(uE0, aE, ellE):
    def uE_fn(y, k):
        if k == 0:
            return uE0 + aE * (1.0 - np.exp(-y / ellE))
        return aE * (-1.0) ** (k + 1) * ellE ** (-k) * np.exp(-y / ellE)
    return uE_fn


def _tabulated_family(nodes, values):
    from scipy.interpolate import CubicSpline
    sp = CubicSpline(nodes, values, bc_type="natural")
    top = float(values[-1])
    hi = float(nodes[-1])

    def u_fn(Y, k):
        Y = np.atleast_1d(Y)
        out = np.where(Y <= hi, sp(np.minimum(Y, hi), k), top if k == 0 else 0.0)
        return out if out.shape else float(out)
    return u_fn


def build_profile(kind, params=None) -> ShearProfile:
    """Construct a profile from the closed-form library.

    kinds: "exp" (U = uE0 (1 - e^{-Y/ell})), "erf" (U = uE0 erf(Y / 2 sqrt(t0))),
    "tabulated" (params: nodes, values).  Heat-evolved profiles come from
    heat_evolve().  Optional outer-flow shape: aE, ellE.
    """
    params = dict(params or {})
    uE0 = float(params.get("uE0", 1.0))
    if uE0 <= 0:
        raise ProfileError("outer flow must satisfy U^E(0) > 0")
    aE = float(params.get("aE", 0.0))
    ellE = float(params.get("ellE", 1.0))
    y_ref = float(params.get("Y_max", 40.0))
    uE_fn = _uE_family(uE0, aE, ellE)
    if kind == "exp":
        u_fn = _exp_family(uE0, float(params.get("ell", 1.0)))
    elif kind == "erf":
        u_fn = _erf_family(uE0, float(params.get("t0", 1.0)))
    elif kind == "tabulated":
        u_fn = _tabulated_family(np.asarray(params["nodes"], float),
                                 np.asarray(params["values"], float))
    else:
        raise ProfileError(f"unknown profile kind {kind!r}")
    return ShearProfile(kind=kind, uE0=uE0, u_fn=u_fn, uE_fn=uE_fn,
                        params=params, y_ref=y_ref)


# ---------------------------------------------------------------------------
# concavity certification
# ---------------------------------------------------------------------------

@dataclass
class ConcavityCertificate:
    """Result of the concavity check -M d2U >= (dU)^2.

    kind "SC": one global constant; "WC": a constant per sigma > 0;
    "fail": a witness point where the inequality cannot hold.
    """

    kind: str
    m_sigma: dict = field(default_factory=dict)
    m_global: float = None
    ic_constant: float = None
    witness: float = None
    refinement: int = 2


def _ratio_sup(p, Y):
    d1 = p.u(Y, 1)
    d2 = p.u(Y, 2)
    neg = -d2
    r = np.full_like(Y, np.inf)
    ok = neg > 0
    r[ok] = d1[ok] ** 2 / neg[ok]
    r[~ok & (np.abs(d1) < 1e-14)] = 0.0
    return r, d2


def certify_concavity(p: ShearProfile, sigmas, grid: HalfLineGrid) -> ConcavityCertificate:
    """Measure the smallest grid-valid concavity constants with 5% margin.

    Convexity anywhere (d2U > 0) is a hard failure; an unbounded ratio near
    Y = 0 downgrades SC to WC (detected by growth under dyadic refinement).
    """
    margin = 1.05
    lvl = 2
    Y = grid.refine(lvl).nodes
    d2 = p.u(Y, 2)
    bad = d2 > 1e-10 * max(1.0, float(np.max(np.abs(d2))))
    if np.any(bad):
        return ConcavityCertificate(kind="fail", witness=float(Y[np.argmax(bad)]),
                                    refinement=lvl)
    r2, _ = _ratio_sup(p, Y)
    r4, _ = _ratio_sup(p, grid.refine(2 * lvl).nodes)
    sup2, sup4 = float(np.max(r2)), float(np.max(r4))
    stable = np.isfinite(sup4) and sup4 <= 1.2 * sup2 + 1e-12
    if stable:
        return ConcavityCertificate(kind="SC", m_global=margin * sup4,
                                    m_sigma={float(s): margin * sup4 for s in sigmas},
                                    refinement=2 * lvl)
    # WC: constants on [sigma, Y_max] only
    m_sigma = {}
    Yr = grid.refine(2 * lvl).nodes
    rr, _ = _ratio_sup(p, Yr)
    for s in sigmas:
        mask = Yr >= float(s)
        sup = float(np.max(rr[mask]))
        if not np.isfinite(sup):
            return ConcavityCertificate(kind="fail",
                                        witness=float(Yr[mask][np.argmax(~np.isfinite(rr[mask]))]),
                                        refinement=2 * lvl)
        m_sigma[float(s)] = margin * sup
    return ConcavityCertificate(kind="WC", m_sigma=m_sigma, refinement=2 * lvl)


def default_lambda_grid(uE0, n_im=9):
    """Log-spaced Im in [1e-2, 1] x Re in {0, uE0/4, uE0/2}."""
    ims = np.logspace(-2, 0, n_im)
    res = [0.0, uE0 / 4.0, uE0 / 2.0]
    return [complex(r, i) for r in res for i in ims]


def verify_integral_condition(p: ShearProfile, nu, lambda_grid, grid=None):
    """Measure M' = max over the lambda grid of
    (Im lambda)^(3/2) * || Y^(1/2) (dU)^2 / (V - lambda)^2 ||_L2.

    Only Re lambda <= U^E(0)/2 with Im lambda > 0 is certified; points with
    Im lambda <= 0 raise.
    """
    if grid is None:
        grid = make_grid(1025, p.y_ref, "sinh")
    Y = grid.nodes
    w = grid.weights
    d1 = p.u(Y, 1)
    V = p.V(Y, nu, 0)
    best, worst = 0.0, None
    for lam in lambda_grid:
        lam = complex(lam)
        if lam.imag <= 0:
            raise ProfileError("integral-condition sweep requires Im lambda > 0")
        val = np.sqrt(np.sum(w * Y * d1**4 / np.abs(V - lam) ** 4))
        score = lam.imag**1.5 * float(val)
        if score > best:
            best, worst = score, lam
    return best, worst


# ---------------------------------------------------------------------------
# heat evolution of the boundary-layer profile
# ---------------------------------------------------------------------------

def _gauss_panels(z_max, width):
    """Gauss-Legendre nodes/weights on panels of size ~width covering [0, z_max]."""
    x16, w16 = roots_legendre(16)
    n_pan = max(4, int(math.ceil(z_max / width)))
    edges = np.linspace(0.0, z_max, n_pan + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    z = (mid[:, None] + half[:, None] * x16[None, :]).ravel()
    wz = (half[:, None] * w16[None, :]).ravel()
    return z, wz


def _heat_kernels(t, Y, Z):
    """G_D = G(t, Y-Z) - G(t, Y+Z), G_N = G(t, Y-Z) + G(t, Y+Z)."""
    pref = 1.0 / math.sqrt(4.0 * math.pi * t)
    a = pref * np.exp(-((Y[:, None] - Z[None, :]) ** 2) / (4.0 * t))
    b = pref * np.exp(-((Y[:, None] + Z[None, :]) ** 2) / (4.0 * t))
    return a - b, a + b


def heat_evolve(p0: ShearProfile, t, grid: HalfLineGrid) -> ShearProfile:
    """Evolve the boundary-layer profile by the half-line heat flow.

    Dirichlet kernel for U itself (U(t, 0) = 0 preserved), Neumann kernel for
    dU; the Gaussian tail beyond the quadrature window is added analytically
    with U ~ uE0.  Very short times fall back to U + t * d2U to avoid kernel
    stiffness.
    """
    if t < 0:
        raise ProfileError("heat evolution requires t >= 0")
    if t == 0.0:
        return p0
    if t < 1e-3:
        # first-order in t: d^k U^P = d^k U + t d^(k+2) U, for k with k+2 <= 3
        def u_fn(Y, k):
            if k <= 1:
                return p0.u(Y, k) + t * p0.u(Y, k + 2)
            return p0.u(Y, k)
        return ShearProfile(kind="heat-evolved", uE0=p0.uE0, u_fn=u_fn,
                            uE_fn=p0.uE_fn, params={**p0.params, "t": t},
                            y_ref=p0.y_ref)

    z_max = p0.y_ref + 10.0 * math.sqrt(t) + 5.0
    width = min(0.5, math.sqrt(4.0 * t))
    Z, wz = _gauss_panels(z_max, width)
    uZ = {k: p0.u(Z, k) for k in range(4)}
    d2_at_0 = float(p0.u(0.0, 2))
    uE0 = p0.uE0

    def u_fn(Y, k):
        Y = np.atleast_1d(np.asarray(Y, dtype=float))
        GD, GN = _heat_kernels(t, Y, Z)
        s = 2.0 * math.sqrt(t)
        if k == 0:
            out = GD @ (wz * uZ[0])
            tail = 0.5 * uE0 * (erfc((z_max - Y) / s) - erfc((z_max + Y) / s))
            out = out + tail
        elif k == 1:
            out = GN @ (wz * uZ[1])
        elif k == 2:
            out = GD @ (wz * uZ[2])
        elif k == 3:
            G0 = np.exp(-(Y**2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
            out = 2.0 * G0 * d2_at_0 + GN @ (wz * uZ[3])
        else:
            raise ProfileError(f"heat-evolved derivative order {k} unavailable")
        return out
    return ShearProfile(kind="heat-evolved", uE0=p0.uE0, u_fn=u_fn,
                        uE_fn=p0.uE_fn, params={**p0.params, "t": t},
                        y_ref=p0.y_ref)


def heat_kernel_mass(t, Y, z_max=None, width=None):
    """Quadrature check value of int_0^inf G_N(t, Y, Z) dZ (exactly 1)."""
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    if z_max is None:
        z_max = float(np.max(Y)) + 12.0 * math.sqrt(t) + 5.0
    if width is None:
        width = min(0.5, math.sqrt(4.0 * t))
    Z, wz = _gauss_panels(z_max, width)
    _, GN = _heat_kernels(t, Y, Z)
    s = 2.0 * math.sqrt(t)
    tail = 0.5 * (erfc((z_max - Y) / s) + erfc((z_max + Y) / s))
    return GN @ wz + tail


class HeatEvolvedFamily:
    """Time-dependent profile family U^P(t) from heat flow of a base profile."""

    def __init__(self, p0: ShearProfile, grid: HalfLineGrid):
        self.p0 = p0
        self.grid = grid
        self._cache = {}

    def at(self, t) -> ShearProfile:
        key = round(float(t), 12)
        if key not in self._cache:
            self._cache[key] = heat_evolve(self.p0, float(t), self.grid)
        return self._cache[key]
