"""Contour-integral Airy functions and the critical-layer profile.

Ai(z) here is the unnormalized contour integral  int_L exp(z t - t^3/3) dt
over L = L_- u L_0 u L_+ (rays at angles -+ 2 pi/3 joined by the left arc of
the unit circle, oriented upward); it equals 2 pi i times the classical Airy
function.  Ai_alpha carries the extra factor 1/(t^2 - p^2) with poles p, -p
strictly to the right of the contour (|p| < 1 required).

Evaluation strategy: for moderate |z| the fixed contour is integrated
directly with adaptive truncation; for large |z| the contour is deformed
(Cauchy) onto a steepest-descent path through the saddle of the phase in the
normalized variable u = t/|z|^(1/2), which removes the catastrophic
cancellation of the fixed contour.  All large-|z| work is done on the scaled
function e^{+(2/3) z^(3/2)} Ai so that magnitudes stay representable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

_GL8 = roots_legendre(8)


@dataclass(frozen=True)
class AiryContour:
    """Fixed contour: rays at angles -+ 2 pi/3 for r in (1, R_trunc) joined by
    the unit-circle arc through -1; nodes are Gauss-Legendre panels per leg."""

    r_trunc: float = None          # None: adaptive from integrand decay
    panels_per_unit: float = 4.0   # panel density multiplier
    decay_digits: float = 20.0     # truncate when integrand drops this far


DEFAULT_CONTOUR = AiryContour()

_Z_SWITCH = 6.0                    # |z| above which the saddle path is used
_TH_SWITCH = 0.55 * math.pi        # |arg z| above which the fixed contour is safe


def _pick_method(z):
    """Fixed contour where it is cancellation-free, saddle path otherwise."""
    z = complex(z)
    if abs(z) <= _Z_SWITCH or abs(cmath.phase(z)) >= _TH_SWITCH:
        return "direct"
    return "saddle"


def _segment_quad(f, a, b, n_panels):
    """Composite 8-point Gauss-Legendre of f along the straight segment a-b."""
    x, w = _GL8
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    s = (mids[:, None] + half * x[None, :]).ravel()
    ws = np.broadcast_to(half * w[None, :], (n_panels, len(w))).ravel()
    t = a + (b - a) * s
    return (b - a) * np.sum(ws * f(t))


def _arc_quad(f, th0, th1, n_panels):
    x, w = _GL8
    edges = np.linspace(th0, th1, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    th = (mids[:, None] + half * x[None, :]).ravel()
    ws = np.broadcast_to(half * w[None, :], (n_panels, len(w))).ravel()
    t = np.exp(1j * th)
    return np.sum(ws * f(t) * 1j * t)


def _ai_direct(z, k=0, pole=None, scaled=False, contour=DEFAULT_CONTOUR):
    """Integrate the defining contour integral on the fixed contour.

    Internally always evaluated with the factor e^{+(2/3) z^(3/2)} pulled into
    the exponent; on the fixed contour this keeps magnitudes representable for
    every |arg z| >= ~0.55 pi regardless of |z| (and for all z with |z| <~ 6).
    """
    z = complex(z)
    shift = (2.0 / 3.0) * z ** 1.5

    def integrand(t):
        e = z * t - t**3 / 3.0 + shift
        val = np.exp(e)
        if k:
            val = val * t**k
        if pole is not None:
            val = val / (t * t - pole * pole)
        return val

    # truncation radius: on the rays Re(exponent) = Re(z e^{+-2i pi/3}) r - r^3/3
    if contour.r_trunc is None:
        need = contour.decay_digits * math.log(10.0) + abs(shift.real) + abs(z) + 2.0
        r = 1.5
        while r**3 / 3.0 - abs(z) * r < need and r < 60.0:
            r *= 1.25
    else:
        r = contour.r_trunc
    dens = contour.panels_per_unit * (1.0 + 0.6 * abs(z))
    n_ray = max(8, int(dens * (r - 1.0)))
    n_arc = max(8, int(dens * 2.2))
    w_minus = cmath.exp(-2j * math.pi / 3.0)
    w_plus = cmath.exp(2j * math.pi / 3.0)
    total = _segment_quad(integrand, r * w_minus, w_minus, n_ray)
    total += _arc_quad(integrand, -2.0 * math.pi / 3.0, -4.0 * math.pi / 3.0, n_arc)
    total += _segment_quad(integrand, w_plus, r * w_plus, n_ray)
    if not scaled:
        total = total * cmath.exp(-shift)
    return total


def _descent_path(theta, rho32, w_stop=52.0, step=0.04, pole_u=None):
    """Polyline nodes of a steepest-descent path through u_s = -e^{i theta/2}.

    Central straight piece along the local descent direction, then gradient
    flow of Re g until rho^(3/2) (Re g - Re g_s) < -w_stop.  If the path dips
    into the small disk around the origin that contains the poles, that run
    is replaced by a circular detour passing on the negative-real side, which
    keeps both poles strictly to the right of the upward-oriented path
    (the same homotopy class as the fixed contour through -1).
    """
    us = -cmath.exp(0.5j * theta)
    d = cmath.exp(1j * (0.5 * math.pi - 0.25 * theta))

    def g(u):
        return cmath.exp(1j * theta) * u - u**3 / 3.0

    def gp(u):
        return cmath.exp(1j * theta) - u * u

    re_gs = g(us).real
    s_half = min(0.8, math.sqrt((w_stop + 8.0) / max(rho32, 1.0)))
    m = max(24, int(2 * s_half / step))
    centre = [us + d * s for s in np.linspace(-s_half, s_half, m)]

    def flow(u0, max_steps=4000):
        pts = []
        u = u0
        for _ in range(max_steps):
            gr = gp(u)
            agr = abs(gr)
            if agr < 1e-14:
                break
            u = u - step * gr.conjugate() / agr
            pts.append(u)
            if rho32 * (g(u).real - re_gs) < -w_stop:
                break
        return pts

    lower = flow(centre[0])
    upper = flow(centre[-1])
    nodes = list(reversed(lower)) + centre + upper

    r0 = 0.12 if pole_u is None else min(max(0.12, 2.2 * abs(pole_u)), 0.7)
    inside = [abs(u) < r0 for u in nodes]
    if any(inside):
        i0 = inside.index(True)
        i1 = len(inside) - 1 - inside[::-1].index(True)
        u_in = nodes[max(i0 - 1, 0)]
        u_out = nodes[min(i1 + 1, len(nodes) - 1)]
        ph_in, ph_out = cmath.phase(u_in), cmath.phase(u_out)
        sweep = ph_out - ph_in
        sweep -= math.copysign(2.0 * math.pi, sweep)  # go the long way, through arg = pi
        n_arc = max(24, int(abs(sweep) * r0 / min(step, 0.03)))
        arc = [r0 * cmath.exp(1j * (ph_in + sweep * j / n_arc)) for j in range(n_arc + 1)]
        nodes = nodes[: max(i0 - 1, 0) + 1] + arc + nodes[min(i1 + 1, len(nodes) - 1):]
    if pole_u is not None and abs(pole_u) > 0:
        fine = [nodes[0]]
        for a, b in zip(nodes[:-1], nodes[1:]):
            mid = 0.5 * (a + b)
            dist = min(abs(mid - pole_u), abs(mid + pole_u))
            n_sub = 1 + min(16, int(abs(b - a) / max(0.3 * dist, 1e-4)))
            for j in range(1, n_sub + 1):
                fine.append(a + (b - a) * j / n_sub)
        nodes = fine
    return np.asarray(nodes), re_gs


def _arg_sweep(nodes, q):
    """Total change of arg(t - q) along a densely sampled polyline."""
    rel = nodes - q
    return float(np.sum(np.angle(rel[1:] / rel[:-1])))


def _reference_sweep(q, r_far=80.0):
    """arg sweep of (t - q) along the fixed contour L (rays + left arc)."""
    r = np.concatenate([np.geomspace(r_far, 1.0, 80)])
    lower = r * cmath.exp(-2j * math.pi / 3.0)
    th = np.linspace(-2.0 * math.pi / 3.0, -4.0 * math.pi / 3.0, 80)
    arc = np.exp(1j * th)
    upper = r[::-1] * cmath.exp(2j * math.pi / 3.0)
    return _arg_sweep(np.concatenate([lower, arc, upper]), q)


def _ai_saddle(z, k=0, pole=None, scaled=True, refine=1):
    """Steepest-descent evaluation (scaled by e^{(2/3) z^{3/2}} internally).

    The deformed path is made exactly homotopic to the fixed contour by a
    winding-number check against each pole: any net winding difference is
    compensated with the corresponding 2 pi i residues.
    """
    z = complex(z)
    rho = abs(z)
    theta = cmath.phase(z)
    rho32 = rho**1.5
    pole_u = None if pole is None else pole / math.sqrt(rho)
    nodes, re_gs = _descent_path(theta, rho32, w_stop=52.0 + 8.0 * refine,
                                 step=0.04 / refine, pole_u=pole_u)
    gs = cmath.exp(1j * theta) * (-cmath.exp(0.5j * theta)) + cmath.exp(1.5j * theta) / 3.0

    u = nodes
    x8, w8 = _GL8
    a, b = u[:-1], u[1:]
    mid = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x8[None, :]
    expo = rho32 * ((np.exp(1j * theta) * mid - mid**3 / 3.0) - gs)
    val = np.exp(expo)
    if k:
        val = val * (math.sqrt(rho) * mid) ** k
    if pole is not None:
        val = val / (rho * mid * mid - pole * pole)
    seg = 0.5 * (b - a) * np.sum(w8[None, :] * val, axis=1)
    total = np.sum(seg) * math.sqrt(rho)  # dt = sqrt(rho) du

    if pole is not None and abs(pole) > 0:
        t_nodes = math.sqrt(rho) * u
        for q in (complex(pole), -complex(pole)):
            w = (_arg_sweep(t_nodes, q) - _reference_sweep(q)) / (2.0 * math.pi)
            wn = int(round(w))
            if wn != 0:
                # residue of e^{zt - t^3/3 + (2/3) z^{3/2}} t^k / (t^2 - p^2) at t = q
                ex = z * q - q**3 / 3.0 + (2.0 / 3.0) * z**1.5
                total -= wn * 2j * math.pi * cmath.exp(ex) * q**k / (2.0 * q)
    if not scaled:
        total = total * cmath.exp(-(2.0 / 3.0) * z**1.5)
    return total


def airy_ai(z, k=0, scaled=False, method="auto", contour=DEFAULT_CONTOUR, refine=1):
    """k-th derivative (k = 0, 1, 2) of the unnormalized contour Airy function.

    scaled=True returns e^{+(2/3) z^(3/2)} Ai^(k)(z), safe at large |z|.
    """
    z = complex(z)
    if not (abs(cmath.phase(z)) < math.pi) and z != 0:
        raise ValueError("require |arg z| < pi")
    if k not in (0, 1, 2):
        raise ValueError("derivative order must be 0, 1, or 2")
    if method == "auto":
        method = _pick_method(z)
    if method == "direct":
        return _ai_direct(z, k=k, pole=None, scaled=scaled, contour=contour)
    return _ai_saddle(z, k=k, pole=None, scaled=scaled, refine=refine)


def airy_ai_alpha(z, pole, k=0, scaled=False, method="auto", contour=DEFAULT_CONTOUR,
                  refine=1):
    """k-th derivative of the pole-regularized Airy integral with poles +-pole.

    Requires |pole| < 1 so the poles sit strictly right of the contour.
    Satisfies (d^2/dz^2 - pole^2) Ai_alpha = Ai.
    """
    z = complex(z)
    pole = complex(pole)
    if abs(pole) >= 1.0:
        raise ValueError("pole magnitude must be < 1 (inside the contour arc)")
    if k not in (0, 1, 2):
        raise ValueError("derivative order must be 0, 1, or 2")
    if method == "auto":
        method = _pick_method(z)
    if method == "direct":
        return _ai_direct(z, k=k, pole=pole, scaled=scaled, contour=contour)
    return _ai_saddle(z, k=k, pole=pole, scaled=scaled, refine=refine)


def airy_ode_residual(z, delta=1e-3):
    """|Ai'' - z Ai| / |Ai| by a centered 5-point second difference in z."""
    zs = z + delta * np.array([-2, -1, 0, 1, 2])
    vals = np.array([airy_ai(zz) for zz in zs])
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * delta**2)
    return abs(d2 - z * vals[2]) / abs(vals[2])


def airy_alpha_ode_residual(z, pole, delta=1e-3):
    """|(d2 - pole^2) Ai_alpha - Ai| / |Ai| by finite differences in z."""
    zs = z + delta * np.array([-2, -1, 0, 1, 2])
    vals = np.array([airy_ai_alpha(zz, pole) for zz in zs])
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * delta**2)
    ai = airy_ai(z)
    return abs(d2 - pole**2 * vals[2] - ai) / abs(ai)


# ---------------------------------------------------------------------------
# critical layer data and the viscous-sublayer profile
# ---------------------------------------------------------------------------

@dataclass
class CriticalLayerData:
    """Shifted critical point and rescaled small parameter of the sublayer."""

    y_c: float
    z_c: complex
    dV_c: float
    eps_tilde: complex
    r_bound: float
    y_c_ratio: float  # measured |Y_c| / |Re c|


def critical_layer(p, sp, grid=None, tol=1e-12) -> CriticalLayerData:
    """Locate Y_c with V_odd(Y_c) = Re c by bisection on the odd extension."""
    nu = sp.nu
    rc = sp.c.real

    def V_odd(Y):
        return float(np.sign(Y) * p.V(abs(Y), nu, 0))

    a, b = -2.0, 2.0
    if not (V_odd(a) <= rc <= V_odd(b)):
        raise ValueError("Re c outside the resolvable critical range [-V(2), V(2)]")
    while b - a > tol:
        m = 0.5 * (a + b)
        if V_odd(m) < rc:
            a = m
        else:
            b = m
    y_c = 0.5 * (a + b)
    dV_c = float(p.V(abs(y_c), nu, 1))
    if dV_c <= 0:
        raise ValueError("profile must be strictly monotone at the critical point")
    z_c = y_c + 1j * sp.im_c_eps / dV_c
    eps_tilde = sp.eps / dV_c
    ratio = abs(y_c) / abs(rc) if rc != 0 else 0.0
    return CriticalLayerData(y_c=y_c, z_c=z_c, dV_c=dV_c, eps_tilde=eps_tilde,
                             r_bound=p.v_c2(nu), y_c_ratio=ratio)


def build_psi_ai(sp, p, cl: CriticalLayerData, grid):
    """The critical-layer profile and two derivatives on the grid.

    psi(Y) = Ai_alpha((Y - Z_c)/e13) / Ai_alpha(-Z_c/e13), e13 = eps_tilde^(1/3),
    assembled from scaled evaluations so that the exponential factors never
    overflow; psi(0) = 1 exactly.
    """
    e13 = cmath.exp(cmath.log(cl.eps_tilde) / 3.0)
    if not (-math.pi / 3 < cmath.phase(e13) <= math.pi / 3):
        raise AssertionError("cube-root branch drifted out of (-pi/3, pi/3]")
    pole = e13 * sp.alpha
    if abs(pole) >= 1.0:
        raise ValueError("sublayer pole outside the contour regime (|e13 alpha| >= 1)")
    z0 = -cl.z_c / e13
    den = airy_ai_alpha(z0, pole, k=0, scaled=True)
    if abs(den) < 1e-30:
        raise ValueError("vanishing denominator: contour/regime failure at -Z_c/e13")
    Y = grid.nodes
    zs = (Y - cl.z_c) / e13
    out = np.zeros((grid.n, 3), dtype=complex)
    z0_32 = z0 ** 1.5
    for i, zz in enumerate(zs):
        damp = -(2.0 / 3.0) * (zz ** 1.5 - z0_32)
        if damp.real < -745.0:
            continue  # underflow: profile is numerically zero there
        f = cmath.exp(damp)
        for k in range(3):
            num = airy_ai_alpha(zz, pole, k=k, scaled=True)
            out[i, k] = e13 ** (-k) * num / den * f
    out[0, 0] = 1.0 + 0j  # the defining normalization, exact
    info = {
        "pole": pole,
        "e13": e13,
        "z0": z0,
        "sublayer_scale": abs(cl.eps_tilde / cl.z_c) ** 0.5,
        "decay_rate": abs(cl.z_c / cl.eps_tilde) ** 0.5,
    }
    return out, info
