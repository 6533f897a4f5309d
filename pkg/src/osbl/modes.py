"""Slow and fast homogeneous modes of the fourth-order problem, normalized to
1 at the wall, and the 2x2 matching that produces the wall-slope corrector.

The slow mode rides on e^{-alpha Y} plus Rayleigh and series corrections.
The fast mode has the viscous-sublayer structure: near criticality it is the
contour-integral profile plus a remainder; away from criticality it is a
boundary-layer expansion in the rescaled variable z = |tau| Y with explicit
exponential profiles.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .airy import build_psi_ai, critical_layer
from .grid import make_grid
from .iteration import iterate_mos
from .oscore import ModeWorkspace, ModeSolution, mos_residual, solve_rayleigh, _package
from .params import SpectralParams


class MatchingError(RuntimeError):
    pass


@dataclass
class FastModeConfig:
    """Regime split exponent and boundary-layer expansion depth."""

    theta: float = 0.08
    n_bl: int = None
    decay_delta: float = 0.5     # fraction of Re omega used in decay checks

    def __post_init__(self):
        if not (0.0 < self.theta < 0.1):
            raise ValueError("theta must lie in (0, 1/10)")
        if self.n_bl is None:
            self.n_bl = int(math.ceil(15.0 / (4.0 * self.theta))) + 2


@dataclass
class ModePair:
    slow: ModeSolution
    fast: ModeSolution
    slopes: tuple = ()
    wronskian_gap: complex = 0.0

    def __post_init__(self):
        if not self.slopes:
            self.slopes = (self.slow.boundary_slope, self.fast.boundary_slope)
        self.wronskian_gap = self.slopes[1] - self.slopes[0]


def build_slow_mode(p, sp: SpectralParams, ws: ModeWorkspace = None,
                    tol=1e-8, k_cap=40) -> ModeSolution:
    """phi_s = e^{-alpha Y} + Rayleigh lift + series remainder, phi_s(0) = 1."""
    ws = ws or ModeWorkspace(p, sp.nu, make_grid(769, p.y_ref))
    Y = ws.grid.nodes
    e_a = np.exp(-sp.alpha * Y).astype(complex)
    root = math.sqrt(sp.nu)
    h1 = sp.nu * p.uE(root * Y, 2) * e_a
    h2 = e_a * p.u(Y, 2)
    lift1 = solve_rayleigh(p, sp, h1, bc0=0.0, ws=ws)
    lift2 = solve_rayleigh(p, sp, h2, bc0=0.0, ws=ws)
    tilde_ray = lift1.phi + lift2.phi
    # the series is seeded by the Rayleigh correction only: the exponential
    # part is annihilated by (d2 - a^2) d2, so a flat profile gives phi_s
    # = e^{-alpha Y} with no correction at all
    phi1, trace = iterate_mos(p, sp, tilde_ray, tol=tol, k_cap=k_cap, ws=ws)
    total = e_a + tilde_ray + phi1
    res = mos_residual(p, sp, total, np.zeros(ws.grid.n), ws)
    sol = _package(ws, sp, total, res)
    corr = total - e_a
    sol.diagnostics.update({
        "trace": trace,
        "correction_h1_norm": ws.l2(ws.D1.apply(corr)) + sp.alpha * ws.l2(corr),
        "slope_times_im_c_eps": abs(sol.boundary_slope) * sp.im_c_eps,
    })
    return sol


# ---------------------------------------------------------------------------
# fast mode, case 1: critical layer resolved by the contour-integral profile
# ---------------------------------------------------------------------------

def _fast_mode_critical(p, sp, cfg, ws, tol, k_cap):
    cl = critical_layer(p, sp)
    psi, info = build_psi_ai(sp, p, cl, ws.grid)
    a2 = sp.alpha**2
    lap = psi[:, 2] - a2 * psi[:, 0]
    mos_psi = (-sp.eps) * (ws.D2.apply(psi[:, 2]) - a2 * psi[:, 2]) \
        + (ws.V - sp.c_eps) * lap - ws.d2V * psi[:, 0]
    h_f = -mos_psi
    lift = solve_rayleigh(p, sp, h_f, bc0=0.0, ws=ws)
    phi1, trace = iterate_mos(p, sp, lift, tol=tol, k_cap=k_cap, ws=ws)
    total = psi[:, 0] + lift.phi + phi1
    res = mos_residual(p, sp, total, np.zeros(ws.grid.n), ws)
    sol = _package(ws, sp, total, res)
    # wall slope from the analytic sublayer derivative plus corrector slopes
    sol.boundary_slope = complex(psi[0, 1] + lift.dphi[0] + ws.D1.apply(phi1)[0])
    sol.diagnostics.update({
        "case": 1,
        "critical_layer": cl,
        "sublayer": info,
        "trace": trace,
        "slope_scale": abs(sp.c_eps / sp.eps) ** 0.5,
    })
    return sol


# ---------------------------------------------------------------------------
# fast mode, case 2: boundary-layer expansion in z = |tau| Y
# ---------------------------------------------------------------------------

def _exp_cumulate(z, f, omega):
    """F(z_i) = int_{z_i}^inf e^{-omega (s - z_i)} f(s) ds with f piecewise
    linear per panel and the exponential integrated exactly."""
    n = len(z)
    F = np.zeros(n, dtype=complex)
    for i in range(n - 2, -1, -1):
        hseg = z[i + 1] - z[i]
        w = omega * hseg
        if abs(w) > 1e-8:
            ew = np.exp(-w)
            i0 = (1.0 - ew) / w
            i1 = (1.0 - (1.0 + w) * ew) / (w * w)
        else:
            i0, i1 = 1.0 - w / 2.0, 0.5 - w / 3.0
        # int_0^h e^{-omega s}(f_i + (f_{i+1}-f_i) s/h) ds
        seg = hseg * (f[i] * i0 + (f[i + 1] - f[i]) * i1)
        F[i] = np.exp(-w) * F[i + 1] + seg
    return F


def _exp_forward(z, g, omega):
    """phi(z_i) = int_0^{z_i} e^{-omega (z_i - s)} g(s) ds, same panel rule."""
    n = len(z)
    out = np.zeros(n, dtype=complex)
    for i in range(n - 1):
        hseg = z[i + 1] - z[i]
        w = omega * hseg
        ew = np.exp(-w)
        if abs(w) > 1e-8:
            j0 = (1.0 - ew) / w
            j1 = (ew - 1.0 + w) / (w * w)
        else:
            j0, j1 = 1.0 - w / 2.0, 0.5 - w / 6.0
        # int_0^h e^{-omega(h-s)}(g_i + (g_{i+1}-g_i) s/h) ds
        seg = hseg * (g[i] * j0 + (g[i + 1] - g[i]) * j1)
        out[i + 1] = ew * out[i] + seg
    return out


def _fast_mode_expansion(p, sp, cfg, ws, tol, k_cap):
    tau = cmath.sqrt((sp.im_c_eps - 1j * sp.c_eps.real) / abs(sp.eps))
    if tau.real <= 0:
        tau = -tau
    omega = tau / abs(tau)
    at = abs(tau)
    Y = ws.grid.nodes
    z = at * Y
    dV_sup = float(np.max(np.abs(ws.dV)))
    d_eps = 2.0 * sp.alpha**2 / at**2 + dV_sup / (abs(sp.eps) * at**3) \
        + sp.alpha**2 * dV_sup / (abs(sp.eps) * at**5)
    if d_eps >= 1.0:
        raise MatchingError(f"expansion parameter D_eps = {d_eps:.3g} >= 1; "
                            "boundary-layer construction invalid here")
    Ve = ws.V           # V^(eps)(z) = V(z/|tau|) sampled at z = |tau| Y
    dVe = ws.dV
    phis = [np.exp(-omega * z)]
    decay_checks = []
    for k in range(1, cfg.n_bl + 1):
        f = phis[-1]
        term1 = -(sp.alpha / at) ** 2 * f
        term2 = -(Ve / (sp.eps * at**2)) * f
        inner1 = -_exp_cumulate(z, (2.0 / (sp.eps * at**3)) * dVe * f, 0.0)
        t4 = _exp_cumulate(z, (sp.alpha**2 / (sp.eps * at**4)) * (Ve - sp.c_eps) * f, 0.0)
        inner2 = _exp_cumulate(z, t4, 0.0)
        g_k = term1 + term2 + inner1 + inner2
        Fk = _exp_cumulate(z, g_k, omega)
        phi_k = _exp_forward(z, Fk, omega)
        phis.append(phi_k)
        if k <= 3:
            dd = cfg.decay_delta * omega.real
            env = np.exp(dd * z)
            sum_derivs = np.abs(phi_k) + np.abs(np.gradient(phi_k, z)) \
                + np.abs(np.gradient(np.gradient(phi_k, z), z))
            decay_checks.append(float(np.max(env * sum_derivs)) / max(d_eps**k, 1e-300))
    total_bl = np.sum(phis, axis=0)
    h_r = -(mos_apply_field(p, sp, total_bl, ws))
    lift = solve_rayleigh(p, sp, h_r, bc0=0.0, ws=ws)
    phi1, trace = iterate_mos(p, sp, lift, tol=tol, k_cap=k_cap, ws=ws)
    remainder = lift.phi + phi1
    total = total_bl + remainder
    res = mos_residual(p, sp, total, np.zeros(ws.grid.n), ws)
    sol = _package(ws, sp, total, res)
    rem_norm = ws.l2(ws.D1.apply(remainder)) + sp.alpha * ws.l2(remainder) \
        + ws.l2(ws.D2.apply(remainder) - sp.alpha**2 * remainder)
    sol.diagnostics.update({
        "case": 2,
        "tau": tau,
        "omega": omega,
        "d_eps": d_eps,
        "remainder_bound": at**2.5 * d_eps**cfg.n_bl,
        "remainder_norm": rem_norm,
        "profile_decay_constants": decay_checks,
        "trace": trace,
        "slope_scale": abs(sp.c_eps / sp.eps) ** 0.5,
    })
    return sol


def mos_apply_field(p, sp, phi, ws):
    from .oscore import mos_apply
    return mos_apply(p, sp, phi, ws=ws)


def build_fast_mode(p, sp: SpectralParams, cfg: FastModeConfig = None,
                    ws: ModeWorkspace = None, tol=1e-8, k_cap=40) -> ModeSolution:
    """Fast mode with phi_f(0) = 1; the construction is chosen by the size of
    |c| against |eps|^((1-theta)/3), and near the split both are built and the
    one with the smaller residual kept."""
    cfg = cfg or FastModeConfig()
    ws = ws or ModeWorkspace(p, sp.nu, make_grid(769, p.y_ref))
    split = abs(sp.eps) ** ((1.0 - cfg.theta) / 3.0)
    r = abs(sp.c) / split
    if r <= 0.7:
        return _fast_mode_critical(p, sp, cfg, ws, tol, k_cap)
    if r >= 1.4:
        return _fast_mode_expansion(p, sp, cfg, ws, tol, k_cap)
    sols = []
    for builder in (_fast_mode_critical, _fast_mode_expansion):
        try:
            sols.append(builder(p, sp, cfg, ws, tol, k_cap))
        except Exception:
            pass
    if not sols:
        raise MatchingError("both fast-mode constructions failed near the case split")
    sols.sort(key=lambda s: s.residual)
    if len(sols) == 2:
        diff = ws.l2(sols[0].phi - sols[1].phi) / max(ws.l2(sols[0].phi), 1e-300)
        sols[0].diagnostics["case_discrepancy"] = diff
    return sols[0]


def match_modes(pair: ModePair, phi_mos_slope: complex):
    """Coefficients (A, B) with A phi_s + B phi_f cancelling the wall slope of
    the particular solution; A = -B always."""
    gap = pair.wronskian_gap
    if abs(gap) <= 1e-12 * abs(pair.slopes[1]):
        raise MatchingError("wall-slope gap degenerate; matching impossible")
    A = complex(phi_mos_slope) / gap
    return A, -A
