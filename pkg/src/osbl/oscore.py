"""Fundamental one-mode boundary-value solvers on the half line.

Three problems, all with V = V(Y) and spectral parameters from SpectralParams:

  Rayleigh:      (V - c_eps)(d2 - a^2) phi - (d2 V) phi = h,   phi(0) = bc0
  Airy-type:     -eps d2 psi + (V - c_eps) psi = h,            psi(0) = 0
  modified OS:   -eps (d2 - a^2) d2 phi + (V - c_eps)(d2 - a^2) phi
                                        - (d2 V) phi = h

plus the auxiliary fourth-order problem with both Dirichlet conditions used
to seed the inhomogeneous construction.  Energy identities are evaluated on
every accepted solve and attached as diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (BandedOperator, HalfLineGrid, SingularOperatorError,
                   diff_matrix, make_grid, one_sided_weights)
from .params import SpectralParams


@dataclass
class ModeSolution:
    """A solved mode with derivatives, residuals, and diagnostic scalars."""

    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    grid: HalfLineGrid
    residual: float
    boundary_slope: complex
    norms: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def h1_alpha_norm(self):
        """|| d phi || + alpha || phi || with alpha from the solve."""
        return self.norms["dphi"] + self.norms["alpha_phi"]


class ModeWorkspace:
    """Grid operators and profile fields shared by every solve at fixed
    (profile, nu, grid); factorizations cached per operator/parameter key."""

    def __init__(self, profile, nu, grid: HalfLineGrid):
        self.profile = profile
        self.nu = float(nu)
        self.grid = grid
        Y = grid.nodes
        self.V = np.asarray(profile.V(Y, nu, 0), dtype=float)
        self.dV = np.asarray(profile.V(Y, nu, 1), dtype=float)
        self.d2V = np.asarray(profile.V(Y, nu, 2), dtype=float)
        self.D1 = diff_matrix(grid, 1)
        self.D2 = diff_matrix(grid, 2)
        self.D4 = diff_matrix(grid, 4)
        self.dV_max = float(np.max(np.abs(self.dV)))
        self._lu_cache = {}

    # -- caching ------------------------------------------------------------
    def _cached_lu(self, key, build):
        if key not in self._lu_cache:
            if len(self._lu_cache) > 384:
                self._lu_cache.clear()
            self._lu_cache[key] = build().factor()
        return self._lu_cache[key]

    def critical_layer_guard(self, sp: SpectralParams, strict=True):
        """Refuse solves whose critical layer would span fewer than ~3 cells.

        Only active when Re c actually crosses the range of V; parameters far
        from the critical strip are harmless however small Im c_eps is.
        """
        im = sp.im_c_eps if strict else abs(sp.im_c_eps)
        rc = sp.c_eps.real
        lo, hi = float(np.min(self.V)), float(np.max(self.V))
        margin = 3.0 * self.grid.min_spacing * max(self.dV_max, 1e-30)
        in_range = (lo - im) <= rc <= (hi + im)
        if strict and sp.im_c_eps <= 0:
            raise SingularOperatorError("solve requires Im c_eps > 0")
        if in_range and im < margin:
            raise SingularOperatorError(
                f"critical layer unresolved: Im c_eps = {im:.3e} < {margin:.3e}")

    # -- operator assembly ----------------------------------------------------
    def rayleigh_op(self, sp: SpectralParams) -> BandedOperator:
        a2 = sp.alpha**2
        op = (self.D2 + (-a2)).lmul_diag(self.V - sp.c_eps) - \
            BandedOperator.identity(self.grid.n).lmul_diag(self.d2V.astype(complex))
        op.set_row(0, np.array([0]), np.array([1.0]))
        cols, w = one_sided_weights(self.grid, self.grid.n - 1, 1, 7)
        vals = w.astype(complex)
        vals[np.argmax(cols == self.grid.n - 1)] += sp.alpha
        op.set_row(self.grid.n - 1, cols, vals)
        return op

    def airy_op(self, sp: SpectralParams) -> BandedOperator:
        # right boundary pinned to the outer value psi = h/(V - c_eps); the
        # fast component has decayed by Y_max for every admissible parameter
        op = self.D2 * (-sp.eps) + \
            BandedOperator.identity(self.grid.n).lmul_diag(self.V - sp.c_eps)
        op.set_row(0, np.array([0]), np.array([1.0]))
        op.set_row(self.grid.n - 1, np.array([self.grid.n - 1]), np.array([1.0]))
        return op

    def mos_op(self, sp: SpectralParams, both_dirichlet=True) -> BandedOperator:
        a2 = sp.alpha**2
        op = (self.D4 - self.D2 * a2) * (-sp.eps) \
            + (self.D2 + (-a2)).lmul_diag(self.V - sp.c_eps) \
            - BandedOperator.identity(self.grid.n).lmul_diag(self.d2V.astype(complex))
        self._apply_fourth_order_bc(op, sp, both_dirichlet)
        return op

    def phi0_op(self, sp: SpectralParams) -> BandedOperator:
        """-eps (d2 - a^2) d2 + d/dY((V - c_eps) d/dY) - sqrt(nu) dUE dY
        - (V - c_eps) a^2 - d2V, with both Dirichlet conditions at Y = 0."""
        a2 = sp.alpha**2
        n = self.grid.n
        root = np.sqrt(self.nu)
        dUE = self.profile.uE(root * self.grid.nodes, 1)
        op = (self.D4 - self.D2 * a2) * (-sp.eps) \
            + self.D1.matmul(self.D1.lmul_diag(self.V - sp.c_eps)) \
            - self.D1.lmul_diag(root * dUE + 0j) \
            - BandedOperator.identity(n).lmul_diag(a2 * (self.V - sp.c_eps)) \
            - BandedOperator.identity(n).lmul_diag(self.d2V.astype(complex))
        self._apply_fourth_order_bc(op, sp, both_dirichlet=True)
        return op

    def _apply_fourth_order_bc(self, op, sp, both_dirichlet):
        # far field: phi' + a phi = 0 imposed at the last two nodes; this
        # encodes the slow e^{-alpha Y} tail exactly and keeps the discrete
        # pencil free of spurious growing boundary modes on stretched grids
        g, n = self.grid, self.grid.n
        op.set_row(0, np.array([0]), np.array([1.0]))
        if both_dirichlet:
            cols, w = one_sided_weights(g, 0, 1, 7)
            op.set_row(1, cols, w.astype(complex))
        for r in (n - 1, n - 2):
            cols, w1 = one_sided_weights(g, r, 1, 7)
            vals = w1.astype(complex)
            vals[np.argmax(cols == r)] += sp.alpha
            op.set_row(r, cols, vals)

    def l2(self, f):
        return self.grid.norm(f)

    def inner(self, f, g):
        return self.grid.inner(f, g)


def _interior_residual(op, x, rhs, grid, bc_rows):
    r = op.apply(x) - rhs
    mask = np.ones(grid.n, dtype=bool)
    mask[list(bc_rows)] = False
    num = float(np.sqrt(np.sum(grid.weights[mask] * np.abs(r[mask]) ** 2)))
    den = float(np.sqrt(np.sum(grid.weights[mask] * np.abs(rhs[mask]) ** 2)))
    return num / den if den > 0 else num


def _package(ws, sp, x, residual, extra=None):
    dphi = ws.D1.apply(x)
    d2phi = ws.D2.apply(x)
    norms = {
        "dphi": ws.l2(dphi),
        "alpha_phi": sp.alpha * ws.l2(x),
        "lap": ws.l2(d2phi - sp.alpha**2 * x),
        "phi": ws.l2(x),
    }
    return ModeSolution(phi=x, dphi=dphi, d2phi=d2phi, grid=ws.grid,
                        residual=residual, boundary_slope=complex(dphi[0]),
                        norms=norms, diagnostics=dict(extra or {}))


def rayleigh_identities(ws, sp, phi, h):
    """Residuals of the two global identities obtained from Rayleigh's trick,
    normalized by the largest participating term.

    On the truncated domain the real identity keeps the integration-by-parts
    boundary term Re[dphi conj(phi)] at both ends (it decays like
    e^(-2 alpha Y_max)); the imaginary identity has none because the far-field
    Robin coefficient is real.
    """
    w = ws.grid.weights
    Vc = ws.V - sp.c_eps
    dphi = ws.D1.apply(phi)
    t_grad = float(np.sum(w * (np.abs(dphi) ** 2 + sp.alpha**2 * np.abs(phi) ** 2)))
    t_crit = float(np.sum(w * (ws.V - sp.c_eps.real) * ws.d2V * np.abs(phi) ** 2
                          / np.abs(Vc) ** 2))
    rhs = np.sum(w * h * np.conj(phi) / Vc)
    t_bt = -float((dphi[-1] * np.conj(phi[-1]) - dphi[0] * np.conj(phi[0])).real)
    s1 = max(abs(t_grad), abs(t_crit), abs(rhs.real), 1e-300)
    id1 = abs(t_grad + t_crit + rhs.real + t_bt) / s1
    t_im = sp.im_c_eps * float(np.sum(w * ws.d2V * np.abs(phi) ** 2 / np.abs(Vc) ** 2))
    s2 = max(abs(t_im), abs(rhs.imag), 1e-300)
    id2 = abs(t_im + rhs.imag) / s2
    return {"identity_real_residual": id1, "identity_imag_residual": id2,
            "identity_scales": (s1, s2)}


def solve_rayleigh(p, sp: SpectralParams, h, bc0=0.0, grid=None, ws=None) -> ModeSolution:
    """Rayleigh problem with Dirichlet value bc0 at Y = 0 and slow decay."""
    ws = ws or ModeWorkspace(p, sp.nu, grid or make_grid(769, p.y_ref))
    ws.critical_layer_guard(sp)
    key = ("ray", complex(sp.c_eps), round(sp.alpha, 14))
    lu = ws._cached_lu(key, lambda: ws.rayleigh_op(sp))
    rhs = np.asarray(h, dtype=complex).copy()
    rhs[0] = bc0
    rhs[-1] = 0.0
    x = lu.solve(rhs)
    res = _interior_residual(ws.rayleigh_op(sp), x, rhs, ws.grid, (0, ws.grid.n - 1))
    sol = _package(ws, sp, x, res)
    sol.diagnostics.update(rayleigh_identities(ws, sp, x, np.asarray(h, complex)))
    return sol


def solve_airy_eq(p, sp: SpectralParams, h, grid=None, ws=None) -> ModeSolution:
    """Airy-type problem -eps d2 psi + (V - c_eps) psi = h, psi(0) = 0."""
    ws = ws or ModeWorkspace(p, sp.nu, grid or make_grid(769, p.y_ref))
    ws.critical_layer_guard(sp)
    key = ("airy", complex(sp.c_eps))
    lu = ws._cached_lu(key, lambda: ws.airy_op(sp))
    rhs = np.asarray(h, dtype=complex).copy()
    rhs[0] = 0.0
    rhs[-1] = rhs[-1] / (ws.V[-1] - sp.c_eps)
    x = lu.solve(rhs)
    res = _interior_residual(ws.airy_op(sp), x, rhs, ws.grid, (0, ws.grid.n - 1))
    sol = _package(ws, sp, x, res)
    # energy identity: (1/n)||d psi||^2 + Im(c_eps) ||psi||^2 + Im<h, psi> = 0
    w = ws.grid.weights
    t1 = float(np.sum(w * np.abs(sol.dphi) ** 2)) / sp.n
    t2 = sp.im_c_eps * float(np.sum(w * np.abs(x) ** 2))
    t3 = float(np.sum(w * np.asarray(h, complex) * np.conj(x)).imag)
    scale = max(t1, t2, abs(t3), 1e-300)
    sol.diagnostics["energy_identity_residual"] = abs(t1 + t2 + t3) / scale
    sol.diagnostics["linf_bound_ratio"] = (ws.l2(x) * sp.im_c_eps /
                                           max(ws.l2(np.asarray(h, complex)), 1e-300))
    return sol


def mos_apply(p, sp: SpectralParams, phi, grid=None, ws=None):
    """Term-wise application of the modified fourth-order operator.

    Kept independent of the assembled solve matrices so it can serve as the
    residual oracle for every downstream construction.
    """
    ws = ws or ModeWorkspace(p, sp.nu, grid or make_grid(769, p.y_ref))
    a2 = sp.alpha**2
    phi = np.asarray(phi, dtype=complex)
    d2 = ws.D2.apply(phi)
    d4 = ws.D4.apply(phi)
    return (-sp.eps) * (d4 - a2 * d2) + (ws.V - sp.c_eps) * (d2 - a2 * phi) \
        - ws.d2V * phi


def os_apply_unmodified(p, sp, phi, ws):
    """The original fourth-order form with (V - c) and (d2 - a^2)^2."""
    a2 = sp.alpha**2
    phi = np.asarray(phi, dtype=complex)
    d2 = ws.D2.apply(phi)
    d4 = ws.D4.apply(phi)
    lap = d2 - a2 * phi
    bilap = d4 - 2.0 * a2 * d2 + a2**2 * phi
    return -sp.eps * bilap + (ws.V - sp.c) * lap - ws.d2V * phi


def mos_residual(p, sp, phi, h, ws, n_skip=3):
    """Relative residual || mOS(phi) - h || / scale on interior nodes."""
    r = mos_apply(p, sp, phi, ws=ws) - np.asarray(h, complex)
    g = ws.grid
    mask = np.zeros(g.n, dtype=bool)
    mask[n_skip:-n_skip] = True
    num = float(np.sqrt(np.sum(g.weights[mask] * np.abs(r[mask]) ** 2)))
    hn = float(np.sqrt(np.sum(g.weights[mask] * np.abs(np.asarray(h, complex)[mask]) ** 2)))
    if hn <= 0:
        phi = np.asarray(phi, complex)
        hn = max(np.abs(sp.eps) * ws.l2(ws.D4.apply(phi)),
                 ws.l2((ws.V - sp.c_eps) * ws.D2.apply(phi)), 1e-300)
    return num / hn


def forcing_to_h(ws, sp, f):
    """h = -f2 + (1/(i alpha)) dY f1 for a forcing pair f = (f1, f2)."""
    f1, f2 = (np.asarray(c, dtype=complex) for c in f)
    return -f2 + ws.D1.apply(f1) / (1j * sp.alpha)


def forcing_norm(ws, f):
    f1, f2 = (np.asarray(c, dtype=complex) for c in f)
    return float(np.sqrt(ws.l2(f1) ** 2 + ws.l2(f2) ** 2))


def phi_to_velocity(ws, sp, phi):
    """Mode velocity (v1, v2) = (dY phi, -i alpha phi); identically
    divergence-free: i alpha v1 + dY v2 = 0 holds exactly for any phi."""
    phi = np.asarray(phi, complex)
    return ws.D1.apply(phi), -1j * sp.alpha * phi


def velocity_to_phi(ws, sp, f, lu_cache_key="poisson"):
    """Stream function of a mode velocity pair: (alpha^2 - d2) phi = vorticity
    = i alpha f2 - dY f1, with phi(0) = 0 and slow far-field decay."""
    f1, f2 = (np.asarray(c, complex) for c in f)
    vort = 1j * sp.alpha * f2 - ws.D1.apply(f1)
    key = (lu_cache_key, round(sp.alpha, 14))

    def build():
        op = ws.D2 * (-1.0) + sp.alpha**2
        op.set_row(0, np.array([0]), np.array([1.0]))
        cols, w = one_sided_weights(ws.grid, ws.grid.n - 1, 1, 7)
        vals = w.astype(complex)
        vals[np.argmax(cols == ws.grid.n - 1)] += sp.alpha
        op.set_row(ws.grid.n - 1, cols, vals)
        return op
    lu = ws._cached_lu(key, build)
    rhs = vort.copy()
    rhs[0] = 0.0
    rhs[-1] = 0.0
    return lu.solve(rhs)


def velocity_norm(ws, sp, phi):
    """|| v || = (||dY phi||^2 + alpha^2 ||phi||^2)^(1/2)."""
    phi = np.asarray(phi, complex)
    return float(np.sqrt(ws.l2(ws.D1.apply(phi)) ** 2 + sp.alpha**2 * ws.l2(phi) ** 2))


def solve_phi0(p, sp: SpectralParams, f, grid=None, ws=None) -> ModeSolution:
    """Seed problem for the inhomogeneous construction: both Dirichlet
    conditions at Y = 0, forcing pair f = (f1, f2)."""
    ws = ws or ModeWorkspace(p, sp.nu, grid or make_grid(769, p.y_ref))
    ws.critical_layer_guard(sp)
    h = forcing_to_h(ws, sp, f)
    key = ("phi0", complex(sp.c_eps), round(sp.alpha, 14))
    lu = ws._cached_lu(key, lambda: ws.phi0_op(sp))
    rhs = h.copy()
    rhs[[0, 1]] = 0.0
    rhs[[-2, -1]] = 0.0
    x = lu.solve(rhs)
    res = _interior_residual(ws.phi0_op(sp), x, rhs, ws.grid, (0, 1, ws.grid.n - 2, ws.grid.n - 1))
    sol = _package(ws, sp, x, res)
    # energy identity of the seed problem
    w = ws.grid.weights
    root = np.sqrt(sp.nu)
    dUE = p.uE(root * ws.grid.nodes, 1)
    t1 = (ws.l2(sol.d2phi) ** 2 + sp.alpha**2 * ws.l2(sol.dphi) ** 2) / sp.n
    t2 = sp.im_c_eps * (ws.l2(sol.dphi) ** 2 + sp.alpha**2 * ws.l2(x) ** 2)
    t3 = -root * float(np.sum(w * dUE * sol.dphi * np.conj(x)).imag)
    t4 = -float(np.sum(w * h * np.conj(x)).imag)
    scale = max(abs(t1), abs(t2), abs(t3), abs(t4), 1e-300)
    sol.diagnostics["energy_identity_residual"] = abs(t1 + t2 + t3 + t4) / scale
    fn = forcing_norm(ws, f)
    if fn > 0:
        sol.diagnostics["bound_constant"] = sol.h1_alpha_norm * sp.alpha * sp.im_c_eps / fn
    return sol
