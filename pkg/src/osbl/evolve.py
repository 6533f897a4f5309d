"""Direct time integration of the rescaled linearized equations per Fourier
mode (stream-function form), a truncated nonlinear stepper with mode
convolution, and the Gevrey-norm bookkeeping.

This module is the cross-validation oracle for the contour-integral
machinery: it shares the spatial substrate but marches in time with a
Crank-Nicolson treatment of the stiff linear operator and explicit
(Adams-Bashforth) nonlinear terms.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import make_grid, one_sided_weights
from .oscore import ModeWorkspace, phi_to_velocity, velocity_norm
from .params import SpectralParams


def theta_gamma(n, gamma):
    """theta_{gamma, n} = |n|^gamma (1 + (1 - gamma) log(1 + |n|))."""
    n = abs(n)
    return n**gamma * (1.0 + (1.0 - gamma) * math.log1p(n))


def theta_superadditive(gamma, n_max=64):
    """Exhaustive check of theta_j + theta_(n-j) >= theta_n on 1 <= |j|,|n| <= n_max."""
    th = {m: theta_gamma(m, gamma) for m in range(0, 2 * n_max + 1)}
    worst = math.inf
    for n in range(1, n_max + 1):
        for j in range(-n_max, n_max + 1):
            if j == 0 or abs(n - j) == 0 or abs(n - j) > 2 * n_max:
                continue
            worst = min(worst, th[abs(j)] + th[abs(n - j)] - th[n])
    return worst


@dataclass
class GevreyNorm:
    """Weights of the mode-summed norm sup_n (1+|n|^d) e^{K theta} ||P_n f||."""

    d: float
    gamma: float
    K: float

    def theta(self, n):
        return theta_gamma(n, self.gamma)

    @property
    def beta(self):
        return 2.0 * (1.0 - self.gamma) / self.gamma

    def shrink(self, k0, t):
        """Radius schedule K(t) = K - 2 K0 t."""
        return GevreyNorm(self.d, self.gamma, self.K - 2.0 * k0 * t)


@dataclass
class ModeState:
    """Stream-function modes phi_n (n >= 1), the mean-flow stream phi_0
    (v_{1,0} = dY phi_0), and the clock in rescaled time."""

    phis: np.ndarray            # (n_max + 1, N) complex; row 0 is the mean mode
    tau: float
    nu: float
    n_max: int

    def copy(self):
        return ModeState(self.phis.copy(), self.tau, self.nu, self.n_max)


def state_from_modes(ws, nu, n_max, seed_fields):
    """seed_fields: dict n -> phi_n array (n >= 1) and optionally 0 -> v_{1,0}."""
    phis = np.zeros((n_max + 1, ws.grid.n), dtype=complex)
    for n, f in seed_fields.items():
        if n == 0:
            # integrate the mean velocity into its stream function
            v = np.asarray(f, complex)
            phi0 = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1])
                                                    * np.diff(ws.grid.nodes))])
            phis[0] = phi0
        else:
            phis[n] = np.asarray(f, complex)
    return ModeState(phis=phis, tau=0.0, nu=nu, n_max=n_max)


class LinearStepper:
    """Crank-Nicolson step of one rescaled mode:
    d/dtau (d2 - a^2) phi = -i a [V (d2 - a^2) phi - (d2 V) phi]
                            + sqrt(nu) (d2 - a^2)^2 phi + i a h(tau)."""

    def __init__(self, p, sp: SpectralParams, ws: ModeWorkspace, dt):
        self.ws = ws
        self.sp = sp
        self.dt = dt
        self._build(p)

    def _build(self, p):
        from .grid import BandedOperator
        ws, sp = self.ws, self.sp
        a2 = sp.alpha**2
        lap = ws.D2 + (-a2)
        bilap = ws.D4 - ws.D2 * (2.0 * a2) + a2 * a2
        adv = lap.lmul_diag(ws.V.astype(complex)) \
            - BandedOperator.identity(ws.grid.n).lmul_diag(ws.d2V.astype(complex))
        self.F = adv * (-1j * sp.alpha) + bilap * math.sqrt(sp.nu)
        left = lap - self.F * (0.5 * self.dt)
        self.right = lap + self.F * (0.5 * self.dt)
        self._set_bc(left)
        self.left_lu = left.factor()

    def _set_bc(self, op):
        g = self.ws.grid
        n = g.n
        op.set_row(0, np.array([0]), np.array([1.0]))
        cols, w = one_sided_weights(g, 0, 1, 7)
        op.set_row(1, cols, w.astype(complex))
        for r in (n - 1, n - 2):  # phi' + alpha phi = 0: stable slow-tail rows
            cols, w1 = one_sided_weights(g, r, 1, 7)
            vals = w1.astype(complex)
            vals[np.argmax(cols == r)] += self.sp.alpha
            op.set_row(r, cols, vals)

    def step(self, phi, forcing=None):
        """One CN step; forcing is the explicit i*alpha*h term already summed
        (e.g. the nonlinear convolution), treated at the old time level."""
        rhs = self.right.apply(phi)
        if forcing is not None:
            rhs = rhs + self.dt * forcing
        rhs[[0, 1]] = 0.0
        rhs[[-2, -1]] = 0.0
        return self.left_lu.solve(rhs)


def step_linear(p, sp: SpectralParams, phi, dt, n_steps=1, ws=None,
                energy_log=None):
    """March a single mode by n_steps of Crank-Nicolson, returning the field.

    If energy_log is a list, per-step energy-balance diagnostics are appended:
    (d/dtau ||v||^2 + 2 sqrt(nu) ||grad v||^2) / (2 ||v||^2) <= advective bound.
    """
    ws = ws or ModeWorkspace(p, sp.nu, make_grid(513, p.y_ref))
    stepper = LinearStepper(p, sp, ws, dt)
    a2 = sp.alpha**2
    for _ in range(n_steps):
        new = stepper.step(phi)
        if energy_log is not None:
            e0, e1 = velocity_norm(ws, sp, phi) ** 2, velocity_norm(ws, sp, new) ** 2
            mid = 0.5 * (phi + new)
            grad2 = ws.l2(ws.D2.apply(mid) - a2 * mid) ** 2
            energy_log.append(((e1 - e0) / dt + 2.0 * math.sqrt(sp.nu) * grad2,
                               e0, e1, grad2))
        phi = new
    return phi


# ---------------------------------------------------------------------------
# nonlinear mode-coupled stepper
# ---------------------------------------------------------------------------

class NonlinearStepper:
    """IMEX march of modes 0..n_max with the mode convolution explicit.

    The linear part of each mode n >= 1 uses the Crank-Nicolson factorization
    above; the mean mode advances by CN of the heat operator driven by the
    mode-pair Reynolds stress.  The convolution is Galerkin-truncated to the
    active set (products landing above n_max are dropped; the active set is
    closed under conjugation through phi_{-n} = conj(phi_n)).
    """

    def __init__(self, p, nu, gamma, delta, n_max, ws: ModeWorkspace, dt):
        self.ws = ws
        self.nu = nu
        self.n_max = n_max
        self.dt = dt
        self.sps = {n: SpectralParams(n, nu, gamma, delta, 1j) for n in range(1, n_max + 1)}
        self.steppers = {n: LinearStepper(p, self.sps[n], ws, dt) for n in range(1, n_max + 1)}
        self._mean_lu = self._build_mean()
        self._prev_conv = None

    def _build_mean(self):
        ws = self.ws
        from .grid import BandedOperator
        op = BandedOperator.identity(ws.grid.n) - ws.D2 * (0.5 * self.dt * math.sqrt(self.nu))
        op.set_row(0, np.array([0]), np.array([1.0]))
        op.set_row(ws.grid.n - 1, np.array([ws.grid.n - 1]), np.array([1.0]))
        self._mean_right = BandedOperator.identity(ws.grid.n) + ws.D2 * (0.5 * self.dt * math.sqrt(self.nu))
        return op.factor()

    def _laps(self, state):
        ws = self.ws
        out = np.zeros_like(state.phis)
        for n in range(state.n_max + 1):
            a2 = (n * math.sqrt(self.nu)) ** 2
            out[n] = ws.D2.apply(state.phis[n]) - a2 * state.phis[n]
        return out

    def convolution(self, state):
        """N_n = -i sqrt(nu) sum_j [(n-j) dY phi_j lap phi_{n-j}
                                    - j phi_j dY lap phi_{n-j}],  0 <= n <= n_max,
        with phi_{-m} = conj(phi_m)."""
        ws = self.ws
        nm = state.n_max
        root = math.sqrt(self.nu)
        laps = self._laps(state)
        dphis = np.array([ws.D1.apply(state.phis[m]) for m in range(nm + 1)])
        dlaps = np.array([ws.D1.apply(laps[m]) for m in range(nm + 1)])

        def get(arr, m):
            return arr[m] if m >= 0 else np.conj(arr[-m])

        out = np.zeros_like(state.phis)
        for n in range(nm + 1):
            acc = np.zeros(ws.grid.n, dtype=complex)
            for j in range(-nm, nm + 1):
                m = n - j
                if abs(m) > nm:
                    continue
                acc += (m) * get(dphis, j) * get(laps, m) \
                    - j * get(state.phis, j) * get(dlaps, m)
            out[n] = -1j * root * acc
        return out

    def step(self, state: ModeState) -> ModeState:
        conv = self.convolution(state)
        if self._prev_conv is None:
            expl = conv
        else:
            expl = 1.5 * conv - 0.5 * self._prev_conv  # AB2
        self._prev_conv = conv
        new = state.copy()
        for n in range(1, state.n_max + 1):
            new.phis[n] = self.steppers[n].step(state.phis[n], forcing=expl[n])
        # mean mode: v = dY phi_0 advances by heat + Reynolds forcing; the
        # mode-0 row of the convolution is the vorticity forcing dY(stress),
        # integrate it once in Y to force the velocity equation
        v0 = self.ws.D1.apply(state.phis[0])
        f0 = expl[0]
        # f0 is -(curl force); velocity forcing F with dY F = f0 -> integrate
        nodes = self.ws.grid.nodes
        F0 = np.concatenate([[0.0 + 0j], np.cumsum(0.5 * (f0[1:] + f0[:-1]) * np.diff(nodes))])
        rhs = self._mean_right.apply(v0) + self.dt * F0
        rhs[0] = 0.0
        rhs[-1] = 0.0
        v0_new = self._mean_lu.solve(rhs)
        phi0_new = np.concatenate([[0.0 + 0j], np.cumsum(0.5 * (v0_new[1:] + v0_new[:-1])
                                                         * np.diff(nodes))])
        new.phis[0] = phi0_new
        new.tau = state.tau + self.dt
        norm0 = max(mode_l2_norms(self.ws, state)[1:].max(), 1e-300)
        if mode_l2_norms(self.ws, new)[1:].max() > 1e6 * norm0:
            raise RuntimeError("mode-norm blowup (> 1e6 x): aborting nonlinear march")
        return new


def mode_l2_norms(ws, state: ModeState):
    """Velocity L2 norm per mode (index 0 = mean mode)."""
    out = np.zeros(state.n_max + 1)
    root = math.sqrt(state.nu)
    for n in range(state.n_max + 1):
        a = n * root
        d = ws.D1.apply(state.phis[n])
        out[n] = math.sqrt(ws.l2(d) ** 2 + a**2 * ws.l2(state.phis[n]) ** 2)
    return out


def gevrey_norm(state_or_norms, gn: GevreyNorm, ws=None):
    """sup_n (1 + |n|^d) e^{K theta_{gamma, n}} ||P_n f||."""
    if isinstance(state_or_norms, ModeState):
        norms = mode_l2_norms(ws, state_or_norms)
    else:
        norms = np.asarray(state_or_norms, dtype=float)
    best = 0.0
    for n, v in enumerate(norms):
        w = (1.0 + n**gn.d) * math.exp(gn.K * gn.theta(n)) if n else 1.0
        best = max(best, w * v)
    return best


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CHECKPOINT_VERSION = 1


def grid_hash(grid):
    return hashlib.sha256(np.ascontiguousarray(grid.nodes).tobytes()).hexdigest()[:16]


def save_checkpoint(path, state: ModeState, grid):
    header = {
        "version": _CHECKPOINT_VERSION,
        "grid_hash": grid_hash(grid),
        "tau": state.tau,
        "nu": state.nu,
        "n_max": state.n_max,
    }
    with open(path, "wb") as fh:
        hdr = json.dumps(header).encode()
        fh.write(len(hdr).to_bytes(8, "little"))
        fh.write(hdr)
        buf = io.BytesIO()
        np.save(buf, state.phis)
        fh.write(buf.getvalue())


def load_checkpoint(path, grid):
    with open(path, "rb") as fh:
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode())
        if header["version"] != _CHECKPOINT_VERSION:
            raise ValueError("checkpoint version mismatch")
        if header["grid_hash"] != grid_hash(grid):
            raise ValueError("checkpoint grid does not match the current grid")
        phis = np.load(io.BytesIO(fh.read()))
    return ModeState(phis=phis, tau=header["tau"], nu=header["nu"],
                     n_max=header["n_max"])
