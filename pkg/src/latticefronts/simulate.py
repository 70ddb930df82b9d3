"""Direct simulation of the bistable lattice equation on a windowed sublattice.

States live on the rational-direction sublattice in (n, l) coordinates: rows
are transverse indices l on a skew-periodic window of period P * sigma_star^2,
columns are the admissible longitudinal sites n = b(l) + col * sigma_star^2.
The four-point stencil connects (n, l) to (n + tau_nu, l + sigma_nu), which
in this storage is a row roll plus a small per-row column shift; sites beyond
the longitudinal window are clamped to the rest states 0 (left) and 1 (right).

On top of the raw time stepping the module provides the interface phase
gamma_l(t) (bracket the 1/2-crossing along each row, invert the stored wave
profile, interpolate), the gamma-versus-theta tracking and front-stability
experiments, and the super/sub-solution residual machinery with its z/Z
correction schedules.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    BlowUp,
    MultipleBrackets,
    NoBracket,
    ScheduleInvalid,
    WindowTooNarrow,
)
from .geometry import base_longitudinal_offset
from .phase import KernelSpec, PhaseTrajectory, _rk4_step, integrate_phase, theta_rhs


@dataclass(eq=False)
class LatticeWindow:
    """Index machinery for a skew-periodic sublattice window."""

    dir: object
    P: int           # transverse periods of length sigma_star_sq
    n_lo: float      # requested longitudinal window [n_lo, n_hi]
    n_hi: float

    def __post_init__(self):
        d = self.dir
        s2 = d.sigma_star_sq
        self.rows = self.P * s2
        n0 = np.array([base_longitudinal_offset(d, l) for l in range(self.rows)])
        base = n0 + np.ceil((self.n_lo - n0) / s2).astype(int) * s2
        self.base = base
        self.cols = int(math.floor((self.n_hi - base.max()) / s2)) + 1
        if self.cols < 4:
            raise WindowTooNarrow("longitudinal window shorter than four stencil columns")
        # per-shift gather tables: row (l + sigma_nu) mod rows, column + shift
        self.row_idx = []
        self.col_shift = []
        for tau, sig in zip(d.tau, d.sigma):
            rows_to = (np.arange(self.rows) + sig) % self.rows
            shift = (base + tau - base[rows_to]) // s2
            assert np.all(base[rows_to] + shift * s2 == base + tau)
            self.row_idx.append(rows_to)
            self.col_shift.append(shift)

    @cached_property
    def n_matrix(self):
        return self.base[:, None] + self.dir.sigma_star_sq * np.arange(self.cols)[None, :]

    def gather(self, u, nu):
        """u at (n + tau_nu, l + sigma_nu) with rest-state clamping."""
        cols = np.arange(self.cols)[None, :] + self.col_shift[nu][:, None]
        v = u[self.row_idx[nu][:, None], np.clip(cols, 0, self.cols - 1)]
        return np.where(cols < 0, 0.0, np.where(cols >= self.cols, 1.0, v))

    def laplacian(self, u):
        acc = -4.0 * u
        for nu in range(4):
            acc = acc + self.gather(u, nu)
        return acc


@dataclass(eq=False)
class LatticeState:
    window: LatticeWindow
    u: np.ndarray
    t: float = 0.0

    def copy(self):
        return LatticeState(window=self.window, u=self.u.copy(), t=self.t)


@dataclass(eq=False)
class SimTrajectory:
    window: LatticeWindow
    times: np.ndarray
    fields: np.ndarray  # (n_times, rows, cols)

    def state(self, i):
        return LatticeState(window=self.window, u=self.fields[i], t=float(self.times[i]))


def _profile_tail_width(wave, tol=1e-8):
    xi, phi = wave.xi, wave.phi
    left = xi[np.searchsorted(phi, tol)]
    right = xi[np.searchsorted(phi, 1.0 - tol)]
    return max(-left, right)


def build_initial(wave, kind, P=1, mu=0.0, kappa=None, amplitude=0.5,
                  v0=None, t_final=0.0, custom=None, pad_extra=0.0):
    """Front-like initial state u0 = Phi(n - kappa_l) on a sized window.

    kinds: 'planar' (kappa = mu), 'rippled' (explicit kappa per row or a
    square wave of the given amplitude over the full window), then
    'rippled_plus_localized' adds the compact perturbation v0 (array shaped
    like the window or a callable of (n, l)); 'custom' wraps a given field.
    The window covers the profile tails to 1e-8 plus 30 * sigma_inf margin
    on each side, widened by the expected drift |c| * t_final.
    """
    d = wave.dir
    s2 = d.sigma_star_sq
    rows = P * s2
    if kind == "planar":
        kap = np.full(rows, float(mu))
    elif kind in ("rippled", "rippled_plus_localized"):
        if kappa is None:
            kap = amplitude * np.where(np.arange(rows) < rows / 2, 1.0, -1.0)
        else:
            kap = np.asarray(kappa, dtype=float)
            if len(kap) != rows:
                raise ValueError(f"kappa must have length P*sigma_star_sq = {rows}")
    elif kind == "custom":
        if custom is None:
            raise ValueError("custom initial state requires the 'custom' field")
    else:
        raise ValueError(f"unknown initial-condition kind {kind!r}")

    tail = _profile_tail_width(wave)
    pad = tail + 30.0 * d.sigma_inf + pad_extra
    drift = wave.c * t_final
    if kind == "custom":
        n_lo, n_hi = custom["n_lo"], custom["n_hi"]
    else:
        n_lo = float(np.min(kap)) - pad + min(drift, 0.0)
        n_hi = float(np.max(kap)) + pad + max(drift, 0.0)
    window = LatticeWindow(dir=d, P=P, n_lo=n_lo, n_hi=n_hi)

    if kind == "custom":
        u = np.array(custom["u"], dtype=float)
    else:
        u = wave.phi_at(window.n_matrix - kap[:, None])
        if kind == "rippled_plus_localized" and v0 is not None:
            if callable(v0):
                ls = np.arange(rows)[:, None]
                u = u + v0(window.n_matrix, ls)
            else:
                u = u + np.asarray(v0, dtype=float)
    state = LatticeState(window=window, u=u, t=0.0)
    far = max(np.max(np.abs(u[:, 0])), np.max(np.abs(1.0 - u[:, -1])))
    if far > 1e-8:
        raise WindowTooNarrow(f"far-field deviation {far:.2e} exceeds 1e-8 at the window edge")
    return state


def evolve(state, T, dt, nonlin, stride=None, guard=(-0.5, 1.5)):
    """RK4 time stepping of du/dt = Lap(u) + g(u); snapshots every ``stride`` steps."""
    if dt > 0.2 + 1e-12:
        raise ValueError("dt above the explicit-stability heuristic 0.2")
    w = state.window
    rhs = lambda u: w.laplacian(u) + nonlin.g(u)
    n_steps = int(round(T / dt))
    if stride is None:
        stride = n_steps
    u = state.u.copy()
    times = [state.t]
    fields = [u.copy()]
    for i in range(1, n_steps + 1):
        u = _rk4_step(rhs, u, dt)
        if not (u.min() > guard[0] and u.max() < guard[1]):
            raise BlowUp(f"field left {guard} at t = {state.t + i * dt:.3f}")
        if i % stride == 0 or i == n_steps:
            times.append(state.t + i * dt)
            fields.append(u.copy())
    return SimTrajectory(window=w, times=np.array(times), fields=np.array(fields))


@dataclass(eq=False)
class PhaseTrace:
    t: float
    n_star: np.ndarray
    theta_minus: np.ndarray
    theta_plus: np.ndarray
    vartheta: np.ndarray
    gamma: np.ndarray


def extract_phase(state, wave):
    """Interface phase gamma_l = n_star + vartheta from the 1/2-crossing.

    For each row the unique column with 0 < u <= 1/2 < u(next) brackets the
    crossing; the stored profile is inverted at both values and the linear
    interpolation of the inverted phases fixes gamma so that an exact wave
    Phi(n - c t + mu) yields gamma = c t - mu.
    """
    w = state.window
    s2 = w.dir.sigma_star_sq
    u = state.u
    left = u[:, :-1]
    right = u[:, 1:]
    bracket = (left > 0.0) & (left <= 0.5) & (right > 0.5)
    counts = bracket.sum(axis=1)
    if np.any(counts == 0):
        rows = np.where(counts == 0)[0]
        raise NoBracket(f"no 1/2-crossing on rows {rows[:5].tolist()} at t = {state.t}")
    if np.any(counts > 1):
        rows = np.where(counts > 1)[0]
        raise MultipleBrackets(
            f"multiple crossings on rows {rows[:5].tolist()} at t = {state.t}"
        )
    col = np.argmax(bracket, axis=1)
    ridx = np.arange(w.rows)
    u_minus = u[ridx, col]
    u_plus = u[ridx, col + 1]
    th_minus = wave.phi_inverse(u_minus)
    th_plus = wave.phi_inverse(u_plus)
    vartheta = -s2 * th_minus / (th_plus - th_minus)
    n_star = w.n_matrix[ridx, col]
    return PhaseTrace(
        t=state.t, n_star=n_star, theta_minus=th_minus, theta_plus=th_plus,
        vartheta=vartheta, gamma=n_star + vartheta,
    )


def planar_speed_oracle(direction, nonlin, T=80.0, dt=0.05, half_width=None):
    """Level-set speed from a direct longitudinally-reduced simulation.

    Transversely homogeneous states obey the one-dimensional system
    dU_n/dt = sum_nu U_{n + tau_nu} - 4 U_n + g(U_n) on all of Z.  The
    initial condition is a plain sigmoid (independent of the Newton-solved
    profile), and the fitted drift of the interpolated 1/2-crossing over the
    second half of the run estimates the wave speed.
    """
    drive = nonlin.scale * (1.0 - 2.0 * nonlin.a)
    if half_width is None:
        half_width = int(20 * direction.sigma_inf + 30 + abs(drive) * T)
    n = np.arange(-half_width, half_width + 1)
    with np.errstate(over="ignore"):
        u = 1.0 / (1.0 + np.exp(-np.clip(n, -500, 500)))

    taus = direction.tau

    def rhs(v):
        acc = -4.0 * v + nonlin.g(v)
        for tau in taus:
            if tau >= 0:
                shifted = np.concatenate([v[tau:], np.ones(tau)])
            else:
                shifted = np.concatenate([np.zeros(-tau), v[:tau]])
            acc = acc + shifted
        return acc

    n_steps = int(round(T / dt))
    times, pos = [], []
    for i in range(1, n_steps + 1):
        u = _rk4_step(rhs, u, dt)
        if i % 10 == 0:
            j = int(np.argmax(u > 0.5))
            x = n[j - 1] + (0.5 - u[j - 1]) / (u[j] - u[j - 1])
            times.append(i * dt)
            pos.append(x)
    times = np.array(times)
    pos = np.array(pos)
    sel = times >= 0.5 * T
    slope = np.polyfit(times[sel], pos[sel], 1)[0]
    return float(slope)


def gamma_series(traj, wave):
    """Phase traces for every snapshot of a trajectory."""
    return [extract_phase(traj.state(i), wave) for i in range(len(traj.times))]


def track_vs_theta(traj, tau, kernel, wave, inputs=None, dt_theta=None):
    """Sup-distance between gamma(t) and the phase flow started at gamma(tau).

    theta solves the ch model with theta(0) = gamma(tau); returns the time
    series e(t) = sup_l |gamma_l(t) - theta_l(t - tau)| for snapshot times
    t >= tau.
    """
    times = traj.times
    i0 = int(np.argmin(np.abs(times - tau)))
    if abs(times[i0] - tau) > 1e-9:
        raise ValueError("tau must coincide with a snapshot time")
    gamma0 = extract_phase(traj.state(i0), wave).gamma
    from .phase import dt_max

    snap_dt = float(times[i0 + 1] - times[i0]) if i0 + 1 < len(times) else 0.1
    if dt_theta is None:
        dt_theta = snap_dt
        while dt_theta > dt_max(kernel):
            dt_theta *= 0.5
    horizon = float(times[-1] - times[i0])
    theta_traj = integrate_phase("ch", kernel, gamma0, horizon, dt_theta,
                                 inputs=inputs, stride=max(1, int(round(snap_dt / dt_theta))))
    errs, ts = [], []
    for i in range(i0, len(times)):
        gam = extract_phase(traj.state(i), wave).gamma
        th = theta_traj.at(float(times[i] - times[i0]))
        errs.append(float(np.max(np.abs(gam - th))))
        ts.append(float(times[i]))
    return np.array(ts), np.array(errs)


def stability_experiment(traj, wave):
    """Asymptotic phase estimate and final profile deviation.

    mu_hat is the mean of gamma_l(T) - c T at the final snapshot; the
    returned deviation is sup |u - Phi(n - c T - mu_hat)| over the window.
    """
    final = traj.state(len(traj.times) - 1)
    tr = extract_phase(final, wave)
    mu_hat = float(np.mean(tr.gamma - wave.c * final.t))
    ref = wave.phi_at(final.window.n_matrix - wave.c * final.t - mu_hat)
    dev = float(np.max(np.abs(final.u - ref)))
    return mu_hat, dev


# -- super/sub-solutions -------------------------------------------------------


@dataclass(eq=False)
class SuperSubSchedule:
    """Correction schedules z(t), Z(t) and their defining constants.

    K(t) = M_const * min(delta_eps, t^{-3/2}), z = 1.5 K / m, and
    Z(t) = C_eps * integral of z.  All constants are configurable; the
    defaults size delta_eps so that Z stays below eps over the horizon.
    """

    eps: float
    m: float
    M_const: float
    C_eps: float
    delta_eps: float
    nu_eps: float

    @property
    def t0(self):
        return self.delta_eps ** (-2.0 / 3.0)

    def z(self, t):
        k = self.M_const * min(self.delta_eps, t ** (-1.5) if t > 0 else np.inf)
        return 1.5 * k / self.m

    def zdot(self, t):
        if t <= self.t0:
            return 0.0
        return 1.5 * self.M_const * (-1.5) * t ** (-2.5) / self.m

    def Z(self, t):
        c = 1.5 * self.C_eps * self.M_const / self.m
        if t <= self.t0:
            return c * self.delta_eps * t
        return c * (self.delta_eps * self.t0 + 2.0 * (self.t0 ** -0.5 - t ** -0.5))


def make_schedule(wave, aux, eps=0.1, M_const=10.0, horizon=40.0, delta_eps=None):
    """Schedule constants following the correction-function recipe.

    m is half the decay rate of g' near the rest states (capped at 1/2 and
    required to exceed 3*eps); C_eps dominates the interface region where
    -g' turns negative, scaled by sup|g'| rather than the global residual
    constant, which keeps desk-scale schedules non-degenerate.
    """
    nl = wave.nonlin
    s_edge = np.concatenate([np.linspace(-eps, eps, 201), np.linspace(1 - eps, 1 + eps, 201)])
    m = min(0.5, float(np.min(-nl.dg(s_edge))) / 2.0)
    if m <= 3.0 * eps:
        raise ValueError(f"m = {m:.3f} must exceed 3*eps = {3 * eps:.3f}; reduce eps")
    g1 = float(np.max(np.abs(nl.dg(np.linspace(-eps, 1 + eps, 801)))))
    mid = (wave.phi >= eps) & (wave.phi <= 1.0 - eps)
    min_dphi = float(np.min(wave.dphi[mid]))
    C_eps = max(1.0, (2.0 * m + g1) / min_dphi)
    if delta_eps is None:
        delta_eps = eps * m / (1.5 * M_const * C_eps * horizon) * 0.95
    nu_eps = M_const * delta_eps / (3.0 * m)
    return SuperSubSchedule(eps=eps, m=m, M_const=M_const, C_eps=C_eps,
                            delta_eps=delta_eps, nu_eps=nu_eps)


class AnsatzEvaluator:
    """Evaluates the modulated super/sub-solution ansatz on a window."""

    def __init__(self, wave, aux):
        self.wave = wave
        xi = wave.xi
        self.lo, self.hi = xi[0], xi[-1]
        self.p_d = [CubicSpline(xi, aux.p_d[nu]) for nu in range(4)]
        self.p_dd = [[CubicSpline(xi, aux.p_dd[nu][nup]) for nup in range(4)] for nu in range(4)]
        self.q_dd = [[CubicSpline(xi, aux.q_dd[nu][nup]) for nup in range(4)] for nu in range(4)]
        self.sigma = wave.dir.sigma

    def _eval(self, spline, x):
        out = spline(np.clip(x, self.lo, self.hi))
        return np.where((x < self.lo) | (x > self.hi), 0.0, out)

    def _phi(self, x):
        out = self.wave.phi_eval(np.clip(x, self.lo, self.hi))
        return np.where(x < self.lo, 0.0, np.where(x > self.hi, 1.0, out))

    def field(self, window, theta, shift, correction):
        """Ansatz field: Phi and the p/q corrections at n - theta_l + shift,
        plus the uniform offset ``correction`` (+z for super, -z for sub)."""
        rows = window.rows
        pi = {}
        for nu in range(4):
            s = self.sigma[nu]
            pi[nu] = np.roll(theta, -s) - theta
        xi = window.n_matrix - theta[:, None] + shift
        u = self._phi(xi)
        for nu in range(4):
            u = u + pi[nu][:, None] * self._eval(self.p_d[nu], xi)
        for nu in range(4):
            for nup in range(4):
                s_sum = self.sigma[nu] + self.sigma[nup]
                pi_dd = (np.roll(theta, -s_sum) - np.roll(theta, -self.sigma[nu])
                         - np.roll(theta, -self.sigma[nup]) + theta)
                u = u + pi_dd[:, None] * self._eval(self.p_dd[nu][nup], xi)
                u = u + (pi[nu] * pi[nup])[:, None] * self._eval(self.q_dd[nu][nup], xi)
        return u + correction


def _theta_stencil(kernel, theta_t, delta, inputs=None):
    """theta at offsets (-2, -1, 0, 1, 2) * delta from one phase snapshot."""
    fun = lambda y: theta_rhs("ch", kernel, y, inputs)
    out = {0: theta_t}
    for sgn in (1, -1):
        th = theta_t.copy()
        for j in (1, 2):
            th = _rk4_step(fun, th, sgn * delta)
            out[sgn * j] = th.copy()
    return out


def supersub_residual(wave, aux, theta_traj: PhaseTrajectory, schedule, sign,
                      sample_times=None, fd_delta=0.01, pad=None):
    """Residual J[u] = du/dt - Lap(u) - g(u) of the modulated ansatz.

    Assembles u(+/-) from the phase trajectory and the z/Z schedules, takes
    the time derivative by fourth-order differencing of the assembled field,
    and returns the extreme residual over all sampled sites and times (min
    for the super-solution, max for the sub-solution) together with the
    per-time series.
    """
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    kernel = theta_traj.kernel
    theta0 = theta_traj.values[0]
    delta0 = float(np.max(np.abs(np.roll(theta0, -1) - theta0)))
    norms = aux.sup_norms(wave.D)
    margin = (schedule.z(0.0) - delta0 * norms["p_d"] - 2.0 * delta0 * norms["p_dd"]
              - delta0**2 * norms["q_dd"])
    if not margin > schedule.nu_eps > 0.0:
        raise ScheduleInvalid(
            f"z(0) margin {margin:.3e} does not clear nu = {schedule.nu_eps:.3e}"
        )

    if sample_times is None:
        sample_times = theta_traj.times[:: max(1, len(theta_traj.times) // 20)]
    ev = AnsatzEvaluator(wave, aux)
    if pad is None:
        pad = min(wave.grid.L - 5.0, max(30.0, 10.0 * wave.dir.sigma_inf))
    th_min = float(theta_traj.values.min())
    th_max = float(theta_traj.values.max())
    window = LatticeWindow(dir=wave.dir, P=theta_traj.values.shape[1] // wave.dir.sigma_star_sq,
                           n_lo=th_min - pad, n_hi=th_max + pad)
    s = 1.0 if sign == "plus" else -1.0
    extremes = []
    for t in sample_times:
        t = float(t)
        th_t = theta_traj.at(t)
        stencil = _theta_stencil(kernel, th_t, fd_delta, theta_traj.inputs)
        fields = {}
        for j in (-2, -1, 0, 1, 2):
            tj = t + j * fd_delta
            fields[j] = ev.field(window, stencil[j], s * schedule.Z(tj), s * schedule.z(tj))
        dudt = (fields[-2] - 8 * fields[-1] + 8 * fields[1] - fields[2]) / (12 * fd_delta)
        u = fields[0]
        J = dudt - window.laplacian(u) - wave.nonlin.g(u)
        extremes.append(float(J.min() if sign == "plus" else J.max()))
    extremes = np.array(extremes)
    value = float(extremes.min() if sign == "plus" else extremes.max())
    return {"sign": sign, "times": np.asarray(sample_times, dtype=float),
            "series": extremes, "extreme": value, "window": window}


def supersub_ordering(wave, aux, theta_traj, schedule, nonlin, dt=0.05):
    """Evolve the ansatz core and check u(-) <= u <= u(+) at snapshot times."""
    ev = AnsatzEvaluator(wave, aux)
    kernel = theta_traj.kernel
    pad = min(wave.grid.L - 5.0, max(30.0, 10.0 * wave.dir.sigma_inf))
    window = LatticeWindow(dir=wave.dir, P=theta_traj.values.shape[1] // wave.dir.sigma_star_sq,
                           n_lo=float(theta_traj.values.min()) - pad,
                           n_hi=float(theta_traj.values.max()) + pad)
    u0 = ev.field(window, theta_traj.values[0], 0.0, 0.0)
    state = LatticeState(window=window, u=u0, t=0.0)
    T = float(theta_traj.times[-1])
    stride = max(1, int(round((theta_traj.times[1] - theta_traj.times[0]) / dt)))
    traj = evolve(state, T, dt, nonlin, stride=stride)
    gap_plus, gap_minus = [], []
    for i, t in enumerate(traj.times):
        th = theta_traj.at(float(t))
        u = traj.fields[i]
        u_plus = ev.field(window, th, schedule.Z(t), schedule.z(t))
        u_minus = ev.field(window, th, -schedule.Z(t), -schedule.z(t))
        gap_plus.append(float(np.min(u_plus - u)))
        gap_minus.append(float(np.min(u - u_minus)))
    return {"times": traj.times, "min_upper_gap": min(gap_plus),
            "min_lower_gap": min(gap_minus)}
