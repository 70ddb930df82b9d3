"""Traveling-wave solver for the bistable lattice equation in a rational direction.

The wave profile and speed satisfy a functional differential equation with
advanced and retarded shifts,

    -c Phi'(xi) = Phi(xi+sh) + Phi(xi+sv) + Phi(xi-sh) + Phi(xi-sv)
                  - 4 Phi(xi) + g(Phi(xi)),

posed on a truncated interval [-L, L] with Phi(-L)=0, Phi(L)=1 and the
phase normalization Phi(0) = 1/2 closing the system for the unknown speed.
First derivatives are discretized with fourth-order central differences
(one-sided fourth-order stencils in the two-node boundary layer).  The grid
step is 1/m for an integer m, so all integer shifts land exactly on nodes;
values requested beyond the interval are clamped to the limiting states.

The same machinery solves the formal adjoint equation for the positive
kernel psi (bordered, since the discretized operator is nearly singular)
and continues the wave to nearby propagation angles, which yields the
directional dispersion c(phi)/cos(phi) and its curvature.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.sparse.linalg import splu
from scipy.special import expit

from .errors import ContinuationStall, NewtonDiverged, NonMonotone, PinnedWave, SingularLinearSystem
from .geometry import Direction


@dataclass(frozen=True)
class Nonlinearity:
    """Cubic bistable reaction term g(u) = scale * u * (1-u) * (u-a).

    ``invert_sign=True`` selects the variant scale * u * (u-1) * (u-a),
    which flips the stability of the rest states and is kept only for
    comparison runs.
    """

    a: float
    scale: float = 6.0
    invert_sign: bool = False

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError("detuning a must lie in (0, 1)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not self.invert_sign:
            # bistability: both rest states attracting
            if not (self.dg(0.0) < 0 and self.dg(1.0) < 0):
                raise ValueError("nonlinearity is not bistable")

    @property
    def _s(self):
        return -self.scale if self.invert_sign else self.scale

    def g(self, u):
        u = np.asarray(u, dtype=float)
        return self._s * u * (1.0 - u) * (u - self.a)

    def dg(self, u):
        u = np.asarray(u, dtype=float)
        return self._s * (-3.0 * u * u + 2.0 * (1.0 + self.a) * u - self.a)

    def d2g(self, u):
        u = np.asarray(u, dtype=float)
        return self._s * (-6.0 * u + 2.0 * (1.0 + self.a))

    def d3g(self, u):
        return self._s * (-6.0) * np.ones_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class WaveGrid:
    """Uniform grid xi_m = -L + m*dx on [-L, L] with dx = 1/m_int."""

    L: float
    dx: float

    def __post_init__(self):
        m = 1.0 / self.dx
        if abs(m - round(m)) > 1e-9:
            raise ValueError("dx must equal 1/m for an integer m")
        if abs(self.L * round(m) - round(self.L * round(m))) > 1e-9:
            raise ValueError("L must be a multiple of dx")

    @property
    def nodes_per_unit(self):
        return int(round(1.0 / self.dx))

    @property
    def n_nodes(self):
        return int(round(2 * self.L / self.dx)) + 1

    @property
    def xi(self):
        return -self.L + self.dx * np.arange(self.n_nodes)

    @property
    def center_index(self):
        return int(round(self.L / self.dx))

    def trapezoid_weights(self):
        w = np.full(self.n_nodes, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def derivative_matrix(grid):
    """Fourth-order first-derivative matrix (one-sided near the ends)."""
    n = grid.n_nodes
    h = grid.dx
    rows, cols, vals = [], [], []

    def put(r, offsets, coeffs):
        for o, cf in zip(offsets, coeffs):
            rows.append(r)
            cols.append(r + o)
            vals.append(cf / (12.0 * h))

    put(0, range(5), (-25, 48, -36, 16, -3))
    put(1, range(-1, 4), (-3, -10, 18, -6, 1))
    for r in range(2, n - 2):
        put(r, range(-2, 3), (1, -8, 0, 8, -1))
    put(n - 2, range(-3, 2), (-1, 6, -18, 10, 3))
    put(n - 1, range(-4, 1), (3, -16, 36, -48, 25))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def shift_operator(grid, shift, left, right):
    """Matrix + constant vector evaluating f(xi + shift) on the grid.

    Integer multiples of dx are exact node lookups; fractional shifts use
    six-point (quintic) local Lagrange interpolation.  Arguments beyond
    [-L, L] contribute the clamp values ``left`` / ``right`` to the
    constant part.
    """
    n = grid.n_nodes
    t = shift / grid.dx
    k = int(round(t)) if abs(t - round(t)) < 1e-9 else math.floor(t)
    r = t - k
    const = np.zeros(n)
    rows, cols, vals = [], [], []
    if abs(r) < 1e-9:
        offsets, weights = [0], [1.0]
    else:
        offsets = list(range(-2, 4))
        weights = []
        for o in offsets:
            w = 1.0
            for oo in offsets:
                if oo != o:
                    w *= (r - oo) / (o - oo)
            weights.append(w)
    for m in range(n):
        for o, w in zip(offsets, weights):
            idx = m + k + o
            if idx < 0:
                const[m] += w * left
            elif idx >= n:
                const[m] += w * right
            else:
                rows.append(m)
                cols.append(idx)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), const


def _sum_shift_operators(grid, shifts, left, right):
    mat = sp.csr_matrix((grid.n_nodes, grid.n_nodes))
    const = np.zeros(grid.n_nodes)
    for s in shifts:
        m, c = shift_operator(grid, s, left, right)
        mat = mat + m
        const += c
    return mat, const


@dataclass(eq=False)
class WaveSolution:
    """Converged wave pair (c, Phi) with the adjoint kernel psi."""

    dir: Direction
    nonlin: Nonlinearity
    grid: WaveGrid
    c: float
    phi: np.ndarray
    psi: np.ndarray = None
    residual_inf: float = np.nan

    @cached_property
    def xi(self):
        return self.grid.xi

    @cached_property
    def weights(self):
        return self.grid.trapezoid_weights()

    @cached_property
    def D(self):
        return derivative_matrix(self.grid)

    @cached_property
    def dphi(self):
        return self.D @ self.phi

    @cached_property
    def d2phi(self):
        return self.D @ self.dphi

    @cached_property
    def phi_eval(self):
        return CubicSpline(self.xi, self.phi)

    @cached_property
    def dphi_eval(self):
        return self.phi_eval.derivative()

    @cached_property
    def phi_mono(self):
        # monotone (PCHIP) representation, used for initial data and inversion
        return PchipInterpolator(self.xi, np.maximum.accumulate(self.phi))

    @cached_property
    def psi_eval(self):
        return CubicSpline(self.xi, self.psi)

    def inner(self, f, g):
        return float(np.dot(self.weights, np.asarray(f) * np.asarray(g)))

    def phi_at(self, x):
        """Profile value with clamped tails, monotone interpolant."""
        x = np.asarray(x, dtype=float)
        out = self.phi_mono(np.clip(x, self.xi[0], self.xi[-1]))
        return np.where(x < self.xi[0], 0.0, np.where(x > self.xi[-1], 1.0, out))

    def phi_inverse(self, u, tol=1e-12):
        """Invert the monotone profile by bisection (values, not nodes)."""
        from .errors import OutOfProfileRange

        u = np.asarray(u, dtype=float)
        lo_val, hi_val = self.phi[0], self.phi[-1]
        if np.any(u <= lo_val) or np.any(u >= hi_val):
            raise OutOfProfileRange(
                f"value outside numeric profile range ({lo_val:.3e}, {1 - hi_val:.3e} from 1)"
            )
        lo = np.full(u.shape, self.xi[0])
        hi = np.full(u.shape, self.xi[-1])
        it = int(np.ceil(np.log2((self.xi[-1] - self.xi[0]) / tol)))
        for _ in range(it):
            mid = 0.5 * (lo + hi)
            below = self.phi_mono(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    @property
    def normalization_report(self):
        rep = {"phi_at_zero": float(self.phi[self.grid.center_index])}
        if self.psi is not None:
            rep["psi_dphi_inner"] = self.inner(self.psi, self.dphi)
        rep["tail_left"] = float(abs(self.phi[0]))
        rep["tail_right"] = float(abs(1.0 - self.phi[-1]))
        return rep


def _newton(assemble, x0, *, tol=1e-11, max_iter=50, damping_floor=2.0**-10):
    """Damped Newton iteration on F(x) = 0 with sparse Jacobians."""
    x = x0.copy()
    F, J = assemble(x)
    fnorm = np.max(np.abs(F))
    for _ in range(max_iter):
        if fnorm <= tol:
            return x
        try:
            lu = splu(J.tocsc())
        except RuntimeError as exc:
            raise NewtonDiverged(f"linear solve failed: {exc}") from exc
        step = lu.solve(-F)
        lam = 1.0
        while True:
            x_try = x + lam * step
            F_try, J_try = assemble(x_try)
            f_try = np.max(np.abs(F_try))
            if f_try <= (1.0 - 0.25 * lam) * fnorm or f_try <= tol:
                x, F, J, fnorm = x_try, F_try, J_try, f_try
                break
            lam *= 0.5
            if lam < damping_floor:
                raise NewtonDiverged(
                    f"damping exhausted at residual {fnorm:.3e}"
                )
    if fnorm <= tol:
        return x
    raise NewtonDiverged(f"no convergence after {max_iter} iterations, residual {fnorm:.3e}")


class _WaveSystem:
    """Discretized traveling-wave system on a fixed grid.

    Unknowns are the nodal profile values followed by the speed c.  The two
    endpoint rows impose the Dirichlet data and one extra row holds the
    phase (or family-normalization) condition.
    """

    def __init__(self, direction, nonlin, grid, shifts=None, norm_row=None, norm_rhs=0.5):
        self.grid = grid
        self.nonlin = nonlin
        self.n = grid.n_nodes
        self.D = derivative_matrix(grid)
        shifts = list(direction.tau) if shifts is None else list(shifts)
        self.S, self.S_const = _sum_shift_operators(grid, shifts, 0.0, 1.0)
        self.A_lin = self.S - 4.0 * sp.identity(self.n, format="csr")
        if norm_row is None:
            norm_row = np.zeros(self.n)
            norm_row[grid.center_index] = 1.0
        self.norm_row = norm_row
        self.norm_rhs = norm_rhs

    def assemble(self, x):
        n = self.n
        phi, c = x[:n], x[n]
        dphi = self.D @ phi
        F = np.empty(n + 1)
        F[:n] = c * dphi + self.A_lin @ phi + self.S_const + self.nonlin.g(phi)
        F[0] = phi[0]
        F[n - 1] = phi[n - 1] - 1.0
        F[n] = self.norm_row @ phi - self.norm_rhs

        Jphi = (c * self.D + self.A_lin + sp.diags(self.nonlin.dg(phi))).tolil()
        Jphi[0, :] = 0.0
        Jphi[0, 0] = 1.0
        Jphi[n - 1, :] = 0.0
        Jphi[n - 1, n - 1] = 1.0
        dFdc = dphi.copy()
        dFdc[0] = 0.0
        dFdc[n - 1] = 0.0
        J = sp.bmat(
            [
                [Jphi.tocsr(), dFdc[:, None]],
                [sp.csr_matrix(self.norm_row[None, :]), None],
            ],
            format="csr",
        )
        return F, J

    def interior_residual(self, phi, c):
        dphi = self.D @ phi
        r = c * dphi + self.A_lin @ phi + self.S_const + self.nonlin.g(phi)
        return float(np.max(np.abs(r[1:-1])))


def _initial_guess(grid, nonlin):
    phi0 = expit(grid.xi)
    drive = nonlin.scale * (1.0 - 2.0 * nonlin.a) / 12.0
    if nonlin.invert_sign:
        drive = -drive
    c0 = 0.1 * np.sign(drive)
    return np.concatenate([phi0, [c0]])


def solve_wave(direction, nonlin, grid=None, guess=None, *, allow_pinned=False,
               c_min=1e-4, newton_tol=1e-11, max_iter=50, monotone_tol=1e-8,
               compute_adjoint=True):
    """Newton solve of the traveling-wave system; returns a WaveSolution.

    Without an initial guess, the solve cascades through coarser grids
    (dx = 1/5, 1/10) before the target grid, which keeps Newton in its
    quadratic-convergence basin even for wide stencils.
    """
    if grid is None:
        grid = WaveGrid(L=max(40.0, 8.0 * direction.sigma_inf), dx=0.05)
    if grid.L < 4 * direction.sigma_inf + 10:
        raise ValueError("half-width L too small to resolve the wave tails")

    if guess is None:
        x, prev_grid = None, None
        for m_int in (5, 10):
            dx_c = 1.0 / m_int
            if dx_c <= grid.dx:
                continue
            g_c = WaveGrid(grid.L, dx_c)
            if x is None:
                x0 = _initial_guess(g_c, nonlin)
            else:
                x0 = np.concatenate([np.interp(g_c.xi, prev_grid.xi, x[:-1]), [x[-1]]])
            sys_c = _WaveSystem(direction, nonlin, g_c)
            x = _newton(sys_c.assemble, x0, tol=newton_tol, max_iter=max_iter)
            prev_grid = g_c
        if x is None:
            x = _initial_guess(grid, nonlin)
        else:
            x = np.concatenate([np.interp(grid.xi, prev_grid.xi, x[:-1]), [x[-1]]])
    else:
        if isinstance(guess, WaveSolution):
            x = np.concatenate([np.interp(grid.xi, guess.xi, guess.phi), [guess.c]])
        else:
            x = np.asarray(guess, dtype=float)

    system = _WaveSystem(direction, nonlin, grid)
    x = _newton(system.assemble, x, tol=newton_tol, max_iter=max_iter)
    phi, c = x[: grid.n_nodes], float(x[grid.n_nodes])

    diffs = np.diff(phi)
    if diffs.min() < -monotone_tol:
        raise NonMonotone(f"profile violates monotonicity by {-diffs.min():.3e}")
    wave = WaveSolution(
        dir=direction, nonlin=nonlin, grid=grid, c=c, phi=phi,
        residual_inf=system.interior_residual(phi, c),
    )
    if compute_adjoint:
        wave.psi = solve_adjoint(wave)
    if abs(c) < c_min and not allow_pinned:
        raise PinnedWave(f"|c| = {abs(c):.3e} < c_min = {c_min:.1e}", solution=wave)
    return wave


def linearized_operator(wave, adjoint=False):
    """Discretized linearization around the wave (Dirichlet endpoint rows).

    ``adjoint=True`` flips the sign of the advection term, which yields the
    formal adjoint whose kernel is the solvability weight psi.
    """
    grid = wave.grid
    n = grid.n_nodes
    S, _ = _sum_shift_operators(grid, wave.dir.tau, 0.0, 0.0)
    sign = -1.0 if adjoint else 1.0
    A = (sign * wave.c * wave.D + S - 4.0 * sp.identity(n, format="csr")
         + sp.diags(wave.nonlin.dg(wave.phi))).tolil()
    A[0, :] = 0.0
    A[0, 0] = 1.0
    A[n - 1, :] = 0.0
    A[n - 1, n - 1] = 1.0
    return A.tocsr()


def solve_adjoint(wave):
    """Positive adjoint kernel, normalized so that <psi, Phi'> = 1.

    The discretized adjoint operator is nearly singular (one-dimensional
    kernel), so the solve is bordered: an extra column absorbs the defect
    and an extra row pins psi(0) = 1 before the final rescaling.
    """
    grid = wave.grid
    n = grid.n_nodes
    A = linearized_operator(wave, adjoint=True)
    col = wave.dphi.copy()
    col[0] = 0.0
    col[-1] = 0.0
    row = np.zeros(n)
    row[grid.center_index] = 1.0
    B = sp.bmat([[A, col[:, None]], [sp.csr_matrix(row[None, :]), None]], format="csc")
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    try:
        sol = splu(B).solve(rhs)
    except RuntimeError as exc:
        raise SingularLinearSystem(f"bordered adjoint solve failed: {exc}") from exc
    psi = sol[:n]
    scale = float(np.dot(grid.trapezoid_weights(), psi * wave.dphi))
    if abs(scale) < 1e-14:
        raise SingularLinearSystem("adjoint kernel orthogonal to Phi'")
    return psi / scale


@dataclass(eq=False)
class DirectionalFamily:
    """Waves continued to nearby propagation angles phi."""

    wave: WaveSolution
    angles: np.ndarray
    speeds: np.ndarray
    profiles: np.ndarray  # shape (n_angles, n_nodes)

    @property
    def step(self):
        return float(self.angles[1] - self.angles[0])

    @property
    def center(self):
        return len(self.angles) // 2

    @cached_property
    def dc_dphi(self):
        c, k, h = self.speeds, self.center, self.step
        return float((c[k - 2] - 8 * c[k - 1] + 8 * c[k + 1] - c[k + 2]) / (12 * h))

    @cached_property
    def d2c_dphi2(self):
        c, k, h = self.speeds, self.center, self.step
        return float((-c[k - 2] + 16 * c[k - 1] - 30 * c[k] + 16 * c[k + 1] - c[k + 2])
                     / (12 * h * h))

    def dispersion(self):
        return self.speeds / np.cos(self.angles)


def _family_system(wave, angle):
    shifts = [t * math.cos(angle) + s * math.sin(angle)
              for t, s in zip(wave.dir.tau, wave.dir.sigma)]
    norm_row = wave.weights * wave.psi
    norm_rhs = float(np.dot(norm_row, wave.phi))
    return _WaveSystem(wave.dir, wave.nonlin, wave.grid, shifts=shifts,
                       norm_row=norm_row, norm_rhs=norm_rhs)


def solve_directional_family(wave, phi_max=0.15, n_angles=9, *,
                             newton_tol=1e-11, phi_step_min=1e-4):
    """Parameter continuation in the propagation angle, symmetric about 0.

    Each off-axis wave is normalized by <Phi_phi - Phi_*, psi_*> = 0; the
    angle-zero member is the base solve itself.
    """
    if wave.psi is None:
        raise ValueError("base wave needs its adjoint kernel first")
    if n_angles < 5 or n_angles % 2 == 0:
        raise ValueError("n_angles must be odd and at least 5")
    half = n_angles // 2
    h = phi_max / half
    angles = (np.arange(n_angles) - half) * h
    n = wave.grid.n_nodes
    profiles = np.empty((n_angles, n))
    speeds = np.empty(n_angles)
    profiles[half] = wave.phi
    speeds[half] = wave.c

    for direction_sign in (1, -1):
        x = np.concatenate([wave.phi, [wave.c]])
        current = 0.0
        for k in range(1, half + 1):
            target = direction_sign * k * h
            step = target - current
            while True:
                try:
                    sys_phi = _family_system(wave, current + step)
                    x_new = _newton(sys_phi.assemble, x, tol=newton_tol)
                    current += step
                    x = x_new
                    if abs(current - target) < 1e-14:
                        break
                    step = target - current
                except NewtonDiverged:
                    step *= 0.5
                    if abs(step) < phi_step_min:
                        raise ContinuationStall(
                            f"continuation stalled near angle {current + step:.4f}"
                        ) from None
            idx = half + direction_sign * k
            profiles[idx] = x[:n]
            speeds[idx] = x[n]
    return DirectionalFamily(wave=wave, angles=angles, speeds=speeds, profiles=profiles)


def dispersion_curvature(family):
    """Second angle-derivative of the dispersion c(phi)/cos(phi) at zero."""
    if len(family.angles) < 5:
        raise ValueError("need at least 5 symmetric angle samples")
    d = family.dispersion()
    k, h = family.center, family.step
    return float((-d[k - 2] + 16 * d[k - 1] - 30 * d[k] + 16 * d[k + 1] - d[k + 2])
                 / (12 * h * h))


def solve_wave_rescaled(direction, nonlin, L=40.0, dx=0.05, *, newton_tol=1e-11):
    """Variant solve with shifts compressed onto the unit circle.

    Rescaling xi by sigma_star turns the integer shifts into cos/sin of the
    direction angle (evaluated by quintic interpolation) and the advection
    coefficient into c/sigma_star; the -4*Phi term of the original stencil
    is retained.  Returns (c, grid, profile) in the rescaled variables.
    """
    grid = WaveGrid(L, dx)
    s_star = math.sqrt(direction.sigma_star_sq)
    zeta = direction.angle
    shifts = [math.cos(zeta), math.sin(zeta), -math.cos(zeta), -math.sin(zeta)]
    system = _WaveSystem(direction, nonlin, grid, shifts=shifts)
    x = _newton(system.assemble, _initial_guess(grid, nonlin), tol=newton_tol)
    c_tilde = float(x[grid.n_nodes])
    return s_star * c_tilde, grid, x[: grid.n_nodes]
