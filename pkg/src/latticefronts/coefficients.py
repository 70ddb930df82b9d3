"""Solvability coefficients and curvature parameters of a traveling wave.

Projecting shifted copies of the wave derivative onto the adjoint kernel
produces the tables alpha_p/alpha_q; these assemble into the transverse
stencil coefficients a_k, the Fourier symbol

    f(omega) = sum_k a_k (cos(k omega) - 1),

its stability margin M = sup f/omega^2, and the curvature data (d, kappa_H,
A_k, B_k, C_k) of the matching discrete mean-curvature flow.  Three
independent routes to d and the analytic identities relating a_k to the
angle-derivatives of the wave speed give the cross checks reported by
``identity_report``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import PinnedWave, SingularLinearSystem
from .waves import DirectionalFamily, WaveSolution, dispersion_curvature, linearized_operator, shift_operator


@dataclass(eq=False)
class AuxiliaryFunctions:
    """Bounded correction profiles entering the modulation ansatz."""

    p_d: np.ndarray      # (4, n) first-order
    p_dd: np.ndarray     # (4, 4, n) second-order, shift type
    q_dd: np.ndarray     # (4, 4, n) second-order, gradient type

    def sup_norms(self, D):
        norm = lambda f: float(np.max(np.abs(f)))
        return {
            "p_d": max(norm(f) for f in self.p_d),
            "p_dd": max(norm(f) for row in self.p_dd for f in row),
            "q_dd": max(norm(f) for row in self.q_dd for f in row),
            "dp_d": max(norm(D @ f) for f in self.p_d),
            "dp_dd": max(norm(D @ f) for row in self.p_dd for f in row),
            "dq_dd": max(norm(D @ f) for row in self.q_dd for f in row),
        }


@dataclass(eq=False)
class CoefficientSet:
    """alpha tables, stencil coefficients and derived spectral quantities."""

    dir: object
    alpha_p_d: np.ndarray          # (4,)
    alpha_p_dd: np.ndarray         # (4, 4)
    alpha_q_dd: np.ndarray         # (4, 4)
    alpha_q_dd_system: np.ndarray  # (4, 4) index variant from the defining system
    a_k: np.ndarray                # (2N+1,) for k = -N..N
    a_k_alt: np.ndarray            # assembly with the opposite alpha_p_dd sign
    c_star: float
    # filled by curvature_parameters
    d: float = None
    d_forms: dict = None
    kappa_H: float = None
    A_k: np.ndarray = None
    B_k: np.ndarray = None
    C_k: np.ndarray = None
    M_margin: float = None
    M_argmax: float = None
    identity_warnings: list = field(default_factory=list)

    @property
    def N(self):
        return (len(self.a_k) - 1) // 2

    def a(self, k):
        return self.a_k[k + self.N]

    @property
    def k_values(self):
        return np.arange(-self.N, self.N + 1)

    @property
    def Lambda(self):
        return float(np.sum(self.a_k * self.k_values**2))

    @property
    def group_velocity(self):
        return -float(np.sum(self.a_k * self.k_values))

    def fourier_symbol(self, omega):
        """Real and imaginary parts (f, p) of the transverse symbol."""
        om = np.asarray(omega, dtype=float)
        k = self.k_values[:, None]
        ak = self.a_k[:, None]
        f = np.sum(ak * (np.cos(k * np.ravel(om)[None, :]) - 1.0), axis=0)
        p = np.sum(ak * np.sin(k * np.ravel(om)[None, :]), axis=0)
        if np.isscalar(omega) or np.ndim(omega) == 0:
            return float(f[0]), float(p[0])
        return f.reshape(om.shape), p.reshape(om.shape)


class BorderedSolver:
    """Shared factorization of the bordered linearized operator.

    Solves L0 p = rhs - alpha * Phi' with p(+-L) = 0 and <p, psi> = 0.  The
    border column Phi' absorbs the rank defect, so the returned multiplier
    reproduces alpha = <rhs, psi> up to discretization error.
    """

    def __init__(self, wave: WaveSolution):
        self.wave = wave
        n = wave.grid.n_nodes
        A = linearized_operator(wave, adjoint=False)
        col = wave.dphi.copy()
        col[0] = 0.0
        col[-1] = 0.0
        row = wave.weights * wave.psi
        B = sp.bmat([[A, col[:, None]], [sp.csr_matrix(row[None, :]), None]], format="csc")
        try:
            self._lu = splu(B)
        except RuntimeError as exc:
            raise SingularLinearSystem(f"bordered operator not factorizable: {exc}") from exc
        self._n = n

    def solve(self, rhs, check_tol=1e-6):
        rhs = np.asarray(rhs, dtype=float)
        alpha = self.wave.inner(rhs, self.wave.psi)
        b = np.concatenate([rhs, [0.0]])
        b[0] = 0.0
        b[self._n - 1] = 0.0
        sol = self._lu.solve(b)
        p, beta = sol[: self._n], sol[self._n]
        if abs(beta - alpha) > check_tol * (1.0 + abs(alpha)):
            raise SingularLinearSystem(
                f"bordered multiplier {beta:.6e} deviates from projection {alpha:.6e}"
            )
        return p, alpha


def bordered_solve(wave, rhs):
    """One-off bordered solve; see BorderedSolver for the contract."""
    return BorderedSolver(wave).solve(rhs)


def compute_auxiliary(wave: WaveSolution):
    """Solve the hierarchy of correction profiles and record all alpha tables.

    The q right-hand side follows the quadrature convention
    -alpha_p[nu] * (p_d[nu'])' + T_nu' (p_d[nu])' - g''(Phi)/2 * p_d[nu] p_d[nu']
    - 1/2 * 1{nu=nu'} T_nu Phi''; the variant with (p_d[nu])' in the first
    term is recorded alongside (the sigma-weighted sums agree).
    """
    solver = BorderedSolver(wave)
    n = wave.grid.n_nodes
    D = wave.D
    shift_mats = []
    for t in wave.dir.tau:
        m, c = shift_operator(wave.grid, float(t), 0.0, 0.0)
        assert np.all(c == 0.0)
        shift_mats.append(m)

    p_d = np.empty((4, n))
    alpha_p_d = np.empty(4)
    for nu in range(4):
        rhs = shift_mats[nu] @ wave.dphi
        p_d[nu], alpha_p_d[nu] = solver.solve(rhs)

    p_dd = np.empty((4, 4, n))
    alpha_p_dd = np.empty((4, 4))
    for nu in range(4):
        for nup in range(4):
            rhs = alpha_p_d[nup] * p_d[nu] - shift_mats[nup] @ p_d[nu]
            p_dd[nu, nup], alpha_p_dd[nu, nup] = solver.solve(rhs)

    dp_d = np.array([D @ p_d[nu] for nu in range(4)])
    g2 = wave.nonlin.d2g(wave.phi)
    q_dd = np.empty((4, 4, n))
    alpha_q_dd = np.empty((4, 4))
    alpha_q_dd_system = np.empty((4, 4))
    for nu in range(4):
        for nup in range(4):
            common = shift_mats[nup] @ dp_d[nu] - 0.5 * g2 * p_d[nu] * p_d[nup]
            if nu == nup:
                common = common - 0.5 * (shift_mats[nu] @ wave.d2phi)
            rhs = -alpha_p_d[nu] * dp_d[nup] + common
            q_dd[nu, nup], alpha_q_dd[nu, nup] = solver.solve(rhs)
            alpha_q_dd_system[nu, nup] = wave.inner(
                -alpha_p_d[nu] * dp_d[nu] + common, wave.psi
            )

    aux = AuxiliaryFunctions(p_d=p_d, p_dd=p_dd, q_dd=q_dd)
    coeffs = CoefficientSet(
        dir=wave.dir,
        alpha_p_d=alpha_p_d,
        alpha_p_dd=alpha_p_dd,
        alpha_q_dd=alpha_q_dd,
        alpha_q_dd_system=alpha_q_dd_system,
        a_k=assemble_ak(wave.dir, alpha_p_d, alpha_p_dd),
        # opposite second-order sign; kept for cross-checking against
        # tabulations that use that convention
        a_k_alt=assemble_ak(wave.dir, alpha_p_d, -alpha_p_dd),
        c_star=wave.c,
    )
    return aux, coeffs


def assemble_ak(direction, alpha_p_d, alpha_p_dd):
    """Stencil coefficients a_k from the alpha tables, k in [-N, N]."""
    N = direction.N
    sig = direction.sigma
    a = np.zeros(2 * N + 1)
    for nu in range(4):
        a[sig[nu] + N] += alpha_p_d[nu]
        for nup in range(4):
            a[sig[nu] + sig[nup] + N] += alpha_p_dd[nu, nup]
            a[sig[nu] + N] -= alpha_p_dd[nu, nup]
            a[sig[nup] + N] -= alpha_p_dd[nu, nup]
    return a


def stability_margin(coeffs, n_grid=100_000, refine_tol=1e-12):
    """M = sup of f(omega)/omega^2 over (0, pi], by dense scan plus golden section."""
    om = np.linspace(np.pi / n_grid, np.pi, n_grid)
    f, _ = coeffs.fourier_symbol(om)
    ratio = f / om**2
    i = int(np.argmax(ratio))
    lo = om[max(i - 1, 0)]
    hi = om[min(i + 1, n_grid - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    def val(x):
        fx, _ = coeffs.fourier_symbol(x)
        return fx / (x * x)

    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = val(c1), val(c2)
    while b - a > refine_tol:
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = val(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = val(c1)
    x_best = 0.5 * (a + b)
    candidates = [(val(x_best), x_best), (ratio[i], om[i]), (ratio[-1], om[-1])]
    best = max(candidates)
    coeffs.M_margin, coeffs.M_argmax = float(best[0]), float(best[1])
    return coeffs.M_margin


def curvature_parameters(coeffs, family: DirectionalFamily, C_k=None, *,
                         c_min=1e-4, d_tol=1e-3):
    """Curvature coefficient kappa_H, parameter d (three routes) and the
    weight tables A_k, B_k, C_k of the matching curvature flow.

    A_k and B_k use the identity values of the angle-derivatives of the
    speed (so their normalizations hold to quadrature accuracy); the
    finite-difference values from the family enter only through the second
    d route.
    """
    N = coeffs.N
    sig = np.array(coeffs.dir.sigma, dtype=float)
    Lambda = coeffs.Lambda
    if Lambda <= 0:
        raise ValueError("Lambda must be positive for curvature parameters")
    c_star = coeffs.c_star
    if abs(c_star) < c_min:
        raise PinnedWave(f"|c| = {abs(c_star):.3e} below c_min; A_k undefined")

    sum_ss_q = float(sig @ coeffs.alpha_q_dd @ sig)
    dc_identity = -float(np.sum(coeffs.a_k * coeffs.k_values))
    d2c_identity = -c_star + 2.0 * sum_ss_q
    lambda2 = -float(np.sum(coeffs.a_k * coeffs.k_values**2))

    kappa_H = 0.5 * Lambda
    d_alpha = 2.0 * sum_ss_q / Lambda
    d_dispersion = dispersion_curvature(family) / (2.0 * kappa_H)
    d_identity = -(c_star + d2c_identity) / lambda2
    coeffs.d = d_alpha
    coeffs.d_forms = {"alpha": d_alpha, "dispersion": d_dispersion, "identity": d_identity}
    coeffs.kappa_H = kappa_H

    pairwise = max(
        abs(d_alpha - d_dispersion), abs(d_alpha - d_identity), abs(d_dispersion - d_identity)
    )
    if pairwise > d_tol * (1.0 + abs(d_alpha)):
        coeffs.identity_warnings.append(
            f"d-form mismatch {pairwise:.3e} exceeds {d_tol:.1e}*(1+|d|)"
        )

    ks = np.concatenate([np.arange(-N, 0), np.arange(1, N + 1)])
    if C_k is None:
        C_k = np.full(2 * N, 1.0 / (2 * N))
    else:
        C_k = np.asarray(C_k, dtype=float)
        if abs(C_k.sum() - 1.0) > 1e-12 or abs((ks * C_k).sum()) > 1e-12:
            raise ValueError("C_k must satisfy sum C_k = 1 and sum k*C_k = 0")
    a_nz = np.array([coeffs.a(k) for k in ks])
    A_k = d_alpha * a_nz * ks**2 / c_star - C_k * d2c_identity / c_star
    B_k = a_nz * ks**2 / (2 * kappa_H) + ks * C_k * dc_identity / (2 * kappa_H)
    coeffs.A_k, coeffs.B_k, coeffs.C_k = A_k, B_k, C_k
    return coeffs


def identity_report(coeffs, family: DirectionalFamily):
    """Residuals of the coefficient identities against independent values."""
    tau = np.array(coeffs.dir.tau, dtype=float)
    sig = np.array(coeffs.dir.sigma, dtype=float)
    k = coeffs.k_values
    sum_ss_q = float(sig @ coeffs.alpha_q_dd @ sig)
    lambda2_ak = -float(np.sum(coeffs.a_k * k**2))
    lambda2_alpha = -float(sig**2 @ coeffs.alpha_p_d) - 2.0 * float(
        sig @ coeffs.alpha_p_dd @ sig
    )
    report = {
        "c_star_vs_tau_alpha": abs(coeffs.c_star + float(tau @ coeffs.alpha_p_d)),
        "dc_dphi_vs_ak": abs(family.dc_dphi + float(np.sum(coeffs.a_k * k))),
        "d2c_dphi2_vs_alpha_q": abs(family.d2c_dphi2 - (-coeffs.c_star + 2.0 * sum_ss_q)),
        "lambda2_assembly": abs(lambda2_ak - lambda2_alpha),
        "alpha_q_variant_symmetrized": abs(
            sum_ss_q - float(sig @ coeffs.alpha_q_dd_system @ sig)
        ),
    }
    return report
