"""Rational-direction lattice arithmetic.

A coprime pair (sigma_h, sigma_v) orients the square lattice along a
longitudinal coordinate n = i*sigma_h + j*sigma_v and a transverse
coordinate l = i*sigma_v - j*sigma_h.  The image of Z^2 under this map is
a sublattice of Z^2 on which the four nearest-neighbour offsets become the
pairs (tau_nu, sigma_nu).  Everything downstream (wave profiles, stencil
coefficients, simulations) is phrased in these coordinates.
"""

from dataclasses import dataclass, field
from math import atan2, gcd

from .errors import NotCoprime, ZeroDirection


@dataclass(frozen=True)
class Direction:
    """A coprime lattice direction with its derived shift tables."""

    sigma_h: int
    sigma_v: int
    tau: tuple = field(init=False)
    sigma: tuple = field(init=False)
    sigma_star_sq: int = field(init=False)
    sigma_inf: int = field(init=False)
    N: int = field(init=False)
    angle: float = field(init=False)

    def __post_init__(self):
        sh, sv = self.sigma_h, self.sigma_v
        object.__setattr__(self, "tau", (sh, sv, -sh, -sv))
        object.__setattr__(self, "sigma", (sv, -sh, -sv, sh))
        object.__setattr__(self, "sigma_star_sq", sh * sh + sv * sv)
        object.__setattr__(self, "sigma_inf", max(abs(sh), abs(sv)))
        pairs = [s + sp for s in self.sigma for sp in self.sigma]
        stencil_reach = max(abs(s) for s in list(self.sigma) + pairs)
        object.__setattr__(self, "N", stencil_reach)
        object.__setattr__(self, "angle", atan2(sv, sh))


@dataclass(frozen=True)
class SublatticePoint:
    n: int
    l: int
    i: int
    j: int


def make_direction(sh, sv):
    """Validate (sh, sv) and populate the derived shift tables."""
    sh, sv = int(sh), int(sv)
    if sh == 0 and sv == 0:
        raise ZeroDirection("direction (0, 0) is not admissible")
    if gcd(abs(sh), abs(sv)) != 1:
        raise NotCoprime(f"gcd(|{sh}|, |{sv}|) = {gcd(abs(sh), abs(sv))} != 1")
    if max(abs(sh), abs(sv)) > 1000:
        raise ValueError("direction components limited to |sigma| <= 1000")
    return Direction(sh, sv)


def to_transverse(direction, i, j):
    """Map original coordinates (i, j) to sublattice coordinates (n, l)."""
    n = i * direction.sigma_h + j * direction.sigma_v
    l = i * direction.sigma_v - j * direction.sigma_h
    return SublatticePoint(n=n, l=l, i=i, j=j)


def is_member(direction, n, l):
    """Test whether (n, l) lies on the sublattice; return the preimage if so.

    (n, l) is in the image of Z^2 exactly when both
    i = (n*sigma_h + l*sigma_v) / sigma_star_sq and
    j = (n*sigma_v - l*sigma_h) / sigma_star_sq are integers.
    """
    s2 = direction.sigma_star_sq
    num_i = n * direction.sigma_h + l * direction.sigma_v
    num_j = n * direction.sigma_v - l * direction.sigma_h
    if num_i % s2 != 0 or num_j % s2 != 0:
        return False, None
    return True, (num_i // s2, num_j // s2)


def stencil_offsets(direction):
    """The four (dn, dl) displacements of the transformed Laplacian stencil."""
    return list(zip(direction.tau, direction.sigma))


def base_longitudinal_offset(direction, l):
    """Smallest n in [0, sigma_star_sq) with (n, l) on the sublattice.

    For fixed l the admissible n form the arithmetic progression
    n0(l) + m * sigma_star_sq; membership only requires the single congruence
    n*sigma_h + l*sigma_v = 0 (mod sigma_star_sq) because sigma_h is a unit
    modulo sigma_star_sq.
    """
    s2 = direction.sigma_star_sq
    sh_inv = pow(direction.sigma_h % s2, -1, s2)
    return (-l * direction.sigma_v * sh_inv) % s2
