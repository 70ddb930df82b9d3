import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticefronts.errors import NotCoprime, ZeroDirection
from latticefronts.geometry import (
    base_longitudinal_offset,
    is_member,
    make_direction,
    stencil_offsets,
    to_transverse,
)


def test_derived_fields_2_3():
    d = make_direction(2, 3)
    assert d.sigma_star_sq == 13
    assert d.sigma_inf == 3
    assert d.tau == (2, 3, -2, -3)
    assert d.sigma == (3, -2, -3, 2)


def test_derived_fields_1_0():
    d = make_direction(1, 0)
    assert d.N == 2
    assert d.sigma == (0, -1, 0, 1)


def test_stencil_reach_2_5():
    # the widest pair sum is |5 + 5| = 10
    assert make_direction(2, 5).N == 10


@pytest.mark.parametrize("sh,sv", [(2, 4), (6, 3), (-2, 2)])
def test_not_coprime(sh, sv):
    with pytest.raises(NotCoprime):
        make_direction(sh, sv)


def test_zero_direction():
    with pytest.raises(ZeroDirection):
        make_direction(0, 0)


def test_shift_tables_sum_to_zero():
    d = make_direction(3, -5)
    assert sum(d.tau) == 0
    assert sum(d.sigma) == 0
    assert d.N <= 2 * d.sigma_inf


@pytest.mark.parametrize(
    "ij,nl",
    [((1, 0), (2, 3)), ((2, 3), (13, 0)), ((3, -2), (0, 13))],
)
def test_to_transverse_2_3(ij, nl):
    d = make_direction(2, 3)
    p = to_transverse(d, *ij)
    assert (p.n, p.l) == nl


def test_is_member_2_3():
    d = make_direction(2, 3)
    ok, _ = is_member(d, 1, 0)
    assert not ok
    ok, ij = is_member(d, 13, 0)
    assert ok and ij == (2, 3)
    ok, ij = is_member(d, 0, 0)
    assert ok and ij == (0, 0)


def test_stencil_offsets_values():
    assert stencil_offsets(make_direction(1, 0)) == [(1, 0), (0, -1), (-1, 0), (0, 1)]
    assert stencil_offsets(make_direction(2, 3)) == [(2, 3), (3, -2), (-2, -3), (-3, 2)]


coprime_dirs = st.tuples(
    st.integers(-9, 9), st.integers(-9, 9)
).filter(lambda p: p != (0, 0)).map(
    lambda p: (p[0] // __import__("math").gcd(abs(p[0]), abs(p[1])),
               p[1] // __import__("math").gcd(abs(p[0]), abs(p[1])))
)


@settings(max_examples=200, deadline=None)
@given(coprime_dirs, st.integers(-100, 100), st.integers(-100, 100))
def test_round_trip(dir_pair, i, j):
    d = make_direction(*dir_pair)
    p = to_transverse(d, i, j)
    ok, ij = is_member(d, p.n, p.l)
    assert ok and ij == (i, j)


@pytest.mark.parametrize("sh,sv", [(2, 3), (1, 0), (2, 5), (-3, 4)])
def test_fixed_l_progression(sh, sv):
    d = make_direction(sh, sv)
    s2 = d.sigma_star_sq
    for l in range(-2 * s2, 2 * s2 + 1):
        members = [n for n in range(-3 * s2, 3 * s2 + 1) if is_member(d, n, l)[0]]
        assert members, f"no member found for l={l}"
        n0 = base_longitudinal_offset(d, l)
        assert all((n - n0) % s2 == 0 for n in members)
        assert set(members) == {
            n for n in range(-3 * s2, 3 * s2 + 1) if (n - n0) % s2 == 0
        }


@pytest.mark.parametrize("sh,sv", [(2, 3), (2, 5), (1, 1)])
def test_offset_closure_on_window(sh, sv):
    # every stencil offset maps member points to member points
    d = make_direction(sh, sv)
    offs = stencil_offsets(d)
    for i in range(-20, 21):
        for j in range(-20, 21):
            p = to_transverse(d, i, j)
            for dn, dl in offs:
                ok, _ = is_member(d, p.n + dn, p.l + dl)
                assert ok
