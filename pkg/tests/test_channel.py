import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, optimize

from _oracles import gauss_legendre
from plantcomm import DomainError
from plantcomm.channel import (
    ChannelParams,
    DiffusivityProfile,
    FieldPoint,
    concentration,
    delay,
    eddy_k,
    puff,
    write_field_csv,
)

TABLE = ChannelParams(u=25.0, diffusivity=0.1, h=1.0)


def _puff_mp(M, x, y, z, t, u, h, k):
    """Independent arbitrary-precision transcription of the reflected puff."""
    mpmath.mp.dps = 50
    M, x, y, z, t, u, h, k = (mpmath.mpf(str(v)) for v in (M, x, y, z, t, u, h, k))
    pref = M / (8 * (mpmath.pi * k) ** mpmath.mpf(1.5))
    return pref * mpmath.e ** ((-(x - u * t) ** 2 - y**2) / (4 * k)) * (
        mpmath.e ** (-(z - h) ** 2 / (4 * k)) + mpmath.e ** (-(z + h) ** 2 / (4 * k))
    )


class TestEddyK:
    def test_constant(self):
        assert eddy_k(TABLE, 0.1) == pytest.approx(4e-4, rel=1e-15)

    def test_zero_distance(self):
        assert eddy_k(TABLE, 0.0) == 0.0

    def test_tabulated_against_quad(self):
        xs = np.linspace(0, 10, 11)
        prof = DiffusivityProfile(tuple(xs), tuple(0.1 + 0.01 * xs))
        chan = ChannelParams(1.0, prof)
        ref, _ = integrate.quad(lambda e: 0.1 + 0.01 * e, 0, 10, epsabs=1e-14)
        assert eddy_k(chan, 10.0) == pytest.approx(1.5, rel=1e-12)
        assert eddy_k(chan, 10.0) == pytest.approx(ref, rel=1e-12)
        assert eddy_k(chan, 3.7) == pytest.approx(integrate.quad(lambda e: 0.1 + 0.01 * e, 0, 3.7)[0], rel=1e-12)

    def test_nonlinear_profile_piecewise(self):
        xs = np.linspace(0, 4, 401)
        prof = DiffusivityProfile(tuple(xs), tuple(0.2 + np.sin(xs) ** 2))
        chan = ChannelParams(2.0, prof)
        ref = integrate.quad(lambda e: 0.2 + math.sin(e) ** 2, 0, 4)[0] / 2.0
        assert eddy_k(chan, 4.0) == pytest.approx(ref, rel=1e-4)

    def test_rejects_negative_and_out_of_table(self):
        with pytest.raises(DomainError):
            eddy_k(TABLE, -1.0)
        prof = DiffusivityProfile((0.0, 1.0), (0.1, 0.2))
        with pytest.raises(DomainError):
            eddy_k(ChannelParams(1.0, prof), 2.0)


class TestConcentration:
    def test_table_value_against_mpmath(self):
        got = concentration(TABLE, 1.1e-9, FieldPoint(0.1, 0.0, 1.0, 0.004))
        ref = _puff_mp(1.1e-9, 0.1, 0.0, 1.0, 0.004, 25.0, 1.0, 4e-4)
        assert got == pytest.approx(float(ref), rel=1e-12)
        assert got == pytest.approx(3.087e-6, rel=1e-3)

    def test_random_points_against_mpmath(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            u, d, h = rng.uniform(0.5, 50), rng.uniform(0.01, 5), rng.uniform(0, 3)
            x, y, z = rng.uniform(0.05, 5), rng.uniform(-1, 1), rng.uniform(0, 3)
            t = x / u * rng.uniform(0.5, 1.5)
            chan = ChannelParams(u, d, h)
            got = concentration(chan, 1e-9, FieldPoint(x, y, z, t))
            ref = float(_puff_mp(1e-9, x, y, z, t, u, h, d * x / u))
            assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)

    def test_zero_mass(self):
        assert concentration(TABLE, 0.0, FieldPoint(0.3, 0.1, 0.5, 0.01)) == 0.0

    def test_y_symmetry(self):
        rng = np.random.default_rng(2)
        x, y, z, t = rng.uniform(0.01, 2, 30), rng.uniform(0, 1, 30), rng.uniform(0, 2, 30), rng.uniform(0, 0.1, 30)
        a = concentration(TABLE, 1e-9, FieldPoint(x, y, z, t))
        b = concentration(TABLE, 1e-9, FieldPoint(x, -y, z, t))
        np.testing.assert_array_equal(a, b)

    def test_origin_limit_and_singularity(self):
        assert concentration(TABLE, 1e-9, FieldPoint(0.0, 0.5, 1.0, 0.0)) == 0.0
        with pytest.raises(DomainError):
            concentration(TABLE, 1e-9, FieldPoint(0.0, 0.0, 1.0, 0.0))

    def test_below_ground_rejected(self):
        with pytest.raises(DomainError):
            FieldPoint(1.0, 0.0, -0.1, 0.0)


@pytest.mark.parametrize(
    "u, h, k",
    [(25.0, 1.0, 4e-4), (1.0, 0.5, 0.02), (10.0, 0.0, 0.05), (3.0, 2.0, 0.3), (50.0, 0.2, 1e-3)],
)
def test_mass_conservation(u, h, k):
    # 3-D tensor quadrature over the half-space z >= 0, truncated at 12 sd
    # (outside that band both z terms are below exp(-72))
    t = 0.7
    sd = math.sqrt(2 * k)
    xs, wx = gauss_legendre(u * t - 12 * sd, u * t + 12 * sd)
    ys, wy = gauss_legendre(-12 * sd, 12 * sd)
    zs, wz = gauss_legendre(max(0.0, h - 12 * sd), h + 12 * sd)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij", sparse=True)
    vals = puff(1.0, X, Y, Z, t, u=u, h=h, k=k)
    total = float(wx @ ((vals @ wz) @ wy))
    assert total == pytest.approx(1.0, rel=1e-4)


def test_ground_flux_zero():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x, y, t = rng.uniform(0.05, 2), rng.uniform(-0.3, 0.3), rng.uniform(0, 0.1)
        k = eddy_k(TABLE, x)
        peak = puff(1e-9, x, 0, TABLE.h, x / TABLE.u, u=TABLE.u, h=TABLE.h, k=k)
        e = 1e-6
        # the reflected field is even in z, so C(+e) - C(-e) vanishes
        grad = (puff(1e-9, x, y, e, t, u=TABLE.u, h=TABLE.h, k=k) - puff(1e-9, x, y, -e, t, u=TABLE.u, h=TABLE.h, k=k)) / (2 * e)
        assert abs(grad) <= 1e-8 * peak


def test_peak_at_advective_arrival():
    for x in (0.1, 0.5, 2.0):
        res = optimize.minimize_scalar(
            lambda t: -concentration(TABLE, 1e-9, FieldPoint(x, 0.0, TABLE.h, t)),
            bracket=(0.5 * x / TABLE.u, x / TABLE.u * 1.01, 2 * x / TABLE.u),
            method="golden",
            tol=1e-10,
        )
        assert res.x == pytest.approx(x / TABLE.u, rel=1e-6)


def test_dilution_monotone_in_k():
    ks = np.geomspace(1e-5, 10, 60)
    peak = puff(1e-9, 1.0, 0.0, 1.0, 1.0 / 25, u=25.0, h=1.0, k=ks)
    assert np.all(np.diff(peak) <= 0)


class TestDelay:
    def test_examples(self):
        assert delay(TABLE, 10.0, "advective") == 0.4
        assert delay(ChannelParams(1.0, 0.1), 1.0, "diffusive") == pytest.approx(10.0, rel=1e-15)
        assert delay(ChannelParams(1.0, 0.1), 1.0, "mixed") == pytest.approx(5.5, rel=1e-15)

    def test_array_and_errors(self):
        np.testing.assert_allclose(delay(TABLE, np.array([0.0, 5.0]), "advective"), [0.0, 0.2])
        with pytest.raises(ValueError):
            delay(TABLE, 1.0, "ballistic")
        with pytest.raises(DomainError):
            delay(TABLE, -1.0)
        prof = ChannelParams(1.0, DiffusivityProfile((0.0, 1.0), (0.1, 0.1)))
        with pytest.raises(ValueError):
            delay(prof, 1.0, "diffusive")


def test_field_csv(tmp_path):
    pts = [FieldPoint(0.1, 0.0, 1.0, 0.004), FieldPoint(0.2, 0.1, 0.9, 0.008)]
    path = write_field_csv(tmp_path / "f.csv", TABLE, 1.1e-9, pts)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,z,t,concentration"
    assert float(lines[1].split(",")[-1]) == concentration(TABLE, 1.1e-9, pts[0])


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelParams(0.0)
    with pytest.raises(ValueError):
        ChannelParams(1.0, -0.1)
    with pytest.raises(ValueError):
        DiffusivityProfile((0.0, 1.0), (0.1, 0.0))
