import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavprobe import PhysicalParams, derive_scales, mhz, preset, validate
from cavprobe.core import beta_for_photons, cascade_frame


def test_mhz_is_angular():
    assert mhz(1.0) == pytest.approx(2 * math.pi * 1e6, rel=1e-15)


def test_preset_values(reichel):
    assert reichel.g == pytest.approx(mhz(215.0))
    assert reichel.delta == pytest.approx(mhz(10_000.0))
    assert reichel.kappa == pytest.approx(mhz(106.0))
    assert reichel.gamma_sp == pytest.approx(mhz(6.0))
    assert reichel.big_j == 50
    assert reichel.eta == 1.0
    assert reichel.cavity_photons == pytest.approx(0.01, rel=1e-12)
    # g~ = g^2 / delta
    assert reichel.g_tilde == pytest.approx(2.9044e7, rel=1e-4)


def test_squeezed_preset(squeezed, reichel):
    assert squeezed.kappa2 == reichel.kappa1
    assert squeezed.beta == 0
    assert squeezed.epsilon == pytest.approx(0.025j * squeezed.kappa2)
    assert squeezed.eta == 0.9
    assert squeezed.phi == pytest.approx(math.pi)


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")


def test_t_qs_is_150ns(reichel):
    s = derive_scales(reichel)
    # 100 / kappa
    assert s.t_qs == pytest.approx(100.0 / reichel.kappa, rel=1e-14)
    assert round(s.t_qs * 1e9) == 150


def test_t_qs_infinite_without_drive(reichel):
    assert math.isinf(derive_scales(reichel.replace(beta=0j)).t_qs)


def test_t_sp_atom_count(reichel):
    full = derive_scales(reichel).t_sp
    half = derive_scales(reichel, coupled_atoms=reichel.n_atoms / 2).t_sp
    assert half == pytest.approx(2 * full, rel=1e-14)


def test_t_sp_grows_with_n(reichel):
    assert derive_scales(reichel, 10).t_sp > derive_scales(reichel, 0).t_sp
    with pytest.raises(ValueError):
        derive_scales(reichel, 51)


def test_circle_center_equals_radius(reichel):
    s = derive_scales(reichel)
    assert s.circle_center == s.circle_radius
    # sqrt(kappa1) beta / kappa = sqrt(photons)/2
    assert s.circle_radius == pytest.approx(0.05, rel=1e-12)


def test_beta_for_photons_roundtrip():
    k = mhz(100.0)
    b = beta_for_photons(0.25, k, 2 * k)
    assert 4 * k * b ** 2 / (2 * k) ** 2 == pytest.approx(0.25)


def test_validate_flags():
    p = preset("reichel")
    assert validate(p).ok
    assert not validate(p.replace(eta=1.5)).ok
    assert not validate(p.replace(kappa1=-1.0)).ok
    assert not validate(p.replace(big_j=0.3)).ok
    rep = validate(preset("reichel-squeezed", epsilon=1j * mhz(106.0)))
    assert rep.ok and rep.warnings
    with pytest.raises(ValueError):
        validate(p.replace(eta=-0.1)).raise_if_invalid()


def test_dict_roundtrip(squeezed):
    assert PhysicalParams.from_dict(squeezed.as_dict()) == squeezed


def test_cascade_frame(reichel):
    q = cascade_frame(reichel)
    assert q.beta == pytest.approx(-1j * reichel.beta)
    assert q.kappa2 == 0 and q.epsilon == 0 and q.phi == pytest.approx(math.pi)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 200.0), st.floats(0.01, 10.0), st.floats(1e-4, 1.0))
def test_circle_geometry_any_params(j2, k_ratio, photons):
    k1 = mhz(100.0)
    kl = k1 * k_ratio
    b = beta_for_photons(photons, k1, k1 + kl)
    p = PhysicalParams(g=mhz(200.0), delta=mhz(1e4), kappa1=k1, kappa_loss1=kl, beta=b,
                       big_j=round(j2) / 2)
    s = derive_scales(p)
    assert s.circle_center == s.circle_radius
    assert s.circle_radius == pytest.approx(math.sqrt(k1) * b / (k1 + kl))
    assert np.allclose(p.n_values, -p.big_j + np.arange(p.n_atoms + 1))
