import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fxlocalvol import blackscholes as bs
from fxlocalvol.errors import DomainError, NumericalError


def erf_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bisect_inv(p, lo=-40.0, hi=40.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if erf_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- normal distribution -------------------------------------------------------

def test_norm_cdf_values():
    assert bs.norm_cdf(0.0) == 0.5
    assert bs.norm_cdf(1.959964) == pytest.approx(erf_cdf(1.959964), abs=1e-15)
    assert bs.norm_cdf(1.959964) == pytest.approx(0.975, abs=1e-7)
    tail = bs.norm_cdf(-8.0)
    assert 0 < tail < 1e-15


def test_norm_inv_cdf_values():
    assert bs.norm_inv_cdf(0.5) == 0.0
    assert bs.norm_inv_cdf(0.25) == pytest.approx(bisect_inv(0.25), abs=1e-12)
    assert bs.norm_inv_cdf(0.25) == pytest.approx(-0.674490, abs=1e-6)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_norm_inv_cdf_rejects(p):
    with pytest.raises(DomainError):
        bs.norm_inv_cdf(p)


def test_norm_inv_cdf_roundtrip_grid():
    p = np.linspace(1e-6, 1 - 1e-6, 1000)
    assert np.max(np.abs(bs.norm_cdf(bs.norm_inv_cdf(p)) - p)) <= 1e-10


@given(st.floats(-30, 30))
def test_norm_cdf_symmetry(x):
    assert bs.norm_cdf(x) + bs.norm_cdf(-x) == pytest.approx(1.0, abs=1e-15)


# -- prices and deltas ----------------------------------------------------------

def test_atm_forward_call_closed_form():
    assert bs.call_price(1, 1, 1, 0, 0, 0.2) == pytest.approx(2 * erf_cdf(0.1) - 1, rel=1e-13)
    assert bs.call_price(1, 1, 1, 0, 0, 0.2) == pytest.approx(0.0796557, abs=5e-8)


def test_sample_atm_call():
    c = bs.call_price(0.7735, 0.7735, 1, 0, 0, 0.1085)
    assert c == pytest.approx(0.7735 * (2 * erf_cdf(0.05425) - 1), rel=1e-13)
    # the quoted 0.033462 is a rounded figure; the closed form gives 0.0334647
    assert c == pytest.approx(0.033462, abs=5e-6)


def test_call_price_matches_monte_carlo():
    rng = np.random.default_rng(11)
    z = rng.standard_normal(400_000)
    S, K, T, r, q, v = 1.0, 1.05, 0.5, 0.03, 0.01, 0.2
    ST = S * np.exp((r - q - 0.5 * v * v) * T + v * math.sqrt(T) * z)
    pay = math.exp(-r * T) * np.maximum(ST - K, 0)
    se = pay.std() / math.sqrt(z.size)
    assert abs(pay.mean() - bs.call_price(S, K, T, r, q, v)) < 4 * se


def test_zero_vol_intrinsic():
    assert bs.call_price(2, 1, 1, 0, 0, 0.0) == 1.0
    assert bs.put_price(1, 2, 1, 0, 0, 0.0) == 1.0
    assert bs.call_price(1, 2, 1, 0, 0, 0.0) == 0.0


def test_put_equals_call_atm_forward():
    assert bs.put_price(1, 1, 1, 0, 0, 0.1) == pytest.approx(bs.call_price(1, 1, 1, 0, 0, 0.1), abs=1e-16)


@given(
    S=st.floats(0.5, 2.0), K=st.floats(0.5, 2.0), T=st.floats(0.01, 5.0),
    r=st.floats(-0.02, 0.1), q=st.floats(-0.02, 0.1), v=st.floats(0.01, 1.0),
)
def test_put_call_parity(S, K, T, r, q, v):
    c, p = bs.call_price(S, K, T, r, q, v), bs.put_price(S, K, T, r, q, v)
    assert c - p == pytest.approx(S * math.exp(-q * T) - K * math.exp(-r * T), abs=1e-12)
    dc, dp = bs.call_delta(S, K, T, r, q, v), bs.put_delta(S, K, T, r, q, v)
    assert dc - dp == pytest.approx(math.exp(-q * T), abs=1e-12)


@given(
    S=st.floats(0.5, 2.0), K=st.floats(0.5, 2.0), T=st.floats(0.05, 3.0),
    r=st.floats(0.0, 0.08), q=st.floats(0.0, 0.08), v=st.floats(0.05, 0.6),
)
def test_delta_is_price_derivative(S, K, T, r, q, v):
    h = 1e-5 * S
    fd = (bs.call_price(S + h, K, T, r, q, v) - bs.call_price(S - h, K, T, r, q, v)) / (2 * h)
    assert bs.call_delta(S, K, T, r, q, v) == pytest.approx(fd, abs=1e-7)


def test_delta_values():
    assert bs.call_delta(1, 1, 1, 0, 0, 0.1) == pytest.approx(erf_cdf(0.05), abs=1e-15)
    assert bs.call_delta(1, 1, 1, 0, 0, 0.1) == pytest.approx(0.519939, abs=5e-7)
    assert bs.put_delta(1, 1, 1, 0, 0, 0.1) == pytest.approx(0.519939 - 1, abs=5e-7)
    assert bs.call_delta(10, 1, 1, 0, 0, 0.1) >= 0.999999
    assert bs.put_delta(10, 1, 1, 0, 0, 0.1) >= -1e-6


def test_vectorised_inputs():
    K = np.array([0.9, 1.0, 1.1])
    out = bs.call_price(1.0, K, 1.0, 0.0, 0.0, 0.2)
    assert out.shape == (3,)
    assert out[1] == pytest.approx(bs.call_price(1.0, 1.0, 1.0, 0.0, 0.0, 0.2))


@pytest.mark.parametrize("args", [(0, 1, 1, 0, 0, 0.1), (1, -1, 1, 0, 0, 0.1), (1, 1, -1, 0, 0, 0.1),
                                  (1, 1, 1, 0, 0, -0.1)])
def test_price_domain_errors(args):
    with pytest.raises(DomainError):
        bs.call_price(*args)


def test_side_dispatch():
    assert bs.price("put", 1, 1.1, 1, 0, 0, 0.1) == bs.put_price(1, 1.1, 1, 0, 0, 0.1)
    with pytest.raises(DomainError):
        bs.price("straddle", 1, 1, 1, 0, 0, 0.1)


# -- implied vol ----------------------------------------------------------------

def test_implied_vol_examples():
    c = bs.call_price(0.7735, 0.7735, 1, 0, 0, 0.1085)
    assert bs.implied_vol(c, 0.7735, 0.7735, 1, 0, 0) == pytest.approx(0.1085, abs=1e-8)
    assert bs.implied_vol(0.0796557, 1, 1, 1, 0, 0) == pytest.approx(0.2, abs=1e-6)
    exact = bs.call_price(1, 1, 1, 0, 0, 0.2)
    assert bs.implied_vol(exact, 1, 1, 1, 0, 0) == pytest.approx(0.2, abs=1e-8)


def test_implied_vol_out_of_bounds():
    with pytest.raises(DomainError, match="price out of bounds"):
        bs.implied_vol(0.5, 2.0, 1.0, 1, 0, 0)  # below intrinsic 1.0
    with pytest.raises(DomainError, match="price out of bounds"):
        bs.implied_vol(1.5, 1.0, 1.0, 1, 0, 0)  # above spot


def test_implied_vol_no_convergence():
    with pytest.raises(NumericalError):
        bs.implied_vol(bs.call_price(1, 1, 1, 0, 0, 0.3), 1, 1, 1, 0, 0, max_iter=2)


@given(
    S=st.floats(0.6, 1.5), K=st.floats(0.6, 1.5), T=st.floats(0.02, 5.0),
    r=st.floats(0.0, 0.06), q=st.floats(0.0, 0.06), v=st.floats(0.03, 0.8),
    side=st.sampled_from(["call", "put"]),
)
def test_implied_vol_roundtrip_property(S, K, T, r, q, v, side):
    price = bs.price(side, S, K, T, r, q, v)
    vega = S * math.exp(-q * T) * bs.norm_pdf(bs.d1(S, K, T, r, q, v)) * math.sqrt(T)
    if vega < 1e-6 * S:
        # vol is not identifiable here; invert the out-of-the-money side and check it reprices
        otm = "call" if K > S * math.exp((r - q) * T) else "put"
        target = bs.price(otm, S, K, T, r, q, v)
        if target < 1e-300:
            return
        got = bs.implied_vol(target, S, K, T, r, q, otm)
        assert bs.price(otm, S, K, T, r, q, got) == pytest.approx(target, abs=1e-10 * S)
    else:
        assert bs.implied_vol(price, S, K, T, r, q, side) == pytest.approx(v, abs=1e-8)


def test_bs_inputs_dataclass():
    inp = bs.BsInputs(1.0, 1.0, 1.0, 0.0, 0.0, 0.2)
    assert inp.call_price() == bs.call_price(1, 1, 1, 0, 0, 0.2)
    assert inp.put_delta() == bs.put_delta(1, 1, 1, 0, 0, 0.2)
