import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from codecast.errors import ConfigError
from codecast.rate_control import RateController

from oracles import controller_fixed_point_loss, controller_replay

events = st.lists(st.sampled_from(["send", "loss"]), max_size=400)


def apply(ctrl, evs):
    for e in evs:
        if e == "send":
            ctrl.on_codeword_sent()
        else:
            ctrl.on_loss_report(1)
    return ctrl.r


def test_send_formula():
    c = RateController(100.0, gamma=0.02, alpha=0.1)
    assert c.on_codeword_sent() == pytest.approx(99.8)


def test_closed_form_decay():
    c = RateController(500.0)
    for _ in range(300):
        c.on_codeword_sent()
    assert c.r == pytest.approx(500 * (1 - 0.002) ** 300, rel=1e-12)


def test_loss_formula():
    c = RateController(100.0)
    assert c.on_loss_report(1) == pytest.approx(110.0)


def test_batch_loss():
    c = RateController(100.0)
    c.on_loss_report(3)
    assert c.r == pytest.approx(100 * 1.1 ** 3)


def test_cap_and_floor():
    c = RateController(1e6, r_max=1e6)
    assert c.on_loss_report(1) == 1e6
    c = RateController(1.0, r_min=1.0)
    assert c.on_codeword_sent() == 1.0


def test_silence_drives_to_floor_exactly():
    c = RateController(1000.0, r_min=2.0)
    for _ in range(10_000):
        c.on_codeword_sent()
    assert c.r == 2.0


def test_pacing():
    c = RateController(1000.0)
    assert c.next_send_time(3.0) == pytest.approx(3.001)
    c.on_loss_report(1)
    assert c.next_send_time(3.0) == pytest.approx(3.0 + 1 / 1100)


@pytest.mark.parametrize("kw", [dict(gamma=0), dict(gamma=1), dict(alpha=0), dict(r_min=0),
                                dict(r_min=5, r_max=4), dict(tau=-1)])
def test_invalid(kw):
    with pytest.raises(ConfigError):
        RateController(100.0, **kw)


def test_zero_events_rejected():
    with pytest.raises(ValueError):
        RateController().on_loss_report(0)


@given(events, st.floats(1.0, 1e5))
def test_matches_replay(evs, r0):
    assert apply(RateController(r0), evs) == pytest.approx(controller_replay(evs, r0), rel=1e-9)


@given(events, st.integers(0, 400), st.floats(1.0, 1e5))
def test_monotone_in_losses(evs, pos, r0):
    more = list(evs)
    more.insert(min(pos, len(more)), "loss")
    assert apply(RateController(r0), more) >= apply(RateController(r0), evs) * (1 - 1e-12)


def test_fixed_point_drift():
    # with loss probability gamma per codeword, the expected multiplicative
    # change per codeword is (1 - a*g) * (1 + a*g) = 1 - (a*g)^2
    a, g = 0.1, 0.02
    c = RateController(1000.0, gamma=g, alpha=a)
    c.on_codeword_sent()
    down = c.r / 1000.0
    c.on_loss_report(1)
    up = c.r / (1000.0 * down)
    expected = down * (1 - g) + down * up * g
    assert expected == pytest.approx(1 - (a * g) ** 2, abs=1e-12)
    assert abs(expected - 1) <= 0.005


def test_geometric_fixed_point():
    # the log-rate is stationary at p* = -log(1-ag)/log(1+a), slightly above gamma
    p = controller_fixed_point_loss(0.02, 0.1)
    assert 0.02 < p < 0.0215
    # losses spread evenly at frequency p*: the rate only wobbles
    r = RateController(1000.0)
    lo = hi = 1000.0
    for n in range(1, 200_001):
        r.on_codeword_sent()
        if int(n * p) > int((n - 1) * p):
            r.on_loss_report(1)
        lo, hi = min(lo, r.r), max(hi, r.r)
    assert 0.9 < lo / 1000.0 and hi / 1000.0 < 1.1
