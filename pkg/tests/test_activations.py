import math

import numpy as np
import pytest

from sdf_forge.activations import (
    Hosc,
    Identity,
    Relu,
    Sine,
    activate,
    activation_from_dict,
    activation_to_dict,
)
from sdf_forge.errors import InputError

from conftest import rel_err


def test_relu_values():
    r = Relu()
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert np.array_equal(activate(r, x), np.array([0.0, 0.0, 0.0, 0.5, 2.0]))


def test_hosc_zero_is_zero():
    for beta in (0.5, 1.0, 7.0):
        assert activate(Hosc(beta_init=beta), 0.0) == 0.0


def test_hosc_at_half_pi_matches_tanh_one():
    # tanh(sin(pi/2)) = tanh(1), evaluated independently via math.tanh
    got = float(activate(Hosc(beta_init=1.0), np.pi / 2))
    assert got == pytest.approx(math.tanh(1.0), rel=1e-15)
    assert got == pytest.approx(0.761594, abs=1e-6)


def test_sine_at_pi_over_omega0_is_zero():
    got = float(activate(Sine(omega0=30.0), np.pi / 30.0))
    assert abs(got) < 1e-12


def test_hosc_is_odd_in_x():
    x = np.linspace(-4.0, 4.0, 41)
    for beta in (0.3, 1.0, 5.0):
        h = Hosc(beta_init=beta)
        assert np.allclose(activate(h, -x), -activate(h, x), atol=1e-15)


def _fd_scalar(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


@pytest.mark.parametrize(
    "act,beta",
    [
        (Identity(), None),
        (Relu(), None),
        (Sine(omega0=30.0), None),
        (Sine(omega0=1.5), None),
        (Hosc(beta_init=1.0), 1.0),
        (Hosc(beta_init=1.0), 3.2),
    ],
)
def test_first_and_second_derivatives_match_finite_differences(act, beta):
    # stay away from the ReLU kink at 0
    xs = np.array([-1.31, -0.42, 0.57, 0.93, 1.88])
    h = 1e-6
    d1_fd = _fd_scalar(lambda v: act.value(v, beta), xs, h)
    d2_fd = _fd_scalar(lambda v: act.d1(v, beta), xs, h)
    assert rel_err(act.d1(xs, beta), d1_fd).max() < 1e-7
    assert rel_err(act.d2(xs, beta), d2_fd).max() < 1e-6


def test_hosc_beta_derivatives_match_finite_differences():
    act = Hosc(beta_init=1.0)
    xs = np.array([-1.31, -0.42, 0.57, 0.93, 1.88])
    beta = 2.3
    h = 1e-6
    dbeta_fd = (act.value(xs, beta + h) - act.value(xs, beta - h)) / (2 * h)
    d1_dbeta_fd = (act.d1(xs, beta + h) - act.d1(xs, beta - h)) / (2 * h)
    assert rel_err(act.d_beta(xs, beta), dbeta_fd).max() < 1e-8
    assert rel_err(act.d1_d_beta(xs, beta), d1_dbeta_fd).max() < 1e-7


def test_untrainable_hosc_uses_beta_init_and_has_no_parameter():
    act = Hosc(beta_init=2.0, beta_trainable=False)
    assert not act.has_beta
    assert float(act.value(np.array(0.7), None)) == pytest.approx(
        math.tanh(2.0 * math.sin(0.7)), rel=1e-15
    )


def test_activation_dict_round_trip():
    for act in (Identity(), Relu(), Sine(omega0=12.5), Hosc(beta_init=0.8, beta_trainable=False)):
        assert activation_from_dict(activation_to_dict(act)) == act


def test_invalid_parameters_rejected():
    with pytest.raises(InputError):
        Sine(omega0=0.0)
    with pytest.raises(InputError):
        Hosc(beta_init=-1.0)
    with pytest.raises(InputError):
        activation_from_dict({"name": "swish"})
