"""Activation families for the SDF decoder.

Each activation exposes its value plus first and second derivatives in the
pre-activation, so spatial gradients of the network can be computed in
closed form and trained against. The oscillating-tanh activation
tanh(beta*sin(x)) additionally exposes derivatives in its sharpness beta,
which may itself be a trainable parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Identity:
    name = "identity"
    has_beta = False

    def value(self, s, beta=None):
        return s

    def d1(self, s, beta=None):
        return np.ones_like(s)

    def d2(self, s, beta=None):
        return np.zeros_like(s)


@dataclass(frozen=True)
class Relu:
    name = "relu"
    has_beta = False

    def value(self, s, beta=None):
        return np.maximum(s, 0.0)

    def d1(self, s, beta=None):
        return (s > 0).astype(np.float64)

    def d2(self, s, beta=None):
        return np.zeros_like(s)


@dataclass(frozen=True)
class Sine:
    """sin(omega0 * s); omega0 controls representable frequency content."""

    omega0: float = 30.0
    name = "sine"
    has_beta = False

    def __post_init__(self):
        if not self.omega0 > 0:
            raise InputError(f"omega0 must be positive, got {self.omega0}")

    def value(self, s, beta=None):
        return np.sin(self.omega0 * s)

    def d1(self, s, beta=None):
        return self.omega0 * np.cos(self.omega0 * s)

    def d2(self, s, beta=None):
        return -(self.omega0**2) * np.sin(self.omega0 * s)


@dataclass(frozen=True)
class Hosc:
    """tanh(beta * sin(s)); beta sharpens the wave toward a square signal.

    When ``beta_trainable`` the live beta comes from the parameter store and
    is passed in by the caller; otherwise ``beta_init`` is used throughout.
    """

    beta_init: float = 1.0
    beta_trainable: bool = True
    name = "hosc"

    def __post_init__(self):
        if not self.beta_init > 0:
            raise InputError(f"beta_init must be positive, got {self.beta_init}")

    @property
    def has_beta(self):
        return self.beta_trainable

    def _beta(self, beta):
        return self.beta_init if beta is None else beta

    def value(self, s, beta=None):
        return np.tanh(self._beta(beta) * np.sin(s))

    def d1(self, s, beta=None):
        b = self._beta(beta)
        t = np.tanh(b * np.sin(s))
        return b * np.cos(s) * (1.0 - t * t)

    def d2(self, s, beta=None):
        b = self._beta(beta)
        sin_s = np.sin(s)
        cos_s = np.cos(s)
        t = np.tanh(b * sin_s)
        sech2 = 1.0 - t * t
        return -b * sin_s * sech2 - 2.0 * b * b * cos_s * cos_s * t * sech2

    def d_beta(self, s, beta=None):
        t = np.tanh(self._beta(beta) * np.sin(s))
        return np.sin(s) * (1.0 - t * t)

    def d1_d_beta(self, s, beta=None):
        b = self._beta(beta)
        sin_s = np.sin(s)
        t = np.tanh(b * sin_s)
        return np.cos(s) * (1.0 - t * t) * (1.0 - 2.0 * b * t * sin_s)


ACTIVATION_NAMES = {"identity": Identity, "relu": Relu, "sine": Sine, "hosc": Hosc}


def activate(kind, x, beta=None):
    """Evaluate one activation at x (Hosc falls back to its beta_init)."""
    return kind.value(np.asarray(x, dtype=np.float64), beta)


def activation_to_dict(kind) -> dict:
    d = {"name": kind.name}
    if isinstance(kind, Sine):
        d["omega0"] = kind.omega0
    elif isinstance(kind, Hosc):
        d["beta_init"] = kind.beta_init
        d["beta_trainable"] = kind.beta_trainable
    return d


def activation_from_dict(d: dict):
    name = d.get("name")
    if name == "identity":
        return Identity()
    if name == "relu":
        return Relu()
    if name == "sine":
        return Sine(omega0=float(d["omega0"]))
    if name == "hosc":
        return Hosc(beta_init=float(d["beta_init"]), beta_trainable=bool(d["beta_trainable"]))
    raise InputError(f"unknown activation {name!r}")
