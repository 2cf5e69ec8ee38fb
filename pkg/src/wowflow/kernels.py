"""Kernels between point clouds built on Sliced-Wasserstein distances.

Every kernel is a scalar profile of SW_2^2 (or SW_1 for Laplace), so its
Wasserstein gradient in the first argument is the profile's derivative times
the gradient of the underlying sliced distance.

    gaussian  K = exp(-SW_2^2 / (2h))
    laplace   K = exp(-SW_1 / h)
    riesz     K = -SW_2^r,            0 < r < 2
    imq       K = (c + SW_2^2)^(-1/2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import PointCloud
from .sliced import ProjectionSet, sw1_and_sign_grad, sw2_squared, sw_potential_grad

_PARAMS = {"riesz": "r", "gaussian": "h", "laplace": "h", "imq": "c"}


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    param: float
    epsilon_singularity: float = 1e-12

    def __post_init__(self):
        if self.variant not in _PARAMS:
            raise ValueError(f"unknown kernel {self.variant!r}; choose from {sorted(_PARAMS)}")
        p = float(self.param)
        object.__setattr__(self, "param", p)
        if not math.isfinite(p):
            raise ValueError("kernel parameter must be finite")
        if self.variant == "riesz" and not 0.0 < p < 2.0:
            raise ValueError(f"riesz exponent r must lie in (0, 2), got {p}")
        if self.variant != "riesz" and p <= 0.0:
            raise ValueError(f"{self.variant} parameter {_PARAMS[self.variant]} must be positive, got {p}")
        if not self.epsilon_singularity > 0:
            raise ValueError("epsilon_singularity must be positive")

    @property
    def uses_sw1(self) -> bool:
        return self.variant == "laplace"

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``riesz:r=1``, ``gaussian:h=0.05``, ``laplace:h=0.1`` or ``imq:c=1``."""
        name, _, rest = text.strip().partition(":")
        name = name.strip().lower()
        if name not in _PARAMS:
            raise ValueError(f"unknown kernel {name!r} in {text!r}")
        expected = _PARAMS[name]
        if not rest:
            raise ValueError(f"kernel {name!r} needs a parameter, e.g. {name}:{expected}=1")
        key, eq, value = rest.partition("=")
        if not eq or key.strip() != expected:
            raise ValueError(f"kernel {name!r} takes parameter {expected!r}, got {rest!r}")
        try:
            param = float(value)
        except ValueError:
            raise ValueError(f"cannot parse {value!r} as a number") from None
        return cls(name, param)

    def __str__(self):
        return f"{self.variant}:{_PARAMS[self.variant]}={self.param!r}"

    # scalar profile ---------------------------------------------------

    def value_from(self, sw2sq: float, sw1: float | None = None) -> float:
        """Kernel value from SW_2^2 (and SW_1 for the Laplace kernel)."""
        v, p = self.variant, self.param
        if v == "gaussian":
            return math.exp(-sw2sq / (2.0 * p))
        if v == "riesz":
            return -(max(sw2sq, 0.0) ** (p / 2.0))
        if v == "imq":
            return (p + sw2sq) ** -0.5
        return math.exp(-sw1 / p)

    def grad_coefficient(self, sw2sq: float, sw1: float | None = None) -> float:
        """Factor multiplying the base gradient in the kernel's Wasserstein gradient.

        The base gradient is that of SW_2^2 / 2, or of SW_1 for the Laplace kernel.
        """
        v, p = self.variant, self.param
        if v == "gaussian":
            return -math.exp(-sw2sq / (2.0 * p)) / p
        if v == "riesz":
            if math.sqrt(max(sw2sq, 0.0)) < self.epsilon_singularity:
                return 0.0
            return -p * sw2sq ** ((p - 2.0) / 2.0)
        if v == "imq":
            return -((p + sw2sq) ** -1.5)
        return -math.exp(-sw1 / p) / p


def kernel_eval(spec: KernelSpec, mu: PointCloud, nu: PointCloud, proj: ProjectionSet) -> float:
    if spec.uses_sw1:
        sw1, _ = sw1_and_sign_grad(mu, nu, proj)
        return spec.value_from(0.0, sw1)
    return spec.value_from(sw2_squared(mu, nu, proj))


def kernel_grad(spec: KernelSpec, mu: PointCloud, nu: PointCloud, proj: ProjectionSet) -> np.ndarray:
    """Wasserstein gradient of ``mu -> K(mu, nu)`` at the points of mu, shape (n, d)."""
    if spec.uses_sw1:
        sw1, g = sw1_and_sign_grad(mu, nu, proj)
        return spec.grad_coefficient(0.0, sw1) * g
    s = sw2_squared(mu, nu, proj)
    coef = spec.grad_coefficient(s)
    if coef == 0.0:
        return np.zeros_like(mu.points)
    return coef * sw_potential_grad(mu, nu, proj)
