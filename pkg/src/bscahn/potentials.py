"""Free-energy potentials with first and second derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class Potential:
    """Scalar potential triple (F, F', F''); callbacks accept ndarray input."""

    name: str
    f: Callable
    df: Callable
    d2f: Callable


def double_well(scale: float) -> Potential:
    """``F(u) = scale * (u^2 - 1)^2`` with minima at +-1."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return Potential(
        name=f"double_well(scale={scale})",
        f=lambda u: scale * (u**2 - 1.0) ** 2,
        df=lambda u: 4.0 * scale * u * (u**2 - 1.0),
        d2f=lambda u: 4.0 * scale * (3.0 * u**2 - 1.0),
    )


def zero_potential() -> Potential:
    """Identically zero potential (linear problems, tests)."""
    return Potential("zero", f=lambda u: 0.0 * u, df=lambda u: 0.0 * u,
                     d2f=lambda u: 0.0 * u)


_REGISTRY = {
    "double_well_1_4": lambda: double_well(0.25),
    "double_well_1_8": lambda: double_well(0.125),
    "zero": zero_potential,
}


def by_name(name: str) -> Potential:
    """Look up a potential by its configuration name."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; choices: {sorted(_REGISTRY)}") from None
