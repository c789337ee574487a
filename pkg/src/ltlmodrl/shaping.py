"""Base reward, state-dependent discount and potential-based shaping."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .automaton import Ldgba
from .epmdp import ProductState, is_accepting


@dataclass(frozen=True)
class RewardParams:
    r_F: float = 0.99
    gamma_F: float = 0.9999
    eta_Phi: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r_F < 1.0:
            raise ValueError(f"r_F must lie in (0, 1), got {self.r_F}")
        if not 0.0 < self.gamma_F < 1.0:
            raise ValueError(f"gamma_F must lie in (0, 1), got {self.gamma_F}")
        if self.eta_Phi <= 0:
            raise ValueError(f"eta_Phi must be positive, got {self.eta_Phi}")
        if self.ratio >= 1.0:
            warnings.warn(
                f"(1-gamma_F)/(1-r_F) = {self.ratio:.3g} >= 1; accepting visits are discounted less than ordinary steps",
                stacklevel=2,
            )

    @property
    def ratio(self) -> float:
        """``(1 - gamma_F) / (1 - r_F)``; should be small."""
        return (1.0 - self.gamma_F) / (1.0 - self.r_F)


def base_reward(x: ProductState, accepting_sets: Sequence[frozenset], params: RewardParams) -> float:
    return 1.0 - params.r_F if is_accepting(x, accepting_sets) else 0.0


def discount(x: ProductState, accepting_sets: Sequence[frozenset], params: RewardParams) -> float:
    return params.r_F if is_accepting(x, accepting_sets) else params.gamma_F


def suffix_returns(accepting: Sequence[bool], params: RewardParams) -> np.ndarray:
    """Discounted return of every suffix of a finite run (truncated after the last state).

    ``out[t] = R(x_t) + gamma(x_t) * out[t + 1]`` with ``out[len] = 0``.
    """
    n = len(accepting)
    out = np.zeros(n + 1)
    reward = 1.0 - params.r_F
    for t in range(n - 1, -1, -1):
        if accepting[t]:
            out[t] = reward + params.r_F * out[t + 1]
        else:
            out[t] = params.gamma_F * out[t + 1]
    return out


def return_of_run(run: Sequence[ProductState], accepting_sets: Sequence[frozenset], params: RewardParams) -> float:
    """Truncated discounted return; the omitted tail is below ``gamma_F ** len(run)``."""
    flags = [is_accepting(x, accepting_sets) for x in run]
    return float(suffix_returns(flags, params)[0])


def truncation_bound(length: int, params: RewardParams) -> float:
    return params.gamma_F ** length


@dataclass(frozen=True)
class ShapingState:
    T_Phi: frozenset
    T_Phi0: frozenset

    @classmethod
    def initial(cls, a: Ldgba) -> "ShapingState":
        t0 = frozenset(a.states) - {a.initial} - a.sinks
        return cls(t0, t0)


def fphi_update(q_next: str, shaping: ShapingState, round_flag: bool) -> ShapingState:
    if round_flag:
        return ShapingState(shaping.T_Phi0 - {q_next}, shaping.T_Phi0)
    if q_next in shaping.T_Phi:
        return ShapingState(shaping.T_Phi - {q_next}, shaping.T_Phi0)
    return shaping


def potential(x: ProductState, shaping: ShapingState, params: RewardParams) -> float:
    return params.eta_Phi * (1.0 - params.r_F) if x.q in shaping.T_Phi else 0.0


def shaped_reward(
    x: ProductState,
    x_next: ProductState,
    shaping_pre: ShapingState,
    accepting_sets: Sequence[frozenset],
    params: RewardParams,
) -> float:
    """``R(x) + gamma(x) * Phi(x') - Phi(x)``, both potentials under ``shaping_pre``."""
    return (
        base_reward(x, accepting_sets, params)
        + discount(x, accepting_sets, params) * potential(x_next, shaping_pre, params)
        - potential(x, shaping_pre, params)
    )
