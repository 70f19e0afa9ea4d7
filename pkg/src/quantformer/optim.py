"""Adam optimizer over flat lists of parameter arrays."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError


@dataclass
class AdamState:
    """First/second-moment accumulators plus hyperparameters.

    Defaults follow the standard recommendation: beta1=0.9, beta2=0.999,
    eps=1e-8. One accumulator pair per parameter, shape-matched.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ContractError("learning rate must be > 0")
        state = cls(learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update.

    ``params`` and ``grads`` are aligned lists of float64 arrays. Returns
    the list of updated parameter arrays; the accumulators and step
    counter inside ``state`` are advanced in place.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        flat_p, flat_m, flat_v = p.ravel(), state.m[i].ravel(), state.v[i].ravel()
        p_new, m_new, v_new = kernels.adam_update(
            flat_p, np.ascontiguousarray(g.ravel()), flat_m, flat_v,
            state.learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2,
        )
        state.m[i] = m_new.reshape(p.shape)
        state.v[i] = v_new.reshape(p.shape)
        new_params.append(p_new.reshape(p.shape))
    return new_params
