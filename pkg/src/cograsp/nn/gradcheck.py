"""Central finite-difference gradient checking for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["numeric_gradient", "relative_error", "check_gradients"]


def numeric_gradient(f: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to every entry of ``t``."""
    g = np.zeros_like(t.data)
    flat, gflat = t.data.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f().item()
        flat[k] = orig - h
        fm = f().item()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Euclidean norm; 0 when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Largest relative error between backprop and finite differences over ``params``."""
    for p in params:
        p.grad = None
    f().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        worst = max(worst, relative_error(analytic, numeric_gradient(f, p, h)))
    return worst
