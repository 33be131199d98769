"""Finite-difference gradient verification.

The oracle is central differences of the forward pass evaluated in double
precision, whatever the engine precision under test; it never touches the
tape, so it stays independent of the backward rules it checks. Comparing
single-precision tape gradients against the double-precision oracle bounds
the engine's own error rather than the oracle's noise.
"""

from __future__ import annotations

import numpy as np

from .tensor import Graph, Tensor, default_dtype, set_default_dtype

__all__ = ["numeric_gradient", "check_gradients", "relative_error"]


def numeric_gradient(fn, args: list[np.ndarray], wrt: int, step: float = 1e-6) -> np.ndarray:
    """Central-difference d fn/d args[wrt]; fn maps float64 arrays to a float."""
    x = np.asarray(args[wrt], dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        h = step * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(*[x if j == wrt else args[j] for j in range(len(args))])
        flat[i] = orig - h
        fm = fn(*[x if j == wrt else args[j] for j in range(len(args))])
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    den = np.maximum(1.0, np.abs(a) + np.abs(b))
    return float((num / den).max()) if num.size else 0.0


def check_gradients(build_loss, arrays: list[np.ndarray], tol: float | None = None) -> float:
    """Compare tape gradients of ``build_loss`` against finite differences.

    ``build_loss`` maps Tensors to a scalar Tensor and must be a pure function
    of them. Gradients are recorded at the active precision; the oracle runs
    in float64. Returns the worst relative error over all inputs; raises
    AssertionError when a tolerance is given and exceeded.
    """
    active = "float32" if default_dtype() == np.float32 else "float64"
    if tol is None:
        tol = 1e-3 if active == "float32" else 1e-6
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Graph() as g:
        loss = build_loss(*tensors)
        g.backward(loss)

    def forward(*vals: np.ndarray) -> float:
        set_default_dtype("float64")
        try:
            return build_loss(*[Tensor(v) for v in vals]).item()
        finally:
            set_default_dtype(active)

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(forward, [t.data.astype(np.float64) for t in tensors], wrt=i)
        worst = max(worst, relative_error(analytic, numeric))
    assert worst < tol, f"gradient check failed: relative error {worst:.3e} >= {tol:.1e}"
    return worst
