"""Parameter update rules: SGD with momentum and Adam, plus step-decay.

Optimizers work on named parameter dicts so a bad gradient can be reported
by name and so state round-trips through checkpoints for exact resumption.
"""

from __future__ import annotations

import numpy as np

from .tensor import NumericError, Tensor

__all__ = ["StepDecay", "SGD", "Adam"]


class StepDecay:
    """Learning rate multiplied by ``factor`` every ``every`` epochs."""

    def __init__(self, initial: float, factor: float = 0.1, every: int = 50):
        self.initial = initial
        self.factor = factor
        self.every = every

    def at(self, epoch: int) -> float:
        return self.initial * self.factor ** (epoch // self.every)


class _Optimizer:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = dict(params)
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _check_grad(self, name: str, p: Tensor) -> np.ndarray | None:
        if p.grad is None:
            return None
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        return p.grad

    def step(self) -> None:
        raise NotImplementedError


class SGD(_Optimizer):
    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self._velocity = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            g = self._check_grad(name, p)
            if g is None:
                continue
            if self.momentum:
                v = self._velocity[name]
                v *= self.momentum
                v += g
                g = v
            p.data = p.data - self.lr * g

    def state(self) -> dict[str, np.ndarray]:
        return {f"velocity/{k}": v.copy() for k, v in self._velocity.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k in self._velocity:
            self._velocity[k] = np.asarray(state[f"velocity/{k}"], dtype=self._velocity[k].dtype).copy()


class Adam(_Optimizer):
    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = self._check_grad(name, p)
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([self.t], dtype=np.float32)}
        out.update({f"m/{k}": v.copy() for k, v in self._m.items()})
        out.update({f"v/{k}": v.copy() for k, v in self._v.items()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(np.asarray(state["step"]).reshape(-1)[0])
        for k in self._m:
            self._m[k] = np.asarray(state[f"m/{k}"], dtype=self._m[k].dtype).copy()
            self._v[k] = np.asarray(state[f"v/{k}"], dtype=self._v[k].dtype).copy()
