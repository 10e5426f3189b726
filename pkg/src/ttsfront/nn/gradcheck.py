"""Central finite-difference checks of analytic gradients.

The module under test is copied to float64 so the oracle's truncation and
round-off error stays far below the 1e-4 tolerance used everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .core import Module

FD_STEP = 1e-4
# Gradients smaller than this are compared absolutely rather than relatively.
REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_err: float = 0.0
    worst: str = ""
    worst_index: Tuple[int, ...] = ()
    per_tensor: Dict[str, float] = field(default_factory=dict)
    n_checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def record(self, name: str, index, analytic: float, numeric: float) -> None:
        denom = max(abs(analytic), abs(numeric), REL_FLOOR)
        err = abs(analytic - numeric) / denom
        self.n_checked += 1
        self.per_tensor[name] = max(self.per_tensor.get(name, 0.0), err)
        if err > self.max_rel_err:
            self.max_rel_err = err
            self.worst = name
            self.worst_index = tuple(int(i) for i in index)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} (tol {self.tolerance:g}) "
                f"worst={self.worst}{list(self.worst_index)} checked={self.n_checked}")


def _indices(shape, limit: Optional[int], rng: np.random.Generator):
    size = int(np.prod(shape, dtype=np.int64))
    flat = np.arange(size) if limit is None or size <= limit else rng.choice(size, limit, replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def check_scalar_function(
    fn: Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
    inputs: Dict[str, np.ndarray],
    tolerance: float = 1e-4,
    eps: float = FD_STEP,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Check ``fn(inputs) -> (value, grads)`` against central differences.

    Only the keys present in the returned ``grads`` are checked.
    """
    rng = np.random.default_rng(seed)
    work = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    _, grads = fn(work)
    report = GradCheckReport(tolerance)
    for name, grad in grads.items():
        x = work[name]
        for idx in _indices(x.shape, max_entries, rng):
            orig = x[idx]
            x[idx] = orig + eps
            plus, _ = fn(work)
            x[idx] = orig - eps
            minus, _ = fn(work)
            x[idx] = orig
            report.record(name, idx, float(grad[idx]), (plus - minus) / (2 * eps))
    return report


def gradient_check(
    module: Module,
    x,
    tolerance: float = 1e-4,
    eps: float = FD_STEP,
    max_entries: Optional[int] = None,
    seed: int = 0,
    check_input: bool = True,
) -> GradCheckReport:
    """Compare a module's backward pass with finite differences.

    The scalar probed is ``sum(forward(x) * r)`` for a fixed random ``r``, so
    every output element contributes. Integer inputs (embedding ids) are not
    differentiated.
    """
    rng = np.random.default_rng(seed)
    m = module.astype(np.float64)
    x = np.asarray(x)
    differentiable = check_input and np.issubdtype(x.dtype, np.floating)
    if np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)

    y = m.forward(x)
    probe = rng.standard_normal(y.shape)

    def objective() -> float:
        return float(np.sum(m.forward(x) * probe))

    m.zero_grad()
    m.forward(x)
    dx = m.backward(probe)
    report = GradCheckReport(tolerance)
    for name, p in m.named_params():
        analytic = p.grad.copy()
        for idx in _indices(p.data.shape, max_entries, rng):
            orig = p.data[idx]
            p.data[idx] = orig + eps
            plus = objective()
            p.data[idx] = orig - eps
            minus = objective()
            p.data[idx] = orig
            report.record(name, idx, float(analytic[idx]), (plus - minus) / (2 * eps))
    if differentiable:
        for idx in _indices(x.shape, max_entries, rng):
            orig = x[idx]
            x[idx] = orig + eps
            plus = objective()
            x[idx] = orig - eps
            minus = objective()
            x[idx] = orig
            report.record("input", idx, float(dx[idx]), (plus - minus) / (2 * eps))
    return report
