"""Central finite-difference gradient checking.

Used both by the test suite and by the ``verify`` CLI command. Checks
run in float64; float32 has too little headroom for h=1e-5.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_gradient(f: Callable[[Sequence[np.ndarray]], float], arrays: list[np.ndarray],
                     index: int, h: float = 1e-5) -> np.ndarray:
    """d f / d arrays[index] by central differences, one element at a time."""
    x = arrays[index]
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(arrays)
        flat[i] = orig - h
        fm = f(arrays)
        flat[i] = orig
        grad.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return grad


def check_gradients(build: Callable[[Sequence[Tensor]], Tensor], arrays: list[np.ndarray],
                    h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Compare reverse-mode gradients of ``build`` against finite differences.

    ``build`` maps a list of Tensors to a scalar loss Tensor. All arrays
    must be float64. Returns the worst relative error; raises AssertionError
    with the offending input index when the tolerance is exceeded.
    """
    for a in arrays:
        assert a.dtype == np.float64, "gradient checks require float64 inputs"
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(tensors)
    loss.backward()

    def f(arrs):
        with_np = [Tensor(a) for a in arrs]
        return float(build(with_np).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(f, [a.copy() for a in arrays], i, h=h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol / rtol)
        err = float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
        worst = max(worst, err)
        if not np.allclose(analytic, numeric, rtol=rtol, atol=atol):
            raise AssertionError(
                f"gradient mismatch on input {i}: max rel err {err:.3e} "
                f"(analytic norm {np.linalg.norm(analytic):.3e}, "
                f"numeric norm {np.linalg.norm(numeric):.3e})")
    return worst


def scalarize(build_op: Callable[[Sequence[Tensor]], Tensor], arrays: list[np.ndarray],
              rng: np.random.Generator) -> Callable[[Sequence[Tensor]], Tensor]:
    """Turn an op builder with arbitrary-shape output into a scalar-loss builder.

    Projects the output onto a fixed random weighting so every output
    element influences the loss; otherwise the check would only see
    Jacobian row sums.
    """
    probe = build_op([Tensor(a) for a in arrays])
    weights = Tensor(rng.standard_normal(probe.shape))
    return lambda ts: (build_op(ts) * weights).sum()
