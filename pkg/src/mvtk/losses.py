"""Training objectives: discounted Huber track loss and BCE occlusion loss,
their analytic gradients, and a central-difference gradient oracle.

Refinement steps are weighted gamma^(M-m): early, coarse updates count less
than the final one. The occlusion targets are binary with 1 = occluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, ShapeMismatch


@dataclass
class LossConfig:
    gamma: float = 0.8
    huber_delta: float = 6.0  # pixels
    mask_in_frame: bool = False  # restrict the track loss to in-frame ground truth

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfig("gamma must be in (0, 1]")
        if self.huber_delta <= 0:
            raise InvalidConfig("huber_delta must be > 0")


def huber(residual: np.ndarray, delta: float) -> np.ndarray:
    """Huber penalty of the euclidean norm of 2-vector residuals (..., 2):
    quadratic inside ``delta``, linear outside, continuous at the boundary."""
    norm = np.linalg.norm(np.asarray(residual, dtype=np.float64), axis=-1)
    return np.where(norm <= delta, 0.5 * norm**2, delta * (norm - 0.5 * delta))


def huber_grad(residual: np.ndarray, delta: float) -> np.ndarray:
    """d huber / d residual; equals the residual inside the transition and
    its delta-scaled unit vector outside."""
    residual = np.asarray(residual, dtype=np.float64)
    norm = np.linalg.norm(residual, axis=-1, keepdims=True)
    inside = norm <= delta
    safe = np.maximum(norm, 1e-300)
    return np.where(inside, residual, delta * residual / safe)


def _masked_mean(values: np.ndarray, mask) -> float:
    if mask is None:
        return float(values.mean())
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0
    return float(values[mask].sum() / count)


def _step_weights(m_steps: int, gamma: float) -> np.ndarray:
    return gamma ** (m_steps - 1 - np.arange(m_steps))


def _check_states(states, target, trailing: int):
    target = np.asarray(target, dtype=np.float64)
    for s in states:
        if np.asarray(s).shape != target.shape:
            raise ShapeMismatch(
                f"state shape {np.asarray(s).shape} != target shape {target.shape}"
            )
    if trailing and target.ndim < trailing:
        raise ShapeMismatch("target has too few axes")
    return target


def track_loss(states, target, config: LossConfig, in_frame=None) -> float:
    """Discounted sum over refinement steps of the mean Huber error.

    ``states`` are the predicted tracks after steps 1..M. With masking
    enabled the mean runs over ground-truth in-frame points only.
    """
    target = _check_states(states, target, trailing=1)
    mask = in_frame if (config.mask_in_frame and in_frame is not None) else None
    weights = _step_weights(len(states), config.gamma)
    total = 0.0
    for w, state in zip(weights, states):
        total += w * _masked_mean(huber(np.asarray(state) - target, config.huber_delta), mask)
    return float(total)


def track_loss_grads(states, target, config: LossConfig, in_frame=None) -> list[np.ndarray]:
    """Analytic d loss / d state for every refinement step."""
    target = _check_states(states, target, trailing=1)
    mask = in_frame if (config.mask_in_frame and in_frame is not None) else None
    count = target[..., 0].size if mask is None else max(int(np.count_nonzero(mask)), 1)
    weights = _step_weights(len(states), config.gamma)
    grads = []
    for w, state in zip(weights, states):
        g = huber_grad(np.asarray(state) - target, config.huber_delta) * (w / count)
        if mask is not None:
            g = g * mask[..., None]
        grads.append(g)
    return grads


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _bce_with_logits(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    # log(1 + exp(-|x|)) keeps the loss finite for extreme logits
    return np.maximum(logits, 0.0) - logits * target + np.log1p(np.exp(-np.abs(logits)))


def occlusion_loss(states, target, config: LossConfig) -> float:
    """Discounted mean binary cross-entropy of the occlusion logits against
    binary targets (1 = occluded), evaluated in logit space for stability."""
    target = _check_states(states, target, trailing=0)
    if not np.isin(np.unique(target), (0.0, 1.0)).all():
        raise InvalidConfig("occlusion targets must be binary")
    weights = _step_weights(len(states), config.gamma)
    total = 0.0
    for w, state in zip(weights, states):
        total += w * float(_bce_with_logits(np.asarray(state, dtype=np.float64), target).mean())
    return float(total)


def occlusion_loss_grads(states, target, config: LossConfig) -> list[np.ndarray]:
    """Analytic d loss / d logits for every refinement step:
    gamma-weighted (sigmoid(logit) - target) / count."""
    target = _check_states(states, target, trailing=0)
    count = target.size
    weights = _step_weights(len(states), config.gamma)
    return [
        (w / count) * (_sigmoid(np.asarray(state, dtype=np.float64)) - target)
        for w, state in zip(weights, states)
    ]


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function; the
    verification oracle for every analytic gradient in this module."""
    if eps <= 0:
        raise InvalidConfig("eps must be > 0")
    x = np.array(x, dtype=np.float64)  # private copy; perturbed in place below
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        fp = f(x)
        xf[i] = orig - eps
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * eps)
    return grad
