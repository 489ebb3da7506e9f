"""Comparison functions between output spike trains and encoded targets.

All losses operate on output arrays shaped [batch x channels x T x E] and
return both the scalar value and the gradient with respect to the output, so
the backward pass can seed backpropagation through time. Optional per-pixel
weights (shaped [batch x channels x T]) let padded pixels drop out of the
objective.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataValidationError

KINDS = ("latency-mse", "rate-count-mse", "huber", "spike-time-mse")


@dataclass
class LossConfig:
    kind: str = "latency-mse"
    huber_delta: float = 1.0

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.huber_delta <= 0:
            raise ConfigError(f"huber_delta must be > 0, got {self.huber_delta}")
        return self


def _check_same_shape(y, f):
    if y.shape != f.shape:
        raise DataValidationError(f"output shape {y.shape} != target shape {f.shape}")


def _apply_weights(per_element, weights):
    if weights is None:
        return per_element
    return per_element * weights[..., None]


class LatencyMSE:
    """Element-wise squared difference over slots and channels, averaged over
    batch and original time steps."""

    kind = "latency-mse"

    def value_and_grad(self, y, f, weights=None):
        y = np.asarray(y, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        _check_same_shape(y, f)
        b, _, t, _ = y.shape
        norm = b * t
        diff = _apply_weights(y - f, weights)
        value = float(np.sum(diff * diff) / norm)
        grad = 2.0 * diff / norm
        return value, grad

    def value(self, y, f, weights=None):
        return self.value_and_grad(y, f, weights)[0]


class RateCountMSE:
    """Squared difference between the spike count of each exposure window and
    its target count, averaged over batch, channels, and time steps.

    Segments without any positive label use the same low-rate targets as
    everything else; there is no positive-class reweighting.
    """

    kind = "rate-count-mse"

    def value_and_grad(self, y, target_counts, weights=None):
        y = np.asarray(y, dtype=np.float64)
        f = np.asarray(target_counts, dtype=np.float64)
        if y.shape[:3] != f.shape:
            raise DataValidationError(
                f"output window shape {y.shape[:3]} != target shape {f.shape}"
            )
        b, c, t = f.shape
        norm = b * c * t
        counts = y.sum(axis=-1)
        diff = counts - f
        if weights is not None:
            diff = diff * weights
        value = float(np.sum(diff * diff) / norm)
        grad = np.broadcast_to((2.0 * diff / norm)[..., None], y.shape).copy()
        return value, grad

    def value(self, y, f, weights=None):
        return self.value_and_grad(y, f, weights)[0]


class HuberLoss:
    """Element-wise Huber: quadratic within +-delta, linear outside; summed
    over elements, averaged over the batch."""

    kind = "huber"

    def __init__(self, delta=1.0):
        if delta <= 0:
            raise ConfigError(f"huber delta must be > 0, got {delta}")
        self.delta = float(delta)

    def value_and_grad(self, y, f, weights=None):
        y = np.asarray(y, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        _check_same_shape(y, f)
        b = y.shape[0]
        d = _apply_weights(y - f, weights)
        absd = np.abs(d)
        small = absd <= self.delta
        per = np.where(small, 0.5 * d * d, self.delta * (absd - 0.5 * self.delta))
        value = float(per.sum() / b)
        grad = np.where(small, d, self.delta * np.sign(d)) / b
        return value, grad

    def value(self, y, f, weights=None):
        return self.value_and_grad(y, f, weights)[0]


class SpikeTimeMSE:
    """Squared difference of first-spike times, averaged over batch and time
    steps; silent channels count as the window length E.

    The first-spike time is extracted differentiably through the recurrence
    ``T_j = j*y_j + (1-y_j)*T_{j+1}`` with ``T_E = E`` (so ``tau = T_0``),
    which equals the first spike index on binary trains. The per-slot partial
    is ``d tau/d y_j = P_j * (j - T_{j+1})`` with ``P_j`` the product of
    ``(1 - y)`` before j, so gradients reach every slot up to the first spike.
    Flagged pixels target time 0, background the out-of-window value E, making
    silence on a flagged pixel cost E^2 rather than the flat unit the
    indicator form charges.
    """

    kind = "spike-time-mse"

    def value_and_grad(self, y, f, weights=None):
        y = np.asarray(y, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        _check_same_shape(y, f)
        b, _, t, e = y.shape
        norm = b * t

        keep = 1.0 - y
        t_next = np.empty_like(y)              # T_{j+1} per slot j
        tail = np.full(y.shape[:-1], float(e))
        for j in range(e - 1, -1, -1):
            t_next[..., j] = tail
            tail = j * y[..., j] + keep[..., j] * tail
        tau = tail
        prefix = np.cumprod(keep, axis=-1)
        p = np.concatenate([np.ones_like(y[..., :1]), prefix[..., :-1]], axis=-1)

        # targets: time 0 where the first slot fires, E otherwise
        f_time = np.where(f[..., 0] > 0.5, 0.0, float(e))
        diff = tau - f_time
        if weights is not None:
            diff = diff * weights
        value = float(np.sum(diff * diff) / norm)

        idx = np.arange(e, dtype=np.float64)
        dtau = p * (idx - t_next)
        grad = (2.0 * diff / norm)[..., None] * dtau
        if weights is not None:
            grad = grad * weights[..., None]
        return value, grad

    def value(self, y, f, weights=None):
        return self.value_and_grad(y, f, weights)[0]


def make_loss(config):
    config.validate()
    if config.kind == "latency-mse":
        return LatencyMSE()
    if config.kind == "rate-count-mse":
        return RateCountMSE()
    if config.kind == "huber":
        return HuberLoss(config.huber_delta)
    return SpikeTimeMSE()


def loss_for_method(method, huber_delta=1.0, latency_kind="spike-time-mse"):
    """The comparison function paired with each encoding scheme.

    Latency-family schemes (latency and the step-forward modes) train on the
    first-spike-time objective by default: it penalizes silence on flagged
    pixels by E^2 and any early spike far less, which matches how the decoder
    reads the train. Pass ``latency_kind="latency-mse"`` for the element-wise
    indicator form instead.
    """
    if method == "rate":
        return RateCountMSE()
    if method == "delta":
        return HuberLoss(huber_delta)
    return make_loss(LossConfig(kind=latency_kind, huber_delta=huber_delta))
