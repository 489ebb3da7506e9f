"""Two-layer dense LIF network with surrogate-gradient BPTT.

The network unrolls over T*E global steps per patch; membrane state always
starts at zero (callers reset between patches by construction). Parameters
live in a plain dict {"w1", "b1", "w2", "b2"} so the optimizer and checkpoint
code can treat them uniformly.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DataValidationError, NonFiniteStateError


@dataclass
class NetworkConfig:
    input_width: int
    output_width: int
    hidden_width: int = 128
    beta: float = 0.9
    threshold: float = 1.0
    surrogate_slope: float = 2.0

    def validate(self):
        for name in ("input_width", "hidden_width", "output_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 <= self.beta <= 1.0):
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.threshold <= 0:
            raise ConfigError("threshold must be > 0")
        if self.surrogate_slope <= 0:
            raise ConfigError("surrogate slope must be > 0")
        return self


def lif_step(u, current, beta, theta):
    """One leaky integrate-and-fire update with reset by subtraction.

    u_pre = beta*u + current; spikes where u_pre >= theta; theta is subtracted
    from spiking membranes.
    """
    u_pre = beta * np.asarray(u, dtype=np.float64) + current
    s = (u_pre >= theta).astype(np.float64)
    return s, u_pre - theta * s


def surrogate_grad(x, alpha=2.0):
    """Derivative stand-in for the spike threshold: (alpha/2) / (1 + (pi*alpha*x/2)^2)."""
    return kernels.surrogate_grad(np.asarray(x, dtype=np.float64), alpha)


def relaxed_spike(x, alpha=2.0):
    """Smooth arctangent threshold whose derivative is ``surrogate_grad``."""
    return kernels.relaxed_spike(np.asarray(x, dtype=np.float64), alpha)


def init_params(config, seed=0):
    """Uniform +-1/sqrt(fan_in) initialization for weights and biases."""
    config.validate()
    rng = np.random.default_rng(seed)
    ni, nh, no = config.input_width, config.hidden_width, config.output_width
    lim1 = 1.0 / np.sqrt(ni)
    lim2 = 1.0 / np.sqrt(nh)
    return {
        "w1": rng.uniform(-lim1, lim1, size=(nh, ni)),
        "b1": rng.uniform(-lim1, lim1, size=nh),
        "w2": rng.uniform(-lim2, lim2, size=(no, nh)),
        "b2": rng.uniform(-lim2, lim2, size=no),
    }


def zero_params(config):
    config.validate()
    ni, nh, no = config.input_width, config.hidden_width, config.output_width
    return {
        "w1": np.zeros((nh, ni)),
        "b1": np.zeros(nh),
        "w2": np.zeros((no, nh)),
        "b2": np.zeros(no),
    }


def _check_input(params, x_seq):
    if x_seq.ndim != 3:
        raise DataValidationError(f"input sequence must be [steps, batch, channels], got {x_seq.shape}")
    if x_seq.shape[2] != params["w1"].shape[1]:
        raise DataValidationError(
            f"input channel count {x_seq.shape[2]} != network input width {params['w1'].shape[1]}"
        )


def forward(params, x_seq, config, record=False):
    """Run the spiking network over a [steps x batch x in] sequence.

    Returns the output spike train [steps x batch x out]; with record=True
    also the internal recordings needed by ``bptt_grads``.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    _check_input(params, x_seq)
    s2, upre1, s1, upre2 = kernels.forward_seq(
        x_seq, params["w1"], params["b1"], params["w2"], params["b2"],
        config.beta, config.threshold, config.surrogate_slope, False,
    )
    if not np.isfinite(upre2).all() or not np.isfinite(upre1).all():
        raise NonFiniteStateError("membrane potentials became non-finite")
    if record:
        return s2, {"upre1": upre1, "s1": s1, "upre2": upre2, "x": x_seq}
    return s2


def continuous_relaxation_forward(params, x_seq, config, record=False):
    """Differentiable twin of ``forward``: the hard threshold is replaced by
    its smooth arctangent squashing everywhere (spikes and reset), so finite
    differences of any downstream scalar are well-defined."""
    x_seq = np.asarray(x_seq, dtype=np.float64)
    _check_input(params, x_seq)
    s2, upre1, s1, upre2 = kernels.forward_seq(
        x_seq, params["w1"], params["b1"], params["w2"], params["b2"],
        config.beta, config.threshold, config.surrogate_slope, True,
    )
    if record:
        return s2, {"upre1": upre1, "s1": s1, "upre2": upre2, "x": x_seq}
    return s2


def backward(params, recorded, gy_seq, config, relaxed=False):
    """Reverse-time gradient accumulation given dL/d(output spikes) per step.

    In spiking mode the reset path is treated as constant and the threshold
    derivative is the surrogate; in relaxed mode the exact gradient of the
    relaxation is returned.
    """
    dw1, db1, dw2, db2 = kernels.backward_seq(
        recorded["x"], recorded["s1"], recorded["upre1"], recorded["upre2"],
        np.asarray(gy_seq, dtype=np.float64),
        params["w1"], params["w2"],
        config.beta, config.threshold, config.surrogate_slope, relaxed,
    )
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def train_to_seq(train):
    """[batch x channels x T x E] -> [T*E x batch x channels] step sequence."""
    b, c, t, e = train.shape
    return np.ascontiguousarray(
        np.transpose(train, (2, 3, 0, 1)).reshape(t * e, b, c), dtype=np.float64
    )


def seq_to_train(seq, t, e):
    """[T*E x batch x channels] -> [batch x channels x T x E]."""
    steps, b, c = seq.shape
    if steps != t * e:
        raise DataValidationError(f"sequence length {steps} != T*E = {t * e}")
    return np.ascontiguousarray(np.transpose(seq.reshape(t, e, b, c), (2, 3, 0, 1)))


def bptt_grads(params, x_train, target, loss, config, relaxed=False,
               pixel_weights=None):
    """Forward + loss + reverse-time backward for one batch.

    x_train: [batch x channels x T x E]; target matches the loss. Returns
    (loss value, gradient dict, output train [batch x out x T x E]).
    """
    b, _, t, e = x_train.shape
    x_seq = train_to_seq(x_train)
    fwd = continuous_relaxation_forward if relaxed else forward
    out_seq, recorded = fwd(params, x_seq, config, record=True)
    y = seq_to_train(out_seq, t, e)
    value, gy = loss.value_and_grad(y, target, pixel_weights)
    gy_seq = train_to_seq(gy)
    grads = backward(params, recorded, gy_seq, config, relaxed=relaxed)
    return value, grads, y
