"""Spike encoders and decoders for spectrogram columns.

Six schemes: latency, rate, delta-modulation, and three step-forward exposure
modes (first / direct / latency). Every encoder maps a [F x T] value grid in
[0, 1] to a binary train [channels x T x E]; the matching target encoder maps
a boolean mask to the supervision signal and the decoder maps network output
spikes back to a predicted mask plus a per-pixel score in [0, 1].

Polarity-coded schemes (delta, step-forward) double the channel count: the
first F channels carry positive spikes, the last F negative ones.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataValidationError

METHODS = ("latency", "rate", "delta", "sf-first", "sf-direct", "sf-latency")
SF_MODES = {"sf-first": "first", "sf-direct": "direct", "sf-latency": "latency"}


@dataclass
class SpikeTrain:
    """Binary train shaped [channels x original_time_steps x exposure_steps]."""

    spikes: np.ndarray
    exposure: int

    def __post_init__(self):
        self.spikes = np.asarray(self.spikes)
        if self.spikes.ndim != 3:
            raise DataValidationError(f"spike train must be 3-D, got {self.spikes.shape}")
        if self.spikes.shape[-1] != self.exposure:
            raise DataValidationError(
                f"exposure axis {self.spikes.shape[-1]} != declared exposure {self.exposure}"
            )
        vals = np.unique(self.spikes)
        if not np.isin(vals, (0, 1)).all():
            raise DataValidationError("spike train entries must be 0 or 1")


@dataclass
class EncodingConfig:
    method: str = "latency"
    exposure: int = 6
    sf_threshold: float = 0.1
    delta_threshold: float = 0.1
    rate_high: float = 0.8
    rate_low: float = 0.2
    rate_decode_threshold: float = 0.75
    rng_seed: int = 0

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown encoding method {self.method!r}")
        if not (1 <= self.exposure <= 64):
            raise ConfigError(f"exposure must be in [1, 64], got {self.exposure}")
        if self.method == "delta" and self.exposure != 1:
            raise ConfigError("delta-modulation runs with exposure 1")
        if self.method in ("latency", "sf-first", "sf-latency") and self.exposure < 2:
            raise ConfigError(f"{self.method} needs exposure >= 2 for a background slot")
        for name in ("sf_threshold", "delta_threshold", "rate_high",
                     "rate_low", "rate_decode_threshold"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must be in (0, 1), got {v}")
        return self


def _check_unit_range(values, what):
    x = np.asarray(values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataValidationError(f"{what} contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise DataValidationError(f"{what} must lie in [0, 1]")
    return x


# ---------------------------------------------------------------------------
# latency

def encode_latency(values, exposure):
    """One spike per pixel at slot round((1 - x) * (E - 1)); x=1 fires first."""
    if exposure < 2:
        raise ConfigError("latency encoding needs exposure >= 2")
    x = _check_unit_range(values, "latency input")
    idx = np.rint((1.0 - x) * (exposure - 1)).astype(np.intp)
    out = np.zeros(x.shape + (exposure,), dtype=np.uint8)
    np.put_along_axis(out, idx[..., None], 1, axis=-1)
    return out


def encode_target_latency(flags, exposure):
    """Flagged pixels target slot 0, background the final slot."""
    if exposure < 2:
        raise ConfigError("latency target needs exposure >= 2")
    f = np.asarray(flags, dtype=bool)
    out = np.zeros(f.shape + (exposure,), dtype=np.float64)
    out[..., 0] = f
    out[..., exposure - 1] = ~f
    return out


def decode_latency(train, exposure):
    """Flag a pixel iff its first spike lands before the final slot.

    Score is normalized earliness (E-1 - t_first)/(E-1); silent pixels and
    final-slot spikes score 0. With exposure 1 every slot is final, so
    everything decodes to background.
    """
    t = np.asarray(train)
    if exposure < 2:
        shape = t.shape[:-1]
        return np.zeros(shape, dtype=bool), np.zeros(shape, dtype=np.float64)
    fired = t.any(axis=-1)
    first = np.argmax(t != 0, axis=-1)
    flags = fired & (first < exposure - 1)
    scores = np.where(fired, (exposure - 1 - first) / (exposure - 1), 0.0)
    return flags, scores


# ---------------------------------------------------------------------------
# rate

def encode_rate(values, exposure, rng):
    """Each exposure slot fires independently with probability x."""
    x = _check_unit_range(values, "rate input")
    draws = rng.random(x.shape + (exposure,))
    return (draws < x[..., None]).astype(np.uint8)


def encode_target_rate(flags, exposure, high=0.8, low=0.2):
    """Target spike counts over the exposure window: high*E flagged, low*E not."""
    f = np.asarray(flags, dtype=bool)
    return np.where(f, high * exposure, low * exposure).astype(np.float64)


def decode_rate(train, exposure, threshold=0.75):
    """Flag a pixel iff its firing count exceeds threshold * E; score = count/E."""
    t = np.asarray(train)
    counts = t.sum(axis=-1) if t.ndim == 3 else t
    flags = counts > threshold * exposure
    scores = counts / exposure
    return flags.astype(bool), scores.astype(np.float64)


# ---------------------------------------------------------------------------
# delta-modulation

def encode_delta(values, threshold=0.1):
    """Polarity spikes on step-wise change crossing +-threshold; t=0 vs 0.

    Output has 2F channels (positive then negative polarity) and exposure 1.
    """
    x = np.asarray(values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataValidationError("delta input contains non-finite values")
    d = np.diff(x, axis=-1, prepend=0.0)
    pos = (d >= threshold).astype(np.uint8)
    neg = (d <= -threshold).astype(np.uint8)
    return np.concatenate([pos, neg], axis=0)[..., None]


def encode_target_delta(flags):
    """Mark mask transitions: channel c fires on 0->1 at t, channel c+F on 1->0.

    A mask already true at t=0 counts as a turn-on at t=0.
    """
    f = np.asarray(flags, dtype=bool)
    prev = np.concatenate([np.zeros((f.shape[0], 1), dtype=bool), f[:, :-1]], axis=1)
    on = f & ~prev
    off = ~f & prev
    return np.concatenate([on, off], axis=0).astype(np.float64)[..., None]


def decode_delta(train):
    """Toggle an on/off latch per channel: upper-region spikes set the flag,
    lower-region spikes clear it; state persists between spikes."""
    t = np.asarray(train)[..., 0]
    nch, nt = t.shape
    if nch % 2:
        raise DataValidationError(f"delta output needs an even channel count, got {nch}")
    f = nch // 2
    on = t[:f] != 0
    off = t[f:] != 0
    flags = np.zeros((f, nt), dtype=bool)
    state = np.zeros(f, dtype=bool)
    for i in range(nt):
        state = (state | on[:, i]) & ~off[:, i]
        flags[:, i] = state
    return flags, flags.astype(np.float64)


# ---------------------------------------------------------------------------
# step-forward

def step_forward_base(values, threshold=0.1):
    """Threshold-crossing spikes against a running baseline that steps by
    +-threshold; at most one spike per channel per time step.

    Returns (positive [F x T], negative [F x T]) uint8 grids.
    """
    x = _check_unit_range(values, "step-forward input")
    nf, nt = x.shape
    base = np.zeros(nf, dtype=np.float64)
    pos = np.zeros((nf, nt), dtype=np.uint8)
    neg = np.zeros((nf, nt), dtype=np.uint8)
    for t in range(nt):
        up = x[:, t] > base + threshold
        down = ~up & (x[:, t] < base - threshold)
        pos[:, t] = up
        neg[:, t] = down
        base = base + threshold * up - threshold * down
    return pos, neg


def encode_step_forward(values, threshold, mode, exposure):
    """Expand step-forward base spikes over the exposure axis.

    first:   spike at slot 0, silence after.
    direct:  spike repeated at every slot.
    latency: spike positions fire at slot 0, silent positions at the final slot.
    """
    if mode not in ("first", "direct", "latency"):
        raise ConfigError(f"unknown step-forward exposure mode {mode!r}")
    if mode in ("first", "latency") and exposure < 2:
        raise ConfigError(f"step-forward '{mode}' mode needs exposure >= 2")
    if exposure < 1:
        raise ConfigError("exposure must be >= 1")
    pos, neg = step_forward_base(values, threshold)
    spikes = np.concatenate([pos, neg], axis=0)
    out = np.zeros(spikes.shape + (exposure,), dtype=np.uint8)
    if mode == "first":
        out[..., 0] = spikes
    elif mode == "direct":
        out[:] = spikes[..., None]
    else:
        out[..., 0] = spikes
        out[..., exposure - 1] = 1 - spikes
    return out


def decode_step_forward(train, exposure):
    """Identical read-out to latency decoding."""
    return decode_latency(train, exposure)


# ---------------------------------------------------------------------------
# raster emission

def raster_image(train):
    """Spike raster as a grayscale image: rows = channels, cols = T*E, spike = white."""
    t = np.asarray(train)
    nch, nt, ne = t.shape
    return (t.reshape(nch, nt * ne) > 0).astype(np.uint8) * 255


def write_pgm(path, image):
    """Write a 2-D uint8 image as a binary portable graymap (P5)."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise DataValidationError("PGM image must be 2-D")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


# ---------------------------------------------------------------------------
# scheme facade

class Encoder:
    """Binds an EncodingConfig to the matching encode/target/decode trio."""

    def __init__(self, config):
        self.config = config.validate()
        self._rng = np.random.default_rng(config.rng_seed)

    def reseed(self, seed):
        self.config = replace(self.config, rng_seed=seed)
        self._rng = np.random.default_rng(seed)

    def input_width(self, freq_channels):
        if self.config.method in ("delta", "sf-first", "sf-direct", "sf-latency"):
            return 2 * freq_channels
        return freq_channels

    def output_width(self, freq_channels):
        return 2 * freq_channels if self.config.method == "delta" else freq_channels

    @property
    def target_is_count(self):
        return self.config.method == "rate"

    def encode(self, values):
        cfg = self.config
        if cfg.method == "latency":
            return encode_latency(values, cfg.exposure)
        if cfg.method == "rate":
            return encode_rate(values, cfg.exposure, self._rng)
        if cfg.method == "delta":
            return encode_delta(values, cfg.delta_threshold)
        return encode_step_forward(values, cfg.sf_threshold,
                                   SF_MODES[cfg.method], cfg.exposure)

    def encode_target(self, flags):
        cfg = self.config
        if cfg.method == "rate":
            return encode_target_rate(flags, cfg.exposure, cfg.rate_high, cfg.rate_low)
        if cfg.method == "delta":
            return encode_target_delta(flags)
        return encode_target_latency(flags, cfg.exposure)

    def decode(self, output_train):
        cfg = self.config
        if cfg.method == "rate":
            return decode_rate(output_train, cfg.exposure, cfg.rate_decode_threshold)
        if cfg.method == "delta":
            return decode_delta(output_train)
        return decode_latency(output_train, cfg.exposure)
