"""Training loop, patch pipelines, evaluation, and checkpoint/history files."""

import os
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import data as datamod
from . import network, tensorio
from .encoding import Encoder, EncodingConfig
from .errors import (
    ConfigError,
    DataValidationError,
    FormatError,
    NonFiniteStateError,
    TrainingDivergedError,
)
from .losses import loss_for_method, make_loss
from .metrics import evaluate_pixels
from .network import NetworkConfig
from .optim import AdamState, EarlyStopper, PlateauScheduler, adam_step

# Per-chunk working-set cap for the recorded BPTT tensors.
_CHUNK_BYTES = 8e7


@dataclass
class TrainingConfig:
    batch_size: int = 36
    max_epochs: int = 44
    initial_lr: float = 1e-3
    lr_patience: int = 4
    stop_patience: int = 10
    seed: int = 0
    val_fraction: float = 0.1

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be > 0")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must be in [0, 1)")
        return self


class EncodedPatchSet:
    """Pre-encoded patches ready for batching.

    inputs:  uint8 [N x C x P x E]
    targets: float64 train [N x O x P x E] or counts [N x O x P] for rate
    weights: float64 [N x O x P] or None; zeroes out padded pixels
    """

    def __init__(self, inputs, targets, weights=None):
        self.inputs = inputs
        self.targets = targets
        self.weights = weights

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return EncodedPatchSet(
            self.inputs[idx], self.targets[idx],
            None if self.weights is None else self.weights[idx],
        )


def build_patches(pairs, patch_size=datamod.DEFAULT_PATCH_SIZE):
    """Normalize each spectrogram and tile it with its mask."""
    patches = []
    for spec, mask in pairs:
        patches.extend(datamod.patch(datamod.normalize(spec), mask, patch_size))
    return patches


def encode_patch_set(patches, encoder):
    """Encode a list of patches into stacked arrays."""
    inputs, targets, weights = [], [], []
    any_ignore = False
    for p in patches:
        inputs.append(encoder.encode(p.values))
        tgt = encoder.encode_target(p.flags)
        targets.append(tgt)
        w = (~p.ignore).astype(np.float64)
        if p.ignore.any():
            any_ignore = True
        if tgt.shape[0] == 2 * p.values.shape[0]:
            w = np.concatenate([w, w], axis=0)
        weights.append(w)
    return EncodedPatchSet(
        np.stack(inputs),
        np.stack(targets),
        np.stack(weights) if any_ignore else None,
    )


def _chunk_size(batch, steps, widths):
    per_sample = steps * sum(widths) * 8.0
    return max(1, min(batch, int(_CHUNK_BYTES / max(per_sample, 1.0))))


def _batch_loss_and_grads(params, net_cfg, enc_cfg, loss, pset, idx):
    """Loss + gradients over pset[idx], chunked to bound memory.

    Chunks are combined with batch-size weights so the result is identical to
    one full-batch pass.
    """
    e = enc_cfg.exposure
    n = len(idx)
    c = pset.inputs.shape[1]
    p = pset.inputs.shape[2]
    steps = p * e
    chunk = _chunk_size(n, steps, (c, net_cfg.hidden_width, net_cfg.output_width))
    total = 0.0
    grads = None
    for lo in range(0, n, chunk):
        sel = idx[lo:lo + chunk]
        x = pset.inputs[sel].astype(np.float64)
        tgt = pset.targets[sel]
        w = None if pset.weights is None else pset.weights[sel]
        value, g, _ = network.bptt_grads(params, x, tgt, loss, net_cfg,
                                         pixel_weights=w)
        scale = len(sel) / n
        total += scale * value
        if grads is None:
            grads = {k: scale * v for k, v in g.items()}
        else:
            for k in grads:
                grads[k] += scale * g[k]
    return total, grads


def _set_loss(params, net_cfg, enc_cfg, loss, pset, idx):
    """Mean loss over pset[idx] without gradients (chunked)."""
    e = enc_cfg.exposure
    n = len(idx)
    c = pset.inputs.shape[1]
    p = pset.inputs.shape[2]
    steps = p * e
    chunk = _chunk_size(n, steps, (c, net_cfg.hidden_width, net_cfg.output_width))
    total = 0.0
    for lo in range(0, n, chunk):
        sel = idx[lo:lo + chunk]
        x = pset.inputs[sel].astype(np.float64)
        x_seq = network.train_to_seq(x)
        out = network.forward(params, x_seq, net_cfg)
        y = network.seq_to_train(out, p, e)
        w = None if pset.weights is None else pset.weights[sel]
        total += (len(sel) / n) * loss.value(y, pset.targets[sel], w)
    return total


def train(net_cfg, train_pairs, train_cfg, enc_cfg, params=None,
          patch_size=datamod.DEFAULT_PATCH_SIZE, loss_cfg=None, log=None):
    """Train the spiking network on (spectrogram, mask) pairs.

    Patches are shuffled each epoch; network state resets at every patch. A
    seeded 10% validation split drives the plateau LR scheduler and early
    stopping (when fewer than two patches exist the train loss is monitored
    instead). Returns (params, history) where history holds one dict per
    epoch: epoch, train_loss, val_loss, lr.
    """
    net_cfg.validate()
    train_cfg.validate()
    enc_cfg.validate()
    root = np.random.SeedSequence(train_cfg.seed)
    init_ss, split_ss, shuffle_ss, enc_ss = root.spawn(4)

    encoder = Encoder(enc_cfg)
    if enc_cfg.method == "rate":
        encoder.reseed(int(enc_ss.generate_state(1)[0]))
    patches = build_patches(train_pairs, patch_size)
    if not patches:
        raise DataValidationError("no training patches")
    pset = encode_patch_set(patches, encoder)

    n = len(pset)
    perm = np.random.default_rng(split_ss).permutation(n)
    n_val = 0 if n < 2 else min(n - 1, max(1, int(round(train_cfg.val_fraction * n))))
    val_idx = perm[:n_val]
    tr_idx = perm[n_val:]

    if params is None:
        params = network.init_params(net_cfg, init_ss)
    loss = make_loss(loss_cfg) if loss_cfg is not None else \
        loss_for_method(enc_cfg.method)
    adam = AdamState.for_params(params)
    sched = PlateauScheduler(train_cfg.initial_lr, train_cfg.lr_patience)
    stopper = EarlyStopper(train_cfg.stop_patience)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    history = []
    for epoch in range(train_cfg.max_epochs):
        order = shuffle_rng.permutation(tr_idx)
        lr = sched.lr
        epoch_loss = 0.0
        for bi, lo in enumerate(range(0, len(order), train_cfg.batch_size)):
            idx = order[lo:lo + train_cfg.batch_size]
            try:
                value, grads = _batch_loss_and_grads(params, net_cfg, enc_cfg,
                                                     loss, pset, idx)
            except NonFiniteStateError:
                raise TrainingDivergedError(epoch=epoch, batch=bi, lr=lr)
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch=epoch, batch=bi, lr=lr)
            adam_step(params, grads, adam, lr)
            epoch_loss += value * len(idx)
        epoch_loss /= len(order)
        val_loss = (_set_loss(params, net_cfg, enc_cfg, loss, pset, val_idx)
                    if n_val else epoch_loss)
        monitored = val_loss
        history.append({"epoch": epoch, "train_loss": epoch_loss,
                        "val_loss": val_loss, "lr": lr})
        if log:
            log(f"epoch {epoch:3d}  train {epoch_loss:.5f}  val {val_loss:.5f}  lr {lr:g}")
        sched.step(monitored)
        if stopper.step(monitored):
            break
    return params, history


def predict_mask(params, net_cfg, encoder, spec, mask,
                 patch_size=datamod.DEFAULT_PATCH_SIZE, batch_size=64):
    """Predicted flags/scores for one spectrogram, stitched back to full size.

    Returns (flags, scores, valid) aligned with the spectrogram; valid is
    False on padded pixels.
    """
    patches = datamod.patch(datamod.normalize(spec), mask, patch_size)
    e = encoder.config.exposure
    flag_tiles, score_tiles, valid_tiles = [], [], []
    for lo in range(0, len(patches), batch_size):
        block = patches[lo:lo + batch_size]
        x = np.stack([encoder.encode(p.values) for p in block]).astype(np.float64)
        x_seq = network.train_to_seq(x)
        out = network.forward(params, x_seq, net_cfg)
        y = network.seq_to_train(out, patch_size, e)
        for p, yp in zip(block, y):
            flags, scores = encoder.decode(yp)
            flag_tiles.append(((p.origin_freq, p.origin_time), flags))
            score_tiles.append(((p.origin_freq, p.origin_time), scores))
            valid_tiles.append(((p.origin_freq, p.origin_time), ~p.ignore))
    shape = spec.shape
    flags = datamod.stitch_values(flag_tiles, shape)
    scores = datamod.stitch_values(score_tiles, shape)
    valid = datamod.stitch_values(valid_tiles, shape)
    return flags.astype(bool), scores, valid.astype(bool)


def evaluate(params, net_cfg, pairs, enc_cfg,
             patch_size=datamod.DEFAULT_PATCH_SIZE, batch_size=64):
    """Pool per-pixel predictions over a list of pairs into an EvalRecord."""
    enc_cfg.validate()
    encoder = Encoder(enc_cfg)
    all_pred, all_true, all_scores = [], [], []
    for spec, mask in pairs:
        flags, scores, valid = predict_mask(params, net_cfg, encoder, spec, mask,
                                            patch_size, batch_size)
        keep = valid.ravel()
        all_pred.append(flags.ravel()[keep])
        all_true.append(mask.flags.ravel()[keep])
        all_scores.append(scores.ravel()[keep])
    return evaluate_pixels(
        np.concatenate(all_pred), np.concatenate(all_true), np.concatenate(all_scores)
    )


# ---------------------------------------------------------------------------
# checkpoint + history files

CHECKPOINT_TAG = "spikeflag-checkpoint-v1"
_PARAM_ORDER = ("w1", "b1", "w2", "b2")


def save_checkpoint(path_base, params, net_cfg, enc_cfg, seed=0, epoch=0,
                    wall_time_seconds=0.0):
    """Write ``path_base + '.ckpt'`` (text header) and ``.ckpt.bin`` (f64 blob)."""
    bin_name = os.path.basename(path_base) + ".ckpt.bin"
    lines = [f"format = {CHECKPOINT_TAG}"]
    for key, value in sorted(asdict(net_cfg).items()):
        lines.append(f"net.{key} = {value!r}")
    for key, value in sorted(asdict(enc_cfg).items()):
        lines.append(f"enc.{key} = {value!r}")
    lines += [
        f"seed = {seed}",
        f"epoch = {epoch}",
        f"wall_time_seconds = {wall_time_seconds!r}",
        "dtype = f64",
        "endianness = little",
        f"data_file = {bin_name}",
        "tensors = " + " ".join(_PARAM_ORDER),
    ]
    blob = b"".join(
        np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in _PARAM_ORDER
    )
    with open(path_base + ".ckpt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(path_base + ".ckpt.bin", "wb") as fh:
        fh.write(blob)
    return path_base + ".ckpt"


def load_checkpoint(path):
    """Read a checkpoint; returns (params, net_cfg, enc_cfg, meta)."""
    with open(path) as fh:
        fields = tensorio.parse_kv_lines(fh.read(), path)
    if fields.get("format") != CHECKPOINT_TAG:
        raise FormatError(f"{path}: unknown checkpoint format {fields.get('format')!r}")

    def pick(prefix):
        return {k[len(prefix):]: v for k, v in fields.items() if k.startswith(prefix)}

    net_raw = pick("net.")
    enc_raw = pick("enc.")
    try:
        net_cfg = NetworkConfig(
            input_width=int(net_raw["input_width"]),
            output_width=int(net_raw["output_width"]),
            hidden_width=int(net_raw["hidden_width"]),
            beta=float(net_raw["beta"]),
            threshold=float(net_raw["threshold"]),
            surrogate_slope=float(net_raw["surrogate_slope"]),
        )
        enc_cfg = EncodingConfig(
            method=enc_raw["method"].strip("'\""),
            exposure=int(enc_raw["exposure"]),
            sf_threshold=float(enc_raw["sf_threshold"]),
            delta_threshold=float(enc_raw["delta_threshold"]),
            rate_high=float(enc_raw["rate_high"]),
            rate_low=float(enc_raw["rate_low"]),
            rate_decode_threshold=float(enc_raw["rate_decode_threshold"]),
            rng_seed=int(enc_raw["rng_seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed checkpoint header ({exc})")
    bin_path = os.path.join(os.path.dirname(path), fields["data_file"])
    try:
        with open(bin_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint data {bin_path}: {exc}")
    ni, nh, no = net_cfg.input_width, net_cfg.hidden_width, net_cfg.output_width
    shapes = {"w1": (nh, ni), "b1": (nh,), "w2": (no, nh), "b2": (no,)}
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(raw) != expected:
        raise FormatError(f"{bin_path}: expected {expected} bytes, got {len(raw)}")
    params = {}
    offset = 0
    for key in _PARAM_ORDER:
        count = int(np.prod(shapes[key]))
        params[key] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset
        ).reshape(shapes[key]).copy()
        offset += count * 8
    meta = {
        "seed": int(fields.get("seed", 0)),
        "epoch": int(fields.get("epoch", 0)),
        "wall_time_seconds": float(fields.get("wall_time_seconds", 0.0)),
    }
    return params, net_cfg, enc_cfg, meta


def write_history_csv(path, history):
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,lr\n")
        for row in history:
            fh.write("{epoch},{train_loss:.8f},{val_loss:.8f},{lr:.8g}\n".format(**row))
    return path


def train_and_checkpoint(net_cfg, dataset, train_cfg, enc_cfg, out_dir,
                         patch_size=datamod.DEFAULT_PATCH_SIZE, log=None):
    """Train on the dataset's train split and write checkpoint + history."""
    started = time.perf_counter()
    params, history = train(net_cfg, dataset.train, train_cfg, enc_cfg,
                            patch_size=patch_size, log=log)
    wall = time.perf_counter() - started
    os.makedirs(out_dir, exist_ok=True)
    ckpt = save_checkpoint(
        os.path.join(out_dir, "model"), params, net_cfg, enc_cfg,
        seed=train_cfg.seed, epoch=history[-1]["epoch"], wall_time_seconds=wall,
    )
    write_history_csv(os.path.join(out_dir, "history.csv"), history)
    return params, history, ckpt
