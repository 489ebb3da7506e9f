"""Non-spiking baseline: the same 32-128-32 dense shape, per-time-step.

Each spectrogram column (normalized values, no spike encoding) is classified
independently: ReLU hidden layer, sigmoid outputs, binary cross-entropy.
The training protocol (Adam, plateau LR schedule, early stopping, seeded
shuffling and validation split) mirrors the spiking trainer so metric rows
are comparable.
"""

import numpy as np

from . import data as datamod
from .errors import TrainingDivergedError
from .metrics import evaluate_pixels
from .network import init_params, NetworkConfig
from .optim import AdamState, EarlyStopper, PlateauScheduler, adam_step
from .training import TrainingConfig, build_patches


def ann_forward(params, x):
    """Probabilities for a [batch x in] block of columns."""
    h = np.maximum(x @ params["w1"].T + params["b1"], 0.0)
    logits = h @ params["w2"].T + params["b2"]
    return 1.0 / (1.0 + np.exp(-logits))


def _bce_and_grads(params, x, y, weights=None):
    """Mean binary cross-entropy and parameter gradients for one block."""
    h_pre = x @ params["w1"].T + params["b1"]
    h = np.maximum(h_pre, 0.0)
    logits = h @ params["w2"].T + params["b2"]
    p = 1.0 / (1.0 + np.exp(-logits))
    eps = 1e-12
    per = -(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps))
    if weights is not None:
        per = per * weights
    n = per.size
    value = float(per.sum() / n)
    dlogits = (p - y) / n
    if weights is not None:
        dlogits = dlogits * weights
    dw2 = dlogits.T @ h
    db2 = dlogits.sum(axis=0)
    dh = dlogits @ params["w2"]
    dh_pre = dh * (h_pre > 0)
    dw1 = dh_pre.T @ x
    db1 = dh_pre.sum(axis=0)
    return value, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def _columns_from_patches(patches):
    """Stack every patch column into samples [N*T x F] with labels/weights."""
    xs, ys, ws = [], [], []
    any_ignore = False
    for p in patches:
        xs.append(np.asarray(p.values, dtype=np.float64).T)
        ys.append(p.flags.T.astype(np.float64))
        ws.append((~p.ignore.T).astype(np.float64))
        any_ignore = any_ignore or p.ignore.any()
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    w = np.concatenate(ws) if any_ignore else None
    return x, y, w


def ann_train(train_pairs, train_cfg, hidden_width=128,
              patch_size=datamod.DEFAULT_PATCH_SIZE, log=None):
    """Train the baseline; returns (params, history) like the spiking trainer."""
    train_cfg.validate()
    patches = build_patches(train_pairs, patch_size)
    x, y, w = _columns_from_patches(patches)
    cfg = NetworkConfig(input_width=patch_size, output_width=patch_size,
                        hidden_width=hidden_width)
    root = np.random.SeedSequence(train_cfg.seed)
    init_ss, split_ss, shuffle_ss = root.spawn(3)
    params = init_params(cfg, init_ss)

    n = x.shape[0]
    perm = np.random.default_rng(split_ss).permutation(n)
    n_val = 0 if n < 2 else min(n - 1, max(1, int(round(train_cfg.val_fraction * n))))
    val_idx = perm[:n_val]
    tr_idx = perm[n_val:]

    adam = AdamState.for_params(params)
    sched = PlateauScheduler(train_cfg.initial_lr, train_cfg.lr_patience)
    stopper = EarlyStopper(train_cfg.stop_patience)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    cols_per_batch = train_cfg.batch_size * patch_size

    history = []
    for epoch in range(train_cfg.max_epochs):
        order = shuffle_rng.permutation(tr_idx)
        lr = sched.lr
        epoch_loss = 0.0
        for bi, lo in enumerate(range(0, len(order), cols_per_batch)):
            sel = order[lo:lo + cols_per_batch]
            value, grads = _bce_and_grads(params, x[sel], y[sel],
                                          None if w is None else w[sel])
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch=epoch, batch=bi, lr=lr)
            adam_step(params, grads, adam, lr)
            epoch_loss += value * len(sel)
        epoch_loss /= len(order)
        if n_val:
            val_loss, _ = _bce_and_grads(params, x[val_idx], y[val_idx],
                                         None if w is None else w[val_idx])
        else:
            val_loss = epoch_loss
        history.append({"epoch": epoch, "train_loss": epoch_loss,
                        "val_loss": val_loss, "lr": lr})
        if log:
            log(f"epoch {epoch:3d}  train {epoch_loss:.5f}  val {val_loss:.5f}  lr {lr:g}")
        sched.step(val_loss)
        if stopper.step(val_loss):
            break
    return params, history


def ann_evaluate(params, pairs, patch_size=datamod.DEFAULT_PATCH_SIZE):
    """Pool per-pixel baseline predictions over pairs into an EvalRecord."""
    all_pred, all_true, all_scores = [], [], []
    for spec, mask in pairs:
        patches = datamod.patch(datamod.normalize(spec), mask, patch_size)
        flag_tiles, score_tiles, valid_tiles = [], [], []
        for p in patches:
            probs = ann_forward(params, np.asarray(p.values, dtype=np.float64).T).T
            origin = (p.origin_freq, p.origin_time)
            flag_tiles.append((origin, probs > 0.5))
            score_tiles.append((origin, probs))
            valid_tiles.append((origin, ~p.ignore))
        shape = spec.shape
        flags = datamod.stitch_values(flag_tiles, shape).astype(bool)
        scores = datamod.stitch_values(score_tiles, shape)
        valid = datamod.stitch_values(valid_tiles, shape).astype(bool)
        keep = valid.ravel()
        all_pred.append(flags.ravel()[keep])
        all_true.append(mask.flags.ravel()[keep])
        all_scores.append(scores.ravel()[keep])
    return evaluate_pixels(
        np.concatenate(all_pred), np.concatenate(all_true), np.concatenate(all_scores)
    )
