"""Spectrogram/mask data model, patching, dataset files, and a synthetic generator.

A dataset on disk is a manifest text file plus tensor file pairs (see
``tensorio``). Spectrogram magnitudes are stored as f32, masks as u8, so a
save/load round trip is lossless and generation is bit-reproducible per seed.
"""

import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensorio
from .errors import (
    ConsistencyError,
    DataValidationError,
    FormatError,
    GenerationError,
)

DEFAULT_PATCH_SIZE = 32

MANIFEST_TAG = "spikeflag-manifest-v1"
MANIFEST_NAME = "manifest.txt"

# Injected event classes, in drawing order.
RFI_CLASSES = (
    "narrowband_persistent",   # channel band covering all time
    "broadband_transient",     # time column(s) covering all channels
    "narrowband_transient",    # rectangle partial in time
    "blip",                    # tiny rectangle, at most 3x3
)


@dataclass
class Spectrogram:
    """Magnitude image over frequency x time for a single baseline."""

    values: np.ndarray            # [freq_channels, time_steps], non-negative
    freq_start_mhz: float = 105.0
    freq_end_mhz: float = 195.0
    integration_seconds: float = 3.52
    baseline_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise DataValidationError(
                f"spectrogram must be 2-D and non-empty, got shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise DataValidationError("spectrogram contains non-finite values")
        if (self.values < 0).any():
            raise DataValidationError("spectrogram contains negative magnitudes")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class RFIMask:
    """Boolean flags aligned to a spectrogram; True marks contaminated pixels."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags)
        if self.flags.dtype != np.bool_:
            self.flags = self.flags.astype(bool)
        if self.flags.ndim != 2:
            raise DataValidationError("mask must be 2-D")

    @property
    def shape(self):
        return self.flags.shape


@dataclass
class Patch:
    """One PxP tile of a spectrogram/mask pair.

    ``ignore`` marks zero-padded pixels introduced for non-divisible shapes;
    they are excluded from metrics.
    """

    values: np.ndarray
    flags: np.ndarray
    ignore: np.ndarray
    origin_freq: int
    origin_time: int


@dataclass
class GeneratorConfig:
    n_train: int = 40
    n_test: int = 10
    freq_channels: int = 128
    time_steps: int = 128
    background_gradient_range: tuple = (0.9, 1.1)
    noise_sigma: float = 0.04
    rfi_rates: dict = field(default_factory=lambda: {
        "narrowband_persistent": 1,
        "broadband_transient": 1,
        "narrowband_transient": 2,
        "blip": 3,
    })
    target_contamination: float = 0.0276
    seed: int = 0

    def validate(self):
        if not (0.0 < self.target_contamination <= 0.2):
            raise DataValidationError(
                f"target_contamination must be in (0, 0.2], got {self.target_contamination}"
            )
        if self.n_train < 0 or self.n_test < 0:
            raise DataValidationError("item counts must be non-negative")
        if self.freq_channels < 1 or self.time_steps < 1:
            raise DataValidationError("spectrogram dimensions must be positive")
        for name in self.rfi_rates:
            if name not in RFI_CLASSES:
                raise DataValidationError(f"unknown RFI class {name!r}")
            if self.rfi_rates[name] < 0:
                raise DataValidationError("event counts must be >= 0")
        if self.noise_sigma < 0:
            raise DataValidationError("noise_sigma must be >= 0")
        lo, hi = self.background_gradient_range
        if not (0 <= lo <= hi):
            raise DataValidationError("background_gradient_range must satisfy 0 <= lo <= hi")


@dataclass
class DatasetManifest:
    train_items: list               # [(spectrogram hdr relpath, mask hdr relpath)]
    test_items: list
    generator_seed: int = None
    contamination_fraction: float = 0.0
    generator_config: dict = None


@dataclass
class Dataset:
    """In-memory dataset: lists of (Spectrogram, RFIMask) pairs."""

    train: list
    test: list
    manifest: DatasetManifest = None

    @property
    def all_pairs(self):
        return list(self.train) + list(self.test)


def normalize(spec):
    """Compress dynamic range with log1p, then min-max to [0, 1].

    A constant input maps to all zeros.
    """
    values = np.asarray(spec.values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DataValidationError("cannot normalize non-finite spectrogram")
    logv = np.log1p(values)
    lo = logv.min()
    hi = logv.max()
    if hi == lo:
        out = np.zeros_like(logv)
    else:
        out = (logv - lo) / (hi - lo)
    return Spectrogram(
        out.astype(np.float32),
        freq_start_mhz=spec.freq_start_mhz,
        freq_end_mhz=spec.freq_end_mhz,
        integration_seconds=spec.integration_seconds,
        baseline_id=spec.baseline_id,
    )


def _padded_extent(n, p):
    return ((n + p - 1) // p) * p


def patch(spec, mask, patch_size=DEFAULT_PATCH_SIZE):
    """Tile a spectrogram/mask pair into PxP patches, row-major.

    Shapes not divisible by P are zero-padded; padded pixels are flagged in
    ``Patch.ignore`` so metrics can drop them.
    """
    if patch_size <= 0:
        raise ValueError(f"patch_size must be positive, got {patch_size}")
    values = np.asarray(spec.values)
    flags = np.asarray(mask.flags, dtype=bool)
    if values.shape != flags.shape:
        raise DataValidationError(
            f"spectrogram shape {values.shape} != mask shape {flags.shape}"
        )
    nf, nt = values.shape
    pf, pt = _padded_extent(nf, patch_size), _padded_extent(nt, patch_size)
    if (pf, pt) != (nf, nt):
        vpad = np.zeros((pf, pt), dtype=values.dtype)
        vpad[:nf, :nt] = values
        fpad = np.zeros((pf, pt), dtype=bool)
        fpad[:nf, :nt] = flags
        ign = np.ones((pf, pt), dtype=bool)
        ign[:nf, :nt] = False
        values, flags = vpad, fpad
    else:
        ign = np.zeros((pf, pt), dtype=bool)
    patches = []
    for f0 in range(0, pf, patch_size):
        for t0 in range(0, pt, patch_size):
            patches.append(Patch(
                values=values[f0:f0 + patch_size, t0:t0 + patch_size].copy(),
                flags=flags[f0:f0 + patch_size, t0:t0 + patch_size].copy(),
                ignore=ign[f0:f0 + patch_size, t0:t0 + patch_size].copy(),
                origin_freq=f0,
                origin_time=t0,
            ))
    return patches


def stitch_values(tiles, parent_shape):
    """Reassemble tiles of ((origin_freq, origin_time), 2-D array) into the parent.

    The tiles must cover the zero-padded canvas exactly once; the padding is
    dropped from the result.
    """
    tiles = list(tiles)
    if not tiles:
        raise ConsistencyError("no tiles to stitch")
    p = np.asarray(tiles[0][1]).shape[0]
    nf, nt = parent_shape
    pf, pt = _padded_extent(nf, p), _padded_extent(nt, p)
    canvas = np.zeros((pf, pt), dtype=np.asarray(tiles[0][1]).dtype)
    seen = np.zeros((pf, pt), dtype=bool)
    for (f0, t0), arr in tiles:
        arr = np.asarray(arr)
        if arr.shape != (p, p):
            raise ConsistencyError(f"tile at ({f0},{t0}) has shape {arr.shape}, expected {(p, p)}")
        if f0 % p or t0 % p or f0 < 0 or t0 < 0 or f0 + p > pf or t0 + p > pt:
            raise ConsistencyError(f"tile origin ({f0},{t0}) does not align with the {p}-grid")
        if seen[f0:f0 + p, t0:t0 + p].any():
            raise ConsistencyError(f"overlapping tile at ({f0},{t0})")
        seen[f0:f0 + p, t0:t0 + p] = True
        canvas[f0:f0 + p, t0:t0 + p] = arr
    if not seen.all():
        raise ConsistencyError("tiles do not cover the parent shape")
    return canvas[:nf, :nt]


def stitch(tiles, parent_shape):
    """Inverse of ``patch`` for boolean flags; returns an RFIMask."""
    tiles = [((f0, t0), np.asarray(arr, dtype=bool)) for (f0, t0), arr in tiles]
    return RFIMask(stitch_values(tiles, parent_shape))


def contamination_stats(masks):
    """Fraction of flagged pixels over all mask pixels (padding excluded upstream)."""
    masks = list(masks)
    if not masks:
        raise ValueError("contamination_stats needs at least one mask")
    true_px = 0
    total_px = 0
    for m in masks:
        flags = m.flags if isinstance(m, RFIMask) else np.asarray(m, dtype=bool)
        true_px += int(flags.sum())
        total_px += flags.size
    return true_px / total_px


# ---------------------------------------------------------------------------
# synthetic generator

# Interference sits well above the sky background, as in real observations;
# log-normal amplitudes put typical events ~20x the background level with a
# dim tail that stays separable after log compression.
_AMP_LOG_MEAN = math.log(20.0)
_AMP_LOG_SIGMA = 0.5


def _draw_event(rng, cls, nf, nt):
    """Pixel extent for one event of class ``cls``: (f0, f1, t0, t1)."""
    if cls == "narrowband_persistent":
        h = int(rng.integers(1, max(1, round(0.01 * nf)) + 1))
        f0 = int(rng.integers(0, nf - h + 1))
        return f0, f0 + h, 0, nt
    if cls == "broadband_transient":
        # a few consecutive samples, like a lightning flash riding out
        w = int(rng.integers(2, max(2, round(0.02 * nt)) + 1))
        t0 = int(rng.integers(0, nt - w + 1))
        return 0, nf, t0, t0 + w
    if cls == "narrowband_transient":
        h = int(rng.integers(1, max(1, round(0.015 * nf)) + 1))
        dur_lo = max(1, round(0.1 * nt))
        dur_hi = max(dur_lo, round(0.5 * nt))
        d = int(rng.integers(dur_lo, dur_hi + 1))
        f0 = int(rng.integers(0, nf - h + 1))
        t0 = int(rng.integers(0, nt - d + 1))
        return f0, f0 + h, t0, t0 + d
    if cls == "blip":
        h = int(rng.integers(1, min(3, nf) + 1))
        w = int(rng.integers(1, min(3, nt) + 1))
        f0 = int(rng.integers(0, nf - h + 1))
        t0 = int(rng.integers(0, nt - w + 1))
        return f0, f0 + h, t0, t0 + w
    raise ValueError(f"unknown RFI class {cls!r}")


def _draw_background(rng, cfg):
    """Linear gradient along a random direction plus Gaussian noise, clipped >= 0."""
    nf, nt = cfg.freq_channels, cfg.time_steps
    lo, hi = cfg.background_gradient_range
    angle = rng.uniform(0.0, 2.0 * math.pi)
    wf, wt = math.cos(angle), math.sin(angle)
    ff = np.arange(nf, dtype=np.float64) / max(1, nf - 1)
    tt = np.arange(nt, dtype=np.float64) / max(1, nt - 1)
    proj = wf * ff[:, None] + wt * tt[None, :]
    pmin, pmax = proj.min(), proj.max()
    unit = (proj - pmin) / (pmax - pmin) if pmax > pmin else np.zeros_like(proj)
    grad = lo + (hi - lo) * unit
    noise = rng.normal(0.0, cfg.noise_sigma, size=(nf, nt))
    return np.clip(grad + noise, 0.0, None)


def _generate_item(rng, cfg, max_draws=None):
    """One spectrogram/mask pair, steered to the contamination target.

    Candidate events for the nominal per-class counts are committed greedily;
    any candidate that would push the flagged fraction past target + tol is
    rejected, and small-class events top up an undershoot (rescaling the event
    counts) until the fraction lands within +-0.8 percentage points of the
    target (inside the documented +-1 pp window). All-zero rates bypass
    steering and yield a clean item.
    """
    background = _draw_background(rng, cfg)
    counts = {cls: int(cfg.rfi_rates.get(cls, 0)) for cls in RFI_CLASSES}
    if sum(counts.values()) == 0:
        return background.astype(np.float32), np.zeros(background.shape, dtype=bool)

    nf, nt = cfg.freq_channels, cfg.time_steps
    target = cfg.target_contamination
    tol = 0.008
    if max_draws is None:
        # count rescaling is bounded; far-off targets fail rather than degenerate
        max_draws = max(64, 16 * sum(counts.values()))
    add = np.zeros((nf, nt), dtype=np.float64)
    mask = np.zeros((nf, nt), dtype=bool)

    def try_commit(cls):
        f0, f1, t0, t1 = _draw_event(rng, cls, nf, nt)
        amp = rng.lognormal(mean=_AMP_LOG_MEAN, sigma=_AMP_LOG_SIGMA)
        trial = mask.copy()
        trial[f0:f1, t0:t1] = True
        if trial.mean() > target + tol:
            return False
        mask[f0:f1, t0:t1] = True
        add[f0:f1, t0:t1] += amp
        return True

    nominal = [cls for cls in RFI_CLASSES for _ in range(counts[cls])]
    order = [nominal[i] for i in rng.permutation(len(nominal))]
    draws = 0
    for cls in order:
        if mask.mean() >= target - tol:
            break
        try_commit(cls)
        draws += 1
    # top up an undershoot with the finest-grained classes available
    filler = [cls for cls in ("blip", "narrowband_transient",
                              "narrowband_persistent", "broadband_transient")
              if counts[cls] > 0]
    while mask.mean() < target - tol and draws < max_draws:
        try_commit(filler[draws % len(filler)])
        draws += 1
    frac = mask.mean()
    if not (target - tol <= frac <= target + tol):
        raise GenerationError(
            f"could not reach contamination {target:.4f} +- {tol:.4f} "
            f"(got {frac:.4f} after {draws} event draws)"
        )
    values = np.clip(background + add, 0.0, None).astype(np.float32)
    return values, mask


def generate_synthetic(cfg, out_dir):
    """Generate a dataset on disk; returns the loaded Dataset.

    Deterministic per ``cfg.seed``: every item derives its RNG from
    (seed, item index), so outputs are byte-identical across runs.
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "spectrograms"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)

    train_items, test_items = [], []
    masks_for_stats = []
    splits = [("train", cfg.n_train, train_items), ("test", cfg.n_test, test_items)]
    item_index = 0
    for split, count, items in splits:
        for k in range(count):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, item_index]))
            values, mask = _generate_item(rng, cfg)
            meta = {
                "freq_start_mhz": 105.0,
                "freq_end_mhz": 195.0,
                "integration_seconds": 3.52,
                "baseline_id": item_index,
            }
            spec_rel = f"spectrograms/{split}_{k:03d}"
            mask_rel = f"masks/{split}_{k:03d}"
            tensorio.write_tensor(os.path.join(out_dir, spec_rel), values, meta)
            tensorio.write_tensor(os.path.join(out_dir, mask_rel), mask.astype(np.uint8))
            items.append((spec_rel + ".hdr", mask_rel + ".hdr"))
            masks_for_stats.append(mask)
            item_index += 1

    contamination = contamination_stats(masks_for_stats) if masks_for_stats else 0.0
    manifest = DatasetManifest(
        train_items=train_items,
        test_items=test_items,
        generator_seed=cfg.seed,
        contamination_fraction=contamination,
        generator_config=_config_to_dict(cfg),
    )
    save_manifest(manifest, os.path.join(out_dir, MANIFEST_NAME))
    return load_dataset(out_dir)


def _config_to_dict(cfg):
    d = asdict(cfg)
    d["background_gradient_range"] = list(d["background_gradient_range"])
    return d


# ---------------------------------------------------------------------------
# manifest + dataset IO

def save_manifest(manifest, path):
    lines = [f"format = {MANIFEST_TAG}"]
    if manifest.generator_seed is not None:
        lines.append(f"generator_seed = {manifest.generator_seed}")
    lines.append(f"contamination_fraction = {manifest.contamination_fraction!r}")
    for key, value in sorted((manifest.generator_config or {}).items()):
        if key == "rfi_rates":
            for cls, n in sorted(value.items()):
                lines.append(f"gen.rfi_rates.{cls} = {n}")
        elif key == "background_gradient_range":
            lines.append(f"gen.background_gradient_range = {value[0]!r} {value[1]!r}")
        else:
            lines.append(f"gen.{key} = {value!r}")
    for section, items in (("train", manifest.train_items), ("test", manifest.test_items)):
        lines.append(f"[{section}]")
        for spec_rel, mask_rel in items:
            lines.append(f"{spec_rel}\t{mask_rel}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_manifest(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}")
    header_kv = {}
    sections = {"train": [], "test": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in sections:
                raise FormatError(f"{path}:{lineno}: unknown section {current!r}")
            continue
        if current is None:
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            header_kv[key] = value
        else:
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'spec<TAB>mask' pair")
            sections[current].append((parts[0], parts[1]))
    if header_kv.get("format") != MANIFEST_TAG:
        raise FormatError(f"{path}: unknown manifest format {header_kv.get('format')!r}")
    gen_cfg = {k[len("gen."):]: v for k, v in header_kv.items() if k.startswith("gen.")}
    seed = header_kv.get("generator_seed")
    return DatasetManifest(
        train_items=sections["train"],
        test_items=sections["test"],
        generator_seed=int(seed) if seed is not None else None,
        contamination_fraction=float(header_kv.get("contamination_fraction", 0.0)),
        generator_config=gen_cfg or None,
    )


def _load_pair(base_dir, spec_rel, mask_rel):
    spec_hdr = os.path.join(base_dir, spec_rel)
    mask_hdr = os.path.join(base_dir, mask_rel)
    for p in (spec_hdr, mask_hdr):
        if not os.path.exists(p):
            raise DataValidationError(f"manifest references missing file {p}")
    values, meta = tensorio.read_tensor(spec_hdr)
    flags, _ = tensorio.read_tensor(mask_hdr)
    spec = Spectrogram(
        values,
        freq_start_mhz=float(meta.get("freq_start_mhz", 105.0)),
        freq_end_mhz=float(meta.get("freq_end_mhz", 195.0)),
        integration_seconds=float(meta.get("integration_seconds", 3.52)),
        baseline_id=int(meta.get("baseline_id", 0)),
    )
    mask = RFIMask(flags.astype(bool))
    if spec.shape != mask.shape:
        raise DataValidationError(
            f"{spec_rel}: spectrogram shape {spec.shape} != mask shape {mask.shape}"
        )
    return spec, mask


def load_dataset(path):
    """Load a dataset from a directory (containing manifest.txt) or manifest path."""
    manifest_path = path
    if os.path.isdir(path):
        manifest_path = os.path.join(path, MANIFEST_NAME)
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    train = [_load_pair(base, s, m) for s, m in manifest.train_items]
    test = [_load_pair(base, s, m) for s, m in manifest.test_items]
    return Dataset(train=train, test=test, manifest=manifest)


def save_dataset(dataset, out_dir):
    """Write an in-memory dataset to ``out_dir`` in the manifest format."""
    os.makedirs(os.path.join(out_dir, "spectrograms"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    items = {"train": [], "test": []}
    for split, pairs in (("train", dataset.train), ("test", dataset.test)):
        for k, (spec, mask) in enumerate(pairs):
            meta = {
                "freq_start_mhz": spec.freq_start_mhz,
                "freq_end_mhz": spec.freq_end_mhz,
                "integration_seconds": spec.integration_seconds,
                "baseline_id": spec.baseline_id,
            }
            spec_rel = f"spectrograms/{split}_{k:03d}"
            mask_rel = f"masks/{split}_{k:03d}"
            tensorio.write_tensor(
                os.path.join(out_dir, spec_rel),
                np.asarray(spec.values, dtype=np.float32), meta,
            )
            tensorio.write_tensor(os.path.join(out_dir, mask_rel), mask.flags.astype(np.uint8))
            items[split].append((spec_rel + ".hdr", mask_rel + ".hdr"))
    manifest = DatasetManifest(
        train_items=items["train"],
        test_items=items["test"],
        generator_seed=dataset.manifest.generator_seed if dataset.manifest else None,
        contamination_fraction=contamination_stats(
            [m for _, m in dataset.all_pairs]) if dataset.all_pairs else 0.0,
        generator_config=dataset.manifest.generator_config if dataset.manifest else None,
    )
    save_manifest(manifest, os.path.join(out_dir, MANIFEST_NAME))
    return out_dir
