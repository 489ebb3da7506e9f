"""Training loop behavior, checkpoints, history, evaluation plumbing."""

import numpy as np
import pytest

from spikeflag.data import GeneratorConfig, RFIMask, Spectrogram, generate_synthetic
from spikeflag.encoding import Encoder, EncodingConfig
from spikeflag.errors import FormatError, TrainingDivergedError
from spikeflag.network import NetworkConfig, init_params
from spikeflag.training import (
    TrainingConfig,
    encode_patch_set,
    build_patches,
    evaluate,
    load_checkpoint,
    predict_mask,
    save_checkpoint,
    train,
    write_history_csv,
)


def tiny_pair(seed=0, size=32, contamination=0.08):
    """One synthetic 32x32 spectrogram/mask pair without the file machinery."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.9, 1.1, (size, size))
    flags = np.zeros((size, size), dtype=bool)
    band = int(rng.integers(2, size - 4))
    flags[band:band + 2, :] = True
    values[flags] += 20.0
    return Spectrogram(values), RFIMask(flags)


def latency_setup(seed=0, beta=0.85):
    enc = EncodingConfig(method="latency", exposure=4)
    net = NetworkConfig(input_width=32, output_width=32, hidden_width=64, beta=beta)
    return enc, net


class TestTrainLoop:
    def test_single_epoch_records_one_row(self):
        enc, net = latency_setup()
        cfg = TrainingConfig(batch_size=4, max_epochs=1, seed=0)
        _, history = train(net, [tiny_pair()], cfg, enc)
        assert len(history) == 1
        assert set(history[0]) == {"epoch", "train_loss", "val_loss", "lr"}

    def test_single_patch_overfit_descends(self):
        # loss on one repeated patch drops with at most two non-monotone steps
        enc, net = latency_setup()
        cfg = TrainingConfig(batch_size=1, max_epochs=20, seed=0, initial_lr=3e-3,
                             lr_patience=50, stop_patience=50)
        _, history = train(net, [tiny_pair()], cfg, enc)
        losses = [h["train_loss"] for h in history]
        violations = sum(1 for a, b in zip(losses, losses[1:]) if b > a + 1e-9)
        assert losses[-1] < losses[0]
        assert violations <= 2

    def test_same_seed_reproduces_weights(self):
        enc, net = latency_setup()
        cfg = TrainingConfig(batch_size=2, max_epochs=3, seed=7)
        pairs = [tiny_pair(0), tiny_pair(1)]
        p1, h1 = train(net, pairs, cfg, enc)
        p2, h2 = train(net, pairs, cfg, enc)
        for k in p1:
            assert np.array_equal(p1[k], p2[k])
        assert h1 == h2

    def test_different_seeds_differ(self):
        enc, net = latency_setup()
        pairs = [tiny_pair(0)]
        p1, _ = train(net, pairs, TrainingConfig(batch_size=2, max_epochs=2, seed=1), enc)
        p2, _ = train(net, pairs, TrainingConfig(batch_size=2, max_epochs=2, seed=2), enc)
        assert any(not np.array_equal(p1[k], p2[k]) for k in p1)

    def test_non_finite_loss_aborts_with_diagnostics(self):
        enc, net = latency_setup()
        cfg = TrainingConfig(batch_size=1, max_epochs=2, seed=0)
        params = init_params(net, seed=0)
        params["w1"] += np.inf
        with pytest.raises(TrainingDivergedError) as err:
            train(net, [tiny_pair()], cfg, enc, params=params)
        assert err.value.epoch == 0
        assert err.value.batch == 0

    def test_early_stopping_cuts_run_short(self):
        enc, net = latency_setup()
        cfg = TrainingConfig(batch_size=4, max_epochs=60, seed=0,
                             initial_lr=1e-9, lr_patience=1, stop_patience=2)
        _, history = train(net, [tiny_pair()], cfg, enc)
        assert len(history) < 60


class TestEncodedPatchSet:
    def test_shapes_for_latency(self):
        pairs = [tiny_pair(0)]
        enc = Encoder(EncodingConfig(method="latency", exposure=4))
        pset = encode_patch_set(build_patches(pairs), enc)
        assert pset.inputs.shape == (1, 32, 32, 4)
        assert pset.targets.shape == (1, 32, 32, 4)
        assert pset.weights is None

    def test_rate_targets_are_counts(self):
        pairs = [tiny_pair(0)]
        enc = Encoder(EncodingConfig(method="rate", exposure=8))
        pset = encode_patch_set(build_patches(pairs), enc)
        assert pset.targets.shape == (1, 32, 32)

    def test_padded_input_creates_weights(self):
        rng = np.random.default_rng(0)
        spec = Spectrogram(rng.uniform(0.9, 1.1, (40, 40)))
        mask = RFIMask(np.zeros((40, 40), dtype=bool))
        enc = Encoder(EncodingConfig(method="latency", exposure=4))
        pset = encode_patch_set(build_patches([(spec, mask)]), enc)
        assert pset.weights is not None
        assert pset.weights.min() == 0.0 and pset.weights.max() == 1.0

    def test_delta_weights_cover_both_polarities(self):
        rng = np.random.default_rng(0)
        spec = Spectrogram(rng.uniform(0.9, 1.1, (40, 40)))
        mask = RFIMask(np.zeros((40, 40), dtype=bool))
        enc = Encoder(EncodingConfig(method="delta", exposure=1))
        pset = encode_patch_set(build_patches([(spec, mask)]), enc)
        assert pset.weights.shape[1] == 64


class TestEvaluate:
    def test_zero_network_scores_like_silent_predictor(self, tmp_path):
        cfg = GeneratorConfig(n_train=1, n_test=2, freq_channels=64,
                              time_steps=64, seed=4)
        ds = generate_synthetic(cfg, tmp_path / "d")
        enc = EncodingConfig(method="latency", exposure=4)
        net = NetworkConfig(input_width=32, output_width=32, beta=0.9)
        params = {k: np.zeros_like(v) for k, v in init_params(net, 0).items()}
        rec = evaluate(params, net, ds.test, enc)
        contamination = np.mean([m.flags.mean() for _, m in ds.test])
        assert rec.f1 == 0.0
        assert rec.accuracy == pytest.approx(1.0 - contamination, abs=1e-6)
        assert rec.auroc == pytest.approx(0.5)

    def test_predict_mask_shapes_and_padding(self):
        rng = np.random.default_rng(1)
        spec = Spectrogram(rng.uniform(0.9, 1.1, (40, 48)))
        mask = RFIMask(np.zeros((40, 48), dtype=bool))
        enc = Encoder(EncodingConfig(method="latency", exposure=4))
        net = NetworkConfig(input_width=32, output_width=32, beta=0.9)
        params = init_params(net, 0)
        flags, scores, valid = predict_mask(params, net, enc, spec, mask)
        assert flags.shape == (40, 48)
        assert scores.shape == (40, 48)
        assert valid.all()


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        enc = EncodingConfig(method="sf-first", exposure=5, rng_seed=9)
        net = NetworkConfig(input_width=64, output_width=32, beta=0.77)
        params = init_params(net, seed=4)
        path = save_checkpoint(str(tmp_path / "m"), params, net, enc,
                               seed=4, epoch=17, wall_time_seconds=1.25)
        loaded, net2, enc2, meta = load_checkpoint(path)
        for k in params:
            assert np.array_equal(loaded[k], params[k])
        assert net2 == net
        assert enc2 == enc
        assert meta["seed"] == 4 and meta["epoch"] == 17
        assert meta["wall_time_seconds"] == pytest.approx(1.25)

    def test_truncated_blob_rejected(self, tmp_path):
        enc = EncodingConfig(method="latency", exposure=4)
        net = NetworkConfig(input_width=8, output_width=8, hidden_width=8, beta=0.9)
        path = save_checkpoint(str(tmp_path / "m"), init_params(net, 0), net, enc)
        blob = tmp_path / "m.ckpt.bin"
        blob.write_bytes(blob.read_bytes()[:-16])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_history_csv(self, tmp_path):
        rows = [{"epoch": 0, "train_loss": 1.5, "val_loss": 2.0, "lr": 1e-3},
                {"epoch": 1, "train_loss": 1.0, "val_loss": 1.8, "lr": 1e-3}]
        path = write_history_csv(str(tmp_path / "h.csv"), rows)
        lines = open(path).read().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,lr"
        assert lines[1].startswith("0,1.5")
        assert len(lines) == 3
