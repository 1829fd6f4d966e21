import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from services.data import gen_phantoms
from services.errors import ConfigurationError, FormatError, ShapeError, TrainingError
from services.model import ModelSpec, init_params, linear_diagnostic_params
from services.optim import init_optimizer_state
from services.sampling import cartesian_mask
from services.trainer import (
    Checkpoint,
    TrainConfig,
    benchmark,
    checkpoint_hash,
    evaluate,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    train,
)


def _config(tmp_path, name="run", **overrides):
    values = dict(epochs=1, batch_size=4, eval_every=1, seed=2, threads=1, output_dir=str(tmp_path / name))
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def linear_checkpoint():
    config = TrainConfig(precision="float64", kspace_scale=1.0, batch_size=4, threads=1)
    return Checkpoint(params=linear_diagnostic_params(16, 16), config=config, epoch=0)


# =============================================================================
# Конфиг
# =============================================================================


def test_config_defaults_depend_on_model():
    assert TrainConfig().optimizer == "adam"
    assert TrainConfig().lr == pytest.approx(1e-3)
    automap = TrainConfig(model="automap")
    assert automap.optimizer == "rmsprop"
    assert automap.lr == pytest.approx(2e-5)
    assert TrainConfig(optimizer="rmsprop", lr=0.5).lr == 0.5


def test_provenance_excludes_machine_fields():
    provenance = TrainConfig(output_dir="/tmp/x", threads=8).provenance()
    assert "output_dir" not in provenance
    assert "threads" not in provenance
    assert provenance["optimizer"] == "adam"


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(kspace_scale=0.0)


# =============================================================================
# Чекпойнт
# =============================================================================


def test_checkpoint_round_trip(tmp_path):
    params = init_params(ModelSpec(n=8, m=6), seed=1)
    optimizer = init_optimizer_state("adam", params.tensors, lr=0.01)
    optimizer.step = 3
    optimizer.buffers["m"]["dt1.rows.bias"][:] = 0.5
    rng_state = np.random.default_rng(5).bit_generator.state
    ckpt = Checkpoint(
        params=params,
        config=TrainConfig(epochs=7),
        epoch=3,
        optimizer=optimizer,
        rng_state=rng_state,
        loss_history=[0.3, 0.2, 0.1],
    )
    path = save_checkpoint(ckpt, tmp_path / "ckpt")
    assert ckpt.path == path

    loaded = load_checkpoint(path)
    assert loaded.epoch == 3
    assert loaded.loss_history == [0.3, 0.2, 0.1]
    assert loaded.config.epochs == 7
    assert loaded.rng_state == rng_state
    assert loaded.params.spec == params.spec
    for name in params.names:
        assert_array_equal(loaded.params.tensors[name], params.tensors[name])
        assert loaded.params.tensors[name].dtype == np.float32
    assert loaded.optimizer.step == 3
    assert loaded.optimizer.lr == 0.01
    assert_array_equal(loaded.optimizer.buffers["m"]["dt1.rows.bias"], np.full(16, 0.5))


def test_checkpoint_corruption_detected(tmp_path):
    params = init_params(ModelSpec(n=4, m=4), seed=0)
    path = save_checkpoint(Checkpoint(params=params, config=TrainConfig()), tmp_path / "ckpt")
    blob_path = path / "tensors.bin"
    blob = bytearray(blob_path.read_bytes())

    blob[10] ^= 0xFF
    blob_path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="sha256"):
        load_checkpoint(path)

    blob_path.write_bytes(bytes(blob[:-4]))
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert exc.value.offset == len(blob) - 4

    (path / "manifest.json").write_text("{}", encoding="utf-8")
    with pytest.raises(FormatError):
        load_checkpoint(path)


# =============================================================================
# Обучение
# =============================================================================


def test_zero_lr_leaves_params_unchanged(tmp_path, phantoms16, half_mask16):
    result = train(_config(tmp_path, lr=0.0), phantoms16, half_mask16)
    initial = init_params(ModelSpec(n=16, m=16), seed=2)
    for name in initial.names:
        assert_array_equal(result.checkpoint.params.tensors[name], initial.tensors[name])

    assert len(result.loss_history) == 1
    assert np.isfinite(result.loss_history[0])
    out_dir = tmp_path / "run"
    assert (out_dir / "train_config.json").exists()
    assert (out_dir / "checkpoints" / "epoch_0000" / "manifest.json").exists()
    assert result.final_dir == (out_dir / "final").resolve()
    lines = (out_dir / "loss_history.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 2


def test_training_is_reproducible(tmp_path, phantoms16, half_mask16):
    first = train(_config(tmp_path, "a", epochs=2), phantoms16, half_mask16)
    second = train(_config(tmp_path, "b", epochs=2), phantoms16, half_mask16)
    assert first.loss_history == second.loss_history
    assert checkpoint_hash(first.final_dir) == checkpoint_hash(second.final_dir)


def test_resume_matches_uninterrupted_run(tmp_path, phantoms16, half_mask16):
    full = train(_config(tmp_path, "full", epochs=2), phantoms16, half_mask16)
    assert (tmp_path / "full" / "checkpoints" / "epoch_0001").exists()
    assert not (tmp_path / "full" / "checkpoints" / "epoch_0002").exists()

    resumed = train(
        _config(tmp_path, "resumed", epochs=2),
        phantoms16,
        half_mask16,
        resume_from=tmp_path / "full" / "checkpoints" / "epoch_0001",
    )
    assert resumed.loss_history == full.loss_history
    assert (resumed.final_dir / "tensors.bin").read_bytes() == (full.final_dir / "tensors.bin").read_bytes()


def test_resume_rejects_other_model(tmp_path, phantoms16, half_mask16):
    train(_config(tmp_path, "base"), phantoms16, half_mask16)
    with pytest.raises(ConfigurationError):
        train(
            _config(tmp_path, "other", precision="float64"),
            phantoms16,
            half_mask16,
            resume_from=tmp_path / "base" / "final",
        )


def test_non_finite_loss_names_last_checkpoint(tmp_path, phantoms16, half_mask16):
    with pytest.raises(TrainingError) as exc:
        train(_config(tmp_path, kspace_scale=1e38), phantoms16, half_mask16)
    assert exc.value.last_checkpoint.endswith("epoch_0000")


def test_train_config_is_written(tmp_path, phantoms16, half_mask16):
    train(_config(tmp_path, lr=0.0), phantoms16, half_mask16)
    saved = json.loads((tmp_path / "run" / "train_config.json").read_text(encoding="utf-8"))
    assert saved["lr"] == 0.0
    assert saved["batch_size"] == 4


# =============================================================================
# Оценка и бенчмарк
# =============================================================================


def test_linear_model_evaluation(linear_checkpoint, phantoms16, full_mask16):
    report = evaluate(linear_checkpoint, phantoms16, full_mask16, threads=1)
    assert report.count == 8
    assert report.mask_fraction == 1.0
    assert report.model_kind == "dautomap"
    assert min(report.model.psnr) > 100


def test_evaluation_with_comparison(linear_checkpoint, phantoms16, half_mask16):
    report = evaluate(linear_checkpoint, phantoms16, half_mask16, compare_with=linear_checkpoint, threads=1)
    assert report.mask_fraction == 0.5
    assert len(report.model.psnr) == len(report.zero_filled.psnr) == 8
    assert report.comparison_kind == "dautomap"
    assert report.comparison.psnr == report.model.psnr
    # одинаковые ряды: тест Уилкоксона вырожден
    assert report.wilcoxon_vs_comparison is None
    assert report.wilcoxon_vs_zero_filled is not None


def test_reconstruct(linear_checkpoint, phantoms16, full_mask16):
    recon = reconstruct(linear_checkpoint, phantoms16, full_mask16, index=3)
    assert recon.prediction.shape == recon.target.shape == recon.zero_filled.shape == (16, 16)
    np.testing.assert_allclose(recon.prediction, phantoms16.images[3], atol=1e-6)
    with pytest.raises(ConfigurationError):
        reconstruct(linear_checkpoint, phantoms16, full_mask16, index=8)
    with pytest.raises(ShapeError):
        reconstruct(linear_checkpoint, phantoms16, cartesian_mask(8, 8, 1.0, seed=0))


def test_benchmark():
    params = init_params(ModelSpec(n=8, m=8), seed=0)
    result = benchmark(params, n_runs=1, warmup_runs=0, threads=1)
    assert result.std_ms == 0.0
    assert result.mean_ms > 0.0
    assert result.param_count == params.param_count()
    several = benchmark(params, n_runs=3, warmup_runs=1, threads=1)
    assert several.runs == 3
    assert several.mean_ms > 0.0 and several.std_ms >= 0.0
    with pytest.raises(ConfigurationError):
        benchmark(params, n_runs=0)


@pytest.mark.slow
def test_desk_scale_training_beats_zero_filled(tmp_path):
    train_set = gen_phantoms(200, 32, 32, seed=0)
    test_set = gen_phantoms(30, 32, 32, seed=1)
    mask = cartesian_mask(32, 32, 2.0, seed=0)
    config = TrainConfig(
        epochs=200,
        batch_size=16,
        eval_every=50,
        kspace_scale=1 / 32,
        output_dir=str(tmp_path / "desk"),
    )
    result = train(config, train_set, mask)
    assert result.loss_history[-1] < 0.25 * result.loss_history[0]

    report = evaluate(result.final_dir, test_set, mask)
    assert report.psnr_gain_db >= 3.0
    assert report.wilcoxon_vs_zero_filled.p_value < 0.01
