"""Checkpoint container: write-read round trip must be bit-exact."""

import numpy as np
import pytest

from ctgn.diffcore import Checkpoint, load_checkpoint, save_checkpoint
from ctgn.errors import ContractViolation


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ckpt = Checkpoint(
        params={"layer.W": rng.normal(size=(7, 5)),
                "layer.b": rng.normal(size=5) * 1e-300,
                "odd/name.x": np.array([np.pi, -0.0, 1e308])},
        step=1234,
        adam_m={"layer.W": rng.normal(size=(7, 5))},
        adam_v={"layer.W": np.abs(rng.normal(size=(7, 5)))},
        extras={"memory_s": rng.normal(size=(11, 5)),
                "unseen_nodes": np.array([3, 8], dtype=np.int64)},
    )
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, ckpt)
    loaded = load_checkpoint(path)
    assert loaded.step == 1234
    for name, arr in ckpt.params.items():
        assert np.array_equal(loaded.params[name], arr, equal_nan=False)
        assert loaded.params[name].dtype == np.float64
    # -0.0 must survive with its sign bit
    assert np.signbit(loaded.params["odd/name.x"][1])
    assert np.array_equal(loaded.adam_m["layer.W"], ckpt.adam_m["layer.W"])
    assert np.array_equal(loaded.extras["unseen_nodes"], ckpt.extras["unseen_nodes"])


def test_non_checkpoint_file_rejected(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, foo=np.ones(3))
    with pytest.raises(ContractViolation):
        load_checkpoint(path)
