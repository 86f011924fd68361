import json

import numpy as np
import pytest

from shearrg import config, parallel, records, rng
from shearrg.errors import UsageError


def test_rng_counter_keyed():
    a = rng.normals(3, [0, 1, 2], 5)
    b = rng.normals(3, [2], 5)
    np.testing.assert_array_equal(a[2], b[0])
    assert not np.array_equal(rng.normals(3, [0], 5, rng.PATHS), rng.normals(3, [0], 5, rng.BRIDGES))


def _square(idx):
    return np.asarray(idx, dtype=float) ** 2


def test_map_blocks_order_and_workers(monkeypatch):
    monkeypatch.setenv(parallel.WORKERS_ENV, "1")
    a = parallel.map_blocks(_square, 1000, block_size=64)
    monkeypatch.setenv(parallel.WORKERS_ENV, "3")
    b = parallel.map_blocks(_square, 1000, block_size=64)
    np.testing.assert_array_equal(a, np.arange(1000.0) ** 2)
    np.testing.assert_array_equal(a, b)


def test_mean_and_stderr():
    m, s = parallel.mean_and_stderr(np.full(10, 0.3))
    assert s == 0.0
    m, s = parallel.mean_and_stderr(np.array([1.0, 3.0]))
    assert m == 2.0 and s == pytest.approx(1.0)


def test_record_roundtrip():
    r = records.ResultRecord.create("x", {"a": 1.5}, {"v": complex(1, 2), "arr": np.arange(3)},
                                    seed=4)
    back = records.ResultRecord.from_json(r.to_json())
    assert back.outputs["v"] == {"re": 1.0, "im": 2.0}
    assert back.provenance["seed"] == 4


def test_csv_round_trip_digits():
    text = records.format_csv(["a"], [(0.1 + 0.2,)])
    assert float(text.splitlines()[1]) == 0.1 + 0.2


def test_config_validation(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema_version": 1, "command": "msd",
                                "options": {"epsilon": 1.0, "n_paths": 8}}))
    assert config.load(path, "msd") == {"epsilon": 1.0, "n_paths": 8}
    with pytest.raises(UsageError):
        config.load(path, "flow")
    path.write_text(json.dumps({"schema_version": 1, "options": {"n_paths": 1.5}}))
    with pytest.raises(UsageError):
        config.load(path, "msd")
    path.write_text(json.dumps({"schema_version": 2, "options": {}}))
    with pytest.raises(UsageError):
        config.load(path, "msd")
