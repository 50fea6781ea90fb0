import os

import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from utils.artifact_store import ArtifactStore, config_digest


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(str(tmp_path / "results"))


def test_header_and_table_round_trip(store):
    frame = pd.DataFrame({"snr_db": [0.0, 10.0], "pe": [0.1, 0.002]})
    provenance = {"experiment": "ber", "N": 200, "beta": ["0.0", "0.05"]}
    path = store.save_table("ber", frame, provenance)

    assert path.endswith("ber.csv")
    loaded, header = store.load_table("ber")
    assert_frame_equal(loaded, frame)
    assert header["experiment"] == "ber"
    assert header["beta"] == "0.0, 0.05"
    assert header["config_digest"] == config_digest(provenance)
    assert "written_at" in header


def test_list_tables_skips_partial_files(store):
    store.save_table("mi", pd.DataFrame({"a": [1]}), {})
    store.save_table("ber", pd.DataFrame({"a": [1]}), {})
    open(os.path.join(store.base_path, ".ber.x.tmp"), "w").close()
    assert store.list_tables() == ["ber", "mi"]


def test_failed_write_leaves_nothing_behind(store, monkeypatch):
    def broken(self, *args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(pd.DataFrame, "to_csv", broken)
    with pytest.raises(OSError, match="disk full"):
        store.save_table("ber", pd.DataFrame({"a": [1]}), {"N": 8})
    assert os.listdir(store.base_path) == []


def test_digest_ignores_key_order():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})
    assert len(config_digest({})) == 16
