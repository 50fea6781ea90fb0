import pytest
from pandas.testing import assert_frame_equal

from utils import cli
from utils.artifact_store import ArtifactStore
from utils.errors import GridError
from utils.trial_coordinator import WORKERS_ENV

SMALL_BER = """\
[experiment]
experiment = ber
schemes = ar, tr
N = 16
delay_spread = 3e-9
beta = 0
sigma_xi2 = 0
snr_db = 0, 10
trials = 400
batch_size = 200
"""

SMALL_ESTIMATION = """\
[experiment]
experiment = estimation
N = 32
delay_spread = 3e-9
training_amplitude = 1.0
training_length = 31
snr_db = 0, 10
trials = 20
"""


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_invalid_configuration_exits_2(tmp_path, capsys):
    path = _write(tmp_path, "[experiment]\niota = 0\n")
    assert cli.main(["--config", path, "--output", str(tmp_path / "out")]) == 2
    assert "iota" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "absent.ini")]) == 2


def test_estimation_run_writes_its_table(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, SMALL_ESTIMATION)
    assert cli.main(["--config", path, "--output", str(out)]) == 0
    assert (out / "estimation.csv").exists()
    frame, provenance = ArtifactStore(str(out)).load_table("estimation")
    assert len(frame) == 2
    assert provenance["experiment"] == "estimation"


def test_result_table_reruns_to_the_same_numbers(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    path = _write(tmp_path, SMALL_BER)
    assert cli.main(["--config", path, "--output", str(first)]) == 0
    assert cli.main(["--config", str(first / "ber.csv"), "--output", str(second)]) == 0

    a, _ = ArtifactStore(str(first)).load_table("ber")
    b, _ = ArtifactStore(str(second)).load_table("ber")
    assert len(a) == 4
    assert_frame_equal(a, b)


def test_simulator_failure_exits_1(tmp_path, monkeypatch, capsys):
    def failing(config, coordinator=None):
        raise GridError("grid too narrow")

    monkeypatch.setattr(cli, "execute", failing)
    path = _write(tmp_path, SMALL_BER)
    assert cli.main(["--config", path, "--output", str(tmp_path / "out")]) == 1
    assert "grid too narrow" in capsys.readouterr().err
    assert not (tmp_path / "out" / "ber.csv").exists()
