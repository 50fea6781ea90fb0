import pytest

from utils.trial_coordinator import WORKERS_ENV, BatchTask, TrialCoordinator, default_workers


def _double(x):
    return 2 * x


def test_inline_results_follow_task_order():
    coordinator = TrialCoordinator({"double": _double}, workers=1)
    tasks = [BatchTask("double", value) for value in (3, 1, 2)]
    assert coordinator.run(tasks) == [6, 2, 4]
    assert coordinator.run([]) == []


def test_unknown_task_kind():
    coordinator = TrialCoordinator({"double": _double}, workers=1)
    with pytest.raises(KeyError, match="halve"):
        coordinator.run([BatchTask("halve", 4)])


@pytest.mark.parametrize("value, expected", [("4", 4), ("0", 1), ("many", 1), ("", 1)])
def test_default_workers_from_environment(monkeypatch, value, expected):
    monkeypatch.setenv(WORKERS_ENV, value)
    assert default_workers() == expected


def test_process_pool_keeps_order():
    coordinator = TrialCoordinator({"abs": abs}, workers=2)
    tasks = [BatchTask("abs", value) for value in (-3, 5, -7, 0)]
    assert coordinator.run(tasks) == [3, 5, 7, 0]
