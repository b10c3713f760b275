import pytest

from geomotion.errors import ConfigError
from geomotion.verify import DEFAULT_TOLERANCE, REGISTRY, run_suite


def test_full_registry_passes():
    rows = run_suite()
    assert len(rows) == len(REGISTRY)
    for name, err, ok in rows:
        assert ok, f"{name}: {err:.3e} exceeds {DEFAULT_TOLERANCE}"


def test_selected_checks_run_in_order():
    rows = run_suite(["dice_loss", "focal_loss"])
    assert [r[0] for r in rows] == ["dice_loss", "focal_loss"]


def test_unknown_check_rejected():
    with pytest.raises(ConfigError):
        run_suite(["not_a_check"])
