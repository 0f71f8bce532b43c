import os

import pytest

import snspd
import smoke_test


def test_smoke():
    smoke_test.main()


def test_config_errors_name_the_key():
    with pytest.raises(ValueError, match="n_wire: unknown key"):
        snspd.simulate({"geometry": {"n_wire": 2}}, seed=1)


def test_invalid_parameter_raises_value_error():
    with pytest.raises(ValueError):
        snspd.dead_time(eta_quantile=1.5)


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(OSError):
        snspd.read_tags(os.fspath(tmp_path / "missing.pqtg"))


def test_efficiency_falls_with_rate():
    eff = [e for _, _, e in snspd.efficiency_vs_rate([1e5, 1e7, 1e9])]
    assert eff[0] > eff[1] > eff[2] > 0.0
