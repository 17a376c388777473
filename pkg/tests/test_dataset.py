from __future__ import annotations

import json

import numpy as np
import pytest

from thirdscatter.dataset import (
    PROFILE_COLUMNS,
    DependencyError,
    RaySamples,
    ScatteringDataset,
    TransmissionTail,
    parse_poles,
    read_csv,
    read_dataset,
    read_potential_csv,
    read_profile_csv,
    write_dataset,
    write_poles,
    write_potential_csv,
    write_profile_csv,
)
from thirdscatter.spectral import Z, XGrid


def _dataset() -> ScatteringDataset:
    s = np.array([0.5, 1.0, 2.0])
    data = ScatteringDataset(potential={"name": "gauss", "params": {"eps": 0.1}})
    data.add("L", RaySamples("L1", s, np.array([0.1j, 0.2, -0.3 + 0.1j])))
    data.add("M", RaySamples("L2", s, np.array([1e-4, 2e-4j, 0.0])))
    data.add("N", RaySamples("L4", s, np.array([0.0, -5e-4, 0.0])))
    data.tail = TransmissionTail(t_l1=0.1 - 0.2j, t_l2=0.03)
    return data


def test_value_lookup() -> None:
    data = _dataset()
    assert data.value("L", 1.0 * Z) == pytest.approx(0.2)
    assert data.secondary_delta == pytest.approx(5e-4)
    np.testing.assert_allclose(data.s_values, [0.5, 1.0, 2.0])
    with pytest.raises(DependencyError):
        data.value("L", 1.5 * Z)
    with pytest.raises(DependencyError):
        data.value("R", -1.0 * Z)


def test_add_rejects_wrong_ray() -> None:
    data = _dataset()
    with pytest.raises(ValueError):
        data.add("L", RaySamples("L3", np.array([1.0]), np.array([0.0])))
    with pytest.raises(ValueError):
        data.add("X", RaySamples("L1", np.array([1.0]), np.array([0.0])))
    with pytest.raises(ValueError):
        RaySamples("L9", np.array([1.0]), np.array([0.0]))


def test_dataset_persists(tmp_path) -> None:
    path = write_dataset(_dataset(), tmp_path / "d" / "dataset.json")
    raw = json.loads(path.read_text(encoding="utf-8"))
    assert raw["format"] == "thirdscatter.dataset.v1"
    assert raw["coefficients"]["L"]["L1"]["Im"][0] == pytest.approx(0.1)
    back = read_dataset(path)
    assert back.value("L", 2.0 * Z) == pytest.approx(-0.3 + 0.1j)
    assert back.tail == TransmissionTail(t_l1=0.1 - 0.2j, t_l2=0.03)


def test_read_dataset_errors(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}', encoding="utf-8")
    with pytest.raises(ValueError, match="Not a scattering dataset"):
        read_dataset(bad)


def test_potential_csv(tmp_path) -> None:
    x = np.linspace(-1.0, 1.0, 5)
    path = write_potential_csv(tmp_path / "potential.csv", x, x + 1j * x**2, 2.0 * x)
    xs, q, p = read_potential_csv(path)
    np.testing.assert_array_equal(xs, x)
    np.testing.assert_array_equal(q, x + 1j * x**2)
    np.testing.assert_array_equal(p, 2.0 * x + 0j)


def test_profile_csv(tmp_path) -> None:
    grid = XGrid(-2.0, 2.0, 9)
    k = 0.7 * Z
    psi = np.exp(k * grid.x)
    path = write_profile_csv(tmp_path / "profiles" / "f_L1.csv", grid.x, psi, k * psi, k**2 * psi)
    assert read_csv(path).keys() == set(PROFILE_COLUMNS)
    xs, p0, p1, p2 = read_profile_csv(path)
    np.testing.assert_array_equal(xs, grid.x)
    np.testing.assert_array_equal(p0, psi)
    np.testing.assert_array_equal(p2, k**2 * psi)
    np.testing.assert_allclose(p1 / p0, k, rtol=1e-14)


def test_profile_csv_rejects_other_tables(tmp_path) -> None:
    x = np.linspace(0.0, 1.0, 3)
    path = write_potential_csv(tmp_path / "potential.csv", x, x, x)
    with pytest.raises(ValueError, match="missing"):
        read_profile_csv(path)


def test_parse_poles(tmp_path) -> None:
    poles = [(-0.9 - 0.6j, 0.5 + 0.1j)]
    path = write_poles(tmp_path / "poles.json", poles)
    assert parse_poles(json.loads(path.read_text(encoding="utf-8"))) == poles
    assert parse_poles([{"k_re": -1.0, "k_im": -0.5}]) == [(-1.0 - 0.5j, 0j)]


@pytest.mark.parametrize("raw", ["nope", [1, 2], [{"k_re": "x", "k_im": 0.0}], [{"k_im": 1.0}]])
def test_parse_poles_errors(raw) -> None:
    with pytest.raises(ValueError):
        parse_poles(raw)
