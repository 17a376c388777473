from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.spectral import (
    GEOMETRY,
    Z,
    Z2,
    CubeRootGeometry,
    DomainError,
    KPath,
    XGrid,
    canonical_arg,
    classify_k,
    in_sector,
    line_parameter,
    rotate,
    rotate_label,
)


def _polar(angle: float, r: float = 1.3) -> complex:
    return r * complex(math.cos(angle), math.sin(angle))


def test_z_is_a_primitive_cube_root() -> None:
    assert Z**3 == pytest.approx(1.0)
    assert 1 + Z + Z2 == pytest.approx(0.0, abs=1e-15)
    assert GEOMETRY.invariant_residual() < 1e-14
    assert (GEOMETRY.z, GEOMETRY.z_squared) == (Z, Z2)
    # any other unit-circle point breaks the cube-root identities
    assert CubeRootGeometry(z=1j).invariant_residual() > 0.5
    assert GEOMETRY.rotate(2.0, 4) == pytest.approx(2.0 * Z)


def test_canonical_arg_branch() -> None:
    assert canonical_arg(-1.0 + 0j) == pytest.approx(math.pi)
    assert canonical_arg(Z2) == pytest.approx(4 * math.pi / 3)
    assert canonical_arg(_polar(-math.pi / 2)) == pytest.approx(-math.pi / 2)


@pytest.mark.parametrize(
    ("k", "tag"),
    [
        (2.0 * Z, "L1"),
        (Z2, "L2"),
        (-Z, "L3"),
        (-Z2, "L4"),
        (1.0 + 0j, "R+"),
        (-3.0 + 0j, "R-"),
        (_polar(0.9 * math.pi), "Omega1up"),
        (_polar(1.1 * math.pi), "Omega1down"),
        (_polar(1.5 * math.pi), "Omega2"),
        (_polar(-math.pi / 6), "Omega3down"),
        (_polar(math.pi / 6), "Omega3up"),
        (_polar(math.pi / 2), "Omega4"),
    ],
    ids=lambda v: v if isinstance(v, str) else None,
)
def test_classify_k(k: complex, tag: str) -> None:
    assert classify_k(k).tag == tag


def test_classify_origin() -> None:
    assert classify_k(0j).tag == "origin"


@pytest.mark.parametrize(
    "angle",
    [-math.pi / 2, -math.pi / 6, math.pi / 6, math.pi / 2, 5 * math.pi / 6, 7 * math.pi / 6,
     2 * math.pi / 3, math.pi, 4 * math.pi / 3, -math.pi / 3, 0.0, math.pi / 3],
)
def test_rotation_permutes_labels(angle: float) -> None:
    k = _polar(angle)
    assert classify_k(rotate(k, 1)).tag == rotate_label(classify_k(k)).tag
    assert classify_k(rotate(k, 2)).tag == rotate_label(classify_k(k), 2).tag


def test_rotate_by_three_is_identity() -> None:
    k = _polar(0.4)
    assert rotate(rotate(rotate(k, 1), 1), 1) == pytest.approx(k)
    assert rotate(k, 3) == k


def test_half_planes() -> None:
    assert in_sector(_polar(1.5 * math.pi), "P+")
    assert in_sector(1.0 + 0j, "P-")
    assert not in_sector(1.0 + 0j, "P+")
    assert in_sector(-1.0 + 0j, "Omega1")
    assert in_sector(Z, "Omega1", closed=True)
    assert not in_sector(Z, "Omega1", closed=False)


def test_line_parameter() -> None:
    assert line_parameter(2.5 * Z) == pytest.approx(2.5)
    assert line_parameter(-1.5 * Z) == pytest.approx(-1.5)
    with pytest.raises(DomainError):
        line_parameter(1.0 + 0j)


def test_xgrid() -> None:
    grid = XGrid(-4.0, 4.0, 81)
    assert grid.spacing == pytest.approx(0.1)
    assert grid.x[grid.index_of(0.0)] == pytest.approx(0.0)
    fine = grid.refined()
    assert fine.spacing == pytest.approx(0.05)
    np.testing.assert_allclose(fine.x[::2], grid.x, atol=1e-12)
    inner = grid.x[grid.interior(0.5)]
    assert inner[0] > -2.1 and inner[-1] < 2.1


def test_xgrid_rejects_bad_range() -> None:
    with pytest.raises(DomainError):
        XGrid(1.0, 2.0, 16)
    with pytest.raises(DomainError):
        XGrid(-1.0, 1.0, 4)


def test_kpath() -> None:
    path = KPath.ray("L1", np.array([0.5, 1.0, 2.0]))
    assert len(path) == 3
    np.testing.assert_allclose(path.k, Z * np.array([0.5, 1.0, 2.0]))
    with pytest.raises(DomainError):
        KPath.ray("L1", np.array([-1.0]))
    with pytest.raises(DomainError):
        KPath(k=np.array([1.0 + 0j]), label=classify_k(Z))
