from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.bound_states import (
    BoundStateError,
    SearchRegion,
    characterize,
    contour_count,
    dependency_constant,
    dependency_rotation,
    find_bound_states,
    nearest_branch_ray,
    newton_refine,
    winding_number,
)
from thirdscatter.spectral import Z, Z2, canonical_arg


def _polar(r: float, angle: float) -> complex:
    return r * complex(math.cos(angle), math.sin(angle))


def test_dependency_rotation() -> None:
    assert dependency_rotation(_polar(1.0, 1.25 * math.pi)) == Z
    assert dependency_rotation(_polar(1.0, 0.75 * math.pi)) == Z2
    with pytest.raises(BoundStateError):
        dependency_rotation(-1.0 + 0j)


def test_search_region_validation() -> None:
    with pytest.raises(ValueError):
        SearchRegion(r_min=0.0)
    with pytest.raises(ValueError):
        SearchRegion(r_min=2.0, r_max=1.0)
    with pytest.raises(ValueError):
        SearchRegion(theta_min=0.5 * math.pi)


def test_subsectors_split_at_branch_rays() -> None:
    subs = SearchRegion().subsectors()
    assert len(subs) == 4
    assert subs[1].theta_min == pytest.approx(5 * math.pi / 6)
    assert subs[-1].theta_max == pytest.approx(4 * math.pi / 3)
    narrow = SearchRegion(1.0, 2.0, 1.18 * math.pi, 1.22 * math.pi)
    assert narrow.subsectors() == [narrow]


def test_boundary_is_closed_and_counterclockwise() -> None:
    region = SearchRegion(1.0, 2.0, 0.8 * math.pi, 0.9 * math.pi)
    path = region.boundary(16)
    assert path[0] == path[-1]
    centre = 1.5 * np.exp(0.85j * math.pi)
    assert winding_number(path - centre) == pytest.approx(1.0)
    assert winding_number(path - 3.0) == pytest.approx(0.0, abs=1e-12)


def test_contour_count_of_polynomial() -> None:
    roots = [_polar(2.0, 0.9 * math.pi), _polar(3.0, 1.1 * math.pi)]

    def poly(k: complex) -> complex:
        return (k - roots[0]) * (k - roots[1]) * (k - 1.0)

    assert contour_count(poly, SearchRegion()) == 2
    assert contour_count(poly, SearchRegion(0.2, 5.0, 2 * math.pi / 3, math.pi)) == 1


def test_newton_refine_converges() -> None:
    root = _polar(2.0, 0.9 * math.pi)
    cand = newton_refine(lambda k: k * k - root * root, _polar(2.1, 0.92 * math.pi), SearchRegion())
    assert cand.status == "converged"
    assert cand.k == pytest.approx(root, rel=1e-8)
    assert cand.near_ray is None


def test_newton_refine_leaving_region() -> None:
    cand = newton_refine(lambda k: k - 1.0, _polar(2.0, 0.9 * math.pi), SearchRegion())
    assert cand.status == "outside-region"


def test_nearest_branch_ray() -> None:
    assert nearest_branch_ray(-2.0 + 1e-5j) == "pi"
    assert nearest_branch_ray(_polar(1.0, 1.1 * math.pi)) is None


def test_free_search_is_empty(free_pair, small_grid) -> None:
    found = find_bound_states(free_pair, small_grid)
    assert found.roots == []
    assert found.contour_count == 0


@pytest.mark.slow
def test_soliton_bound_state_is_recovered(soliton, soliton_grid) -> None:
    k1 = complex(soliton.poles[0])
    pair = soliton.potential_pair()
    arg = canonical_arg(k1)
    region = SearchRegion(0.9 * abs(k1), 1.1 * abs(k1), arg - 0.05, arg + 0.05)
    found = find_bound_states(pair, soliton_grid, region=region, n_radial=6, n_angular=6, n_contour=16)
    assert found.contour_count == 1
    assert found.roots[0] == pytest.approx(k1, abs=1e-5)

    record = characterize(found.roots[0], pair, soliton_grid)
    assert record.status == "ok"
    assert record.dependency == dependency_constant(found.roots[0], pair, soliton_grid)
    gamma = complex(soliton.gammas[0])
    assert abs(record.gamma - gamma) / abs(gamma) < 1e-4
    assert record.c_l * abs(record.dependency) == pytest.approx(record.c_r, rel=1e-6)


def test_dependency_constant_rejects_non_bound_states(free_pair, small_grid) -> None:
    # free f and g(z k) are independent exponentials, so their ratio drifts with x
    with pytest.raises(BoundStateError) as exc:
        dependency_constant(_polar(1.2, 1.25 * math.pi), free_pair, small_grid)
    assert exc.value.spread is not None and exc.value.spread > 1.0
