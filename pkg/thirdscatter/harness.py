from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Callable

import numpy as np

from thirdscatter import __version__
from thirdscatter.bound_states import (
    BoundStateRecord,
    SearchRegion,
    characterize,
    find_bound_states,
)
from thirdscatter.config import ConfigError, RunConfig
from thirdscatter.dataset import (
    ScatteringDataset,
    read_csv,
    read_dataset,
    read_potential_csv,
    write_csv,
    write_dataset,
    write_json,
    write_poles,
    write_potential_csv,
    write_profile_csv,
)
from thirdscatter.direct import (
    PRINTED_DOWN_CONSTANT,
    calibrate_branch_constants,
    compute_dataset,
    coupling_identity_residual,
    extract_left,
    free_profile,
    inverse_transmission,
    large_k_profile_fit,
    large_k_remainder,
    large_k_sweep,
    relative_spread,
    solve_basic,
    tail_constants_from_potentials,
    tail_expansion,
    transmission_from_wronskian,
    wronskian3,
    wronskian3_profile,
    wronskian_triple,
)
from thirdscatter.lock import OutputLock
from thirdscatter.marchenko import (
    ModelViolationError,
    NystromGrid,
    RhoKernel,
    build_rho,
    neumann_iterate,
    recover_from_F,
    recover_from_G,
    solve_marchenko,
    solve_marchenko_grid,
    support_check,
    system_residual,
)
from thirdscatter.numerics import relative_l2
from thirdscatter.potentials import PotentialPair, build_preset, free
from thirdscatter.report import RunReport
from thirdscatter.riemann_hilbert import (
    InconsistentDataError,
    ReflectionlessSolution,
    RHData,
    assemble_phi,
    centered_norming_constant,
    jump_residuals,
    jump_samples,
    normalization_error,
    phi_ode_residual,
    recover_from_minus,
    recover_from_plus,
    reduced_identity_residual,
    solve_reflectionless,
)
from thirdscatter.spectral import GEOMETRY, Z, Z2, XGrid, canonical_arg, ray_points
from thirdscatter.storage import RunStore


log = logging.getLogger("thirdscatter.harness")

LEDGER_NAME = "runs.sqlite3"
REPORT_NAME = "report.json"
PLOT_KINDS = ("reflection", "potential", "marchenko-slice")

# one-pole soliton used when rh-solitons runs without a pole list
DEFAULT_POLE = 1.1 * complex(math.cos(1.2 * math.pi), math.sin(1.2 * math.pi))

# interior test points for Wronskian constancy and the dual transmission route
_WRONSKIAN_RADII = (0.5, 1.0, 2.0, 3.0)
_WRONSKIAN_ANGLES = (0.8 * math.pi, 0.95 * math.pi, 1.05 * math.pi, 1.2 * math.pi)


def _cx(value: complex) -> dict[str, float]:
    value = complex(value)
    return {"Re": float(value.real), "Im": float(value.imag)}


def _provenance(cfg: RunConfig) -> dict[str, Any]:
    return {"config_hash": cfg.config_hash(), "version": __version__, "config": cfg.as_dict()}


def _grid(cfg: RunConfig) -> XGrid:
    g = cfg.grid
    return XGrid(g.x_min, g.x_max, g.n_points)


def _s_values(cfg: RunConfig) -> np.ndarray:
    s = cfg.sweep
    return np.linspace(s.s_min, s.s_max, s.n_s)


def _large_k(cfg: RunConfig) -> np.ndarray:
    s = cfg.sweep
    return large_k_sweep("plus", s.k_min, s.k_max, s.n_large_k)


def _region(cfg: RunConfig) -> SearchRegion:
    b = cfg.bound_states
    return SearchRegion(b.r_min, b.r_max, b.theta_min, b.theta_max)


def _nystrom(cfg: RunConfig) -> NystromGrid:
    m = cfg.marchenko
    return NystromGrid(m.y_max, m.n_panels, m.order)


def _marchenko_grid(cfg: RunConfig) -> XGrid:
    m = cfg.marchenko
    return XGrid(m.x_min, m.x_max, m.n_x)


def configured_poles(cfg: RunConfig) -> list[tuple[complex, complex]]:
    poles = [
        (complex(p["k_re"], p["k_im"]), complex(p["gamma_re"], p["gamma_im"])) for p in cfg.poles
    ] or [(DEFAULT_POLE, 0j)]
    return [(k, g if g != 0 else centered_norming_constant(k)) for k, g in poles]


def build_potential(cfg: RunConfig) -> PotentialPair:
    tail_tol = cfg.tol("tail_tol")
    if cfg.preset == "soliton":
        poles = configured_poles(cfg)
        sol = ReflectionlessSolution(
            poles=np.array([k for k, _ in poles]), gammas=np.array([g for _, g in poles])
        )
        return sol.potential_pair(tail_tol=tail_tol)
    return build_preset(cfg.preset, cfg.params, tail_tol=tail_tol)


def _bound_state_records(
    pair: PotentialPair, grid: XGrid, cfg: RunConfig, region: SearchRegion, **search: Any
) -> tuple[list[BoundStateRecord], int]:
    b = cfg.bound_states
    found = find_bound_states(
        pair,
        grid,
        region=region,
        n_radial=search.get("n_radial", b.n_radial),
        n_angular=search.get("n_angular", b.n_angular),
        n_contour=search.get("n_contour", b.n_contour),
        root_tol=cfg.tol("root_tol"),
        route=b.route,  # type: ignore[arg-type]
        threads=cfg.threads,
    )
    records = [characterize(k, pair, grid, route=b.route) for k in found.roots]  # type: ignore[arg-type]
    return records, found.contour_count


def _check_bound_states(report: RunReport, records: list[BoundStateRecord], pair: PotentialPair, grid: XGrid, cfg: RunConfig) -> None:
    for i, rec in enumerate(records):
        t_inv = inverse_transmission(rec.k, pair, grid, route=cfg.bound_states.route)  # type: ignore[arg-type]
        scale = abs(rec.residue_tl) / max(abs(rec.k), 1.0) if math.isfinite(abs(rec.residue_tl)) else 1.0
        report.check(f"bound_state[{i}].root", abs(t_inv) * scale, cfg.tol("root_tol"))
        report.expect(f"bound_state[{i}].simple", rec.status != "possibly-nonsimple")
        if rec.status == "ok" and rec.c_l is not None and rec.c_r is not None and rec.dependency is not None:
            # f = D g(rho k) implies ||f|| = |D| ||g||
            mismatch = abs(rec.c_l * abs(rec.dependency) - rec.c_r) / rec.c_r
            report.check(f"bound_state[{i}].norm_ratio", mismatch, cfg.tol("residual_tol"))


def _wronskian_checks(report: RunReport, pair: PotentialPair, grid: XGrid, cfg: RunConfig) -> None:
    inner = grid.interior()
    spread = 0.0
    dual = 0.0
    for r in _WRONSKIAN_RADII:
        for a in _WRONSKIAN_ANGLES:
            k = r * complex(math.cos(a), math.sin(a))
            triple = wronskian_triple(k, pair, grid)
            spread = max(spread, relative_spread(wronskian3_profile(*triple)[inner]))
            t_wr = transmission_from_wronskian(k, pair, grid, profiles=triple)
            t_ex = extract_left(triple[0]).t_inv
            dual = max(dual, abs(t_wr - t_ex) / max(abs(t_ex), 1.0))
    report.check("wronskian.spread", spread, cfg.tol("residual_tol"))
    report.check("transmission.dual_route", dual, cfg.tol("dual_route_tol"))


def _identity_checks(report: RunReport, dataset: ScatteringDataset, cfg: RunConfig) -> None:
    s = dataset.s_values
    left = max(coupling_identity_residual("left", dataset, Z * v) for v in s)
    right = max(coupling_identity_residual("right", dataset, -Z * v) for v in s)
    report.check("identity.left", left, cfg.tol("identity_tol"))
    report.check("identity.right", right, cfg.tol("identity_tol"))


def _tail_checks(report: RunReport, dataset: ScatteringDataset, pair: PotentialPair, grid: XGrid, cfg: RunConfig) -> None:
    quad = tail_constants_from_potentials(pair, grid)
    report.info["tail.quadrature"] = {"t_l1": _cx(quad.t_l1), "t_l2": _cx(quad.t_l2)}
    if dataset.tail is not None:
        fit = dataset.tail
        report.info["tail.fit"] = {"t_l1": _cx(fit.t_l1), "t_l2": _cx(fit.t_l2), "residual": fit.residual}
        err = max(abs(fit.t_l1 - quad.t_l1), abs(fit.t_l2 - quad.t_l2)) / max(abs(quad.t_l1), 1.0)
        report.check("tail.constants", err, cfg.tol("tail_fit_tol"))
    if pair.is_free():
        return

    inner = grid.interior()
    tails = tail_expansion(pair, grid)
    fit_u = large_k_profile_fit("f", pair, grid, _large_k(cfg), threads=cfg.threads)
    report.check("large_k.u1", relative_l2(fit_u.c1[inner], tails.u1[inner]), cfg.tol("tail_fit_tol"))

    # remainder after two terms should fall like |k|^-3
    pair_k = np.array([-10.0 + 0j, -20.0 + 0j])
    rem = large_k_remainder(pair, grid, pair_k, tails=tails)
    slope = math.log(rem[0] / rem[1]) / math.log(2.0) if rem[1] > 0 else float("nan")
    report.info["large_k.remainder_slope"] = slope
    report.check("large_k.remainder_slope", abs(slope - 3.0) / 3.0, 0.2)


def _phi_normalization(pair: PotentialPair, grid: XGrid, dataset: ScatteringDataset) -> dict[str, float]:
    """|e^{-kx} Phi - 1| at the left grid end for Phi+ on L2 and Phi- on L4; nonzero only through M and N."""
    data = RHData(dataset=dataset, secondary_zero=True, delta=dataset.secondary_delta)
    phi = assemble_phi(data, pair, grid, glue_tol=math.inf)
    return {
        "plus_L2": float(abs(phi.plus(Z2 * 1.0).phi[0] - 1.0)),
        "minus_L4": float(abs(phi.minus(-Z2 * 1.0).phi[0] - 1.0)),
    }


def _write_coefficients(out_dir: Path, dataset: ScatteringDataset) -> list[Path]:
    paths = []
    for name, rays in sorted(dataset.coefficients.items()):
        for ray, samples in sorted(rays.items()):
            path = out_dir / "coefficients" / f"{name}_{ray.replace('+', 'plus').replace('-', 'minus')}.csv"
            v = samples.values
            paths.append(write_csv(path, ["s", "abs", "Re", "Im"], [samples.s, np.abs(v), v.real, v.imag]))
    return paths


def _write_profiles(out_dir: Path, pair: PotentialPair, grid: XGrid, s: float) -> list[Path]:
    # f on L1 and g on L3 at one sweep point
    paths = []
    for kind, ray in (("f", "L1"), ("g", "L3")):
        k = complex(ray_points(ray, np.array([s]))[0])
        prof = solve_basic(kind, k, pair, grid)  # type: ignore[arg-type]
        path = out_dir / "profiles" / f"{kind}_{ray}.csv"
        paths.append(write_profile_csv(path, grid.x, prof.psi, prof.psi_x, prof.psi_xx))
    return paths


def run_forward(cfg: RunConfig) -> tuple[ScatteringDataset, RunReport]:
    report = RunReport("forward", provenance=_provenance(cfg))
    grid = _grid(cfg)
    pair = build_potential(cfg)
    report.info["tail_magnitude"] = pair.check_tails(grid)

    dataset = compute_dataset(pair, grid, _s_values(cfg), large_k=_large_k(cfg), threads=cfg.threads)
    delta = dataset.secondary_delta
    report.info["delta"] = delta

    if pair.is_free():
        worst = max(
            dataset.max_abs(name) for name in ("L", "M", "R", "N")
        )
        t_dev = max(
            float(np.max(np.abs(r.values - 1.0)))
            for name in ("T_l", "T_r")
            for r in dataset.coefficients[name].values()
        )
        report.check("free.reflections", worst, cfg.tol("free_tol"))
        report.check("free.transmission", t_dev, cfg.tol("free_tol"))

    _wronskian_checks(report, pair, grid, cfg)
    _identity_checks(report, dataset, cfg)
    _tail_checks(report, dataset, pair, grid, cfg)
    try:
        report.info["phi_normalization"] = _phi_normalization(pair, grid, dataset)
    except (RuntimeError, ValueError) as e:
        log.warning("Skipping Phi normalization diagnostic: %s", e)

    if cfg.bound_states.enabled:
        records, counted = _bound_state_records(pair, grid, cfg, _region(cfg))
        report.expect("bound_states.argument_principle", counted == len(records))
        _check_bound_states(report, records, pair, grid, cfg)
        dataset.bound_states = [r.to_dict() for r in records]
        report.info["bound_states.count"] = len(records)

    out = cfg.out_dir
    x = grid.x
    q, p, _ = pair.sample(grid)
    report.artifacts.append(str(write_dataset(dataset, out / "dataset.json")))
    report.artifacts.append(str(write_potential_csv(out / "potential.csv", x, q, p)))
    report.artifacts.extend(str(path) for path in _write_coefficients(out, dataset))
    s_profile = float(np.median(dataset.s_values))
    report.info["profiles.s"] = s_profile
    report.artifacts.extend(str(path) for path in _write_profiles(out, pair, grid, s_profile))
    log.info("Forward run on %s: %s", pair.name, report.status)
    return dataset, report


def run_bound_states(cfg: RunConfig) -> RunReport:
    report = RunReport("bound-states", provenance=_provenance(cfg))
    grid = _grid(cfg)
    pair = build_potential(cfg)
    pair.check_tails(grid)
    region = _region(cfg)
    records, counted = _bound_state_records(pair, grid, cfg, region)
    report.expect("bound_states.argument_principle", counted == len(records))
    _check_bound_states(report, records, pair, grid, cfg)
    report.info["bound_states.count"] = len(records)
    path = write_json(
        cfg.out_dir / "bound_states.json",
        {"region": region.to_dict(), "bound_states": [r.to_dict() for r in records]},
    )
    report.artifacts.append(str(path))
    return report


def _soliton_checks(report: RunReport, sol: ReflectionlessSolution, grid: XGrid, cfg: RunConfig) -> None:
    phi = sol.phi_pair(grid)
    report.check("residue_system", sol.linear_residual(grid.x), cfg.tol("residue_tol"))

    angles = np.linspace(0.1, 2.0 * math.pi - 0.1, 8)
    test_k = [1.7 * complex(math.cos(a), math.sin(a)) for a in angles]
    report.check("phi.ode_residual", max(phi_ode_residual(sol, k, grid) for k in test_k), cfg.tol("residual_tol"))

    q, p, _ = sol.potentials(grid.x)
    inner = grid.interior()
    minus = recover_from_minus(phi, n_terms=8, asymptotic_tol=cfg.tol("asymptotic_tol"), threads=cfg.threads)
    plus = recover_from_plus(
        phi,
        sol.transmission_tail(grid.x_max),
        n_terms=8,
        asymptotic_tol=cfg.tol("asymptotic_tol"),
        threads=cfg.threads,
    )
    tol = cfg.tol("soliton_recovery_tol")
    report.check("recovery.minus.Q", relative_l2(minus.q[inner], q[inner]), tol)
    report.check("recovery.minus.P", relative_l2(minus.p[inner], p[inner]), tol)
    report.check("recovery.plus_vs_minus.Q", relative_l2(plus.q[inner], minus.q[inner]), tol)
    report.check("recovery.plus_vs_minus.P", relative_l2(plus.p[inner], minus.p[inner]), tol)


def run_rh_solitons(cfg: RunConfig) -> RunReport:
    report = RunReport("rh-solitons", provenance=_provenance(cfg))
    grid = _grid(cfg)
    poles = configured_poles(cfg)
    sol, _ = solve_reflectionless(poles, grid)
    _soliton_checks(report, sol, grid, cfg)

    q, p, _ = sol.potentials(grid.x)
    out = cfg.out_dir
    report.info["poles"] = [{"k": _cx(k), "gamma": _cx(g)} for k, g in poles]
    report.artifacts.append(str(write_potential_csv(out / "soliton_potential.csv", grid.x, q, p)))
    report.artifacts.append(str(write_poles(out / "poles.json", poles)))
    return report


def _write_marchenko(out: Path, sol: Any) -> list[Path]:
    rows_f: list[list[float]] = [[], [], [], []]
    rows_g: list[list[float]] = [[], [], [], []]
    for piece in sol.slices:
        for rows, y, values in ((rows_f, piece.y_plus, piece.f_hat), (rows_g, piece.y_minus, piece.g_hat)):
            rows[0].extend([piece.x] * y.size)
            rows[1].extend(y)
            rows[2].extend(values.real)
            rows[3].extend(values.imag)
    return [
        write_csv(out / "marchenko_F.csv", ["x", "y", "Re", "Im"], [np.asarray(r) for r in rows_f]),
        write_csv(out / "marchenko_G.csv", ["x", "y", "Re", "Im"], [np.asarray(r) for r in rows_g]),
    ]


def _invert(cfg: RunConfig, dataset: ScatteringDataset, report: RunReport) -> tuple[Any, Any, Any]:
    m = cfg.marchenko
    kernel = build_rho(dataset, m_n_tol=cfg.tol("m_n_tol"), n_panels=m.s_panels, order=m.s_order)
    mgrid = _marchenko_grid(cfg)
    nystrom = _nystrom(cfg)
    report.info["marchenko.driving"] = m.driving
    sol = solve_marchenko_grid(
        kernel, mgrid, nystrom, threads=cfg.threads, resolution_tol=cfg.tol("resolution_tol"), driving=m.driving
    )
    rec_f = recover_from_F(sol)
    rec_g = recover_from_G(sol)

    report.check("nystrom.residual", sol.max_residual, cfg.tol("system_tol"))
    mid = sol.slices[mgrid.n_points // 2]
    report.check("nystrom.back_substitution", system_residual(kernel, mid, nystrom, driving=m.driving), cfg.tol("system_tol"))
    fd_gap = max(abs(s.f0_y - s.f0_y_fd) for s in sol.slices)
    report.info["traces.fd_gap"] = float(fd_gap)
    report.info["rho.sup_bound"] = kernel.sup_bound()

    inner = mgrid.interior()
    x = mgrid.x[inner]
    dual_q = relative_l2(rec_f.q[inner], rec_g.q[inner], x)
    dual_p = relative_l2(rec_f.p[inner], rec_g.p[inner], x)
    report.check("recovery.dual.Q", dual_q, cfg.tol("dual_recovery_tol"))
    report.check("recovery.dual.P", dual_p, cfg.tol("dual_recovery_tol"))

    out = cfg.out_dir
    report.artifacts.append(str(write_json(out / "rho.json", kernel.to_dict())))
    report.artifacts.extend(str(p) for p in _write_marchenko(out, sol))
    report.artifacts.append(str(write_potential_csv(out / "recovered_F.csv", mgrid.x, rec_f.q, rec_f.p)))
    report.artifacts.append(str(write_potential_csv(out / "recovered_G.csv", mgrid.x, rec_g.q, rec_g.p)))
    return kernel, rec_f, rec_g


def run_marchenko(cfg: RunConfig) -> RunReport:
    report = RunReport("marchenko", provenance=_provenance(cfg))
    grid = _grid(cfg)
    pair: PotentialPair | None = None
    if cfg.input_dataset is not None:
        dataset = read_dataset(cfg.input_dataset)
    else:
        pair = build_potential(cfg)
        pair.check_tails(grid)
        dataset = compute_dataset(pair, grid, _s_values(cfg), large_k=_large_k(cfg), threads=cfg.threads)
    delta = dataset.secondary_delta
    report.info["delta"] = delta
    _invert(cfg, dataset, report)

    if pair is not None:
        support = support_check(pair, dataset, grid, threads=cfg.threads)
        report.info["support"] = support.to_dict()
        if support.status == "ok":
            allowed = cfg.tol("support_tol") + 10.0 * delta
            report.check("support.F_negative_y", support.f_negative_mass, allowed)
            report.check("support.G_positive_y", support.g_positive_mass, allowed)
    return report


def _roundtrip_reflectionless(cfg: RunConfig, report: RunReport) -> None:
    grid = _grid(cfg)
    poles = configured_poles(cfg)
    sol, _ = solve_reflectionless(poles, grid)
    _soliton_checks(report, sol, grid, cfg)

    pair = sol.potential_pair(tail_tol=cfg.tol("tail_tol"))
    pair.check_tails(grid)
    dataset = compute_dataset(pair, grid, _s_values(cfg), threads=cfg.threads)
    reflections = max(dataset.max_abs(name) for name in ("L", "M", "R", "N"))
    report.check("forward.reflections", reflections, cfg.tol("reflection_tol"))
    report.check("forward.reduced_identities", reduced_identity_residual(dataset), cfg.tol("reflection_tol"))
    _rh_checks(report, pair, grid, dataset, cfg)

    recovered: list[tuple[complex, complex]] = []
    for i, (k, gamma) in enumerate(poles):
        arg = canonical_arg(k)
        if not (2 * math.pi / 3 < arg < 4 * math.pi / 3):
            log.info("Pole %s lies outside Omega1; bound-state re-detection skipped", k)
            continue
        region = SearchRegion(
            0.9 * abs(k),
            1.1 * abs(k),
            max(2 * math.pi / 3, arg - 0.05),
            min(4 * math.pi / 3, arg + 0.05),
        )
        records, _ = _bound_state_records(pair, grid, cfg, region, n_radial=6, n_angular=6, n_contour=16)
        if not records:
            report.check(f"pole[{i}].redetected", math.inf, cfg.tol("pole_tol"))
            continue
        rec = min(records, key=lambda r: abs(r.k - k))
        report.check(f"pole[{i}].redetected", abs(rec.k - k), cfg.tol("pole_tol"))
        report.info[f"pole[{i}]"] = rec.to_dict()
        if rec.gamma is None:
            report.expect(f"pole[{i}].gamma_available", False)
            continue
        report.check(f"pole[{i}].gamma", abs(rec.gamma - gamma) / abs(gamma), cfg.tol("gamma_tol"))
        recovered.append((rec.k, rec.gamma))

    if len(recovered) == len(poles):
        again = ReflectionlessSolution(
            poles=np.array([k for k, _ in recovered]), gammas=np.array([g for _, g in recovered])
        )
        inner = grid.interior()
        q0, p0, _ = sol.potentials(grid.x)
        q1, p1, _ = again.potentials(grid.x)
        err = max(relative_l2(q1[inner], q0[inner]), relative_l2(p1[inner], p0[inner]))
        # error tracks the recovered gamma
        report.check("roundtrip.potential", err, 10.0 * cfg.tol("gamma_tol"))


def _rh_checks(report: RunReport, pair: PotentialPair, grid: XGrid, dataset: ScatteringDataset, cfg: RunConfig) -> None:
    """Jump relation on the line z s and large-k normalization of Phi+/Phi-."""
    delta = dataset.secondary_delta
    data = RHData.from_dataset(dataset, m_n_tol=cfg.tol("m_n_tol"))
    allowed = cfg.tol("glue_tol") + 10.0 * delta
    try:
        phi = assemble_phi(data, pair, grid, glue_tol=cfg.tol("glue_tol"))
    except InconsistentDataError as e:
        report.check("rh.glue", e.mismatch if e.mismatch is not None else math.inf, allowed)
        return
    report.check("rh.glue", max(phi.glue.values()), allowed)
    s = dataset.s_values
    picks = s[[s.size // 4, s.size // 2]]
    jumps = jump_samples(data, pair, grid, np.concatenate([picks, -picks]), threads=cfg.threads)
    residuals = jump_residuals(phi, jumps)
    report.info["rh.jump_residuals"] = {f"{v:.4g}": float(r) for v, r in zip(jumps.s, residuals)}
    report.check("rh.jump", float(np.max(residuals)), allowed)

    k_big = cfg.sweep.k_max
    # e^{-kx} Phi - 1 ~ v1(x) / k on both sides, since u1 + t_l1 = v1
    v1 = float(np.max(np.abs(tail_expansion(pair, grid).v1[grid.interior()])))
    bound = 2.0 * v1 / k_big + cfg.tol("glue_tol")
    for label, k in (("plus", -k_big + 0j), ("minus", k_big + 0j)):
        report.check(f"rh.normalization.{label}", normalization_error(phi, k), bound)


def _roundtrip_marchenko(cfg: RunConfig, report: RunReport) -> None:
    grid = _grid(cfg)
    pair = build_potential(cfg)
    pair.check_tails(grid)
    s_values = _s_values(cfg)
    dataset = compute_dataset(pair, grid, s_values, large_k=_large_k(cfg), threads=cfg.threads)
    delta = dataset.secondary_delta
    report.info["delta"] = delta
    report.info["roundtrip.executed"] = False
    if delta > cfg.tol("m_n_tol"):
        reason = f"secondary reflections exceed m_n_tol (delta={delta:.3e}, m_n_tol={cfg.tol('m_n_tol'):.1e})"
        log.warning("Marchenko round trip not run: %s", reason)
        report.skip(reason)
        return
    try:
        _, rec_f, rec_g = _invert(cfg, dataset, report)
    except ModelViolationError as e:
        log.warning("Marchenko round trip not run: %s", e)
        report.skip(f"model violation: {e}")
        return
    report.info["roundtrip.executed"] = True
    _rh_checks(report, pair, grid, dataset, cfg)

    mgrid = _marchenko_grid(cfg)
    inner = mgrid.interior()
    x = mgrid.x[inner]
    q_in, p_in, _ = pair.sample(mgrid)
    allowed = max(cfg.tol("recovery_tol"), 10.0 * delta)
    report.info["recovery.allowed"] = allowed
    for label, rec in (("F", rec_f), ("G", rec_g)):
        report.check(f"recovery.{label}.Q", relative_l2(rec.q[inner], q_in[inner], x), allowed)
        report.check(f"recovery.{label}.P", relative_l2(rec.p[inner], p_in[inner], x), allowed)

    again = compute_dataset(rec_f.as_pair(tail_tol=math.inf), grid, s_values, threads=cfg.threads)
    rho_allowed = max(cfg.tol("rho_tol"), 10.0 * delta)
    for name, ray in (("L", "L1"), ("R", "L3")):
        before = dataset.samples(name, ray).values
        after = again.samples(name, ray).values
        err = float(np.max(np.abs(after - before)) / max(float(np.max(np.abs(before))), np.finfo(float).tiny))
        report.check(f"reextracted.{name}", err, rho_allowed)


def run_roundtrip(cfg: RunConfig) -> RunReport:
    report = RunReport("roundtrip", provenance=_provenance(cfg))
    report.info["mode"] = cfg.roundtrip
    if cfg.roundtrip == "reflectionless":
        _roundtrip_reflectionless(cfg, report)
    else:
        _roundtrip_marchenko(cfg, report)
    return report


def _free_checks(report: RunReport, cfg: RunConfig) -> None:
    grid = XGrid(-12.0, 12.0, 2048)
    dataset = compute_dataset(free(), grid, _s_values(cfg))
    reflections = max(dataset.max_abs(name) for name in ("L", "M", "R", "N"))
    t_dev = max(
        float(np.max(np.abs(r.values - 1.0))) for name in ("T_l", "T_r") for r in dataset.coefficients[name].values()
    )
    report.check("free.reflections", reflections, cfg.tol("free_tol"))
    report.check("free.transmission", t_dev, cfg.tol("free_tol"))

    small = XGrid(-1.0, 1.0, 9)
    for label, k in (("k=-1", -1.0 + 0j), ("k=-2", -2.0 + 0j), ("k=1.5z", 1.5 * Z)):
        profiles = [free_profile("f", rot * k, small) for rot in (1.0, Z, Z2)]
        constant = wronskian3(*profiles, small.n_points // 2) / k**3
        report.check(
            f"free.wronskian_constant[{label}]", abs(constant - PRINTED_DOWN_CONSTANT) / abs(PRINTED_DOWN_CONSTANT), 1e-12
        )

    constants = calibrate_branch_constants()
    report.info["branch.up"] = _cx(constants.up)
    report.info["branch.up_discrepancy_phase"] = math.atan2(constants.up_discrepancy.imag, constants.up_discrepancy.real)
    report.check("branch.down", abs(constants.down - constants.printed_down) / abs(constants.printed_down), 1e-12)


def _rho_hat_checks(report: RunReport, cfg: RunConfig) -> None:
    kernel = RhoKernel.from_callables(lambda s: np.exp(-s), lambda s: np.exp(s))
    re = np.linspace(-5.0, 5.0, 10)
    w = np.concatenate([re + 0j, re - 0.5j])
    plus = kernel.rho_hat("+", w)
    minus = kernel.rho_hat("-", np.conj(w))
    exact_plus = 1.0 / (2 * math.pi * (1.0 + 1j * w))
    exact_minus = 1.0 / (2 * math.pi * (1.0 - 1j * np.conj(w)))
    report.check("rho_hat.plus", float(np.max(np.abs(plus - exact_plus))), 1e-8)
    report.check("rho_hat.minus", float(np.max(np.abs(minus - exact_minus))), 1e-8)


def _neumann_checks(report: RunReport, cfg: RunConfig) -> None:
    base = RhoKernel.from_callables(lambda s: np.exp(-s), lambda s: np.exp(s))
    nystrom = NystromGrid()
    devs = []
    for eps in (1e-3, 2e-3):
        kernel = base.scaled(eps)
        piece = solve_marchenko(kernel, 0.0, nystrom)
        exact = np.concatenate([piece.f_hat, piece.g_hat])
        first, second = neumann_iterate(kernel, 0.0, nystrom)
        devs.append((float(np.linalg.norm(exact - first)), float(np.linalg.norm(exact - second))))
    (d1, d2), (d1_double, _) = devs
    report.info["neumann.deviations"] = devs
    # first-iterate error is quadratic in the kernel size
    report.check("neumann.first_order", abs(d1_double / d1 / 4.0 - 1.0), 0.05)
    report.check("neumann.second_iterate", d2 / d1, 0.1)
    report.check("marchenko.zero_kernel", float(np.max(np.abs(neumann_iterate(RhoKernel.zero(), 0.0, nystrom)[0]))), 0.0)


def run_selftest(cfg: RunConfig) -> RunReport:
    report = RunReport("selftest", provenance=_provenance(cfg))
    report.check("geometry.invariants", GEOMETRY.invariant_residual(), 1e-14)
    _free_checks(report, cfg)
    _rho_hat_checks(report, cfg)
    _neumann_checks(report, cfg)

    grid = XGrid(-16.0, 16.0, 2048)
    sol, _ = solve_reflectionless([(DEFAULT_POLE, centered_norming_constant(DEFAULT_POLE))], grid)
    report.check("soliton.residue_system", sol.linear_residual(grid.x), cfg.tol("residue_tol"))
    report.check("soliton.ode_residual", phi_ode_residual(sol, 2.0 + 0j, grid), cfg.tol("residual_tol"))
    return report


PIPELINES: dict[str, Callable[[RunConfig], RunReport]] = {
    "forward": lambda cfg: run_forward(cfg)[1],
    "bound-states": run_bound_states,
    "rh-solitons": run_rh_solitons,
    "marchenko": run_marchenko,
    "roundtrip": run_roundtrip,
    "selftest": run_selftest,
}


def execute(cfg: RunConfig) -> RunReport:
    """Run one pipeline under the output lock and record it in the run ledger."""
    pipeline = PIPELINES.get(cfg.pipeline)
    if pipeline is None:
        raise ConfigError(f"Unknown pipeline: {cfg.pipeline}")
    out = cfg.out_dir
    lock = OutputLock(out, pipeline=cfg.pipeline)
    with lock.acquired() as ok:
        if not ok:
            log.info("Skip run (%s): output directory is locked by %s", cfg.pipeline, lock.holder() or "?")
            report = RunReport(cfg.pipeline, provenance=_provenance(cfg))
            report.skip(f"output directory locked: {lock.path}")
            return report

        store = RunStore(out / LEDGER_NAME)
        run_id = store.start_run(pipeline=cfg.pipeline, config_hash=cfg.config_hash(), version=__version__)
        status = "error"
        message = ""
        report_path = ""
        try:
            log.info("Run %s: pipeline=%s potential=%s", run_id, cfg.pipeline, cfg.potential_label)
            report = pipeline(cfg)
            report_path = str(report.write(out / REPORT_NAME))
            status = report.status
            message = report.skipped_reason or ", ".join(c.name for c in report.failed)
            return report
        except Exception as e:
            message = str(e)
            log.exception("Run %s failed (%s)", run_id, cfg.pipeline)
            raise
        finally:
            store.finish_run(run_id, status=status, message=message, report_path=report_path)
            record = store.get(run_id)
            if record is not None and record.elapsed_seconds is not None:
                log.info("Run %s finished: %s in %.2fs", run_id, status, record.elapsed_seconds)
            store.close()


def emit_plots(source: Path, kind: str, out_dir: Path, *, x: float = 0.0) -> list[Path]:
    if kind not in PLOT_KINDS:
        raise ValueError(f"Unknown plot kind: {kind} (known: {', '.join(PLOT_KINDS)})")
    if not source.exists():
        raise FileNotFoundError(f"Input not found: {source}")

    if kind == "reflection":
        dataset = read_dataset(source)
        s = dataset.s_values
        big_l = dataset.samples("L", "L1").values
        big_r = dataset.samples("R", "L3").values
        big_m = dataset.samples("M", "L2").values
        big_n = dataset.samples("N", "L4").values
        path = write_csv(
            out_dir / "reflection.csv",
            ["s", "|L|", "Re L", "Im L", "|R|", "Re R", "Im R", "|M|", "|N|"],
            [s, np.abs(big_l), big_l.real, big_l.imag, np.abs(big_r), big_r.real, big_r.imag, np.abs(big_m), np.abs(big_n)],
        )
        return [path]

    if kind == "potential":
        xs, q, p = read_potential_csv(source)
        return [write_potential_csv(out_dir / "potential_plot.csv", xs, q, p)]

    cols = read_csv(source)
    try:
        xs, ys, re, im = cols["x"], cols["y"], cols["Re"], cols["Im"]
    except KeyError as e:
        raise ValueError(f"{source} is not a Marchenko grid CSV (missing column {e})") from e
    if xs.size == 0:
        raise ValueError(f"{source} holds no samples")
    nearest = xs[np.argmin(np.abs(xs - x))]
    rows = np.flatnonzero(xs == nearest)
    order = rows[np.argsort(ys[rows])]
    log.info("Marchenko slice at x=%.6g (requested %.6g)", nearest, x)
    return [write_csv(out_dir / "marchenko_slice.csv", ["y", "Re", "Im"], [ys[order], re[order], im[order]])]
