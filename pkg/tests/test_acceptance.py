"""Acceptance criteria, one test per criterion, each printing a pass/fail line."""

import csv
import dataclasses
import io
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from crebounds import problems as P
from crebounds.bounds import SLACK, gamma
from crebounds.cli import main
from crebounds.constants import steklov_quotient_dilation, trefftz_rayleigh
from crebounds.elasticity import PLANE_STRAIN, PLANE_STRESS, ElasticModel, solve
from crebounds.equilibration import build_admissible, verify_admissibility
from crebounds.mesh import refine_uniform
from crebounds.pipeline import energy_distance, overkill_solution, run
from crebounds.qoi import MeanStress, PointDisplacement, StressIntensityFactor

DEMO = Path(__file__).resolve().parents[1] / "demo" / "demo.ini"
MAX_ELEMENTS = 20000

# tabulated constants at nu = 0.3
TABLE = {
    ("circle", PLANE_STRESS, 0.0): 0.76923,
    ("circle", PLANE_STRAIN, 0.0): 0.7,
    ("cracked_circle", PLANE_STRESS, 0.0): 0.79780,
    ("cracked_circle", PLANE_STRESS, np.pi / 6): 0.80039,
    ("cracked_circle", PLANE_STRESS, np.pi / 3): 0.80351,
    ("cracked_circle", PLANE_STRESS, np.pi / 2): 0.80732,
    ("square", PLANE_STRESS, 0.0): 0.85897,
    ("square", PLANE_STRAIN, 0.0): 0.76667,
    ("sphere", "3d", 0.0): 0.53846,
    ("parallelepiped", "3d", 0.0): 0.64103,
}


def test_constants_table(capsys):
    t0 = time.perf_counter()
    assert main(["constants", "--nu", "0.3"]) == 0
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    worst, bad_k, missing = 0.0, [], []
    for (shape, assumption, theta), h in TABLE.items():
        match = [r for r in rows if r["shape"] == shape and r["assumption"] == assumption
                 and abs(float(r["theta"]) - theta) < 1e-5]
        if len(match) != 1:
            missing.append((shape, assumption, theta))
            continue
        worst = max(worst, abs(float(match[0]["h"]) - h))
        if int(match[0]["k"]) != (3 if assumption == "3d" else 2):
            bad_k.append(shape)
    ok = not missing and not bad_k and worst <= 5e-6 and elapsed < 1.0
    record_criterion(1, ok, f"max |h - table| = {worst:.1e}, k ok = {not bad_k}, {elapsed:.3f} s")
    assert not missing and not bad_k
    assert worst <= 5e-6
    assert elapsed < 1.0


def test_trefftz_oracle():
    t0 = time.perf_counter()
    model = ElasticModel(1.0, 0.3, PLANE_STRESS)
    errs = [abs(trefftz_rayleigh(m, 1.0, model) - 2 * m) for m in (1, 2, 3)]
    stek = abs(steklov_quotient_dilation(model) - 1 / 1.3)
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and stek <= 1e-6 and elapsed < 5.0
    record_criterion(2, ok, f"Rayleigh errors {max(errs):.1e}, Steklov error {stek:.1e}, {elapsed:.2f} s")
    assert max(errs) <= 1e-6
    assert stek <= 1e-6
    assert elapsed < 5.0


# (problem builder, adjoint policy, overkill levels)
SUITE = {
    "square/point": (lambda: P.square_quadratic(8, "point"), "same", None),
    "square/mean": (lambda: P.square_quadratic(8, "mean"), 1, None),
    "annulus/mean": (lambda: P.lame_annulus(qoi="mean"), "same", 2),
    "annulus/point": (lambda: P.lame_annulus(qoi="point"), 1, 2),
    "cracked/sif": (lambda: P.cracked_williams(16), "same", 2),
}


@pytest.fixture(scope="module")
def suite():
    t0 = time.perf_counter()
    results = {}
    for name, (build, adjoint, ovk) in SUITE.items():
        prob = build()
        results[name] = (prob, run(prob, adjoint=adjoint, overkill_levels=ovk))
    return results, time.perf_counter() - t0


def test_guaranteed_bounds(suite):
    results, elapsed = suite
    kinds, failures, largest = set(), [], 0
    for name, (prob, res) in results.items():
        kinds.add(type(prob.qoi))
        ing = res.report.ingredients
        slack = SLACK * ing.e * ing.e_adj
        largest = max(largest, res.diagnostics["Ne"] * 4 ** (SUITE[name][2] or 0), res.diagnostics["Ne_adjoint"])
        for row in res.report.rows:
            if not row.contains(res.I_ref, slack):
                failures.append(f"{name}:{row.technique}")
    all_kinds = kinds == {MeanStress, PointDisplacement, StressIntensityFactor}
    n_problems = len({n.split("/")[0] for n in results})
    ok = not failures and all_kinds and n_problems >= 3 and elapsed < 60.0 and largest <= MAX_ELEMENTS
    record_criterion(3, ok, f"{len(results)} runs on {n_problems} problems, failures {failures or 'none'}, "
                            f"max elements {largest}, {elapsed:.1f} s")
    assert all_kinds and n_problems >= 3
    assert not failures
    assert largest <= MAX_ELEMENTS
    assert elapsed < 60.0


def _levels(prob, levels):
    """Reference solve, admissible field and loads on successive refinements."""
    base_load = None if callable(prob.loads) else prob.loads.discretize(prob.mesh)
    for lv in range(levels):
        mesh = refine_uniform(prob.mesh, lv) if lv else prob.mesh
        load = prob.loads_for(mesh).discretize(mesh) if base_load is None else base_load.transfer(mesh)
        fem = solve(mesh, prob.model, load)
        yield dataclasses.replace(prob, mesh=mesh), load, fem, build_admissible(mesh, prob.model, load, fem)


# problems with smooth solutions are expected to show the linear-element rate;
# the cracked one is singular and only enters the guaranteed-error check
RATE_PROBLEMS = {"square": lambda: P.square_quadratic(8), "annulus": lambda: P.lame_annulus(qoi="point")}
SINGULAR_PROBLEMS = {"cracked": lambda: P.cracked_williams(16)}


def test_prager_synge_and_rate():
    lines, ok = [], True
    for name, build in {**RATE_PROBLEMS, **SINGULAR_PROBLEMS}.items():
        errs = []
        for lv, (p, load, fem, adm) in enumerate(_levels(build(), 3)):
            e = adm.cre()
            errs.append(e)
            if lv == 0:
                d = energy_distance(fem, overkill_solution(p, load, 2))
                ok &= d <= e
                lines.append(f"{name}: |u_ovk - u_h| {d:.4g} <= e_cre {e:.4g}")
        ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
        if name in RATE_PROBLEMS:
            ok &= all(1.7 <= r <= 2.3 for r in ratios)
            lines.append(f"{name} ratios {', '.join(f'{r:.3f}' for r in ratios)}")
        else:
            lines.append(f"{name} ratios {', '.join(f'{r:.3f}' for r in ratios)} (singular, not rated)")
    record_criterion(4, ok, "; ".join(lines))
    assert ok, lines


def test_localized_error_scenario():
    prob = P.l_shape_localized(16)
    res = run(prob, overkill_levels=2)
    xi = res.report.row("classical").half_width
    zeta = res.report.row("improved2").half_width
    ok = zeta < xi
    record_criterion(5, ok, f"improved2 half-width {zeta:.4g} < classical {xi:.4g} "
                            f"at lambda_bar {res.report.lambda_bar_opt:.4g}")
    assert ok


def test_gamma_closed_form():
    lam, lam_bar, h, c = 0.5, 1.0, 1 / 1.3, 2.5
    exact = c * (1 - (lam / lam_bar) ** (1 / h))
    errs = {n: abs(gamma(lam, lam_bar, h, lambda x: np.full_like(x, c), n) - exact) for n in (200, 2000)}
    ok = errs[200] <= 1e-4 and errs[2000] <= 1e-6
    record_criterion(6, ok, f"error {errs[200]:.1e} at 200 nodes, {errs[2000]:.1e} at 2000 nodes")
    assert errs[200] <= 1e-4
    assert errs[2000] <= 1e-6


def test_admissibility(suite):
    results, _ = suite
    worst, failed = 0.0, []
    for name, (_, res) in results.items():
        for label, adm in (("reference", res.reference), ("adjoint", res.adjoint)):
            rep = verify_admissibility(adm, tol=1e-9)
            worst = max(worst, rep.interior, rep.jump, rep.neumann)
            if not rep.passed:
                failed.append(f"{name}:{label}")
    # fault injection on a copy of one field
    adm = results["square/mean"][1].reference
    target = adm.mesh.n_elements // 3
    broken = dataclasses.replace(adm, stress=adm.stress.perturbed(target, 1e-3))
    rep = verify_admissibility(broken, tol=1e-9)
    caught = not rep.passed and rep.worst_element == target
    ok = not failed and caught
    record_criterion(7, ok, f"worst residual {worst:.1e}, failures {failed or 'none'}, "
                            f"injected fault at element {target} reported at {rep.worst_element}")
    assert not failed
    assert caught


def test_discrete_duality(suite):
    results, _ = suite
    residuals = {n: r.diagnostics["duality_residual"] for n, (_, r) in results.items()
                 if r.diagnostics["duality_residual"] is not None}
    worst = max(residuals.values())
    ok = len(residuals) >= 3 and worst < 1e-10
    record_criterion(8, ok, f"{len(residuals)} shared-mesh runs, worst residual {worst:.1e}")
    assert len(residuals) >= 3
    assert worst < 1e-10


def test_determinism(tmp_path):
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        d.mkdir()
        cfg = d / "demo.ini"
        shutil.copy(DEMO, cfg)
        assert main(["run", "--config", str(cfg), "--out", str(d / "out")]) == 0
        outs.append((d / "out" / "bounds.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    record_criterion(9, ok, f"two demo runs, {len(outs[0])} bytes each, identical = {outs[0] == outs[1]}")
    assert ok
