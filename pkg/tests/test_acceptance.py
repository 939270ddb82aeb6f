"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line.  Run with `pytest tests/test_acceptance.py -v -s`."""

import time

import numpy as np

from sodekit.expressions import (
    ZERO, compile_exprs, evaluate, normalize, syms,
)
from sodekit.geometry import Chart, Frame, VectorField, coordinate_field
from sodekit.analysis import (
    CASE1, CASE2, SecondOrderProblem, adapt_commuting_basis,
    apply_tangent_structure, bracket_coefficients, build_extended_frame,
    check_regularity, classify,
)
from sodekit.parser import parse
from sodekit.corpus import corpus_get, corpus_list
from sodekit.runner import run_report, report_to_json
from sodekit.sampling import box_points
from sodekit.straighten import (
    CrossSection, build_normal_coordinates, pushforward_residuals,
    solve_basis_ode,
)
from tests.conftest import euler_lagrange_reduced_field

x, y = syms("x y")

REQUIRED_SUITES = (
    "w_mix_integrability",   # flatness identities of the mixing system
    "nijenhuis_torsion",
    "projector_identities",  # includes (L_F S)^2 = id, P_H + P_V = id,
                             # and projector idempotence
    "torsion",
    "gamma_symmetry",
)


def _finish(num: int, name: str, failures: list, elapsed: float, limit: float):
    status = "PASS" if not failures and elapsed < limit else "FAIL"
    print(f"ACCEPTANCE-{num} {name}: {status} "
          f"({elapsed:.1f}s / limit {limit:.0f}s)")
    assert not failures, f"criterion {num} ({name}): {failures}"
    assert elapsed < limit, f"criterion {num} exceeded {limit}s"


def _corpus_problem(name):
    m = corpus_get(name)
    return SecondOrderProblem(m.chart, m.vector_field(),
                              Frame(m.chart, m.frame_fields()))


def test_criterion_1_identity_suite():
    start = time.perf_counter()
    failures = []
    for name in corpus_list():
        rep = classify(_corpus_problem(name))
        if not rep.ok:
            failures.append(f"{name}: classification {rep.classification}")
            continue
        suites = {s.name: s for s in rep.identity_suites}
        for wanted in REQUIRED_SUITES:
            suite = suites.get(wanted)
            if suite is None:
                failures.append(f"{name}: suite {wanted} missing")
            elif not suite.ok:
                failures.append(f"{name}: suite {wanted} failed "
                                f"(residual {suite.max_residual})")
            elif not suite.exact:
                # every corpus instance is rational, so the verdicts must be
                # structural zeros, not merely small residuals
                failures.append(f"{name}: suite {wanted} not exact")
    _finish(1, "identity-suite", failures, time.perf_counter() - start, 30.0)


def test_criterion_2_regularity_discrimination():
    start = time.perf_counter()
    failures = []
    plane = Chart(["x", "y"], [(-1.2, 1.2), (-1.2, 1.2)])
    good = SecondOrderProblem(
        plane, VectorField(plane, [y, parse("x*y^2 + y")]),
        Frame(plane, [coordinate_field(plane, "y")]),
    )
    if check_regularity(good)["status"] != "pass":
        failures.append("the second-order shape failed the span condition")
    bad = SecondOrderProblem(
        plane, VectorField(plane, [x, ZERO]),
        Frame(plane, [coordinate_field(plane, "y")]),
    )
    verdict = check_regularity(bad)
    if verdict["status"] != "fail":
        failures.append("x d/dx went undetected")
    if verdict["rank"]["claimed_rank"] >= 2:
        failures.append("witness rank missing")
    _finish(2, "regularity-discrimination", failures,
            time.perf_counter() - start, 1.0)


def test_criterion_3_basis_adaptation_oracle():
    start = time.perf_counter()
    failures = []
    plane = Chart(["x", "y"], [(-1.2, 1.2), (-1.2, 1.2)])
    prob = SecondOrderProblem(
        plane, VectorField(plane, [y, ZERO]),
        Frame(plane, [VectorField(plane, [ZERO, parse("1 + y^2")])]),
    )
    ef = build_extended_frame(prob)
    bc = bracket_coefficients(ef)
    adapted, info = adapt_commuting_basis(ef, bc)
    a_fn = compile_exprs([info.matrix[0][0]], plane.names)
    for pt in box_points(plane.box, 64, seed=11):
        want = 1.0 / (1.0 + pt[1] ** 2)
        if abs(a_fn(pt)[0] - want) >= 1e-8:
            failures.append(f"symbolic rescaling off at {pt}")
            break
    numeric = solve_basis_ode(
        bc, CrossSection((0.0, 0.0), np.array([[1.0], [0.0]])), ef.vbasis
    )
    for pt in [(0.3, 0.6), (-0.8, -0.9), (1.0, 1.1)]:
        want = 1.0 / (1.0 + pt[1] ** 2)
        if abs(numeric(pt)[0, 0] - want) >= 1e-8:
            failures.append(f"numeric transport off at {pt}")
    if not (info.verification.ok and info.verification.max_residual < 1e-8):
        failures.append("adapted brackets are not vertical")
    _finish(3, "basis-adaptation", failures, time.perf_counter() - start, 5.0)


def test_criterion_4_round_trip_autonomous():
    start = time.perf_counter()
    failures = []
    m = corpus_get("oscillator-scrambled")
    rep = classify(SecondOrderProblem(m.chart, m.vector_field(),
                                      Frame(m.chart, m.frame_fields())))
    if rep.classification != CASE1:
        failures.append(f"classified {rep.classification}")
    transform = build_normal_coordinates(rep)
    residuals = pushforward_residuals(transform, grid_points=10)
    if residuals.node_count != 100:
        failures.append("grid is not 10x10")
    if not residuals.max_structural_residual < 1e-6:
        failures.append(
            f"structural residual {residuals.max_structural_residual:.2e}"
        )
    inverse = [parse(t) for t in m.metadata["scramble"]["inverse"]]
    plain_force = parse(m.metadata["scramble"]["plain_field"][1])
    plain_names = m.metadata["scramble"]["plain_chart"]
    worst = 0.0
    for xv in np.linspace(-0.5, 0.5, 10):
        for yv in np.linspace(-0.5, 0.5, 10):
            node = np.array([xv, yv])
            z = transform.map_params(node)
            zmap = dict(zip(m.chart.names, z))
            plain_point = {
                n: evaluate(e, zmap) for n, e in zip(plain_names, inverse)
            }
            expected = evaluate(plain_force, plain_point)
            got = transform.field_in_final_chart(node)[1]
            worst = max(worst, abs(got - expected))
    if not worst < 1e-5:
        failures.append(f"force mismatch {worst:.2e} vs the inverse-map oracle")
    _finish(4, "round-trip-autonomous", failures,
            time.perf_counter() - start, 60.0)


def test_criterion_5_round_trip_time_dependent():
    start = time.perf_counter()
    failures = []
    m = corpus_get("timedep-scrambled")
    rep = classify(SecondOrderProblem(m.chart, m.vector_field(),
                                      Frame(m.chart, m.frame_fields())))
    if rep.classification != CASE2:
        failures.append(f"classified {rep.classification}")
    transform = build_normal_coordinates(rep)
    residuals = pushforward_residuals(transform, grid_points=10)
    if not residuals.max_structural_residual < 1e-6:
        failures.append(
            f"structural residual {residuals.max_structural_residual:.2e}"
        )
    # spot-check the full component pattern (1, y, force) independently
    for node in ([0.2, 0.1, -0.1], [-0.25, 0.3, 0.2]):
        fin = transform.field_in_final_chart(np.array(node))
        ytilde = transform.final_coords(np.array(node))[2]
        if abs(fin[0] - 1.0) > 1e-6 or abs(fin[1] - ytilde) > 1e-6:
            failures.append(f"component pattern broken at {node}")
    _finish(5, "round-trip-time-dependent", failures,
            time.perf_counter() - start, 60.0)


def test_criterion_6_quadratic_criterion():
    start = time.perf_counter()
    failures = []
    rep_q = classify(_corpus_problem("quadratic-demo"))
    if rep_q.curvature.verdict != "quadratic":
        failures.append("quadratic-demo misjudged")
    if not all(
        c == ZERO
        for row in rep_q.curvature.components
        for col in row for cell in col for c in cell
    ):
        failures.append("quadratic-demo curvature is not a structural zero")
    rep_c = classify(_corpus_problem("cubic-demo"))
    if rep_c.curvature.verdict != "not_quadratic":
        failures.append("cubic-demo misjudged")
    elif not (rep_c.curvature.witness is not None
              and abs(rep_c.curvature.witness_value) > 0.1):
        failures.append("cubic-demo witness too small")
    _finish(6, "quadratic-criterion", failures,
            time.perf_counter() - start, 5.0)


def test_criterion_7_reduced_lagrangian_corpus():
    start = time.perf_counter()
    failures = []
    m = corpus_get("routh-abelian")
    rep = classify(SecondOrderProblem(m.chart, m.vector_field(),
                                      Frame(m.chart, m.frame_fields())))
    if rep.classification != CASE1:
        failures.append(f"classified {rep.classification}")
    if rep.parameter_count != 1:
        failures.append(f"parameter count {rep.parameter_count}")
    if normalize(m.field_components[4]) != ZERO:
        failures.append("momentum component of the field is not structurally 0")
    if rep.curvature.verdict != "quadratic":
        failures.append("quadratic verdict missing")
    oracle = euler_lagrange_reduced_field(m)
    shipped = [normalize(c) for c in m.field_components]
    oracle_fn = compile_exprs(oracle, m.chart.names)
    shipped_fn = compile_exprs(shipped, m.chart.names)
    worst = 0.0
    for pt in box_points(m.chart.box, 100, seed=17):
        a = np.array(oracle_fn(pt))
        b = np.array(shipped_fn(pt))
        worst = max(worst, float(np.max(np.abs(a - b))))
    if not worst < 1e-8:
        failures.append(f"Euler-Lagrange oracle disagrees by {worst:.2e}")
    _finish(7, "reduced-lagrangian-corpus", failures,
            time.perf_counter() - start, 60.0)


def test_criterion_8_tangent_structure_on_the_field():
    start = time.perf_counter()
    failures = []
    plane = Chart(["x", "y"], [(-1.2, 1.2), (-1.2, 1.2)])
    prob = SecondOrderProblem(
        plane, VectorField(plane, [y, parse("x*y^2 - y + 1")]),
        Frame(plane, [coordinate_field(plane, "y")]),
    )
    ef = build_extended_frame(prob)
    sf = apply_tangent_structure(ef, prob.F)
    residual = sf - VectorField(plane, [ZERO, y])
    if not all(normalize(c) == ZERO for c in residual.components):
        failures.append("S(F) is not the fibre dilation field y d/dy")
    _finish(8, "tangent-structure-action", failures,
            time.perf_counter() - start, 1.0)


def test_criterion_9_deterministic_reports():
    start = time.perf_counter()
    failures = []
    for name in ("oscillator-scrambled", "routh-abelian"):
        manifest = corpus_get(name)
        r1, c1 = run_report(manifest)
        r2, c2 = run_report(manifest)
        del r1["timings"], r2["timings"]
        if report_to_json(r1).encode() != report_to_json(r2).encode():
            failures.append(f"{name}: reports differ byte-wise")
        if c1 != c2:
            failures.append(f"{name}: exit codes differ")
    _finish(9, "deterministic-reports", failures,
            time.perf_counter() - start, 120.0)
