"""Numeric construction of the normalizing coordinates.

The transform composes flows: for the autonomous case the base point is a
point where F is vertical, the parameter directions are tilted to stay on
that locus, the x-parameters flow the (sign-reversed) projectable
representatives of the W-basis tangent to the locus, and the y-parameters
flow the adapted commuting V-basis.  For the time-dependent case the first
parameter flows F itself, which realizes the time normalization without
solving for it.  Fibre coordinates are finally redefined as the x-components
of the pushed-forward field, which forces the xdot = y block by construction
and leaves the t-block and chart validity as the substantive checks.

Jacobians of flow compositions are propagated by variational equations;
central finite differences serve as a cross-check only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .expressions import (
    EvalDomainError, Num, ZERO, compile_exprs, differentiate, free_symbols,
    normalize,
)
from .geometry import Chart, VectorField
from .analysis import (
    AnalysisError, AnalysisReport, CASE1, CASE2, ExtendedFrame,
)


class NumericFailure(RuntimeError):
    """Integration, root finding or conditioning failure (exit code 3)."""

    def __init__(self, message: str, last_point=None):
        super().__init__(message)
        self.last_point = last_point


@dataclass
class IntegratorSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf
    method: str = "DOP853"
    box_slack: float = 1.0  # fraction of box width the trajectory may leave


DEFAULT_SETTINGS = IntegratorSettings()


def _component_evaluator(fld) -> Callable:
    if isinstance(fld, VectorField):
        return fld.evaluator()
    return fld  # already a callable point -> components


def _jacobian_evaluator(fld: VectorField):
    cache = getattr(fld, "_jacobian_eval", None)
    if cache is None:
        names = fld.chart.names
        entries = [
            differentiate(c, n) for c in fld.components for n in names
        ]
        cache = compile_exprs(entries, names)
        fld._jacobian_eval = cache
    return cache


def _is_constant_field(fld) -> Optional[np.ndarray]:
    if isinstance(fld, VectorField):
        if all(not free_symbols(c) for c in fld.components):
            return fld.at([0.0] * fld.chart.dim)
    return None


def integrate_flow(fld, z, s: float,
                   settings: IntegratorSettings = DEFAULT_SETTINGS,
                   chart: Optional[Chart] = None) -> np.ndarray:
    """Endpoint of the flow of `fld` from z over parameter time s."""
    z = np.asarray(z, dtype=float)
    if s == 0.0:
        return z.copy()
    const = _is_constant_field(fld)
    if const is not None:
        end = z + s * const
        if chart is not None and not _within_slack(end, chart,
                                                   settings.box_slack):
            raise NumericFailure(
                "flow left the sampling box (beyond the allowed slack)",
                last_point=tuple(end),
            )
        return end
    ev = _component_evaluator(fld)

    def rhs(_t, state):
        return ev(tuple(state))

    try:
        sol = solve_ivp(rhs, (0.0, s), z, method=settings.method,
                        rtol=settings.rtol, atol=settings.atol,
                        max_step=settings.max_step, dense_output=False)
    except EvalDomainError as err:
        raise NumericFailure(f"flow hit a domain error: {err}",
                             last_point=tuple(z)) from err
    if not sol.success:
        raise NumericFailure(f"flow integration failed: {sol.message}",
                             last_point=tuple(sol.y[:, -1]))
    end = sol.y[:, -1]
    if chart is not None and not _within_slack(end, chart, settings.box_slack):
        raise NumericFailure(
            "flow left the sampling box (beyond the allowed slack)",
            last_point=tuple(end),
        )
    return end


def _within_slack(point, chart: Chart, slack_fraction: float) -> bool:
    for x, (lo, hi) in zip(point, chart.box):
        pad = slack_fraction * (hi - lo)
        if not (lo - pad <= x <= hi + pad):
            return False
    return True


def integrate_flow_with_jacobian(fld, z, s: float,
                                 settings: IntegratorSettings = DEFAULT_SETTINGS):
    """Endpoint and flow-map Jacobian, via the variational equations."""
    z = np.asarray(z, dtype=float)
    m = z.size
    if s == 0.0:
        return z.copy(), np.eye(m)
    const = _is_constant_field(fld)
    if const is not None:
        return z + s * const, np.eye(m)
    if isinstance(fld, VectorField):
        ev = fld.evaluator()
        jac = _jacobian_evaluator(fld)

        def rhs(_t, state):
            point = tuple(state[:m])
            f = ev(point)
            J = np.array(jac(point), dtype=float).reshape(m, m)
            dJ = J @ state[m:].reshape(m, m)
            return np.concatenate([np.array(f), dJ.ravel()])

        y0 = np.concatenate([z, np.eye(m).ravel()])
        try:
            sol = solve_ivp(rhs, (0.0, s), y0, method=settings.method,
                            rtol=settings.rtol, atol=settings.atol,
                            max_step=settings.max_step)
        except EvalDomainError as err:
            raise NumericFailure(f"variational flow hit a domain error: {err}",
                                 last_point=tuple(z)) from err
        if not sol.success:
            raise NumericFailure(
                f"variational flow failed: {sol.message}",
                last_point=tuple(sol.y[:m, -1]),
            )
        end = sol.y[:, -1]
        return end[:m], end[m:].reshape(m, m)
    # callable field without symbolic jacobian: difference the flow map
    end = integrate_flow(fld, z, s, settings)
    J = np.empty((m, m))
    h = 1e-6
    for a in range(m):
        zp = z.copy()
        zm = z.copy()
        zp[a] += h
        zm[a] -= h
        J[:, a] = (integrate_flow(fld, zp, s, settings)
                   - integrate_flow(fld, zm, s, settings)) / (2 * h)
    return end, J


class FlowMap:
    """Flow of one generating field with fixed integrator settings."""

    def __init__(self, fld, settings: IntegratorSettings = DEFAULT_SETTINGS,
                 chart: Optional[Chart] = None):
        self.field = fld
        self.settings = settings
        self.chart = chart

    def __call__(self, z, s: float) -> np.ndarray:
        return integrate_flow(self.field, z, s, self.settings, self.chart)

    def with_jacobian(self, z, s: float):
        return integrate_flow_with_jacobian(self.field, z, s, self.settings)


# --------------------------------------------------------------------------
# Numeric basis transport (the linear system of the commuting-basis change)
# --------------------------------------------------------------------------

@dataclass
class CrossSection:
    base_point: tuple
    directions: np.ndarray  # m x (m - n), transversal to the V-span


def default_cross_section(ef: ExtendedFrame) -> CrossSection:
    """Complete the V-span at the box center by singular-vector directions."""
    chart = ef.chart
    z0 = chart.center()
    cols = np.array([v.at(z0) for v in ef.vbasis], dtype=float).T
    u, sv, _ = np.linalg.svd(cols, full_matrices=True)
    extra = u[:, len(ef.vbasis):]
    # fix signs deterministically
    for j in range(extra.shape[1]):
        col = extra[:, j]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            extra[:, j] = -col
    return CrossSection(base_point=tuple(z0), directions=extra)


def solve_basis_ode(bc, section: CrossSection, vbasis: Sequence[VectorField],
                    settings: IntegratorSettings = DEFAULT_SETTINGS,
                    path_check_tol: float = 1e-7) -> Callable:
    """Numeric matrix A(z) with V_l(A^k_j) + A^m_j w^k_lm = 0 and A = id on
    the cross-section.

    For a target z the section parameters and fibre times are solved by
    Newton iteration on the composed V-flows, then A is transported along
    that fibre path coordinate direction by coordinate direction.  Path
    independence (guaranteed by the integrability identities) is spot-checked
    by re-running with the flow order reversed."""
    n = len(vbasis)
    chart = vbasis[0].chart
    m = chart.dim
    z0 = np.asarray(section.base_point, dtype=float)
    dirs = np.asarray(section.directions, dtype=float)
    if dirs.shape != (m, m - n):
        raise AnalysisError("cross-section directions must be m x (m-n)")
    names = chart.names
    beta_fns = [
        [compile_exprs([bc.w[l][j][k] for k in range(n)], names)
         for j in range(n)]
        for l in range(n)
    ]
    v_evals = [v.evaluator() for v in vbasis]
    v_jacs = [_jacobian_evaluator(v) for v in vbasis]

    def fibre_map(params, order):
        s = params[: m - n]
        y = params[m - n:]
        z = z0 + dirs @ s
        J = dirs.copy()  # d z / d s
        Jy = np.zeros((m, n))
        for pos, l in enumerate(order):
            z, Jf = integrate_flow_with_jacobian(vbasis[l], z, y[l], settings)
            J = Jf @ J
            Jy = Jf @ Jy
            Jy[:, l] = np.array(v_evals[l](tuple(z)))
        return z, np.hstack([J, Jy])

    def transport(z_target, order):
        params = np.zeros(m)
        target = np.asarray(z_target, dtype=float)
        for it in range(60):
            z, J = fibre_map(params, order)
            r = z - target
            if np.max(np.abs(r)) < 1e-11:
                break
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                raise NumericFailure(
                    "singular Jacobian while locating the fibre path",
                    last_point=tuple(z),
                ) from None
            params = params + step
        else:
            raise NumericFailure(
                "fibre-path Newton iteration did not converge",
                last_point=tuple(z_target),
            )
        s = params[: m - n]
        y = params[m - n:]
        z = z0 + dirs @ s
        A = np.eye(n)
        for l in order:
            if y[l] == 0.0:
                continue
            ev = v_evals[l]
            beta_row = beta_fns[l]

            def rhs(_t, state):
                point = tuple(state[:m])
                f = ev(point)
                A_mat = state[m:].reshape(n, n)
                B = np.array(
                    [beta_row[j](point) for j in range(n)], dtype=float
                ).T  # B[k, j] = w^k_{l j}... built from per-j rows
                dA = -B @ A_mat
                return np.concatenate([np.array(f), dA.ravel()])

            y0 = np.concatenate([z, A.ravel()])
            sol = solve_ivp(rhs, (0.0, y[l]), y0, method=settings.method,
                            rtol=settings.rtol, atol=settings.atol)
            if not sol.success:
                raise NumericFailure(
                    f"basis transport failed: {sol.message}",
                    last_point=tuple(sol.y[:m, -1]),
                )
            z = sol.y[:m, -1]
            A = sol.y[m:, -1].reshape(n, n)
            if abs(np.linalg.det(A)) < 1e-10:
                raise NumericFailure(
                    "transported basis matrix became singular",
                    last_point=tuple(z),
                )
        return A

    checked = {"done": False}

    def evaluator(z_target) -> np.ndarray:
        A = transport(z_target, list(range(n)))
        if not checked["done"] and n > 1:
            A_rev = transport(z_target, list(reversed(range(n))))
            gap = float(np.max(np.abs(A - A_rev)))
            if gap > path_check_tol:
                raise NumericFailure(
                    f"basis transport is path dependent (gap {gap:.2e}); "
                    "integrability identities are not holding numerically"
                )
            checked["done"] = True
        return A

    return evaluator


# --------------------------------------------------------------------------
# The coordinate transform
# --------------------------------------------------------------------------

@dataclass
class Stage:
    kind: str      # "t", "x", "y"
    fld: object    # VectorField or callable
    label: str


class CoordinateTransform:
    """Numeric chart (t^p, x^i, y^i) -> point of M built from composed flows.

    Parameters are applied innermost first in the stored stage order;
    the Jacobian is propagated by variational equations alongside each flow.
    After the forward map, fibre coordinates are redefined as the
    x-components of the pushed-forward field (`final_coords`)."""

    def __init__(self, report: AnalysisReport, ef: ExtendedFrame,
                 z0, stages: Sequence[Stage],
                 settings: IntegratorSettings = DEFAULT_SETTINGS):
        self.report = report
        self.ef = ef
        self.chart = ef.chart
        self.F = ef.problem.F
        self.case = report.classification
        self.z0 = np.asarray(z0, dtype=float)
        self.stages = list(stages)
        self.settings = settings
        self.m = self.chart.dim
        self.n = ef.n
        if len(self.stages) != self.m:
            raise AnalysisError("need exactly one stage per coordinate")
        self.param_names = [st.label for st in self.stages]
        self.t_count = self.m - 2 * self.n
        _, J0 = self.map_with_jacobian(np.zeros(self.m))
        self.base_condition = float(np.linalg.cond(J0))
        if not np.isfinite(self.base_condition) or self.base_condition > 1e8:
            raise NumericFailure(
                f"transform Jacobian is singular at the base point "
                f"(condition {self.base_condition:.2e})"
            )

    def metadata(self) -> dict:
        return {
            "case": self.case,
            "base_point": [float(v) for v in self.z0],
            "parameters": self.param_names,
            "composition_order": "innermost first, ascending index per block",
            "x_flow_sign": "x-parameters flow the negated projectable "
                           "W-representatives",
            "fibre_redefinition": "y^i := x-components of the pushed-forward "
                                  "field",
            "base_condition_number": self.base_condition,
        }

    def map_params(self, params) -> np.ndarray:
        z = self.z0.copy()
        for st, s in zip(self.stages, params):
            z = integrate_flow(st.fld, z, float(s), self.settings, self.chart)
        return z

    def map_with_jacobian(self, params):
        z = self.z0.copy()
        J = np.zeros((self.m, 0))
        for st, s in zip(self.stages, params):
            z, Jf = integrate_flow_with_jacobian(st.fld, z, float(s),
                                                 self.settings)
            J = Jf @ J if J.size else J
            ev = _component_evaluator(st.fld)
            col = np.array(ev(tuple(z)), dtype=float).reshape(self.m, 1)
            J = np.hstack([J, col]) if J.size else col
        return z, J

    def invert(self, z_target, guess=None, tol: float = 1e-10,
               max_iter: int = 50) -> np.ndarray:
        params = np.zeros(self.m) if guess is None else np.array(guess, float)
        target = np.asarray(z_target, dtype=float)
        for _ in range(max_iter):
            z, J = self.map_with_jacobian(params)
            r = z - target
            if np.max(np.abs(r)) < tol:
                return params
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                raise NumericFailure("singular Jacobian during inversion",
                                     last_point=tuple(z)) from None
            params = params + step
        raise NumericFailure("transform inversion did not converge",
                             last_point=tuple(z_target))

    def pushforward_components(self, params):
        """(components of F in the raw parameter chart, condition number)."""
        z, J = self.map_with_jacobian(params)
        f = self.F.at(z)
        cond = float(np.linalg.cond(J))
        try:
            v = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            raise NumericFailure("singular Jacobian in pushforward",
                                 last_point=tuple(z)) from None
        return v, cond

    def final_coords(self, params) -> np.ndarray:
        """(t, x, ytilde) with ytilde = x-components of the pushed field."""
        v, _ = self.pushforward_components(params)
        out = np.array(params, dtype=float)
        tc, n = self.t_count, self.n
        out[tc + n:] = v[tc: tc + n]
        return out

    def fibre_jacobian_min_sv(self, params, h: float = 1e-5) -> float:
        """Smallest singular value of d(ytilde)/d(y_raw): the fibre
        redefinition must be invertible (with an adapted commuting basis it
        is the identity in exact arithmetic), checked numerically."""
        tc, n = self.t_count, self.n
        G = np.empty((n, n))
        for a in range(n):
            up = np.array(params, float)
            dn = np.array(params, float)
            up[tc + n + a] += h
            dn[tc + n + a] -= h
            G[:, a] = (self.final_coords(up)[tc + n:]
                       - self.final_coords(dn)[tc + n:]) / (2 * h)
        return float(np.linalg.svd(G, compute_uv=False)[-1])

    def field_in_final_chart(self, params, step: float = 1e-2) -> np.ndarray:
        """All components of F in the final chart at a node, by a five-point
        stencil along the F-flow through the node (independent of the
        variational route)."""
        params = np.asarray(params, dtype=float)
        z = self.map_params(params)
        v_pred, _ = self.pushforward_components(params)
        fmap = FlowMap(self.F, self.settings)
        samples = {}
        for k in (-2, -1, 1, 2):
            s = k * step
            zs = fmap(z, s)
            guess = params + s * v_pred
            ps = self.invert(zs, guess=guess)
            samples[k] = self.final_coords(ps)
        return (samples[-2] - 8 * samples[-1] + 8 * samples[1]
                - samples[2]) / (12 * step)

    def jacobian_fd(self, params, h: float = 1e-5) -> np.ndarray:
        J = np.empty((self.m, self.m))
        for a in range(self.m):
            up = np.array(params, float)
            dn = np.array(params, float)
            up[a] += h
            dn[a] -= h
            J[:, a] = (self.map_params(up) - self.map_params(dn)) / (2 * h)
        return J


def _tilt_to_locus(fld: VectorField, b_exprs, vbasis) -> VectorField:
    """Add vertical corrections so the field is tangent to {b = 0}
    (valid because V_k(b^j) = -delta^j_k in the adapted basis)."""
    out = fld
    for k, v in enumerate(vbasis):
        corr = normalize(fld.directional(b_exprs[k]))
        if corr != ZERO:
            out = out + v.scaled(corr)
    return out


def _completion_directions(ef: ExtendedFrame, z0) -> np.ndarray:
    """Directions completing the combined span at z0 (singular vectors)."""
    cols = np.array(
        [f.at(z0) for f in ef.combined.fields], dtype=float
    ).T
    u, sv, _ = np.linalg.svd(cols, full_matrices=True)
    extra = u[:, len(ef.combined.fields):]
    for j in range(extra.shape[1]):
        col = extra[:, j]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            extra[:, j] = -col
    return extra


def _constant_direction_field(chart: Chart, direction) -> VectorField:
    from fractions import Fraction
    comps = [Num(Fraction(float(d))) for d in direction]
    return VectorField(chart, comps)


def build_normal_coordinates(report: AnalysisReport,
                             settings: IntegratorSettings = DEFAULT_SETTINGS
                             ) -> CoordinateTransform:
    """Assemble the flow-composition chart for a classified problem."""
    if report.classification not in (CASE1, CASE2):
        raise AnalysisError(
            f"cannot straighten a problem classified {report.classification}"
        )
    ef = report.extended
    chart = ef.chart
    n = ef.n
    m = chart.dim
    adaptation = report.adaptation
    stages: list = []

    if report.classification == CASE1:
        if not report.zero_section_points:
            raise NumericFailure("cross-section not found in box")
        z0 = np.asarray(report.zero_section_points[0], dtype=float)
        b_exprs = [normalize(b) for b in report.f_w_coefficients]
        if m > 2 * n:
            extra = _completion_directions(ef, tuple(z0))
            for p in range(extra.shape[1]):
                direction = _constant_direction_field(chart, extra[:, p])
                tilted = _tilt_to_locus(direction, b_exprs, ef.vbasis)
                stages.append(Stage("t", tilted, f"t{p + 1}"))
        for i, w in enumerate(ef.wfields):
            tangent = _tilt_to_locus(w, b_exprs, ef.vbasis)
            stages.append(Stage("x", tangent.scaled(Num(-1)), f"x{i + 1}"))
    else:
        z0 = np.asarray(chart.center(), dtype=float)
        if m > 2 * n + 1:
            # extra slice directions are innermost so that the F-flow and the
            # leaf flows come after them; F(z0) spans one completion
            # direction, keep the remainder
            extra = _completion_directions(ef, tuple(z0))
            f0 = ef.problem.F.at(tuple(z0))
            f0 = f0 / np.linalg.norm(f0)
            kept = []
            for p in range(extra.shape[1]):
                col = extra[:, p] - (extra[:, p] @ f0) * f0
                norm = np.linalg.norm(col)
                if norm > 1e-8:
                    kept.append(col / norm)
                if len(kept) == m - 2 * n - 1:
                    break
            if len(kept) != m - 2 * n - 1:
                raise NumericFailure(
                    "could not complete the time-slice directions"
                )
            for p, col in enumerate(kept):
                stages.append(Stage(
                    "t", _constant_direction_field(chart, col), f"t{p + 2}"
                ))
        stages.append(Stage("t", ef.problem.F, "t1"))
        for i, w in enumerate(ef.wfields):
            stages.append(Stage("x", w.scaled(Num(-1)), f"x{i + 1}"))

    if adaptation is not None and adaptation.mode == "numeric" \
            and adaptation.evaluator is not None:
        v_evals = [v.evaluator() for v in ef.vbasis]

        def make_field(index):
            def call(point):
                A = adaptation.evaluator(point)
                cols = np.array([ev(point) for ev in v_evals], dtype=float)
                return tuple(A[:, index] @ cols)
            return call

        for i in range(n):
            stages.append(Stage("y", make_field(i), f"y{i + 1}"))
    else:
        for i, v in enumerate(ef.vbasis):
            stages.append(Stage("y", v, f"y{i + 1}"))

    return CoordinateTransform(report, ef, z0, stages, settings)


# --------------------------------------------------------------------------
# Residual evaluation on a grid
# --------------------------------------------------------------------------

@dataclass
class ResidualReport:
    grid_shape: tuple
    extent: list
    node_count: int
    max_t_residual: float
    median_t_residual: float
    max_structural_residual: float
    crosscheck_nodes: int
    max_crosscheck_residual: float
    max_jacobian_gap: float
    flagged_nodes: int
    fibre_min_sv: float

    def as_dict(self) -> dict:
        return {
            "grid_shape": list(self.grid_shape),
            "extent": self.extent,
            "node_count": self.node_count,
            "max_t_residual": self.max_t_residual,
            "median_t_residual": self.median_t_residual,
            "max_structural_residual": self.max_structural_residual,
            "crosscheck_nodes": self.crosscheck_nodes,
            "max_crosscheck_residual": self.max_crosscheck_residual,
            "max_jacobian_gap": self.max_jacobian_gap,
            "flagged_nodes": self.flagged_nodes,
            "fibre_min_sv": self.fibre_min_sv,
        }


def default_grid_points(m: int) -> int:
    if m <= 4:
        return 10
    if m <= 6:
        return 5
    raise AnalysisError("desk-scale cap: charts up to dimension 6")


def default_extent(chart: Chart) -> float:
    return 0.35 * min(0.5 * (hi - lo) for lo, hi in chart.box)


def pushforward_residuals(transform: CoordinateTransform,
                          grid_points: Optional[int] = None,
                          extent: Optional[float] = None,
                          crosscheck_cap: int = 12,
                          cond_limit: float = 1e8) -> ResidualReport:
    """Structural residuals of the pushed-forward field on a parameter grid.

    t-components are compared against their target (zero, or one for the
    flow-time coordinate); x-components equal the redefined fibre coordinates
    by construction, so the independent five-point stencil along the F-flow
    is used as the sanity cross-check on a capped subsample of nodes, along
    with a finite-difference check of the variational Jacobian."""
    m = transform.m
    n = transform.n
    tc = transform.t_count
    g = grid_points if grid_points is not None else default_grid_points(m)
    ext = extent if extent is not None else default_extent(transform.chart)
    axes = [np.linspace(-ext, ext, g) for _ in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([ax.ravel() for ax in mesh], axis=1)
    expected_t = np.array([
        1.0 if name == "t1" and transform.case == CASE2 else 0.0
        for name in transform.param_names[:tc]
    ])
    t_residuals = []
    flagged = 0
    for node in nodes:
        try:
            v, cond = transform.pushforward_components(node)
        except NumericFailure:
            flagged += 1
            continue
        if cond > cond_limit:
            flagged += 1
            continue
        if tc:
            t_residuals.append(float(np.max(np.abs(v[:tc] - expected_t))))
        else:
            t_residuals.append(0.0)
    if not t_residuals:
        raise NumericFailure("every grid node was flagged or failed")
    # independent cross-check on a subsample
    stride = max(1, len(nodes) // crosscheck_cap)
    max_cross = 0.0
    max_jgap = 0.0
    checked = 0
    for node in nodes[::stride]:
        try:
            v, cond = transform.pushforward_components(node)
            if cond > cond_limit:
                continue
            fin = transform.field_in_final_chart(node)
            ytilde = transform.final_coords(node)[tc + n:]
            gap_x = float(np.max(np.abs(fin[tc: tc + n] - ytilde)))
            gap_t = float(np.max(np.abs(fin[:tc] - expected_t))) if tc else 0.0
            max_cross = max(max_cross, gap_x, gap_t)
            _, Jv = transform.map_with_jacobian(node)
            Jf = transform.jacobian_fd(node)
            scale = max(1.0, float(np.max(np.abs(Jv))))
            max_jgap = max(max_jgap,
                           float(np.max(np.abs(Jv - Jf))) / scale)
            checked += 1
        except NumericFailure:
            continue
    fibre_sv = transform.fibre_jacobian_min_sv(np.zeros(m))
    t_arr = np.array(t_residuals)
    # for m = 2n there is no t-block; the stencil cross-check is then the
    # substantive structural residual
    structural = max(float(np.max(t_arr)), max_cross)
    return ResidualReport(
        grid_shape=tuple([g] * m),
        extent=[float(ext)] * m,
        node_count=len(t_residuals),
        max_t_residual=float(np.max(t_arr)),
        median_t_residual=float(np.median(t_arr)),
        max_structural_residual=structural,
        crosscheck_nodes=checked,
        max_crosscheck_residual=max_cross,
        max_jacobian_gap=max_jgap,
        flagged_nodes=flagged,
        fibre_min_sv=fibre_sv,
    )


def extract_quadratic_coefficients(transform: CoordinateTransform,
                                   grid_points: int = 5,
                                   extent: Optional[float] = None) -> dict:
    """Fit force^k = G^k_ij y^i y^j + P^k_i y^i + Q^k per base node.

    Only sensible after a Quadratic verdict; the fit residual reports how
    well the force is represented by the quadratic model on the grid."""
    m, n, tc = transform.m, transform.n, transform.t_count
    ext = extent if extent is not None else default_extent(transform.chart)
    base_axes = [np.linspace(-ext, ext, 3) for _ in range(tc + n)]
    y_axes = [np.linspace(-ext, ext, grid_points) for _ in range(n)]
    base_mesh = np.meshgrid(*base_axes, indexing="ij") if base_axes else []
    base_nodes = (np.stack([ax.ravel() for ax in base_mesh], axis=1)
                  if base_axes else np.zeros((1, 0)))
    y_mesh = np.meshgrid(*y_axes, indexing="ij")
    y_nodes = np.stack([ax.ravel() for ax in y_mesh], axis=1)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    results = []
    max_fit_residual = 0.0
    for base in base_nodes:
        rows = []
        rhs = []
        for ypt in y_nodes:
            params = np.concatenate([base, ypt])
            fin = transform.field_in_final_chart(params)
            ytilde = transform.final_coords(params)[tc + n:]
            row = [ytilde[i] * ytilde[j] for i, j in pairs]
            row += list(ytilde) + [1.0]
            rows.append(row)
            rhs.append(fin[tc + n:])
        A = np.array(rows)
        B = np.array(rhs)
        sol, *_ = np.linalg.lstsq(A, B, rcond=None)
        fit_residual = float(np.max(np.abs(A @ sol - B)))
        max_fit_residual = max(max_fit_residual, fit_residual)
        entry = {
            "base": [float(v) for v in base],
            "fit_residual": fit_residual,
            "quadratic": {
                f"G[{k}][{i}{j}]": float(sol[p, k])
                for p, (i, j) in enumerate(pairs) for k in range(n)
            },
            "linear": {
                f"P[{k}][{i}]": float(sol[len(pairs) + i, k])
                for i in range(n) for k in range(n)
            },
            "constant": {
                f"Q[{k}]": float(sol[len(pairs) + n, k]) for k in range(n)
            },
        }
        results.append(entry)
    return {"max_fit_residual": max_fit_residual, "per_base_node": results}
