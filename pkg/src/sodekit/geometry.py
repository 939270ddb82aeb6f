"""Charts, vector fields and frames; bracket calculus on a coordinate patch.

Everything downstream is built from four operations: the coordinate Lie
bracket, numeric rank sampling of a frame, symbolic decomposition of a field
in a frame (exact Gaussian elimination over expressions with probabilistic
zero pivot tests), and the involutivity test that combines them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .expressions import (
    Expr, EvalDomainError, Num, ZERO, compile_exprs, differentiate,
    free_symbols, normalize, to_str,
)
from .sampling import ZeroProbe, box_points

RANK_TOL = 1e-9  # singular values below RANK_TOL * s_max count as zero


class GeometryError(ValueError):
    pass


class ChartMismatchError(GeometryError):
    pass


class FrameRankError(GeometryError):
    def __init__(self, message: str, report: "RankReport"):
        super().__init__(message)
        self.report = report


class Chart:
    """Ordered coordinate names plus the sampling box of the local patch."""

    def __init__(self, names: Sequence[str], box: Sequence, seed: int = 0):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise GeometryError("coordinate names must be unique")
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != len(names):
            raise GeometryError("box must give one interval per coordinate")
        for n, (lo, hi) in zip(names, box):
            if not hi > lo:
                raise GeometryError(f"degenerate box interval for '{n}'")
        self.names = names
        self.box = box
        self.seed = int(seed)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def box_map(self) -> dict:
        return {n: iv for n, iv in zip(self.names, self.box)}

    def probe(self, trials: int = 64, seed: Optional[int] = None,
              tol: float = 1e-10) -> ZeroProbe:
        return ZeroProbe(self.box_map, trials,
                         self.seed if seed is None else seed, tol)

    def sample(self, count: int, seed: Optional[int] = None):
        return box_points(self.box, count, self.seed if seed is None else seed)

    def assignment(self, point) -> dict:
        return dict(zip(self.names, point))

    def center(self):
        return tuple(0.5 * (lo + hi) for lo, hi in self.box)

    def contains(self, point, slack: float = 0.0) -> bool:
        return all(
            lo - slack <= x <= hi + slack
            for x, (lo, hi) in zip(point, self.box)
        )

    def __eq__(self, other):
        return (isinstance(other, Chart) and self.names == other.names
                and self.box == other.box)

    def __repr__(self):
        return f"Chart({', '.join(self.names)})"


class VectorField:
    """Vector field with one component expression per chart coordinate."""

    def __init__(self, chart: Chart, components: Sequence[Expr]):
        components = tuple(components)
        if len(components) != chart.dim:
            raise GeometryError(
                f"expected {chart.dim} components, got {len(components)}"
            )
        unknown = set()
        for c in components:
            unknown |= free_symbols(c) - set(chart.names)
        if unknown:
            raise GeometryError(
                f"components use symbols outside the chart: {sorted(unknown)}"
            )
        self.chart = chart
        self.components = components
        self._evaluator = None

    def normalized(self) -> "VectorField":
        return VectorField(self.chart, [normalize(c) for c in self.components])

    def directional(self, f: Expr) -> Expr:
        """Derivative of the scalar f along this field."""
        terms = []
        for name, comp in zip(self.chart.names, self.components):
            terms.append(comp * differentiate(f, name))
        return normalize(sum(terms[1:], terms[0]))

    def evaluator(self):
        if self._evaluator is None:
            self._evaluator = compile_exprs(self.components, self.chart.names)
        return self._evaluator

    def at(self, point) -> np.ndarray:
        return np.array(self.evaluator()(tuple(point)), dtype=float)

    def combine(self, coeff: Expr, other: "VectorField",
                other_coeff: Expr) -> "VectorField":
        if other.chart != self.chart:
            raise ChartMismatchError("vector fields live on different charts")
        comps = [
            normalize(coeff * a + other_coeff * b)
            for a, b in zip(self.components, other.components)
        ]
        return VectorField(self.chart, comps)

    def scaled(self, factor: Expr) -> "VectorField":
        return VectorField(
            self.chart, [normalize(factor * c) for c in self.components]
        )

    def __add__(self, other):
        return self.combine(Num(1), other, Num(1))

    def __sub__(self, other):
        return self.combine(Num(1), other, Num(-1))

    def __neg__(self):
        return self.scaled(Num(-1))

    def is_zero_field(self, probe: ZeroProbe):
        """Worst verdict over components: nonzero > unknown > zero."""
        worst = None
        for comp in self.components:
            v = probe(comp)
            if v.is_nonzero:
                return v
            if worst is None or (v.kind == "unknown" and worst.kind == "zero"):
                worst = v
        return worst

    def __repr__(self):
        comps = ", ".join(to_str(c) for c in self.components)
        return f"VectorField[{comps}]"


def coordinate_field(chart: Chart, name: str) -> VectorField:
    idx = chart.names.index(name)
    comps = [Num(1) if i == idx else ZERO for i in range(chart.dim)]
    return VectorField(chart, comps)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^k = X^j dY^k/dz^j - Y^j dX^k/dz^j, normalized."""
    if X.chart != Y.chart:
        raise ChartMismatchError("lie_bracket requires a common chart")
    chart = X.chart
    comps = []
    for k in range(chart.dim):
        terms = []
        for j, name in enumerate(chart.names):
            terms.append(X.components[j] * differentiate(Y.components[k], name))
            terms.append(-(Y.components[j] * differentiate(X.components[k], name)))
        comps.append(normalize(sum(terms[1:], terms[0])))
    return VectorField(chart, comps)


@dataclass
class RankReport:
    claimed_rank: int
    sample_count: int
    ranks: list
    worst_conditioning: float
    deficient_points: list
    skipped_points: int = 0

    @property
    def constant_rank(self) -> bool:
        return not self.deficient_points

    def as_dict(self) -> dict:
        return {
            "claimed_rank": self.claimed_rank,
            "sample_count": self.sample_count,
            "worst_conditioning": self.worst_conditioning,
            "deficient_point_count": len(self.deficient_points),
            "deficient_points": [list(p) for p in self.deficient_points[:8]],
            "skipped_points": self.skipped_points,
        }


def frame_rank(fields, chart: Optional[Chart] = None, samples: int = 64,
               seed: Optional[int] = None) -> RankReport:
    """Numeric rank of the span of `fields` at quasi-random sample points."""
    if isinstance(fields, Frame):
        chart = fields.chart
        fields = fields.fields
    fields = list(fields)
    if not fields:
        raise GeometryError("empty frame")
    if chart is None:
        chart = fields[0].chart
    if samples < 1:
        raise GeometryError("samples must be >= 1")
    evaluators = [f.evaluator() for f in fields]
    points = chart.sample(samples, seed)
    ranks = []
    kept_points = []
    worst = np.inf
    skipped = 0
    for pt in points:
        try:
            cols = [ev(pt) for ev in evaluators]
        except EvalDomainError:
            skipped += 1
            continue
        matrix = np.array(cols, dtype=float).T
        svals = np.linalg.svd(matrix, compute_uv=False)
        if svals.size == 0 or svals[0] == 0.0:
            rank = 0
        else:
            significant = svals[svals > RANK_TOL * svals[0]]
            rank = int(significant.size)
            if rank == len(fields):
                worst = min(worst, float(significant[-1]))
        ranks.append(rank)
        kept_points.append(pt)
    if not ranks:
        raise GeometryError(
            "all sample points hit evaluation domain errors"
        )
    claimed = max(ranks)
    deficient = [p for p, r in zip(kept_points, ranks) if r < claimed]
    return RankReport(
        claimed_rank=claimed,
        sample_count=len(ranks),
        ranks=ranks,
        worst_conditioning=float(worst) if np.isfinite(worst) else 0.0,
        deficient_points=deficient,
        skipped_points=skipped,
    )


class Frame:
    """Ordered list of vector fields spanning a distribution.

    Validated eagerly: the frame must have constant full rank on the
    sampling box (a distribution in the strict sense).  Pass validate=False
    for raw frames whose rank is itself under investigation.
    """

    def __init__(self, chart: Chart, fields: Sequence[VectorField],
                 validate: bool = True, samples: int = 64,
                 seed: Optional[int] = None):
        fields = tuple(fields)
        for f in fields:
            if f.chart != chart:
                raise ChartMismatchError("all frame fields must share the chart")
        self.chart = chart
        self.fields = fields
        self.rank_report: Optional[RankReport] = None
        if validate:
            report = frame_rank(list(fields), chart, samples, seed)
            self.rank_report = report
            if report.claimed_rank != len(fields) or not report.constant_rank:
                raise FrameRankError(
                    f"frame rank {report.claimed_rank} of {len(fields)} "
                    f"with {len(report.deficient_points)} deficient samples",
                    report,
                )

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i):
        return self.fields[i]


@dataclass
class Decomposition:
    ok: bool
    coefficients: Optional[tuple] = None
    residual_verdicts: Optional[list] = None
    failure: Optional[str] = None  # "not_in_span" | "pivot_ambiguous" | "rank_deficient"
    witness: Optional[dict] = None
    diagnostic: Optional[str] = None

    @property
    def exact(self) -> bool:
        return bool(self.ok and self.residual_verdicts is not None and
                    all(v.is_zero for v in self.residual_verdicts))

    def max_residual(self) -> float:
        if not self.residual_verdicts:
            return 0.0
        return max(v.max_residual for v in self.residual_verdicts)


def decompose_in_frame(X: VectorField, frame, probe: ZeroProbe) -> Decomposition:
    """Express X = sum c^k fr_k with Expression coefficients.

    Solves the component system by exact Gaussian elimination over
    expressions; pivots are selected by the probabilistic zero test.  The
    recombined residual is verified componentwise: a NonZero residual means
    X is not in the span (witness attached); Unknown pivots that block
    elimination are reported as ambiguity.
    """
    fields = list(frame.fields if isinstance(frame, Frame) else frame)
    chart = X.chart
    m = chart.dim
    k = len(fields)
    rows = [
        [fields[j].components[i] for j in range(k)] + [X.components[i]]
        for i in range(m)
    ]
    rows = [[normalize(e) for e in row] for row in rows]
    row_order = list(range(m))
    pivot_rows = []
    for col in range(k):
        pivot = None
        saw_unknown = False
        for ri in row_order:
            if ri in pivot_rows:
                continue
            entry = rows[ri][col]
            if entry == ZERO:
                continue
            verdict = probe(entry)
            if verdict.is_nonzero:
                pivot = ri
                break
            if not verdict.is_zero:
                saw_unknown = True
        if pivot is None:
            if saw_unknown:
                return Decomposition(
                    ok=False, failure="pivot_ambiguous",
                    diagnostic=f"no certifiably nonzero pivot in column {col}",
                )
            return Decomposition(
                ok=False, failure="rank_deficient",
                diagnostic=f"column {col} vanished during elimination",
            )
        pivot_rows.append(pivot)
        pivot_entry = rows[pivot][col]
        rows[pivot] = [
            normalize(e / pivot_entry) if j >= col else rows[pivot][j]
            for j, e in enumerate(rows[pivot])
        ]
        for ri in range(m):
            if ri == pivot:
                continue
            factor = rows[ri][col]
            if factor == ZERO:
                continue
            rows[ri] = [
                normalize(e - factor * p) if j >= col else rows[ri][j]
                for j, (e, p) in enumerate(zip(rows[ri], rows[pivot]))
            ]
    coefficients = tuple(rows[pivot_rows[c]][k] for c in range(k))
    residual = list(X.components)
    for c, f in zip(coefficients, fields):
        residual = [
            normalize(r - c * comp)
            for r, comp in zip(residual, f.components)
        ]
    verdicts = [probe(r) for r in residual]
    for v in verdicts:
        if v.is_nonzero:
            return Decomposition(
                ok=False, failure="not_in_span", witness=v.witness,
                residual_verdicts=verdicts,
                diagnostic="recombination residual is nonzero",
            )
    return Decomposition(ok=True, coefficients=coefficients,
                         residual_verdicts=verdicts)


@dataclass
class InvolutivityResult:
    ok: bool
    failing_pair: Optional[tuple] = None
    witness: Optional[dict] = None
    diagnostic: Optional[str] = None
    unknown_pairs: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {"involutive": self.ok}
        if self.failing_pair is not None:
            out["failing_pair"] = list(self.failing_pair)
        if self.witness is not None:
            out["witness"] = dict(self.witness)
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        if self.unknown_pairs:
            out["unknown_pairs"] = [list(p) for p in self.unknown_pairs]
        return out


def is_involutive(frame, probe: ZeroProbe) -> InvolutivityResult:
    """Check closure under Lie bracket by decomposing each [fr_i, fr_j]."""
    fields = list(frame.fields if isinstance(frame, Frame) else frame)
    unknowns = []
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            bracket = lie_bracket(fields[i], fields[j])
            if all(c == ZERO for c in bracket.components):
                continue
            dec = decompose_in_frame(bracket, fields, probe)
            if not dec.ok:
                if dec.failure == "not_in_span":
                    return InvolutivityResult(
                        ok=False, failing_pair=(i, j), witness=dec.witness,
                        diagnostic=f"[{i},{j}] leaves the span",
                    )
                return InvolutivityResult(
                    ok=False, failing_pair=(i, j), diagnostic=dec.diagnostic,
                )
            if not dec.exact:
                unknowns.append((i, j))
    return InvolutivityResult(ok=True, unknown_pairs=unknowns)
