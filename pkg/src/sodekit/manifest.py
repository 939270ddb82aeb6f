"""Problem manifests: the self-describing JSON documents the CLI consumes.

A manifest carries the chart (coordinate names and sampling box), the field
F, the frame V spanning the distribution (expressions stored as grammar
strings), options and free-form metadata.  Validation errors raise
ManifestError and map to exit code 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .expressions import Expr, free_symbols
from .geometry import Chart, GeometryError, VectorField
from .parser import ParseError, parse


class ManifestError(ValueError):
    pass


@dataclass
class Manifest:
    name: str
    description: str
    chart: Chart
    field_components: list        # list[Expr]
    frame_components: list        # list[list[Expr]]
    options: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def n(self) -> int:
        return len(self.frame_components)

    def vector_field(self) -> VectorField:
        return VectorField(self.chart, self.field_components)

    def frame_fields(self) -> list:
        return [VectorField(self.chart, comps)
                for comps in self.frame_components]

    def echo(self) -> dict:
        return json.loads(json.dumps(self.raw, sort_keys=True))


def _parse_expr(text, where: str) -> Expr:
    if not isinstance(text, str):
        raise ManifestError(f"{where}: expression must be a string")
    try:
        return parse(text)
    except ParseError as err:
        raise ManifestError(f"{where}: {err}") from err


def load_manifest(data: dict) -> Manifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    chart_spec = data.get("chart")
    if not isinstance(chart_spec, dict):
        raise ManifestError("manifest needs a 'chart' object")
    names = chart_spec.get("coordinates")
    box = chart_spec.get("box")
    if not isinstance(names, list) or not names:
        raise ManifestError("chart.coordinates must be a nonempty list")
    if not isinstance(box, list) or len(box) != len(names):
        raise ManifestError("chart.box must list one [lo, hi] per coordinate")
    try:
        chart = Chart(names, box, seed=int(data.get("options", {}).get("seed", 0)))
    except (GeometryError, TypeError, ValueError) as err:
        raise ManifestError(f"invalid chart: {err}") from err

    field_spec = data.get("field", {})
    comps = field_spec.get("components")
    if not isinstance(comps, list) or len(comps) != chart.dim:
        raise ManifestError(
            f"field.components must list {chart.dim} expressions"
        )
    field_exprs = [
        _parse_expr(c, f"field.components[{i}]") for i, c in enumerate(comps)
    ]

    frame_spec = data.get("frame")
    if not isinstance(frame_spec, list) or not frame_spec:
        raise ManifestError("manifest needs a nonempty 'frame' list")
    frame_exprs = []
    for k, entry in enumerate(frame_spec):
        fcomps = entry.get("components") if isinstance(entry, dict) else entry
        if not isinstance(fcomps, list) or len(fcomps) != chart.dim:
            raise ManifestError(
                f"frame[{k}] must list {chart.dim} component expressions"
            )
        frame_exprs.append([
            _parse_expr(c, f"frame[{k}].components[{i}]")
            for i, c in enumerate(fcomps)
        ])
    if 2 * len(frame_exprs) > chart.dim:
        raise ManifestError(
            f"need 2 * frame size <= chart dimension: "
            f"{2 * len(frame_exprs)} > {chart.dim}"
        )
    known = set(chart.names)
    for i, e in enumerate(field_exprs):
        extra = free_symbols(e) - known
        if extra:
            raise ManifestError(
                f"field.components[{i}] uses unknown symbols {sorted(extra)}"
            )
    for k, comps_k in enumerate(frame_exprs):
        for i, e in enumerate(comps_k):
            extra = free_symbols(e) - known
            if extra:
                raise ManifestError(
                    f"frame[{k}].components[{i}] uses unknown symbols "
                    f"{sorted(extra)}"
                )

    options = data.get("options", {})
    if not isinstance(options, dict):
        raise ManifestError("options must be an object")
    metadata = data.get("metadata", {})
    return Manifest(
        name=str(data.get("name", "unnamed")),
        description=str(data.get("description", "")),
        chart=chart,
        field_components=field_exprs,
        frame_components=frame_exprs,
        options=dict(options),
        metadata=dict(metadata) if isinstance(metadata, dict) else {},
        raw=data,
    )


def load_manifest_text(text: str) -> Manifest:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ManifestError(f"manifest is not valid JSON: {err}") from err
    return load_manifest(data)


def load_manifest_file(path: str) -> Manifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ManifestError(f"cannot read manifest: {err}") from err
    return load_manifest_text(text)
