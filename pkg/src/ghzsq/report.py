"""Versioned reports: canonical JSON, flat CSV, schema validation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

SCHEMA_VERSION = "1.0"
COMMANDS = ("run", "detect", "sweep", "efficiency", "verify")


@dataclass
class Report:
    command: str
    config: dict
    results: dict
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "config": self.config,
            "results": self.results,
        }

    def to_json(self) -> str:
        # sorted keys and repr floats make equal reports byte-identical
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        validate(data)
        return cls(data["command"], data["config"], data["results"], data["schema_version"])

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        rows = csv_rows(self)
        buf = io.StringIO()
        if rows:
            fields = list(rows[0])
            writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}")


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("ghzsq").joinpath("report-schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(data: dict):
    """Raise jsonschema.ValidationError if ``data`` is not a valid report."""
    import jsonschema

    jsonschema.validate(data, schema())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    return v


def csv_rows(report: Report) -> list[dict]:
    """One flat row per plotted item: rounds, cases, sweep points or criteria."""
    res = report.results
    if report.command == "run":
        rows = []
        for r in res["rounds"]:
            z = r["alice_z"]
            rows.append({
                "index": r["index"],
                "bob_mode": r["bob_mode"],
                "charlie_mode": r["charlie_mode"],
                "case": r["case"],
                "bob_z": _cell(r["bob_z"]),
                "charlie_z": _cell(r["charlie_z"]),
                "alice_z_a": _cell(z.get("a")),
                "alice_z_b": _cell(z.get("b")),
                "alice_z_c": _cell(z.get("c")),
                "alice_bell": _cell(r["alice_bell"]),
                "alice_ghz": _cell(r["alice_ghz"]),
                "checked": _cell(r["checked"]),
                "consistent": _cell(r["consistent"]),
            })
        return rows
    if report.command == "detect":
        return [
            {
                "case": case,
                "conditional": p,
                "check_probability": res["check_probability"][case],
                "contribution": res["contribution"][case],
            }
            for case, p in sorted(res["per_case_exact"].items())
        ]
    if report.command == "sweep":
        return [{k: _cell(v) for k, v in row.items()} for row in res["points"]]
    if report.command == "efficiency":
        return [{k: res[k] for k in ("n", "tau", "lk", "lq", "lc", "lq_prepared", "lq_resent", "ce", "ce_rational")}]
    if report.command == "verify":
        return [
            {"id": c["id"], "name": c["name"], "passed": int(c["passed"]), "seconds": c["seconds"], "detail": c["detail"]}
            for c in res["criteria"]
        ]
    raise ValueError(f"no CSV layout for command {report.command!r}")
