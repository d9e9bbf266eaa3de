"""Structured experiment reports with a published schema.

Reports serialize deterministically: identical (config, seed) produce
byte-identical JSON/CSV artifacts.  Wall-clock time is therefore *not*
part of the serialized payload; runners print it to stderr instead.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import jsonschema

SCHEMA_VERSION = "1"

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "subcommand", "seed", "config", "metrics"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "subcommand": {"type": "string"},
        "seed": {"type": "integer"},
        "config": {"type": "object"},
        "metrics": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["value", "trials"],
                "properties": {
                    "value": {"type": ["number", "null"]},
                    "half_width": {"type": ["number", "null"]},
                    "trials": {"type": "integer"},
                },
            },
        },
        "query_counts": {"type": "object"},
        "record": {"type": "object"},
    },
}

CSV_COLUMNS = [
    "schema_version",
    "subcommand",
    "seed",
    "metric",
    "value",
    "half_width",
    "trials",
    "config_json",
]


@dataclass
class ExperimentReport:
    subcommand: str
    seed: int
    config: dict
    metrics: dict = field(default_factory=dict)
    query_counts: dict = field(default_factory=dict)
    record: dict = field(default_factory=dict)

    def add_metric(self, name: str, value, trials: int, half_width=None):
        self.metrics[name] = {
            "value": None if value is None else float(value),
            "half_width": None if half_width is None else float(half_width),
            "trials": int(trials),
        }

    def to_dict(self) -> dict:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "seed": int(self.seed),
            "config": self.config,
            "metrics": self.metrics,
            "query_counts": self.query_counts,
            "record": self.record,
        }
        validate_report(payload)
        return payload

    def to_json_bytes(self) -> bytes:
        return (
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        ).encode()

    def to_csv_bytes(self) -> bytes:
        payload = self.to_dict()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        config_json = json.dumps(payload["config"], sort_keys=True)
        for name in sorted(payload["metrics"]):
            m = payload["metrics"][name]
            writer.writerow(
                [
                    payload["schema_version"],
                    payload["subcommand"],
                    payload["seed"],
                    name,
                    _fmt(m["value"]),
                    _fmt(m["half_width"]),
                    m["trials"],
                    config_json,
                ]
            )
        return buf.getvalue().encode()


def _fmt(v):
    return "" if v is None else repr(v)


def validate_report(payload: dict) -> None:
    jsonschema.validate(payload, REPORT_SCHEMA)
