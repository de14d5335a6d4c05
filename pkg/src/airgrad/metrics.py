"""Run records and deterministic CSV/JSONL emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["RunRecord", "emit_metrics", "read_jsonl"]

# Emitted column order; JSONL records carry the same keys.
_FIELDS = ("round", "loss", "eval", "power", "wall_ms")


@dataclass
class RunRecord:
    """Per-round metrics of one experiment.

    ``wall_ms`` is 0.0 unless timing was explicitly requested, keeping
    metrics files byte-identical across reruns of the same seeded config.
    """

    round: int
    loss: float
    eval: float
    power: float
    wall_ms: float = 0.0
    per_layer_power: dict[str, float] = field(default_factory=dict)
    values_sent: int = 0

    def emitted(self) -> dict:
        return {
            "round": self.round,
            "loss": self.loss,
            "eval": self.eval,
            "power": self.power,
            "wall_ms": self.wall_ms,
        }


def emit_metrics(records, path, fmt: str = "csv") -> None:
    """Write records to ``path`` as CSV or JSONL with a fixed field order.

    Floats are rendered with repr, so equal records always produce
    byte-identical files and a JSONL round trip recovers them exactly.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown metrics format {fmt!r}")
    lines = []
    if fmt == "csv":
        lines.append(",".join(_FIELDS))
        for rec in records:
            row = rec.emitted()
            lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in _FIELDS))
    else:
        for rec in records:
            row = rec.emitted()
            lines.append(json.dumps({k: row[k] for k in _FIELDS}))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")


def read_jsonl(path) -> list[RunRecord]:
    """Parse a JSONL metrics file back into records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(
                RunRecord(
                    round=int(row["round"]),
                    loss=float(row["loss"]),
                    eval=float(row["eval"]),
                    power=float(row["power"]),
                    wall_ms=float(row["wall_ms"]),
                )
            )
    return records
