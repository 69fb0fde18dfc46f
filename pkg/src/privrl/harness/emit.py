"""CSV and JSON emission of regret records."""

import json
import os
import tempfile
from pathlib import Path

from ..errors import EmitError
from .runner import RegretRecord

CSV_HEADER = ("algorithm", "regime", "epsilon", "delta", "seed", "episode", "inst_regret",
              "cum_regret", "beta", "batch", "coverage")
CSV_NAME = "results.csv"
JSON_NAME = "results.json"


def fmt_float(x):
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def csv_text(records):
    lines = [",".join(CSV_HEADER)]
    for r in records:
        prefix = f"{r.algorithm},{r.regime},{fmt_float(r.epsilon)},{fmt_float(r.delta)},{r.seed}"
        for k, inst, cum, beta, batch, cov in zip(r.episode, r.inst_regret, r.cum_regret, r.beta,
                                                  r.batch, r.coverage):
            lines.append(f"{prefix},{k},{fmt_float(inst)},{fmt_float(cum)},{fmt_float(beta)},{batch},{cov}")
    return "\n".join(lines) + "\n"


def json_text(records, config=None, derived=None):
    doc = {"config": config, "derived": derived, "records": [r.to_dict() for r in records]}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def _atomic_write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc
    return path


def emit(records, out_dir, formats=("csv", "json"), config=None, derived=None):
    """Write ``records`` under ``out_dir``; returns the written paths.

    Raises EmitError before touching the filesystem when there is nothing
    to write.
    """
    records = list(records)
    if not records or all(len(r) == 0 for r in records):
        raise EmitError("no records to emit")
    out_dir = Path(out_dir)
    written = []
    for fmt in formats:
        if fmt == "csv":
            written.append(_atomic_write(out_dir / CSV_NAME, csv_text(records)))
        elif fmt == "json":
            written.append(_atomic_write(out_dir / JSON_NAME, json_text(records, config, derived)))
        else:
            raise EmitError(f"unknown format {fmt!r}")
    return written


def load_json(path):
    """Inverse of the JSON emitter: ``(records, config, derived)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [RegretRecord.from_dict(r) for r in doc["records"]], doc["config"], doc["derived"]
