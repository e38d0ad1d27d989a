"""Serialization of race traces: NDJSON records, summary document, long CSV."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

from .race import CompareResult, RaceTrace


def fnum(x):
    """Round to 12 significant digits for stable text output."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    r = float(f"{x:.12g}")
    return 0.0 if r == 0 else r


def iteration_record(it, stage: str | None = None) -> dict:
    rec = {
        "split": it.split,
        "block_kind": it.block_kind,
        "survivors": list(it.survivors),
        "means": {k: fnum(v) for k, v in it.means.items()},
        "mse": fnum(it.mse),
        "q": fnum(it.q),
        "tukey_T": fnum(it.tukey_T),
        "eliminated": list(it.eliminated),
        "cum_fits": it.cum_fits,
        "cum_new_fits": it.cum_new_fits,
        "tested": list(it.tested),
        "n_blocks": it.n_blocks,
        "error_df": it.error_df,
        "leader": it.leader,
        "p0_statistic": fnum(it.p0_statistic),
        "split_seed": it.split_seeds[-1],
    }
    if stage is not None:
        rec = {"stage": stage, **rec}
    return rec


def trace_lines(traces) -> list[str]:
    """One JSON line per Tukey test, across one or more labelled traces."""
    lines = []
    for trace in traces:
        stage = trace.label or None
        for it in trace.iterations:
            lines.append(json.dumps(iteration_record(it, stage), separators=(",", ":")))
    return lines


def trace_summary(trace: RaceTrace) -> dict:
    last = trace.final
    out = {
        "winner": trace.winner,
        "leaders": list(trace.leaders),
        "survivors": list(trace.survivors),
        "stop_reason": trace.stop_reason,
        "splits_used": trace.splits_used,
        "survival_sequence": trace.survival_sequence,
        "fits": last.cum_fits if last else 0,
        "new_fits": last.cum_new_fits if last else 0,
        "metric": trace.metric,
        "orientation": trace.orientation,
        "alpha": trace.alpha,
        "p0": trace.p0,
    }
    if last is not None:
        out["means"] = {k: fnum(v) for k, v in last.means.items() if k in trace.survivors}
        out["tukey_T"] = fnum(last.tukey_T)
        out["intervals"] = {k: [fnum(lo), fnum(hi)] for k, (lo, hi) in trace.intervals().items()
                            if k in trace.survivors}
        out["families"] = {k: trace.families[k] for k in trace.survivors}
    return out


def summary_document(result) -> dict:
    if isinstance(result, CompareResult):
        return {
            "mode": "compare",
            "groups": {t.label: trace_summary(t) for t in result.group_traces},
            "final": trace_summary(result.final),
            "winner": result.final.winner,
            "fits": {"step1": result.step1_fits, "step2": result.step2_fits,
                     "total": result.total_fits},
        }
    doc = trace_summary(result)
    doc["mode"] = result.label or "race"
    return doc


def means_rows(traces) -> list[tuple]:
    rows = []
    for trace in traces:
        for ev in trace.evaluations:
            for mid, val in zip(ev.model_ids, ev.values):
                rows.append((trace.label or "race", ev.split, mid, fnum(val)))
    return rows


def means_csv(traces) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "split", "model_id", "value"])
    w.writerows(means_rows(traces))
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(result, out_dir) -> dict:
    """Write ``summary.json``, ``trace.ndjson`` and ``means_by_split.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = (list(result.group_traces) + [result.final]
              if isinstance(result, CompareResult) else [result])
    paths = {name: out_dir / name for name in ("summary.json", "trace.ndjson", "means_by_split.csv")}
    write_atomic(paths["trace.ndjson"], "".join(line + "\n" for line in trace_lines(traces)))
    write_atomic(paths["means_by_split.csv"], means_csv(traces))
    write_atomic(paths["summary.json"],
                 json.dumps(summary_document(result), indent=2, sort_keys=False) + "\n")
    return paths
