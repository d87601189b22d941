"""
Landmark files and run reports.

Landmark file grammar (comma separated, one landmark per line)::

    specimen,landmark,x1,x2,...,xK
    A01,1,0.12,3.4
    A01,2,1.50,2.9
    ...

``specimen`` is any string without commas, ``landmark`` a 1-based integer.
Every specimen must list each index ``1..N`` exactly once (any line order),
with ``N`` the largest index in the file;
``K`` is fixed by the header.  Specimens are returned in order of first
appearance.

Reports are written as a text table plus a JSON sidecar whose top-level keys
are ``tool_version``, ``command``, ``seed``, ``series_control``, ``fits``,
``delta_bic``, ``grades``, ``best``, ``lrt`` and ``notes``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .geometry import LandmarkMatrix

__all__ = ["DataError", "ingest", "write_landmarks", "RunReport"]


class DataError(ValueError):
    """Malformed or incompatible landmark data."""


def ingest(path, select_landmarks: Optional[Sequence[int]] = None) -> list:
    """Read a landmark file into :class:`LandmarkMatrix` objects.

    ``select_landmarks`` keeps the listed 1-based indices, renumbered
    ``1..len(select)`` in increasing original index.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        K = len(header) - 2
        expected = ["specimen", "landmark"] + [f"x{j}" for j in range(1, K + 1)]
        if K < 1 or header != expected:
            raise DataError(f"{path}: header must be 'specimen,landmark,x1..xK', got {','.join(header)}")
        rows: dict = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != K + 2:
                raise DataError(f"{path}:{lineno}: expected {K + 2} fields, got {len(rec)} (ragged K)")
            spec_id = rec[0].strip()
            try:
                idx = int(rec[1])
                coords = [float(v) for v in rec[2:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if idx < 1:
                raise DataError(f"{path}:{lineno}: landmark indices are 1-based")
            table = rows.setdefault(spec_id, {})
            if idx in table:
                raise DataError(f"{path}:{lineno}: specimen {spec_id} repeats landmark {idx}")
            table[idx] = coords
    if not rows:
        raise DataError(f"{path}: no specimens")
    # a specimen that stops short of the file-wide largest index is missing landmarks
    N = max(max(table) for table in rows.values())
    out = []
    for spec_id, table in rows.items():
        missing = sorted(set(range(1, N + 1)) - set(table))
        if missing:
            raise DataError(f"specimen {spec_id}: missing landmark(s) {missing}")
        keep = sorted(set(select_landmarks)) if select_landmarks is not None else list(range(1, N + 1))
        absent = [k for k in keep if k not in table]
        if absent:
            raise DataError(f"specimen {spec_id}: selected landmark(s) {absent} not present")
        values = np.array([table[k] for k in keep])
        if len(keep) < 3:
            raise DataError(f"specimen {spec_id}: at least 3 landmarks are needed, selected {len(keep)}")
        if K < len(keep) - 1:
            raise DataError(
                f"specimen {spec_id}: N={len(keep)} landmarks in K={K} dimensions violates K >= N - 1, "
                "required for the polar decomposition; select at most K + 1 landmarks"
            )
        out.append(LandmarkMatrix(values, specimen=spec_id))
    return out


def write_landmarks(path, matrices: Sequence, ids: Optional[Sequence[str]] = None) -> None:
    """Write configurations in the landmark file grammar (full float precision)."""
    mats = [np.asarray(m, dtype=float) for m in matrices]
    if ids is None:
        ids = [getattr(m, "specimen", None) or str(i + 1) for i, m in enumerate(matrices)]
    K = mats[0].shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["specimen", "landmark"] + [f"x{j}" for j in range(1, K + 1)])
        for sid, X in zip(ids, mats):
            for i, row in enumerate(X, start=1):
                w.writerow([sid, i] + [repr(float(v)) for v in row])


@dataclass
class RunReport:
    """Results of a CLI workflow; plain data so it serializes losslessly."""

    command: str
    seed: int
    series_control: dict
    fits: list = field(default_factory=list)
    delta_bic: dict = field(default_factory=dict)
    grades: dict = field(default_factory=dict)
    best: dict = field(default_factory=dict)
    lrt: Optional[dict] = None
    notes: list = field(default_factory=list)
    tool_version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def to_text(self) -> str:
        lines = [f"polarshape {self.tool_version}  command={self.command}  seed={self.seed}",
                 "series control: " + ", ".join(f"{k}={v}" for k, v in sorted(self.series_control.items())), ""]
        if self.fits:
            lines.append(f"{'group':<12}{'model':<10}{'n':>5}{'loglik':>14}{'BIC*':>14}{'sigma2':>12}  mu")
            for row in self.fits:
                if "error" in row:
                    lines.append(f"{row['group']:<12}{row['model']:<10}  FAILED: {row['error']}")
                    continue
                f = row["fit"]
                mu = "; ".join(", ".join(f"{v:.4f}" for v in r) for r in f["mu_hat"])
                flag = " *" if self.best.get(row["group"]) == row["model"] else ""
                lines.append(f"{row['group']:<12}{row['model']:<10}{f['n']:>5}{f['loglik']:>14.4f}"
                             f"{f['bic_star']:>14.4f}{f['sigma2_hat']:>12.4f}  [{mu}]{flag}")
            lines.append("")
        for group, grades in self.grades.items():
            best = self.best.get(group)
            lines.append(f"group {group}: best model {best}")
            for model, grade in grades.items():
                if model != best:
                    lines.append(f"  {model:<10} dBIC*={self.delta_bic[group][best][model]:10.4f}  evidence for {best}: {grade}")
        if self.lrt:
            L = self.lrt
            lines.append("")
            lines.append(f"LRT H0: mu1 = mu2 ({L['models'][0]} vs {L['models'][1]}, H0 sigma^2 {L['h0_sigma']})")
            lines.append(f"  -2 log Lambda = {L['stat']:.6f}  df = {L['df']}  p = {L['p_value']:.6g}")
            lines.append(f"  identifiable df = {L['effective_df']}  p = {L['p_value_effective']:.6g}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines).rstrip() + "\n"
