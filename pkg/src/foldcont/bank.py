"""Deduplicated solution records with CSV persistence.

Bank CSV format: header ``index,morse,residual,signature,u_1..u_n``;
floats are written with 17 significant digits so a write/read/write
round trip is bit-exact.  The signature column holds a +/- character
per coordinate, or is empty for smooth problems.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DEDUP_TOL = 1e-6
RESIDUAL_LIMIT = 1e-8


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class SolutionRecord:
    u: np.ndarray
    residual: float
    morse_index: int
    signature: tuple[int, ...] | None = None
    provenance: str = "diagram"   # oracle | diagram | sampling

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.residual < 0.0:
            raise ValueError("residual must be nonnegative")
        if self.signature is not None:
            bad = [
                i for i, (s, x) in enumerate(zip(self.signature, self.u))
                if abs(x) > 1e-10 and (1 if x > 0 else -1) != s
            ]
            if bad:
                raise ValueError(f"signature disagrees with u at coordinates {bad}")


@dataclass
class SolutionBank:
    records: list[SolutionRecord] = field(default_factory=list)
    dedup_tol: float = DEFAULT_DEDUP_TOL
    degenerate_signatures: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def contains(self, u: np.ndarray) -> bool:
        u = np.asarray(u, dtype=float)
        return any(np.abs(r.u - u).max() <= self.dedup_tol for r in self.records)

    def add(self, record: SolutionRecord) -> bool:
        """Insert unless a record within dedup_tol (max norm) already exists."""
        if record.residual >= RESIDUAL_LIMIT:
            raise ValueError(
                f"residual {record.residual:.3e} exceeds bank limit {RESIDUAL_LIMIT:.0e}"
            )
        if self.contains(record.u):
            return False
        self.records.append(record)
        return True

    def match_report(self, other: "SolutionBank", tol: float = 1e-6):
        """(matched, missed, spurious) of self measured against a reference bank."""
        matched = sum(
            1 for ref in other.records
            if any(np.abs(ref.u - r.u).max() <= tol for r in self.records)
        )
        missed = len(other.records) - matched
        spurious = sum(
            1 for r in self.records
            if not any(np.abs(ref.u - r.u).max() <= tol for ref in other.records)
        )
        return matched, missed, spurious

    def morse_histogram(self, k_max: int) -> list[int]:
        hist = [0] * (k_max + 1)
        for r in self.records:
            if 0 <= r.morse_index <= k_max:
                hist[r.morse_index] += 1
        return hist

    def sorted_records(self) -> list[SolutionRecord]:
        return sorted(self.records, key=lambda r: tuple(r.u))


def write_bank_csv(bank: SolutionBank, path) -> None:
    records = bank.sorted_records()
    n = records[0].u.shape[0] if records else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["index", "morse", "residual", "signature"] + [f"u_{i+1}" for i in range(n)]
        )
        for i, rec in enumerate(records):
            sig = (
                "".join("+" if s > 0 else "-" for s in rec.signature)
                if rec.signature is not None
                else ""
            )
            writer.writerow(
                [i, rec.morse_index, _fmt(rec.residual), sig] + [_fmt(x) for x in rec.u]
            )


def read_bank_csv(path) -> SolutionBank:
    bank = SolutionBank()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = len(header) - 4
        for row in reader:
            sig = tuple(1 if ch == "+" else -1 for ch in row[3]) if row[3] else None
            rec = SolutionRecord(
                u=np.array([float(x) for x in row[4 : 4 + n]]),
                residual=float(row[2]),
                morse_index=int(row[1]),
                signature=sig,
            )
            bank.records.append(rec)
    return bank
