import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class IterRecord(NamedTuple):
    t: int
    objective: float
    gamma: float
    error: float
    seconds: float


@dataclass
class IterateTrace:
    """Per-iteration log of an iterative solve.

    ``records[t]`` describes iterate ``x^t``: its objective, its
    stationarity error and the stepsize used to leave it (NaN on the
    final record). ``columns`` holds optional extra per-record series
    such as a sum rate reported in the maximization orientation.
    """

    records: list = field(default_factory=list)
    reason: str = ""
    flags: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)

    def append(self, t, objective, gamma, error, seconds):
        self.records.append(IterRecord(t, float(objective), float(gamma), float(error), float(seconds)))

    def flag(self, t, message):
        self.flags.append((t, message))

    def has_flag(self, message):
        return any(m == message for _, m in self.flags)

    @property
    def converged(self):
        return self.reason == "converged"

    @property
    def iterations(self):
        """Number of updates performed."""
        return max(len(self.records) - 1, 0)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def errors(self):
        return np.array([r.error for r in self.records])

    @property
    def gammas(self):
        return np.array([r.gamma for r in self.records])

    @property
    def final(self):
        return self.records[-1]

    def first_below(self, tol):
        """Index of the first record with error ``<= tol`` (None if never)."""
        for r in self.records:
            if r.error <= tol:
                return r.t
        return None

    def to_csv(self, path=None):
        names = list(self.columns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "objective", "gamma", "error", "seconds"] + names)
        for i, r in enumerate(self.records):
            w.writerow([r.t, repr(r.objective), repr(r.gamma), repr(r.error), repr(r.seconds)]
                       + [repr(float(self.columns[n][i])) for n in names])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        trace = cls()
        extra = header[5:]
        for n in extra:
            trace.columns[n] = []
        for row in body:
            trace.append(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            for n, v in zip(extra, row[5:]):
                trace.columns[n].append(float(v))
        return trace
