"""Modulation-and-coding-scheme (MCS) table: the discrete rate alphabet.

Each entry pairs a CQI index with a spectral-efficiency rate (bps/Hz) and the
linear SINR threshold that must be met to sustain that rate.  The built-in
table covers CQI 1..15 with target SINRs calibrated for 10% BLER.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence


@dataclass(frozen=True)
class McsEntry:
    cqi: int
    rate: float          # spectral efficiency, bps/Hz
    target_sinr: float   # linear (not dB)

    def __post_init__(self):
        if self.rate <= 0.0 or self.target_sinr <= 0.0:
            raise ValueError("MCS rate and target SINR must be positive")


# (rate bps/Hz, linear target SINR) for CQI 1..15.
_DEFAULT_ROWS = [
    (0.1523, 0.1128),
    (0.2344, 0.2159),
    (0.3770, 0.3892),
    (0.6016, 0.6610),
    (0.8770, 1.0962),
    (1.1758, 1.7474),
    (1.4766, 2.8113),
    (1.9141, 4.3321),
    (2.4063, 7.0081),
    (2.7305, 10.6316),
    (3.3223, 16.6648),
    (3.9023, 25.8345),
    (4.5234, 38.4503),
    (5.1152, 60.0620),
    (5.5547, 95.6974),
]


@dataclass(frozen=True)
class McsTable:
    """Ordered list of MCS entries, ascending in cqi, rate and target SINR."""

    entries: tuple[McsEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("MCS table must contain at least one entry")
        for k, e in enumerate(self.entries):
            if e.cqi != k + 1:
                raise ValueError("CQI indices must be contiguous from 1")
        for a, b in zip(self.entries, self.entries[1:]):
            if not (b.rate > a.rate and b.target_sinr > a.target_sinr):
                raise ValueError("rates and target SINRs must be strictly increasing")

    @property
    def J(self) -> int:
        return len(self.entries)

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(e.rate for e in self.entries)

    @property
    def sinrs(self) -> tuple[float, ...]:
        return tuple(e.target_sinr for e in self.entries)

    @property
    def top_rate(self) -> float:
        return self.entries[-1].rate

    def lookup(self, cqi: int) -> McsEntry:
        """Entry with the given CQI; raises IndexError when out of range."""
        if not 1 <= cqi <= self.J:
            raise IndexError(f"cqi {cqi} outside 1..{self.J}")
        return self.entries[cqi - 1]

    def best_for_sinr(self, sinr: float) -> Optional[McsEntry]:
        """Highest-CQI entry whose target SINR is <= the given SINR.

        The boundary is inclusive: a user exactly at the threshold supports
        the rate.  Returns None when even CQI 1 is unsupported.
        """
        if sinr < 0.0 or math.isnan(sinr):
            raise ValueError("sinr must be nonnegative")
        best = None
        for e in self.entries:
            if e.target_sinr <= sinr:
                best = e
            else:
                break
        return best

    def truncated(self, j: int) -> "McsTable":
        """Table restricted to the first j entries (small instances, tests)."""
        if not 1 <= j <= self.J:
            raise ValueError(f"j must be in 1..{self.J}")
        return McsTable(self.entries[:j])

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[float, float]]) -> "McsTable":
        return cls(tuple(McsEntry(k + 1, r, g) for k, (r, g) in enumerate(rows)))

    @classmethod
    def from_file(cls, path) -> "McsTable":
        """Load from delimited text with columns cqi,rate,target_sinr.

        Lines starting with '#' and a header line are skipped.  Comma or
        whitespace delimited.
        """
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p for p in line.replace(",", " ").split() if p]
                if parts[0].lower() == "cqi":
                    continue
                if len(parts) != 3:
                    raise ValueError(f"expected 3 columns, got {line!r}")
                cqi, rate, sinr = int(parts[0]), float(parts[1]), float(parts[2])
                rows.append((cqi, rate, sinr))
        rows.sort()
        return cls(tuple(McsEntry(c, r, g) for c, r, g in rows))

    def to_text(self) -> str:
        lines = ["cqi,rate,target_sinr"]
        for e in self.entries:
            lines.append(f"{e.cqi},{e.rate},{e.target_sinr}")
        return "\n".join(lines) + "\n"


def default_table() -> McsTable:
    """The built-in CQI 1..15 table."""
    return McsTable.from_rows(_DEFAULT_ROWS)


def mcs_lookup(table: McsTable, cqi: int) -> McsEntry:
    return table.lookup(cqi)


def mcs_best_for_sinr(table: McsTable, sinr: float) -> Optional[McsEntry]:
    return table.best_for_sinr(sinr)
