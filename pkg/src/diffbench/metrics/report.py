"""MetricReport records and their line-oriented text serialization.

One record per line, tab-separated ``key=value`` fields::

    metric=fd	value=2.0	extractor_id=teacher	reference_tag=val-out	candidate_tag=synthetic	seed=0	extras.cov_ddof=1.0

Floats are written with ``repr`` so a parse/format cycle is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DataError, UsageError

METRIC_NAMES = ("fd", "fld", "precision", "recall", "cosine_sim")


@dataclass(frozen=True)
class MetricReport:
    metric_name: str
    value: float
    extractor_id: str = ""
    reference_tag: str = ""
    candidate_tag: str = ""
    seed: int | None = None
    extras: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_name not in METRIC_NAMES:
            raise UsageError(f"unknown metric {self.metric_name!r}")
        v = self.value
        if self.metric_name in ("precision", "recall") and not 0.0 <= v <= 1.0:
            raise DataError(f"{self.metric_name} out of [0, 1]: {v}")
        if self.metric_name == "cosine_sim" and not -1.0 <= v <= 1.0:
            raise DataError(f"cosine similarity out of [-1, 1]: {v}")
        if self.metric_name == "fd" and not v >= 0.0:
            raise DataError(f"negative FD: {v}")

    def to_line(self) -> str:
        parts = [
            f"metric={self.metric_name}",
            f"value={float(self.value)!r}",
            f"extractor_id={self.extractor_id}",
            f"reference_tag={self.reference_tag}",
            f"candidate_tag={self.candidate_tag}",
            f"seed={'none' if self.seed is None else self.seed}",
        ]
        parts += [f"extras.{k}={float(v)!r}" for k, v in sorted(self.extras.items())]
        for p in parts:
            if "\t" in p or "\n" in p:
                raise UsageError(f"report field contains a tab or newline: {p!r}")
        return "\t".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "MetricReport":
        fields = {}
        extras = {}
        for part in line.rstrip("\n").split("\t"):
            key, sep, value = part.partition("=")
            if not sep:
                raise DataError(f"malformed report field {part!r}")
            if key.startswith("extras."):
                extras[key[len("extras."):]] = float(value)
            else:
                fields[key] = value
        try:
            seed = None if fields["seed"] == "none" else int(fields["seed"])
            return cls(
                fields["metric"],
                float(fields["value"]),
                fields["extractor_id"],
                fields["reference_tag"],
                fields["candidate_tag"],
                seed,
                extras,
            )
        except KeyError as exc:
            raise DataError(f"report line missing field {exc}") from exc


def format_reports(reports) -> str:
    return "".join(r.to_line() + "\n" for r in reports)


def parse_reports(text: str) -> list[MetricReport]:
    return [MetricReport.from_line(line) for line in text.splitlines() if line.strip()]
