"""Run manifests: flat text files sufficient to replay a run deterministically."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .alloop import AnnotationRates, HistoryRow

HISTORY_CSV_HEADER = "iteration,seqs_used,tokens_used,concepts_used,sar,tar,car,precision,recall,f1"


def _fmt(value: float) -> str:
    return repr(float(value))


def history_row_csv(row: HistoryRow) -> str:
    return ",".join(
        [
            str(row.iteration),
            str(row.seqs_used),
            str(row.tokens_used),
            str(row.concepts_used),
            _fmt(row.sar),
            _fmt(row.tar),
            _fmt(row.car),
            _fmt(row.precision),
            _fmt(row.recall),
            _fmt(row.f1),
        ]
    )


def parse_history_row(text: str) -> HistoryRow:
    parts = text.split(",")
    if len(parts) != 10:
        raise ValueError(f"bad history row: {text!r}")
    return HistoryRow(
        iteration=int(parts[0]),
        seqs_used=int(parts[1]),
        tokens_used=int(parts[2]),
        concepts_used=int(parts[3]),
        sar=float(parts[4]),
        tar=float(parts[5]),
        car=float(parts[6]),
        precision=float(parts[7]),
        recall=float(parts[8]),
        f1=float(parts[9]),
    )


def write_history_csv(history: Sequence[HistoryRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(HISTORY_CSV_HEADER + "\n")
        for row in history:
            handle.write(history_row_csv(row) + "\n")


@dataclass
class RunManifest:
    kind: str                       # supervised | al | ttest
    config: dict = field(default_factory=dict)    # flat resolved config snapshot
    inputs: dict = field(default_factory=dict)    # logical name -> sha256
    artifacts: dict = field(default_factory=dict) # artifact name -> cache key
    metrics: dict = field(default_factory=dict)   # name -> float
    history: list = field(default_factory=list)
    rates: AnnotationRates | None = None
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def write(self, path: str) -> None:
        lines = [f"manifest.kind={self.kind}"]
        lines += [f"config.{k}={v}" for k, v in sorted(self.config.items())]
        lines += [f"input.{k}={v}" for k, v in sorted(self.inputs.items())]
        lines += [f"artifact.{k}={v}" for k, v in sorted(self.artifacts.items())]
        lines += [f"metric.{k}={_fmt(v)}" for k, v in sorted(self.metrics.items())]
        if self.rates is not None:
            lines.append(f"rates.sar={_fmt(self.rates.sar)}")
            lines.append(f"rates.tar={_fmt(self.rates.tar)}")
            lines.append(f"rates.car={_fmt(self.rates.car)}")
            lines.append(f"rates.reached={int(self.rates.reached)}")
            lines.append(f"rates.target_f1={_fmt(self.rates.target_f1)}")
        lines += [f"history.{i}={history_row_csv(row)}" for i, row in enumerate(self.history)]
        lines += [f"warning.{i}={w}" for i, w in enumerate(self.warnings)]
        lines += [f"timing.{k}={_fmt(v)}" for k, v in sorted(self.timings.items())]
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        manifest = cls(kind="")
        history: dict[int, HistoryRow] = {}
        warnings: dict[int, str] = {}
        rates: dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for raw in handle:
                line = raw.rstrip("\n")
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ValueError(f"{path}: bad manifest line {line!r}")
                if key == "manifest.kind":
                    manifest.kind = value
                elif key.startswith("config."):
                    manifest.config[key[len("config."):]] = value
                elif key.startswith("input."):
                    manifest.inputs[key[len("input."):]] = value
                elif key.startswith("artifact."):
                    manifest.artifacts[key[len("artifact."):]] = value
                elif key.startswith("metric."):
                    manifest.metrics[key[len("metric."):]] = float(value)
                elif key.startswith("rates."):
                    rates[key[len("rates."):]] = value
                elif key.startswith("history."):
                    history[int(key[len("history."):])] = parse_history_row(value)
                elif key.startswith("warning."):
                    warnings[int(key[len("warning."):])] = value
                elif key.startswith("timing."):
                    manifest.timings[key[len("timing."):]] = float(value)
                else:
                    raise ValueError(f"{path}: unknown manifest key {key!r}")
        manifest.history = [history[i] for i in sorted(history)]
        manifest.warnings = [warnings[i] for i in sorted(warnings)]
        if rates:
            manifest.rates = AnnotationRates(
                sar=float(rates["sar"]),
                tar=float(rates["tar"]),
                car=float(rates["car"]),
                reached=bool(int(rates["reached"])),
                target_f1=float(rates["target_f1"]),
            )
        if not manifest.kind:
            raise ValueError(f"{path}: manifest.kind missing")
        return manifest
