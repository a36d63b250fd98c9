"""CSV and manifest emission for scenario runs."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from mls_forge.domain import STRATEGIES, AgentKind, InteractionWeight
from mls_forge.errors import ConfigError
from mls_forge.io.config import config_hash, serialize_scenario
from mls_forge.orchestrator import GenerationRecord, Scenario
from mls_forge.price import GenerationSnapshot, PriceReport

ENGINE = "mls_forge"
ENGINE_VERSION = "0.1.0"

TIMESERIES_COLUMNS = (
    "generation", "cooperation_share", "mean_pi", "mean_pi_human", "mean_pi_ai",
    "mean_fitness", "mean_rule_fitness", "clip_events",
    *(f"count_{s.value}" for s in STRATEGIES),
)
RULES_COLUMNS = ("generation", "rule_id", "frequency", "V", "f_value", "pi_human", "pi_ai",
                 "cross_cov", "cost", "groups")
PRICE_COLUMNS = ("generation", *PriceReport.CSV_COLUMNS)
SNAPSHOT_COLUMNS = ("agent_id", "group_id", "kind", "fitness", "performance")
WEIGHT_COLUMNS = ("human_id", "ai_id", "weight")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def timeseries_rows(records: Sequence[GenerationRecord]):
    for rec in records:
        yield (rec.generation, rec.cooperation_share, rec.mean_pi, rec.mean_pi_human,
               rec.mean_pi_ai, rec.mean_fitness, rec.mean_rule_fitness, rec.clip_events,
               *(rec.census.get(s, 0) for s in STRATEGIES))


def rules_rows(records: Sequence[GenerationRecord]):
    for rec in records:
        for rep in rec.reports:
            yield (rec.generation, rep.rule_id, rec.frequencies[rep.rule_id], rep.value,
                   rep.f_value, rep.pi_human, rep.pi_ai, rep.cross_cov, rep.cost,
                   rec.group_rules.count(rep.rule_id))


def price_rows(records: Sequence[GenerationRecord]):
    for rec in records:
        if rec.price is not None:
            yield (rec.generation, *rec.price.row())


def write_snapshot(path: Path, snapshot: GenerationSnapshot) -> None:
    write_csv(path, SNAPSHOT_COLUMNS,
              ((a.agent_id, a.group_id, a.kind.value, a.fitness, a.performance)
               for a in snapshot.agents))


def write_weights(path: Path, weights: Sequence[InteractionWeight]) -> None:
    write_csv(path, WEIGHT_COLUMNS, ((w.human_id, w.ai_id, w.weight) for w in weights))


def read_snapshot(path: Path) -> GenerationSnapshot:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, SNAPSHOT_COLUMNS)
        try:
            rows = [(r["agent_id"], r["group_id"], AgentKind(r["kind"]), r["fitness"],
                     r["performance"]) for r in reader]
        except ValueError as exc:
            raise ConfigError(str(path), str(exc)) from None
    return GenerationSnapshot.from_rows(rows)


def read_weights(path: Path) -> list[InteractionWeight]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, WEIGHT_COLUMNS)
        return [InteractionWeight(int(r["human_id"]), int(r["ai_id"]), float(r["weight"]))
                for r in reader]


def _check_header(path, found, expected):
    missing = set(expected) - set(found or ())
    if missing:
        raise ConfigError(str(path), f"missing columns {sorted(missing)}")


def write_run(records: Sequence[GenerationRecord], scenario: Scenario, out: Path,
              snapshots: bool = False) -> Path:
    """Write timeseries.csv, rules.csv, price.csv and manifest.json into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "timeseries.csv", TIMESERIES_COLUMNS, timeseries_rows(records))
    write_csv(out / "rules.csv", RULES_COLUMNS, rules_rows(records))
    write_csv(out / "price.csv", PRICE_COLUMNS, price_rows(records))
    files = ["timeseries.csv", "rules.csv", "price.csv"]
    if snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        for rec in records:
            snap_name = f"snapshots/gen_{rec.generation:05d}.csv"
            weight_name = f"snapshots/weights_{rec.generation:05d}.csv"
            write_snapshot(out / snap_name, rec.snapshot)
            write_weights(out / weight_name, rec.weights)
            files += [snap_name, weight_name]
    manifest = {
        "engine": ENGINE,
        "engine_version": ENGINE_VERSION,
        "seed": scenario.seed,
        "config_hash": config_hash(scenario),
        "generations": len(records),
        "files": {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in files},
        "scenario": serialize_scenario(scenario),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out
