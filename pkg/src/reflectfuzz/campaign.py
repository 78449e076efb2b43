"""Corpus-level driver: run the reflection loop per contract and report."""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .agents.heuristic import HeuristicBackend
from .agents.llm import DEFAULT_TIMEOUT, ChatClient, LlmBackend
from .contract_vm.interpreter import execute_sequence
from .contract_vm.model import ContractModel, ModelError, load_model_file
from .crp import CrpConfig, CrpOutcome, run_crp
from .oracles import SEVERITY, VERDICT_ORDER, VulnClass, run_all
from .txmodel import SeedPool, sequence_from_dict, sequence_to_dict

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
# keys whose values depend on the wall clock
TIMING_KEYS = frozenset({"wall_time", "detected_at", "elapsed", "seconds"})


class CorpusError(Exception):
    def __init__(self, message: str, errors: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.errors = errors or []


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "heuristic"  # heuristic | llm
    endpoint: str | None = None
    model: str = "llama3"
    temperature: float = 0.0
    timeout: float = DEFAULT_TIMEOUT

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "llm":
            d.update(endpoint=self.endpoint, model=self.model, temperature=self.temperature, timeout=self.timeout)
        return d


@dataclass(frozen=True)
class CampaignConfig:
    corpus: tuple[str, ...]
    crp: CrpConfig = CrpConfig()
    backend: BackendConfig = BackendConfig()
    total_budget: float = 1800.0
    output: str | None = None
    jobs: int = 1
    seed_pool: SeedPool = field(default_factory=SeedPool.default)

    def __post_init__(self):
        if not self.corpus:
            raise ValueError("corpus must not be empty")
        if self.total_budget <= 0 or self.crp.per_contract_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.backend.kind == "llm" and not self.backend.endpoint:
            raise ValueError("the llm backend needs an endpoint")

    def to_dict(self) -> dict:
        return {
            "corpus": list(self.corpus),
            "max_reflection_rounds": self.crp.max_reflection_rounds,
            "max_sequence_len": self.crp.max_sequence_len,
            "per_contract_budget": self.crp.per_contract_budget,
            "rng_seed": self.crp.rng_seed,
            "total_budget": self.total_budget,
            "jobs": self.jobs,
            "backend": self.backend.to_dict(),
            "seed_pool": self.seed_pool.to_dict(),
        }


@dataclass
class ContractResult:
    name: str
    path: str
    status: str
    found_classes: list[str] = field(default_factory=list)
    witness: dict | None = None
    rounds: int = 0
    wall_time: float = 0.0
    detected_at: float | None = None
    replay_confirmed: bool | None = None
    fallbacks: int = 0
    violations: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def primary(self) -> str | None:
        return self.found_classes[0] if self.found_classes else None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "path": self.path,
            "status": self.status,
            "found_class": self.primary,
            "found_classes": [{"class": c, "severity": SEVERITY[VulnClass(c)]} for c in self.found_classes],
            "location": self._location(),
            "witness": self.witness,
            "rounds": self.rounds,
            "wall_time": round(self.wall_time, 6),
            "detected_at": None if self.detected_at is None else round(self.detected_at, 6),
            "replay_confirmed": self.replay_confirmed,
            "fallbacks": self.fallbacks,
            "permission_violations": self.violations,
            "history": self.history,
        }

    def _location(self) -> list[str]:
        if not self.witness:
            return []
        return sorted({f"{self.name}.{tx['function']}" for tx in self.witness["txs"]})


def round_histogram(rounds) -> dict[int, int]:
    return dict(sorted(Counter(rounds).items()))


@dataclass
class VulnerabilityReport:
    config: dict
    contracts: list[ContractResult]
    errors: list[tuple[str, str]] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def found(self) -> list[ContractResult]:
        return [c for c in self.contracts if c.status == "vulnerability_found"]

    def class_counts(self) -> dict[str, int]:
        counts = {c.value: 0 for c in VERDICT_ORDER}
        for r in self.found:
            for c in r.found_classes:
                counts[c] += 1
        return counts

    def detection_series(self) -> list[dict]:
        """Cumulative detections against campaign seconds."""
        hits = sorted(self.found, key=lambda r: (r.detected_at, r.name))
        return [
            {"seconds": round(r.detected_at, 6), "cumulative": n, "contract": r.name, "class": r.primary}
            for n, r in enumerate(hits, 1)
        ]

    def round_histogram(self) -> dict[int, int]:
        return round_histogram(r.rounds for r in self.found)

    def to_dict(self) -> dict:
        statuses = Counter(c.status for c in self.contracts)
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "contracts": [c.to_dict() for c in self.contracts],
            "errors": [{"path": p, "error": e} for p, e in self.errors],
            "totals": {
                "contracts": len(self.contracts),
                "attempted": sum(1 for c in self.contracts if c.status != "skipped"),
                "statuses": dict(sorted(statuses.items())),
                "per_class": self.class_counts(),
                "round_histogram": {str(k): v for k, v in self.round_histogram().items()},
                "detection_series": self.detection_series(),
                "elapsed": round(self.elapsed, 6),
            },
        }


def expand_corpus(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob("*.json")))
        else:
            out.append(p)
    return out


def load_corpus(paths) -> tuple[list[tuple[str, ContractModel]], list[tuple[str, str]]]:
    files = expand_corpus(paths)
    if not files:
        raise CorpusError("corpus is empty after expansion")
    models, errors = [], []
    for f in files:
        try:
            models.append((str(f), load_model_file(f)))
        except (OSError, ValueError, ModelError) as e:
            errors.append((str(f), str(e)))
            log.error("cannot load %s: %s", f, e)
    return models, errors


def make_backend(model: ContractModel, cfg: CampaignConfig):
    heuristic = HeuristicBackend(model, cfg.crp.rng_seed, cfg.crp.max_sequence_len)
    if cfg.backend.kind == "heuristic":
        return heuristic
    client = ChatClient(cfg.backend.endpoint, cfg.backend.model, cfg.backend.timeout, cfg.backend.temperature)
    return LlmBackend(client, heuristic, max_len=cfg.crp.max_sequence_len)


def confirm(model: ContractModel, pool: SeedPool, witness, found_class: str) -> bool:
    trace = execute_sequence(model, pool, witness)
    return found_class in {c.value for c in run_all(model, trace, pool).found}


def _result(name: str, path: str, outcome: CrpOutcome, started: float, model: ContractModel, pool: SeedPool,
            backend) -> ContractResult:
    found = outcome.found
    classes = [c.value for c in outcome.report.found] if found else []
    return ContractResult(
        name=name,
        path=path,
        status=outcome.status,
        found_classes=classes,
        witness=sequence_to_dict(outcome.witness) if found else None,
        rounds=outcome.rounds_used,
        wall_time=outcome.wall_time,
        detected_at=started + outcome.wall_time if found else None,
        replay_confirmed=confirm(model, pool, outcome.witness, classes[0]) if found else None,
        fallbacks=len(getattr(backend, "fallbacks", ())),
        violations=outcome.violations,
        history=[r.to_dict() for r in outcome.history],
    )


def run_campaign(cfg: CampaignConfig, clock: Callable[[], float] = time.perf_counter) -> VulnerabilityReport:
    models, errors = load_corpus(cfg.corpus)
    if not models:
        raise CorpusError("no contract in the corpus could be loaded", errors)
    start = clock()
    ctx_pool = cfg.seed_pool

    def run_one(item) -> ContractResult:
        path, model = item
        offset = clock() - start
        if offset >= cfg.total_budget:
            return ContractResult(model.name, path, "skipped")
        backend = make_backend(model, cfg)
        outcome = run_crp(model, backend, cfg.crp, model.context(ctx_pool))
        log.info("%s: %s", model.name, outcome.status)
        return _result(model.name, path, outcome, offset, model, ctx_pool, backend)

    if cfg.jobs == 1:
        results = [run_one(item) for item in models]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_one, models))
    return VulnerabilityReport(cfg.to_dict(), results, errors, clock() - start)


def strip_timing(doc: Any) -> Any:
    """Copy of a report document without wall-clock dependent values."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k not in TIMING_KEYS}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def report_text(report: VulnerabilityReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: VulnerabilityReport, out: str | Path, formats=("document", "table")) -> list[Path]:
    """Write ``<out>.json`` and/or ``<out>.csv`` plus the two series files."""
    out = Path(out)
    base = out.with_suffix("") if out.suffix in (".json", ".csv") else out
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "document" in formats:
        path = base.with_name(base.name + ".json")
        path.write_text(report_text(report))
        written.append(path)
    if "table" in formats:
        summary = base.with_name(base.name + ".csv")
        _write_csv(
            summary,
            ["contract", "status", "found_class", "classes", "severity", "rounds", "wall_time", "replay_confirmed"],
            [
                [c.name, c.status, c.primary or "", ";".join(c.found_classes),
                 SEVERITY[VulnClass(c.primary)] if c.primary else "", c.rounds, f"{c.wall_time:.6f}",
                 "" if c.replay_confirmed is None else str(c.replay_confirmed).lower()]
                for c in report.contracts
            ],
        )
        detections = base.with_name(base.name + ".detections.csv")
        _write_csv(detections, ["seconds", "cumulative", "contract", "class"],
                   [[f"{d['seconds']:.6f}", d["cumulative"], d["contract"], d["class"]] for d in report.detection_series()])
        rounds = base.with_name(base.name + ".rounds.csv")
        _write_csv(rounds, ["round", "detections"], sorted(report.round_histogram().items()))
        written += [summary, detections, rounds]
    return written


def load_report(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists() and p.suffix != ".json":
        p = p.with_name(p.name + ".json")
    doc = json.loads(p.read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {doc.get('schema_version')!r}")
    return doc


def replay(doc: dict, contract: str) -> tuple[bool, list[str], str | None]:
    """Re-run a reported witness; returns (confirmed, classes now found, reported class)."""
    entry = next((c for c in doc["contracts"] if c["name"] == contract), None)
    if entry is None:
        raise KeyError(f"contract {contract!r} not in report")
    if not entry.get("witness"):
        return False, [], None
    model = load_model_file(entry["path"])
    pool = SeedPool.from_dict(doc["config"]["seed_pool"])
    trace = execute_sequence(model, pool, sequence_from_dict(entry["witness"]))
    classes = [c.value for c in run_all(model, trace, pool).found]
    return entry["found_class"] in classes, classes, entry["found_class"]
