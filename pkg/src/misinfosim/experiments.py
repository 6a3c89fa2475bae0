"""Sweep designs, replicated execution, and result persistence.

Six named experiments are built in: five alpha-ratio sweeps (single-factor
bad-bot, info-correction and good-bot sweeps plus two full factorial grids)
and a flip-threshold sweep. Every (condition, replicate) pair gets its own
seed derived from the sweep's base seed, so results are reproducible and
independent of worker scheduling.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Optional, Sequence

from .engine import DefenderBasis, SimParams, run_params
from .errors import ParameterError, RecordParseError, SweepError

EXPERIMENT_IDS = ("E1", "E2", "E3", "E4", "E5", "ThresholdSweep")
_ID_ALIASES = {"1": "E1", "2": "E2", "3": "E3", "4": "E4", "5": "E5",
               "threshold": "ThresholdSweep", "t": "ThresholdSweep"}
DEFAULT_REPLICATIONS = 15
DEFAULT_BASE_SEED = 20240


def canonical_experiment_id(experiment_id: str) -> str:
    """Accept 'E1'..'E5', bare '1'..'5', or 'threshold' spellings."""
    eid = _ID_ALIASES.get(str(experiment_id).strip().lower(),
                          str(experiment_id).strip())
    eid = eid.upper() if eid.lower() in ("e1", "e2", "e3", "e4", "e5") else eid
    if eid not in EXPERIMENT_IDS:
        raise ParameterError(f"unknown experiment id {experiment_id!r}; "
                             f"expected one of {EXPERIMENT_IDS}")
    return eid

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """splitmix64 finalizer."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, condition_index: int, replicate_index: int) -> int:
    """Pure 64-bit seed for one (condition, replicate) cell of a sweep."""
    h = _mix64(base_seed + _GOLDEN)
    h = _mix64(h ^ (condition_index + _GOLDEN))
    h = _mix64(h ^ (replicate_index + _GOLDEN))
    return h


@dataclass(frozen=True)
class SweepSpec:
    """An ordered list of conditions plus replication/seeding policy."""

    experiment_id: str
    conditions: tuple
    replications: int
    base_seed: int
    note: str = ""

    def validate(self) -> None:
        if not self.conditions:
            raise ParameterError("sweep has no conditions")
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")

    @property
    def total_runs(self) -> int:
        return len(self.conditions) * self.replications


def _grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def build_experiment(experiment_id: str,
                     replications: int = DEFAULT_REPLICATIONS,
                     base_seed: int = DEFAULT_BASE_SEED,
                     overrides: Optional[dict] = None) -> SweepSpec:
    """Construct the named sweep.

    E1: alpha1 in {0.1..1.0} alone. E2: alpha1=0.2, alpha2 in {0.1..1.5}.
    E3: alpha1=0.2, alpha3 in {0.1..2.0}. E4: alpha1 x alpha2 over
    {0.1..1.0}^2. E5: alpha1 in {0.1..2.0} x alpha3 in {0.1..1.0}.
    ThresholdSweep: t in {10..100 step 10} at alpha1=0.2.

    Defender ratios in the built sweeps are proportions of the Human count.
    ``overrides`` patches every condition's SimParams (e.g. a smaller n_h
    for fast smoke runs).
    """
    experiment_id = canonical_experiment_id(experiment_id)
    base = SimParams(defender_basis=DefenderBasis.HUMANS)
    if overrides:
        base = replace(base, **overrides)
    note = ""
    if experiment_id == "E1":
        conds = [replace(base, alpha1=a) for a in _grid(0.1, 1.0, 0.1)]
    elif experiment_id == "E2":
        conds = [replace(base, alpha1=0.2, alpha2=a) for a in _grid(0.1, 1.5, 0.1)]
    elif experiment_id == "E3":
        conds = [replace(base, alpha1=0.2, alpha3=a) for a in _grid(0.1, 2.0, 0.1)]
    elif experiment_id == "E4":
        conds = [replace(base, alpha1=a1, alpha2=a2)
                 for a1 in _grid(0.1, 1.0, 0.1) for a2 in _grid(0.1, 1.0, 0.1)]
    elif experiment_id == "E5":
        conds = [replace(base, alpha1=a1, alpha3=a3)
                 for a1 in _grid(0.1, 2.0, 0.1) for a3 in _grid(0.1, 1.0, 0.1)]
        note = ("alpha1 spans [0.1, 2.0] (20 levels) x alpha3 [0.1, 1.0] "
                "(10 levels): 200 conditions, twice the 10x10 base design")
    elif experiment_id == "ThresholdSweep":
        conds = [replace(base, alpha1=0.2, threshold_t=t) for t in range(10, 101, 10)]
    else:
        raise ParameterError(f"unknown experiment id {experiment_id!r}")
    return SweepSpec(experiment_id=experiment_id, conditions=tuple(conds),
                     replications=replications, base_seed=base_seed, note=note)


@dataclass(frozen=True)
class RunRecord:
    """One replicate's parameters and outcomes (one CSV row)."""

    experiment_id: str
    condition_index: int
    replicate_index: int
    seed: int
    n_h: int
    alpha1: float
    alpha2: float
    alpha3: float
    defender_basis: str
    p_g: float
    p_c: float
    p_p: float
    threshold_t: int
    max_ticks: int
    net_k: int
    net_beta: float
    graph_kind: str
    relay_mode: str
    flip_rule: str
    exclude_sender: bool
    bad_majority_tick: Optional[int]
    all_bad_tick: Optional[int]
    ticks_run: int


def _record_from_outcome(experiment_id, cond_idx, rep_idx, params, outcome) -> RunRecord:
    return RunRecord(
        experiment_id=experiment_id,
        condition_index=cond_idx,
        replicate_index=rep_idx,
        seed=params.seed,
        n_h=params.n_h,
        alpha1=params.alpha1,
        alpha2=params.alpha2,
        alpha3=params.alpha3,
        defender_basis=DefenderBasis(params.defender_basis).value,
        p_g=params.p_g,
        p_c=params.p_c,
        p_p=params.p_p,
        threshold_t=params.threshold_t,
        max_ticks=params.max_ticks,
        net_k=params.net_k,
        net_beta=params.net_beta,
        graph_kind=params.graph_kind,
        relay_mode=params.relay_mode,
        flip_rule=params.flip_rule,
        exclude_sender=params.exclude_sender,
        bad_majority_tick=outcome.bad_majority_tick,
        all_bad_tick=outcome.all_bad_tick,
        ticks_run=outcome.ticks_run,
    )


def _run_task(task):
    experiment_id, cond_idx, rep_idx, params = task
    outcome = run_params(params)
    return _record_from_outcome(experiment_id, cond_idx, rep_idx, params, outcome)


def _tasks(spec: SweepSpec):
    for ci, cond in enumerate(spec.conditions):
        for ri in range(spec.replications):
            seed = derive_seed(spec.base_seed, ci, ri)
            yield (spec.experiment_id, ci, ri, replace(cond, seed=seed))


def run_sweep(spec: SweepSpec, parallelism: int = 1) -> list[RunRecord]:
    """Execute every (condition, replicate) cell exactly once.

    Output is sorted by (condition_index, replicate_index) whatever the
    execution order, so the result is byte-for-byte independent of
    ``parallelism``. A failing run aborts the sweep and names its cell.
    """
    spec.validate()
    tasks = list(_tasks(spec))
    records: list[RunRecord] = []
    if parallelism <= 1:
        for task in tasks:
            try:
                records.append(_run_task(task))
            except Exception as exc:
                raise SweepError(
                    f"{spec.experiment_id} condition {task[1]} replicate {task[2]}: {exc}"
                ) from exc
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(_run_task, t): t for t in tasks}
            try:
                for fut in concurrent.futures.as_completed(futures):
                    task = futures[fut]
                    try:
                        records.append(fut.result())
                    except Exception as exc:
                        raise SweepError(
                            f"{spec.experiment_id} condition {task[1]} "
                            f"replicate {task[2]}: {exc}") from exc
            except BaseException:
                for fut in futures:
                    fut.cancel()
                raise
    records.sort(key=lambda r: (r.condition_index, r.replicate_index))
    return records


@dataclass(frozen=True)
class ConditionSummary:
    """Per-condition aggregate over replicates.

    Means/sds cover only replicates where the event occurred; the
    dnc_fraction fields give the share where it did not ("did not
    converge"). sd is the sample (n-1) standard deviation, 0.0 for a single
    converged replicate.
    """

    experiment_id: str
    condition_index: int
    alpha1: float
    alpha2: float
    alpha3: float
    threshold_t: int
    n_replicates: int
    majority_mean: Optional[float]
    majority_sd: Optional[float]
    majority_dnc_fraction: float
    all_bad_mean: Optional[float]
    all_bad_sd: Optional[float]
    all_bad_dnc_fraction: float


def _mean_sd(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    m = sum(values) / len(values)
    if len(values) == 1:
        return m, 0.0
    var = sum((v - m) ** 2 for v in values) / (len(values) - 1)
    return m, math.sqrt(var)


def summarize(records: Sequence[RunRecord]) -> list[ConditionSummary]:
    """Fold records into per-condition summaries (input order irrelevant)."""
    if not records:
        raise ParameterError("no records to summarize")
    by_cond: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        by_cond.setdefault((rec.experiment_id, rec.condition_index), []).append(rec)
    out = []
    for (exp, ci) in sorted(by_cond):
        group = by_cond[(exp, ci)]
        first = group[0]
        maj = [r.bad_majority_tick for r in group if r.bad_majority_tick is not None]
        allb = [r.all_bad_tick for r in group if r.all_bad_tick is not None]
        mm, ms = _mean_sd(maj)
        am, asd = _mean_sd(allb)
        out.append(ConditionSummary(
            experiment_id=exp,
            condition_index=ci,
            alpha1=first.alpha1, alpha2=first.alpha2, alpha3=first.alpha3,
            threshold_t=first.threshold_t,
            n_replicates=len(group),
            majority_mean=mm, majority_sd=ms,
            majority_dnc_fraction=1.0 - len(maj) / len(group),
            all_bad_mean=am, all_bad_sd=asd,
            all_bad_dnc_fraction=1.0 - len(allb) / len(group),
        ))
    return out


# ---------------------------------------------------------------------------
# CSV persistence

def format_float(x: float) -> str:
    """Fixed 6-significant-digit float formatting used in all artifacts."""
    return f"{x:.6g}"


_RECORD_FIELDS = [f.name for f in fields(RunRecord)]
_FLOAT_FIELDS = {"alpha1", "alpha2", "alpha3", "p_g", "p_c", "p_p", "net_beta"}
_INT_FIELDS = {"condition_index", "replicate_index", "seed", "n_h", "threshold_t",
               "max_ticks", "net_k", "ticks_run"}
_OPT_INT_FIELDS = {"bad_majority_tick", "all_bad_tick"}
_BOOL_FIELDS = {"exclude_sender"}


def _record_cell(rec: RunRecord, name: str) -> str:
    v = getattr(rec, name)
    if name in _OPT_INT_FIELDS:
        return "" if v is None else str(v)
    if name in _FLOAT_FIELDS:
        return format_float(v)
    if name in _BOOL_FIELDS:
        return "true" if v else "false"
    return str(v)


def write_records_csv(records: Iterable[RunRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RECORD_FIELDS)
        for rec in records:
            writer.writerow([_record_cell(rec, n) for n in _RECORD_FIELDS])


def _parse_cell(name: str, text: str):
    if name in _OPT_INT_FIELDS:
        return None if text == "" else int(text)
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    if name in _BOOL_FIELDS:
        if text not in ("true", "false"):
            raise ValueError(f"bad boolean {text!r}")
        return text == "true"
    return text


def read_records_csv(path) -> list[RunRecord]:
    """Inverse of write_records_csv; malformed rows name their line number."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordParseError(1, "empty file") from None
        if header != _RECORD_FIELDS:
            raise RecordParseError(1, f"unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_RECORD_FIELDS):
                raise RecordParseError(lineno, f"expected {len(_RECORD_FIELDS)} cells, got {len(row)}")
            kwargs = {}
            for name, cell in zip(_RECORD_FIELDS, row):
                try:
                    kwargs[name] = _parse_cell(name, cell)
                except ValueError as exc:
                    raise RecordParseError(lineno, f"field {name!r}: {exc}") from None
            records.append(RunRecord(**kwargs))
    return records


_SUMMARY_FIELDS = [f.name for f in fields(ConditionSummary)]


def write_summary_csv(summaries: Iterable[ConditionSummary], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_FIELDS)
        for s in summaries:
            row = []
            for name in _SUMMARY_FIELDS:
                v = getattr(s, name)
                if v is None:
                    row.append("")
                elif isinstance(v, float):
                    row.append(format_float(v))
                else:
                    row.append(str(v))
            writer.writerow(row)
