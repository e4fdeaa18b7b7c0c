"""Batch experiment runner.

A run is configured by a flat ``key = value`` file plus ``key=value``
overrides on the command line.  Each scenario drives one pipeline of the
package over a number of seeded trials and writes a single CSV.

Every trial gets one 64-bit seed.  All randomness in the trial comes from a
Philox generator keyed by that seed, so trials can run in any order or in
parallel and still produce identical rows.  The worker pool size is read
from ``ROBUSTQ_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .epsest import EpsEstimator, FlagOracle, chk_amp_dn, eps_bracket, par_est_zero, zero_flag_probability
from .majority import majority_success
from .oracles import WORK_MODELS, OracleSpec, build_biased_oracle, build_signed_oracle
from .qaa import estimate_distribution, par_est_phase, predicted_phase_distribution
from .qstate import all_zero, apply_fourier, basis_state
from .robustify import TARGET_SUCCESS, lemma_one_parameters, queries_per_simulation, simulate_one_sixth
from .search import or_query_ledger, replication_for, robust_or

SCENARIOS = (
    "verify-lemma1",
    "par-est-phase",
    "zero-test",
    "chk-amp-dn",
    "est-eps-min",
    "robust-or",
    "scaling-sweep",
    "compare-classical",
)
SEED_MASK = 2**64 - 1


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------- parsing


def _parse_list(text: str, convert, name: str) -> tuple:
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    items = [p.strip() for p in body.split(",") if p.strip()]
    if not items:
        raise ConfigError(name, "empty list")
    try:
        return tuple(convert(p) for p in items)
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {text!r}: {exc}") from None


def _call_form(text: str) -> tuple[str, tuple[str, ...]] | None:
    m = re.fullmatch(r"\s*([a-z_]+)\s*\((.*)\)\s*", text)
    if m is None:
        return None
    args = tuple(a.strip() for a in m.group(2).split(",") if a.strip())
    return m.group(1), args


def _int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(name, f"expected an integer, got {text!r}") from None


def _float(text: str, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(name, f"expected a number, got {text!r}") from None


@dataclass(frozen=True)
class TableSource:
    """A truth table given explicitly or drawn from ``random(seed)``."""

    values: tuple[int, ...] | None = None
    seed: int | None = None

    @classmethod
    def parse(cls, text: str) -> TableSource:
        form = _call_form(text)
        if form is not None:
            fn, args = form
            if fn != "random" or len(args) != 1:
                raise ConfigError("f", f"expected a list or random(seed), got {text!r}")
            return cls(seed=_int(args[0], "f"))
        return cls(values=_parse_list(text, int, "f"))

    def resolve(self, N: int, trial: int) -> tuple[int, ...]:
        if self.values is not None:
            if len(self.values) != N:
                raise ConfigError("f", f"has {len(self.values)} entries, N is {N}")
            if any(v not in (0, 1) for v in self.values):
                raise ConfigError("f", "entries must be 0 or 1")
            return self.values
        rng = np.random.Generator(np.random.Philox(key=(self.seed + trial) & SEED_MASK))
        return tuple(int(v) for v in rng.integers(0, 2, size=N))


@dataclass(frozen=True)
class BiasSource:
    """Biases given as a list, ``uniform(lo, hi, seed)`` or ``constant(v)``."""

    values: tuple[float, ...] | None = None
    lo: float = 0.0
    hi: float = 0.0
    seed: int | None = None

    @classmethod
    def parse(cls, text: str) -> BiasSource:
        form = _call_form(text)
        if form is None:
            return cls(values=_parse_list(text, float, "biases"))
        fn, args = form
        if fn == "constant" and len(args) == 1:
            v = _float(args[0], "biases")
            return cls(lo=v, hi=v)
        if fn == "uniform" and len(args) == 3:
            lo, hi = _float(args[0], "biases"), _float(args[1], "biases")
            if not 0 < lo <= hi <= 0.5:
                raise ConfigError("biases", f"need 0 < lo <= hi <= 1/2, got {lo}, {hi}")
            return cls(lo=lo, hi=hi, seed=_int(args[2], "biases"))
        raise ConfigError("biases", f"expected a list, uniform(lo, hi, seed) or constant(v), got {text!r}")

    def resolve(self, N: int, trial: int) -> tuple[float, ...]:
        if self.values is not None:
            if len(self.values) != N:
                raise ConfigError("biases", f"has {len(self.values)} entries, N is {N}")
            return self.values
        if self.seed is None:
            return (self.lo,) * N
        rng = np.random.Generator(np.random.Philox(key=(self.seed + trial) & SEED_MASK))
        return tuple(float(v) for v in rng.uniform(self.lo, self.hi, size=N))


def _parse_work_model(text: str) -> tuple[str, int]:
    text = text.strip()
    if text == "clean":
        return "clean", 0
    form = _call_form(text)
    if form is not None and form[0] == "garbage" and len(form[1]) == 1:
        return "garbage", _int(form[1][0], "work_model")
    raise ConfigError("work_model", f"expected one of {WORK_MODELS} as clean or garbage(seed), got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    N: tuple[int, ...] = ()
    m: int = 2
    f: TableSource | None = None
    biases: BiasSource | None = None
    work_model: str = "clean"
    work_seed: int = 0
    eps: tuple[float, ...] = ()
    M: int | None = None
    flags: tuple[float, ...] | None = None
    ell_max: int | None = None
    trials: int = 1
    seed: int | None = None
    output: str = "robustq"

    @classmethod
    def from_items(cls, scenario: str, items: dict[str, str]) -> ExperimentConfig:
        if scenario not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
        kw: dict = {"scenario": scenario}
        for key, text in items.items():
            if key == "N":
                kw["N"] = _parse_list(text, int, "N")
            elif key in ("m", "M", "ell_max", "trials", "seed"):
                kw[key] = _int(text, key)
            elif key == "f":
                kw["f"] = TableSource.parse(text)
            elif key == "biases":
                kw["biases"] = BiasSource.parse(text)
            elif key == "work_model":
                kw["work_model"], kw["work_seed"] = _parse_work_model(text)
            elif key == "eps":
                kw["eps"] = _parse_list(text, float, "eps")
            elif key == "flags":
                kw["flags"] = _parse_list(text, float, "flags")
            elif key == "output":
                kw["output"] = text.strip()
            elif key == "scenario":
                if text.strip() != scenario:
                    raise ConfigError("scenario", f"file says {text.strip()!r}, command line says {scenario!r}")
            else:
                raise ConfigError(key, "unknown field")
        config = cls(**kw)
        config.validate()
        return config

    def _require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None or value == ():
                raise ConfigError(name, f"required by scenario {self.scenario}")

    def validate(self) -> None:
        s = self.scenario
        oracle_fields = ("N", "f", "biases")
        if s == "verify-lemma1":
            self._require(*oracle_fields, "eps")
        elif s in ("par-est-phase", "zero-test"):
            self._require(*oracle_fields, "M")
        elif s == "chk-amp-dn":
            self._require("seed")
            if self.flags is None:
                self._require(*oracle_fields, "M")
        elif s == "est-eps-min":
            self._require(*oracle_fields, "ell_max", "seed")
        elif s == "robust-or":
            self._require(*oracle_fields, "eps", "seed")
        elif s in ("scaling-sweep", "compare-classical"):
            self._require("N", "eps")
        if any(n < 1 for n in self.N):
            raise ConfigError("N", "must be positive")
        if s not in ("scaling-sweep", "compare-classical") and len(self.N) > 1:
            raise ConfigError("N", f"scenario {s} takes a single domain size")
        if s not in ("scaling-sweep", "compare-classical") and len(self.eps) > 1:
            raise ConfigError("eps", f"scenario {s} takes a single bias bound")
        if any(not 0 < e <= 0.5 for e in self.eps):
            raise ConfigError("eps", "must lie in (0, 1/2]")
        if self.m < 1:
            raise ConfigError("m", "must be positive")
        if self.trials < 1:
            raise ConfigError("trials", "must be positive")
        if self.M is not None and self.M < 1:
            raise ConfigError("M", "must be positive")
        if s == "par-est-phase" and self.M is not None and self.M < 2:
            raise ConfigError("M", "phase estimation needs M >= 2")
        if self.ell_max is not None and self.ell_max < 1:
            raise ConfigError("ell_max", "must be positive")
        if self.seed is not None and not 0 <= self.seed <= SEED_MASK:
            raise ConfigError("seed", "must fit in 64 unsigned bits")
        if self.flags is not None and any(not 0 <= v <= 1 for v in self.flags):
            raise ConfigError("flags", "entries must lie in [0, 1]")
        if s == "chk-amp-dn" and self.flags is not None and len(self.flags) < 2:
            raise ConfigError("flags", "the discriminator needs at least two indices")
        if s == "est-eps-min" and self.N and self.N[0] < 2:
            raise ConfigError("N", "the estimator needs N >= 2")
        for src, name in ((self.f, "f"), (self.biases, "biases")):
            if src is not None and self.N:
                src.resolve(self.N[0], 0)
        if self.biases is not None and self.biases.values is not None:
            if any(not 0 < e <= 0.5 for e in self.biases.values):
                raise ConfigError("biases", "entries must lie in (0, 1/2]")

    def trial_seed(self, trial: int) -> int:
        return ((self.seed or 0) + trial) & SEED_MASK

    def oracle_spec(self, trial: int) -> OracleSpec:
        N = self.N[0]
        return OracleSpec(
            N, self.m, self.f.resolve(N, trial), self.biases.resolve(N, trial), self.work_model, self.work_seed
        )


def read_config_file(path: str | Path) -> dict[str, str]:
    items: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    items = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "override must look like key=value")
        key, value = pair.split("=", 1)
        items[key.strip()] = value.strip()
    return items


# ---------------------------------------------------------------- trials


@dataclass
class TrialRecord:
    """Result of one trial.  ``rows`` line up with the scenario's CSV columns."""

    scenario: str
    trial: int
    seed: int
    rows: list[tuple]
    queries: int
    wall_time: float = field(default=0.0, compare=False)


COLUMNS = {
    "verify-lemma1": ("scenario", "seed", "x", "f", "bias", "eps", "success_probability", "meets_bound", "queries"),
    "par-est-phase": ("scenario", "seed", "x", "theta", "level", "angle", "probability", "predicted", "queries"),
    "zero-test": ("scenario", "seed", "x", "theta", "flag_probability", "predicted", "queries"),
    "chk-amp-dn": ("scenario", "seed", "p_one", "threshold", "bit", "estimate", "replication", "queries"),
    "est-eps-min": (
        "scenario", "seed", "ell", "eps_tilde", "eps_min", "bracket_lo", "bracket_hi",
        "hit", "truncated", "queries", "ledger", "hit_frequency",
    ),
    "robust-or": (
        "scenario", "seed", "answer", "truth", "success_probability", "p_answer_one", "k", "queries",
    ),
    "scaling-sweep": ("scenario", "N", "eps", "theta", "M1", "M2", "lemma1_queries", "or_queries", "ratio"),
    "compare-classical": (
        "scenario", "N", "eps", "classical_votes", "classical_queries", "quantum_queries", "ratio",
    ),
}


def _uniform_index_state(layout, N):
    return apply_fourier(basis_state(layout, {}), "x", N)


def _verify_lemma1(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    spec = config.oracle_spec(trial)
    eps = config.eps[0]
    S = simulate_one_sixth(build_biased_oracle(spec), eps)
    success = S.success_probabilities()
    q = queries_per_simulation(eps)
    rows = [
        (config.scenario, seed, x, spec.f[x], spec.biases[x], eps, success[x], int(success[x] >= TARGET_SUCCESS - 1e-9), q)
        for x in range(spec.N)
    ]
    return TrialRecord(config.scenario, trial, seed, rows, q)


def _par_est_phase(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    spec = config.oracle_spec(trial)
    S = build_signed_oracle(build_biased_oracle(spec))
    M = config.M
    state = par_est_phase(S.operator(), all_zero("ws"), M, _uniform_index_state(S.layout(), spec.N))
    table = estimate_distribution(state)
    q = S.counter.read_and_reset()
    rows = []
    for x in range(spec.N):
        theta = math.asin(2 * spec.biases[x])
        pred = predicted_phase_distribution(theta, M)
        for level in range(table.shape[1]):
            rows.append((config.scenario, seed, x, theta, level, math.pi * level / M, table[x, level], pred.probs[level], q))
    return TrialRecord(config.scenario, trial, seed, rows, q)


def _zero_test(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    spec = config.oracle_spec(trial)
    zt = par_est_zero(build_signed_oracle(build_biased_oracle(spec)), config.M)
    rows = []
    for x in range(spec.N):
        theta = math.asin(2 * spec.biases[x])
        rows.append((config.scenario, seed, x, theta, zt.flag_probs[x], float(zero_flag_probability(theta, config.M)), zt.queries))
    return TrialRecord(config.scenario, trial, seed, rows, zt.queries)


def _flag_oracle(config: ExperimentConfig, trial: int) -> FlagOracle:
    if config.flags is not None:
        return FlagOracle(config.flags)
    spec = config.oracle_spec(trial)
    return FlagOracle.from_zero_test(par_est_zero(build_signed_oracle(build_biased_oracle(spec)), config.M))


def _chk_amp_dn(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    out = chk_amp_dn(_flag_oracle(config, trial))
    bit, estimate = out.sample(np.random.Generator(np.random.Philox(key=seed)))
    row = (config.scenario, seed, out.p_one, out.threshold, bit, estimate, out.replication, out.queries)
    return TrialRecord(config.scenario, trial, seed, [row], out.queries)


_ESTIMATORS: dict[OracleSpec, EpsEstimator] = {}


def _estimator_for(spec: OracleSpec) -> EpsEstimator:
    # level distributions do not depend on the trial seed, so each worker builds them once
    if spec not in _ESTIMATORS:
        _ESTIMATORS[spec] = EpsEstimator(build_biased_oracle(spec))
    return _ESTIMATORS[spec]


def _est_eps_min(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    spec = config.oracle_spec(trial)
    E = _estimator_for(spec)
    res = E.run(config.ell_max, np.random.Generator(np.random.Philox(key=seed)))
    lo, hi = eps_bracket(spec.eps_min)
    hit = int(lo <= res.eps_tilde <= hi)
    row = [config.scenario, seed, res.ell, res.eps_tilde, spec.eps_min, lo, hi, hit, int(res.truncated), res.total_queries, E.ledger(res.ell)]
    return TrialRecord(config.scenario, trial, seed, [tuple(row)], res.total_queries)


def _robust_or(config: ExperimentConfig, trial: int) -> TrialRecord:
    seed = config.trial_seed(trial)
    spec = config.oracle_spec(trial)
    res = robust_or(build_biased_oracle(spec), config.eps[0], rng=np.random.Generator(np.random.Philox(key=seed)))
    row = (config.scenario, seed, res.answer, spec.or_value, res.success_probability, res.p_answer_one, res.k, res.base_queries)
    return TrialRecord(config.scenario, trial, seed, [row], res.base_queries)


def _scaling_sweep(config: ExperimentConfig, trial: int) -> TrialRecord:
    rows, prev = [], None
    for N in config.N:
        for eps in config.eps:
            theta, M1, M2 = lemma_one_parameters(eps)
            q = queries_per_simulation(eps)
            ratio = q / prev if prev is not None else 1.0
            rows.append((config.scenario, N, eps, theta, M1, M2, q, or_query_ledger(N, replication_for(N), q), ratio))
            prev = q
        prev = None
    return TrialRecord(config.scenario, trial, 0, rows, 0)


def classical_votes(eps: float, target: float = TARGET_SUCCESS) -> int:
    """Smallest odd number of classical queries whose majority is right with probability ``target``."""
    v = 1
    while majority_success(v, 0.5 + eps) < target:
        v += 2
    return v


def quantum_or_queries(N: int, eps: float) -> int:
    return or_query_ledger(N, replication_for(N), queries_per_simulation(eps))


def _compare_classical(config: ExperimentConfig, trial: int) -> TrialRecord:
    rows = []
    for N in config.N:
        for eps in config.eps:
            v = classical_votes(eps)
            quantum = quantum_or_queries(N, eps)
            rows.append((config.scenario, N, eps, v, N * v, quantum, quantum / (N * v)))
    return TrialRecord(config.scenario, trial, 0, rows, 0)


RUNNERS = {
    "verify-lemma1": _verify_lemma1,
    "par-est-phase": _par_est_phase,
    "zero-test": _zero_test,
    "chk-amp-dn": _chk_amp_dn,
    "est-eps-min": _est_eps_min,
    "robust-or": _robust_or,
    "scaling-sweep": _scaling_sweep,
    "compare-classical": _compare_classical,
}
GRID_SCENARIOS = ("scaling-sweep", "compare-classical")


def run_trial(config: ExperimentConfig, trial: int) -> TrialRecord:
    start = time.perf_counter()
    try:
        rec = RUNNERS[config.scenario](config, trial)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("config", str(exc)) from None
    rec.wall_time = time.perf_counter() - start
    return rec


def _worker_count() -> int:
    raw = os.environ.get("ROBUSTQ_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("ROBUSTQ_WORKERS", f"expected an integer, got {raw!r}") from None


def run_trials(config: ExperimentConfig, workers: int | None = None) -> list[TrialRecord]:
    trials = 1 if config.scenario in GRID_SCENARIOS else config.trials
    workers = _worker_count() if workers is None else workers
    if workers <= 1 or trials == 1:
        return [run_trial(config, t) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, [config] * trials, range(trials)))


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def collect_rows(config: ExperimentConfig, records: list[TrialRecord]) -> list[tuple]:
    rows = [row for rec in records for row in rec.rows]
    cols = COLUMNS[config.scenario]
    if config.scenario == "est-eps-min":
        freq = sum(r[cols.index("hit")] for r in rows) / len(rows)
        rows = [r + (freq,) for r in rows]
    if "x" in cols:
        ix, iseed = cols.index("x"), cols.index("seed")
        rows.sort(key=lambda r: (r[ix], r[iseed]))
    return rows


def write_csv(path: str | Path, columns: tuple[str, ...], rows: list[tuple]) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(v) for v in row])
    return path


def run(config: ExperimentConfig, workers: int | None = None) -> tuple[list[TrialRecord], Path]:
    records = run_trials(config, workers)
    rows = collect_rows(config, records)
    path = write_csv(f"{config.output}-{config.scenario}.csv", COLUMNS[config.scenario], rows)
    return records, path


def build_config(scenario: str, config_path: str | None, overrides: list[str], out: str | None) -> ExperimentConfig:
    items = read_config_file(config_path) if config_path else {}
    items.update(parse_overrides(overrides))
    config = ExperimentConfig.from_items(scenario, items)
    if out is not None:
        config = replace(config, output=out)
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="robustq", description="Run a robust-query experiment scenario.")
    parser.add_argument("scenario", help=f"one of: {', '.join(SCENARIOS)}")
    parser.add_argument("overrides", nargs="*", metavar="key=value", help="override a configuration field")
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--out", help="output path prefix")
    args = parser.parse_intermixed_args(argv)
    try:
        config = build_config(args.scenario, args.config, args.overrides, args.out)
        records, path = run(config)
    except ConfigError as exc:
        print(f"robustq: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"robustq: {exc}", file=sys.stderr)
        return 1
    print(f"{len(records)} trial(s) written to {path}")
    return 0
