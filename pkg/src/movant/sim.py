"""Monte Carlo experiments: metrics, sweeps and result files.

Every realization ``j`` of an experiment with master seed ``s`` draws its
random numbers from ``SeedSequence([s, j])``, split into independent streams
for the statistical CSI, the training mini-batches and the held-out
evaluation samples.  All schemes and all sweep values of one realization
therefore see the same channels, and results do not depend on the number of
worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .channel import draw_statistical_state, receive_region
from .config import SWEEP_AXES, SystemConfig
from .two_timescale import (
    ReceivePolicy,
    SchemeId,
    draw_links,
    evaluate_design,
    initial_covariance,
    initial_receive,
    initial_transmit,
    run_scheme,
)

__all__ = [
    "HEADER",
    "MetricsRow",
    "RealizationResult",
    "Experiment",
    "realization_streams",
    "feasibility_ratio",
    "energy_metrics",
    "run_realization",
    "short_term_trace",
    "run_experiment",
    "emit_results",
    "read_metrics",
    "prepare_output",
    "write_table",
    "write_manifest",
    "trace_records",
    "realization_records",
    "experiment_from_manifest",
    "bootstrap_confidence",
    "MOBILITY_J_PER_M",
    "COHERENCE_S",
    "VELOCITY_M_PER_S",
    "EFFICIENCY_CAP",
]

log = logging.getLogger(__name__)

MOBILITY_J_PER_M = 1.0  # energy per meter of antenna movement
COHERENCE_S = 0.1  # one evaluation sample per coherence interval
VELOCITY_M_PER_S = 10.0  # repositioning speed
EFFICIENCY_CAP = 1e6  # reported efficiency when the antennas never move

HEADER = ["scheme", "sweep_name", "sweep_value", "avg_sum_rate", "feasibility_ratio",
          "energy_eff", "repositioning_delay", "realizations", "seed"]


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    sweep_name: str
    sweep_value: float
    avg_sum_rate: float
    feasibility_ratio: float
    energy_eff: float
    repositioning_delay: float
    realizations: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.feasibility_ratio <= 1.0:
            raise ValueError("feasibility ratio must lie in [0, 1]")
        if self.avg_sum_rate < 0:
            raise ValueError("average sum rate must be nonnegative")


@dataclass
class RealizationResult:
    """Outcome of one scheme on one realization at one sweep value."""

    scheme: str
    sweep_value: float
    realization: int
    user_rates: np.ndarray  # (K,) held-out mean rate of every user
    sum_rate: float
    energy_eff: float
    delay: float
    distance: float  # mean distance moved per user and interval (m)
    trace: dict | None = None


def realization_streams(seed: int, realization: int) -> dict[str, np.random.SeedSequence]:
    """Independent seed sequences of one realization."""
    root = np.random.SeedSequence([int(seed), int(realization)])
    stat, train, evaluate, trace = root.spawn(4)
    return {"stat": stat, "train": train, "eval": evaluate, "trace": trace}


def feasibility_ratio(user_rates, rate_min) -> float:
    """Fraction of realizations whose every user meets ``rate_min`` on average.

    ``user_rates`` is ``(R, K)``: held-out mean rate of each user per realization.
    """
    user_rates = np.atleast_2d(np.asarray(user_rates, dtype=float))
    if user_rates.size == 0:
        raise ValueError("no realizations given")
    return float(np.mean(np.min(user_rates, axis=1) >= rate_min))


def bootstrap_confidence(a, b, statistic=None, n_boot=2000, seed=0) -> float:
    """Share of paired bootstrap resamples in which ``statistic(a) >= statistic(b)``.

    ``a`` and ``b`` hold one entry per realization along axis 0 (matched
    seeds, so realizations are resampled jointly).  ``statistic`` maps a
    ``(n_boot, R, ...)`` stack of resamples to ``(n_boot,)`` values and
    defaults to the median over realizations.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0] or a.shape[0] == 0:
        raise ValueError("paired samples need the same nonzero number of realizations")
    if statistic is None:
        statistic = lambda x: np.median(x, axis=1)  # noqa: E731
    idx = np.random.default_rng(seed).integers(0, a.shape[0], (n_boot, a.shape[0]))
    return float(np.mean(statistic(a[idx]) >= statistic(b[idx])))


def energy_metrics(trajectory, rates, interval=COHERENCE_S, mobility=MOBILITY_J_PER_M,
                   velocity=VELOCITY_M_PER_S):
    """Energy efficiency and repositioning delay of a receive-APV trajectory.

    ``trajectory`` is ``(S, K, M, 2)`` (one APV per coherence interval) and
    ``rates`` the matching ``(S, K)`` rates.  Between consecutive intervals a
    user's antennas travel ``sum_m ||r_m' - r_m||`` meters, which costs
    ``mobility * distance / interval`` watts; its efficiency is its mean rate
    divided by its mean movement power, and the delay of one move is the
    longest single-antenna distance divided by ``velocity``.  Efficiencies are
    averaged over users, delays over users and moves.  A user that never
    moves is assigned ``EFFICIENCY_CAP``.

    Returns ``(efficiency, delay, mean distance per user and move)``.
    """
    traj = np.asarray(trajectory, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if traj.ndim == 3:
        traj = traj[:, None]
        rates = rates.reshape(-1, 1)
    if traj.shape[0] < 2:
        raise ValueError("need at least two consecutive APVs")
    step = np.sqrt(np.sum(np.diff(traj, axis=0) ** 2, axis=-1))  # (S-1, K, M)
    distance = step.sum(axis=-1)  # (S-1, K)
    power = mobility * distance.mean(axis=0) / interval  # (K,)
    rate = rates[1:].mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(power > 0, rate / np.where(power > 0, power, 1.0), EFFICIENCY_CAP)
    eff = np.minimum(eff, EFFICIENCY_CAP)
    delay = step.max(axis=-1) / velocity
    return float(eff.mean()), float(delay.mean()), float(distance.mean())


def run_realization(config: SystemConfig, schemes, realization: int, seed: int,
                    sweep_value=np.nan, trace: bool = False) -> list[RealizationResult]:
    """Design and evaluate every scheme on one realization."""
    streams = realization_streams(seed, realization)
    stat = draw_statistical_state(config, np.random.default_rng(streams["stat"]))
    eval_links = draw_links(stat, np.random.default_rng(streams["eval"]), config.eval_samples,
                            config)
    trace_links = None
    if trace:
        trace_links = draw_links(stat, np.random.default_rng(streams["trace"]),
                                 config.trace_eval_samples, config)
    out = []
    for scheme in schemes:
        scheme = SchemeId.parse(scheme)
        sol = run_scheme(scheme, stat, config, rng=np.random.default_rng(streams["train"]),
                         trace_links=trace_links)
        ev = evaluate_design(sol, eval_links, config)
        rates = ev["rates"]
        if ev["receive"].shape[0] > 1:
            eff, delay, dist = energy_metrics(ev["receive"], rates)
        else:
            eff, delay, dist = EFFICIENCY_CAP, 0.0, 0.0
        out.append(RealizationResult(
            scheme.value, float(sweep_value), int(realization), rates.mean(axis=0),
            float(rates.sum(axis=1).mean()), eff, delay, dist,
            sol.trace_table() if trace else None,
        ))
    return out


def short_term_trace(config: SystemConfig, seed: int, realization: int = 0,
                     kind: str = "ga", n_samples: int | None = None) -> dict:
    """Per-iteration short-term rates at the initial long-term design.

    Uses the held-out samples of realization ``realization``; ``kind`` is
    ``"ga"`` (shared receive area) or ``"gp"`` (per-antenna squares).
    Returns ``user`` ``(S, K, iters + 1)`` and ``sum`` ``(S, iters + 1)``.
    """
    mode = {"ga": "gmm", "gp": "pmm"}[kind]
    streams = realization_streams(seed, realization)
    stat = draw_statistical_state(config, np.random.default_rng(streams["stat"]))
    n = config.eval_samples if n_samples is None else int(n_samples)
    links = draw_links(stat, np.random.default_rng(streams["eval"]), n, config)
    policy = ReceivePolicy(kind, initial_receive(config, mode), receive_region(config, mode),
                           config.min_distance_m)
    res = policy.solve(links, initial_transmit(config), initial_covariance(config), config)
    user = np.asarray(res.trace).reshape(n, config.n_users, -1)
    return {"user": user, "sum": user.sum(axis=1),
            "iterations": np.asarray(res.iterations).reshape(n, config.n_users)}


def _task(args):
    config_dict, schemes, realization, seed, sweep_value, trace = args
    return run_realization(SystemConfig(**config_dict), schemes, realization, seed,
                           sweep_value, trace)


@dataclass
class Experiment:
    """Aggregated rows plus the per-realization results behind them."""

    rows: list[MetricsRow]
    results: list[RealizationResult]
    config: SystemConfig
    sweep_name: str
    sweep_values: list[float]
    schemes: list[str]

    def table(self, scheme, sweep_value, field="sum_rate"):
        """Per-realization values of ``field`` for one scheme and sweep value."""
        sel = [r for r in self.results if r.scheme == scheme and r.sweep_value == sweep_value]
        sel.sort(key=lambda r: r.realization)
        return np.array([getattr(r, field) for r in sel])


def _aggregate(results, config, scheme, sweep_name, value, seed):
    sel = sorted((r for r in results if r.scheme == scheme and r.sweep_value == value),
                 key=lambda r: r.realization)
    user = np.stack([r.user_rates for r in sel])
    return MetricsRow(
        scheme=scheme,
        sweep_name=sweep_name,
        sweep_value=float(value),
        avg_sum_rate=float(np.mean([r.sum_rate for r in sel])),
        feasibility_ratio=feasibility_ratio(user, config.rate_min_bps),
        energy_eff=float(np.mean([r.energy_eff for r in sel])),
        repositioning_delay=float(np.mean([r.delay for r in sel])),
        realizations=len(sel),
        seed=int(seed),
    )


def run_experiment(config: SystemConfig, schemes=None, sweep: tuple[str, list] | None = None,
                   seed: int | None = None, workers: int = 1, trace: bool = False,
                   realizations: int | None = None) -> Experiment:
    """Run all schemes over the sweep values and aggregate one row per pair.

    ``sweep`` is ``(axis, values)`` with ``axis`` one of ``SWEEP_AXES``; the
    default is a single point at the configured transmit power.  Only the
    swept key is changed; everything else stays as configured.
    """
    schemes = [SchemeId.parse(s).value for s in (schemes or [s.value for s in SchemeId])]
    seed = config.seed if seed is None else int(seed)
    n_real = config.realizations if realizations is None else int(realizations)
    if n_real < 1:
        raise ValueError("need at least one realization")
    if sweep is None:
        sweep = ("power", [config.power_dbm])
    name, values = sweep
    if name not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {name!r}; choose from {sorted(SWEEP_AXES)}")
    values = [float(v) for v in values]
    if not values or not np.all(np.isfinite(values)):
        raise ValueError("sweep values must be finite and nonempty")
    key = SWEEP_AXES[name]
    tasks = []
    for value in values:
        cfg_v = config.replace(**{key: value})
        for j in range(n_real):
            tasks.append((cfg_v.to_dict(), schemes, j, seed, value, trace))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    results = [r for chunk in chunks for r in chunk]
    results.sort(key=lambda r: (values.index(r.sweep_value), schemes.index(r.scheme),
                                r.realization))
    rows = [_aggregate(results, config, s, name, v, seed) for v in values for s in schemes]
    return Experiment(rows, results, config, name, values, schemes)


# ---------------------------------------------------------------------------
# files


def prepare_output(out_dir) -> Path:
    """Create ``out_dir`` and make sure it is writable before any computation."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, records) -> Path:
    """Write ``records`` (sequences matching ``header``) as a comma-separated table."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow([_format(v) for v in rec])
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_manifest(path, manifest: dict) -> Path:
    """Write ``manifest`` as sorted, indented JSON."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for row in rows:
        writer.writerow([_format(getattr(row, h)) for h in HEADER])
    return buf.getvalue()


def read_metrics(path) -> list[MetricsRow]:
    """Parse a metrics table written by :func:`emit_results`."""
    types = {f.name: f.type for f in fields(MetricsRow)}
    casts = {"str": str, "float": float, "int": int}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [MetricsRow(**{k: casts[types[k]](v) for k, v in rec.items()}) for rec in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_results(rows, out_dir, config: SystemConfig, extra: dict | None = None,
                 traces: list | None = None) -> dict[str, Path]:
    """Write ``metrics.csv`` and ``manifest.json`` into ``out_dir``.

    The manifest holds the resolved configuration, the package version, the
    invocation details in ``extra`` and, when given, convergence traces.
    Output bytes depend only on the arguments.
    """
    from . import __version__

    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    out = prepare_output(out_dir)
    paths = {"metrics": out / "metrics.csv", "manifest": out / "manifest.json"}
    manifest = {
        "package": "movant",
        "version": __version__,
        "config": config.to_dict(),
        "header": HEADER,
        "rows": [asdict(r) for r in rows],
    }
    if extra:
        manifest.update(extra)
    if traces is not None:
        manifest["traces"] = traces
    write_table(paths["metrics"], HEADER, [[getattr(r, h) for h in HEADER] for r in rows])
    write_manifest(paths["manifest"], manifest)
    return paths


def realization_records(experiment: Experiment) -> list[dict]:
    """Per-realization metrics of an experiment (the data behind each row)."""
    return [{"scheme": r.scheme, "sweep_value": r.sweep_value, "realization": r.realization,
             "sum_rate": r.sum_rate, "user_rates": r.user_rates, "energy_eff": r.energy_eff,
             "delay": r.delay, "distance": r.distance} for r in experiment.results]


def experiment_from_manifest(path) -> Experiment:
    """Rebuild an :class:`Experiment` (without traces) from a run manifest."""
    with open(path) as fh:
        m = json.load(fh)
    config = SystemConfig(**m["config"])
    rows = [MetricsRow(**r) for r in m["rows"]]
    results = [RealizationResult(rec["scheme"], float(rec["sweep_value"]), int(rec["realization"]),
                                 np.asarray(rec["user_rates"], float), float(rec["sum_rate"]),
                                 float(rec["energy_eff"]), float(rec["delay"]),
                                 float(rec["distance"]))
               for rec in m["per_realization"]]
    return Experiment(rows, results, config, m["sweep"]["axis"],
                      [float(v) for v in m["sweep"]["values"]], list(m["schemes"]))


def trace_records(experiment: Experiment) -> list[dict]:
    """Per-realization convergence traces of an experiment run with ``trace``."""
    recs = []
    for r in experiment.results:
        if r.trace is None:
            continue
        recs.append({"scheme": r.scheme, "sweep_value": r.sweep_value,
                     "realization": r.realization, "trace": r.trace})
    return recs
