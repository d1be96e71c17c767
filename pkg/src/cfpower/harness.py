"""Batch Monte Carlo driver: drops, methods, CDF summaries, file outputs.

Per-drop randomness derives from (seed, drop index) so runs are
reproducible and independent of execution order or worker count. Every
allocation a method returns is re-checked against the closed-form SINR
before being recorded; infeasible or failed drops are recorded with a
status rather than silently dropped, and are excluded from the CDFs.
"""

import csv
import dataclasses
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bnb, formulations, heuristics, network, performance, socp

KNOWN_METHODS = ("transmit-only", "algorithm1", "algorithm2", "disjoint",
                 "bnb")

RECORD_FIELDS = ("drop", "method", "precoder", "transmit_w", "hardware_w",
                 "total_w", "active_aps", "status", "nodes", "seconds",
                 "radiated_w")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """All simulation parameters, defaulting to the reference setup."""

    M: int = 20
    K: int = 20
    N: int = 20
    tau_c: int = 200
    tau_p: int = 5
    se_target: float = 2.0        # [b/s/Hz], used when se_random is false
    se_random: bool = False       # per-user uniform on [1, 2] b/s/Hz
    precoder: str = "mrt"
    side_length: float = 1000.0
    min_ap_spacing: float = 50.0
    ap_height: float = 10.0
    delta: float = 2.5
    p_static: float = 4.825       # [W] per AP
    p_bt: float = 0.25e-9         # [W per bit/s]
    bandwidth: float = 20e6       # [Hz]
    p_max: float = 1.0            # [W] per AP
    pilot_power: float = 0.2      # [W]
    noise_dbm: float = -94.0      # uplink and downlink noise power
    drops: int = 100
    seed: int = 0
    methods: tuple = ("transmit-only",)
    solver_tol: float = socp.DEFAULT_TOL
    bnb_gap_tol: float = bnb.DEFAULT_GAP_TOL
    bnb_node_cap: int = bnb.DEFAULT_NODE_CAP
    bnb_polish_cap: int = bnb.DEFAULT_POLISH_CAP
    irls_p_tilde: float = heuristics.DEFAULT_P_TILDE
    irls_max_iterations: int = heuristics.DEFAULT_MAX_ITERATIONS
    workers: int = 1

    def validate(self):
        if self.precoder not in ("mrt", "fzf"):
            raise ConfigError(f"unknown precoder {self.precoder!r}")
        if self.precoder == "fzf" and self.N <= self.tau_p:
            raise ConfigError("fzf requires N > tau_p")
        if self.tau_p >= self.tau_c:
            raise ConfigError("tau_p must be smaller than tau_c")
        if self.drops < 0 or self.M < 1 or self.K < 1:
            raise ConfigError("M, K must be positive and drops nonnegative")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ConfigError(
                    f"unknown method {m!r}; choose from {KNOWN_METHODS}")

    @property
    def noise_w(self):
        return 10.0 ** (self.noise_dbm / 10.0) * 1e-3


def parse_config_text(text, overrides=()):
    """Flat key = value lines; '#' starts a comment. Overrides win."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, _, val = item.partition("=")
        values[key.strip().lstrip("-")] = val.strip()
    return config_from_dict(values)


def config_from_dict(values):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, val in values.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(fields[key], val)
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def _coerce(f, val):
    if isinstance(val, str):
        if f.name == "methods":
            return tuple(v.strip() for v in val.split(",") if v.strip())
        if f.type == "bool" or isinstance(f.default, bool):
            if val.lower() in ("true", "1", "yes"):
                return True
            if val.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"{f.name}: expected a boolean, got {val!r}")
        try:
            if isinstance(f.default, int):
                return int(val)
            if isinstance(f.default, float):
                return float(val)
        except ValueError as exc:
            raise ConfigError(f"{f.name}: {exc}") from exc
        return val
    return val


@dataclass
class DropRecord:
    drop: int
    method: str
    precoder: str
    transmit_w: float
    hardware_w: float
    total_w: float
    active_aps: int
    status: str          # ok | infeasible | budget_exceeded | error:...
    nodes: int           # SOCP solves (heuristics) or BnB boxes
    seconds: float
    radiated_w: float


@dataclass
class RunReport:
    config: ExperimentConfig
    records: list = field(default_factory=list)


def build_drop(config, drop_index):
    """Deterministic network realization for one drop."""
    ss = np.random.SeedSequence([int(config.seed), int(drop_index)])
    seeds = ss.spawn(4)
    geom = network.generate_layout(
        config.M, config.K, side_length=config.side_length,
        min_ap_spacing=config.min_ap_spacing, ap_height=config.ap_height,
        seed=seeds[0])
    beta = network.large_scale_fading(geom, seed=seeds[1])
    pilots = network.assign_pilots(config.K, config.tau_p,
                                   pilot_power=config.pilot_power,
                                   seed=seeds[2])
    gamma = network.mmse_variance(beta, pilots, config.noise_w)
    stats = network.ChannelStats(beta=beta, gamma=gamma,
                                 sigma2_ul=config.noise_w,
                                 sigma2_dl=config.noise_w,
                                 tau_c=config.tau_c, n_antennas=config.N)
    if config.se_random:
        xi = np.random.default_rng(seeds[3]).uniform(1.0, 2.0, config.K)
    else:
        xi = np.full(config.K, config.se_target)
    scheme = performance.PrecodingScheme(config.precoder, config.N,
                                         config.tau_p)
    requirements = performance.SERequirements(xi=xi, tau_c=config.tau_c,
                                              tau_p=config.tau_p)
    power = performance.PowerModel.uniform(
        config.M, delta=config.delta, p_static=config.p_static,
        p_bt=config.p_bt, bandwidth=config.bandwidth, p_max=config.p_max)
    return formulations.ProblemInstance(stats=stats, scheme=scheme,
                                        pilots=pilots,
                                        requirements=requirements,
                                        power=power)


def _run_method(method, inst, config):
    """(allocation or None, status, solve count)."""
    tol = config.solver_tol
    if method == "transmit-only":
        result, alloc = formulations.solve_fixed_set(inst, range(inst.M),
                                                     tol=tol)
        return alloc, "ok" if alloc is not None else "infeasible", 1
    if method == "algorithm1":
        alloc, report = heuristics.algorithm1(
            inst, p_tilde=config.irls_p_tilde,
            max_iterations=config.irls_max_iterations, tol=tol)
        return alloc, "ok", report.pre_ordering_solves + report.turnoff.solves
    if method == "algorithm2":
        alloc, report = heuristics.algorithm2(inst, tol=tol)
        return alloc, "ok", report.pre_ordering_solves + report.turnoff.solves
    if method == "disjoint":
        alloc, report = heuristics.disjoint_sparsity(
            inst, p_tilde=config.irls_p_tilde,
            max_iterations=config.irls_max_iterations, tol=tol)
        status = "ok" if alloc is not None else "infeasible"
        return alloc, status, report.pre_ordering_solves + 1
    if method == "bnb":
        alloc, state = bnb.solve_exact(inst, gap_tol=config.bnb_gap_tol,
                                       node_cap=config.bnb_node_cap, tol=tol,
                                       polish_solve_cap=config.bnb_polish_cap)
        status = "ok" if state.status == bnb.OPTIMAL else state.status
        return alloc, status if alloc is not None else "infeasible", \
            state.nodes
    raise ConfigError(f"unknown method {method!r}")


def run_drop(config, drop_index):
    """All requested methods on one drop; never raises for method failures."""
    inst = build_drop(config, drop_index)
    records = []
    for method in config.methods:
        t0 = time.perf_counter()
        try:
            alloc, status, nodes = _run_method(method, inst, config)
        except heuristics.InfeasibleError:
            alloc, status, nodes = None, "infeasible", 0
        except Exception as exc:   # noqa: BLE001 - recorded, run continues
            alloc, status, nodes = None, f"error:{type(exc).__name__}", 0
        seconds = time.perf_counter() - t0
        if alloc is not None and status in ("ok", "budget_exceeded") and \
                not alloc.is_feasible(inst.requirements.nu):
            status = "recheck_failed"
        if alloc is None:
            records.append(DropRecord(
                drop=drop_index, method=method, precoder=config.precoder,
                transmit_w=float("nan"), hardware_w=float("nan"),
                total_w=float("nan"), active_aps=0, status=status,
                nodes=nodes, seconds=seconds, radiated_w=float("nan")))
        else:
            records.append(DropRecord(
                drop=drop_index, method=method, precoder=config.precoder,
                transmit_w=alloc.transmit_w, hardware_w=alloc.hardware_w,
                total_w=alloc.total_w, active_aps=len(alloc.active),
                status=status, nodes=nodes, seconds=seconds,
                radiated_w=alloc.radiated_w))
    return records


def run_experiment(config):
    config.validate()
    records = []
    if config.workers > 1 and config.drops > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for drop_records in pool.map(run_drop, [config] * config.drops,
                                         range(config.drops)):
                records.extend(drop_records)
    else:
        for drop in range(config.drops):
            records.extend(run_drop(config, drop))
    records.sort(key=lambda r: (r.drop, config.methods.index(r.method)))
    return RunReport(config=config, records=records)


# ---------------------------------------------------------------------------
# summaries and file output

CDF_METRICS = ("transmit_w", "total_w", "radiated_w")


def ecdf(values):
    """Right-continuous empirical CDF as (sorted values, probabilities)."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        return values, np.zeros(0)
    probs = np.arange(1, values.size + 1) / values.size
    return values, probs


def likely_point(values, level=0.95):
    """Value achieved (not exceeded downward) with the given probability."""
    return float(np.percentile(values, 100.0 * (1.0 - level)))


def summarize(report):
    """Per-method means, CDF tables, and the 95%-likely transmit power."""
    methods = {}
    for method in report.config.methods:
        rows = [r for r in report.records if r.method == method]
        ok = [r for r in rows if r.status in ("ok", "budget_exceeded")]
        entry = {
            "count": len(rows),
            "usable": len(ok),
            "infeasible": sum(r.status == "infeasible" for r in rows),
            "failed": sum(r.status.startswith("error") or
                          r.status == "recheck_failed" for r in rows),
            "mean_active_aps": float(np.mean([r.active_aps for r in ok]))
            if ok else float("nan"),
            "cdf": {},
        }
        for metric in CDF_METRICS:
            values = [getattr(r, metric) for r in ok]
            entry["cdf"][metric] = ecdf(values)
            entry[f"mean_{metric}"] = float(np.mean(values)) if values \
                else float("nan")
        entry["likely95_transmit_w"] = likely_point(
            [r.transmit_w for r in ok]) if ok else float("nan")
        methods[method] = entry
    return methods


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def records_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in report.records:
        writer.writerow([_fmt(getattr(r, name)) for name in RECORD_FIELDS])
    return buf.getvalue()


def cdf_csv(summary, metric):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "value_w", "probability"])
    for method, entry in summary.items():
        values, probs = entry["cdf"][metric]
        for v, p in zip(values, probs):
            writer.writerow([method, _fmt(float(v)), _fmt(float(p))])
    return buf.getvalue()


def config_text(config):
    lines = [f"{f.name} = "
             f"{','.join(config.methods) if f.name == 'methods' else getattr(config, f.name)}"
             for f in dataclasses.fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"


GNUPLOT_TEMPLATE = """\
set datafile separator ','
set key bottom right
set xlabel '{metric} [W]'
set ylabel 'CDF'
plot for [m in '{methods}'] \\
    '< grep ^'.m.', cdf_{metric}.csv' using 2:3 with steps title m
"""


def emit(report, outdir):
    """Write config echo, per-drop records, CDF tables, and plot scripts."""
    import pathlib

    out = pathlib.Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config_text(report.config))
        (out / "records.csv").write_text(records_csv(report))
        summary = summarize(report)
        for metric in CDF_METRICS:
            (out / f"cdf_{metric}.csv").write_text(cdf_csv(summary, metric))
            (out / f"plot_{metric}.gp").write_text(GNUPLOT_TEMPLATE.format(
                metric=metric, methods=" ".join(summary)))
    except OSError as exc:
        raise OSError(f"writing report under {out}: {exc}") from exc
    return out
