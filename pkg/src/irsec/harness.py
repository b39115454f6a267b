"""Experiment orchestration: scenario files, sweeps, records, figures.

Everything downstream of the drivers lives here.  Internal math stays
in nats; every number that leaves through a CSV or a figure is
converted to bits once, at the boundary.  Records are deterministic
functions of the experiment description: channel and initialization
randomness comes from counter-based substreams keyed by (master seed,
axis index, seed index), so execution order never matters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algorithms import penalty_weights, run_maxmin_perfect, run_maxmin_robust
from .channel import ChannelSet, Geometry, Scenario, generate_channels
from .metrics import NATS_TO_BITS, jain_index

AXES = ("delta", "K", "t_t", "M", "none")
ALGORITHMS = ("maxmin-fbr", "maxmin-lbr", "ssr-fbr", "ssr-lbr")
CSV_HEADER = ("scenario_hash,seed,algorithm,axis,axis_value,min_sr_bps,"
              "per_user_srs_bps,ssr_bps,jain,iterations,status")

_SCALAR_FIELDS = {
    "n_tx": int, "n_irs": int, "n_users": int,
    "power": float, "noise_dbm_hz": float, "bandwidth": float,
    "t_transmit": float, "tau_user": float, "tau_eve": float,
    "delta_user": float, "delta_eve": float, "rician_k": float,
    "gain_alice_dbi": float, "gain_irs_dbi": float, "seed": int,
    "eps_outer": float, "eps_penalty": float, "eps_move": float,
    "a_init": float, "a_max": float, "a_growth": float,
    "pccp_max_iter": int, "ao_max_iter": int,
}
_GEOMETRY_FIELDS = {
    "alice": 3, "irs": 3, "user_box": 4, "eve_box": 4,
    "node_height": 1, "eve_guard": 1,
}
_SECTIONS = {
    "system": ("n_tx", "n_irs", "n_users"),
    "link": ("power", "noise_dbm_hz", "bandwidth", "t_transmit",
             "tau_user", "tau_eve", "rician_k", "gain_alice_dbi",
             "gain_irs_dbi"),
    "uncertainty": ("delta_user", "delta_eve"),
    "solver": ("eps_outer", "eps_penalty", "eps_move", "a_init", "a_max",
               "a_growth", "pccp_max_iter", "ao_max_iter"),
    "run": ("seed",),
}


def _field_for_key(key: str) -> str:
    """Resolve a scenario-file key (dotted or bare) to a field name."""
    if "." in key:
        section, _, name = key.partition(".")
        if section == "geometry":
            if name not in _GEOMETRY_FIELDS:
                raise ValueError(f"unknown scenario key {key!r}")
            return key
        if section not in _SECTIONS or name not in _SECTIONS[section]:
            raise ValueError(f"unknown scenario key {key!r}")
        return name
    if key in _SCALAR_FIELDS:
        return key
    raise ValueError(f"unknown scenario key {key!r}")


def load_scenario(path) -> Scenario:
    """Parse a flat key = value scenario file into a Scenario.

    Lines are `key = value` with `#` comments; keys may carry their
    section prefix (system.n_tx) or stand bare (n_tx).  Geometry
    entries take comma-separated coordinates.  Anything unspecified
    keeps the built-in default; bad keys and bad values raise with the
    offending key named.
    """
    fields: dict = {}
    geo: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value, "
                             f"got {raw.strip()!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        target = _field_for_key(key)
        try:
            if target.startswith("geometry."):
                name = target.split(".", 1)[1]
                want = _GEOMETRY_FIELDS[name]
                parts = tuple(float(p) for p in value.split(","))
                if len(parts) != want:
                    raise ValueError(f"expected {want} numbers")
                geo[name] = parts if want > 1 else parts[0]
            else:
                fields[target] = _SCALAR_FIELDS[target](value)
        except ValueError as exc:
            raise ValueError(f"scenario key {key!r}: {exc}") from exc
    if geo:
        fields["geometry"] = Geometry(**geo)
    try:
        return Scenario(**fields)
    except ValueError as exc:
        raise ValueError(f"scenario validation: {exc}") from exc


def scenario_hash(scenario: Scenario) -> str:
    """Short stable digest of every configuration field."""
    blob = repr(sorted(dataclasses.asdict(scenario).items()))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def apply_axis(base: Scenario, axis: str, value) -> Scenario:
    if axis == "none":
        return base
    if axis == "delta":
        return base.with_updates(delta_user=float(value),
                                 delta_eve=float(value))
    if axis == "K":
        return base.with_updates(n_users=int(value))
    if axis == "t_t":
        return base.with_updates(t_transmit=float(value))
    if axis == "M":
        return base.with_updates(n_irs=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: which scenarios to run, how often, with what."""

    base: Scenario
    axis: str = "none"
    values: tuple = ()
    algorithms: tuple = ("maxmin-fbr",)
    csi: str = "perfect"
    seeds: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if self.axis != "none" and not self.values:
            raise ValueError("sweep values required for a non-trivial axis")
        if self.axis == "delta":
            for v in self.values:
                if not 0.0 <= float(v) < 1.0:
                    raise ValueError(f"delta value {v} outside [0, 1)")
        if self.axis in ("K", "M"):
            for v in self.values:
                if int(v) < 1:
                    raise ValueError(f"{self.axis} value {v} must be >= 1")
        if self.axis == "t_t":
            for v in self.values:
                if float(v) <= 0.0:
                    raise ValueError(f"t_t value {v} must be positive")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}")
        if not self.algorithms:
            raise ValueError("at least one algorithm required")
        if self.csi not in ("perfect", "robust"):
            raise ValueError(f"unknown csi mode {self.csi!r}")
        if self.seeds < 1:
            raise ValueError("seed count must be >= 1")

    @property
    def axis_values(self) -> tuple:
        return self.values if self.axis != "none" else (0.0,)


@dataclass
class RunRecord:
    """One optimized design, reduced to its reportable numbers.

    Rates are bits/s/Hz and clipped at zero; for robust runs they are
    the certified worst-case floors (the defensible rates), for
    perfect-CSI runs the exact values at the solution.  Wall time
    lives here but never enters the CSV, which stays byte-stable.
    """

    scenario_hash: str
    seed: int
    algorithm: str
    axis: str
    axis_value: float
    min_sr_bps: float
    per_user_srs_bps: tuple
    ssr_bps: float
    jain: float
    iterations: int
    status: str
    wall_time: float = 0.0

    def csv_line(self) -> str:
        per_user = ";".join(_fmt(v) for v in self.per_user_srs_bps)
        return ",".join([
            self.scenario_hash, str(self.seed), self.algorithm, self.axis,
            _fmt(self.axis_value), _fmt(self.min_sr_bps), per_user,
            _fmt(self.ssr_bps), _fmt(self.jain), str(self.iterations),
            self.status])


def _fmt(x) -> str:
    return "%.12g" % float(x)


@dataclass
class RunOutput:
    """Everything a single driver run produced, pre-reduction."""

    record: RunRecord
    metric_series_bps: np.ndarray
    design: dict | None = None    # robust runs: arrays for revalidation


def _algo_flags(algorithm: str) -> tuple[str, bool]:
    objective, _, regime = algorithm.partition("-")
    return ("maxmin" if objective == "maxmin" else "ssr", regime == "fbr")


def run_one(scenario: Scenario, algorithm: str, csi: str,
            channels: ChannelSet, rng_init: np.random.Generator,
            axis: str, axis_value: float, seed: int = 0,
            solver: str = "builtin") -> RunOutput:
    """Execute one driver run and reduce it to a RunOutput.

    Failures never propagate: they come back as a record whose status
    names the exception, so a sweep always completes.
    """
    objective, fbr = _algo_flags(algorithm)
    sh = scenario_hash(scenario)
    start = time.perf_counter()
    try:
        if csi == "perfect":
            trace, state = run_maxmin_perfect(
                scenario, channels, fbr=fbr, rng=rng_init,
                objective=objective, solver=solver)
        else:
            trace, state = run_maxmin_robust(
                scenario, channels, fbr=fbr, rng=rng_init,
                objective=objective, solver=solver)
    except Exception as exc:
        wall = time.perf_counter() - start
        k = scenario.n_users
        record = RunRecord(sh, seed, algorithm, axis,
                           float(axis_value), math.nan, (math.nan,) * k,
                           math.nan, math.nan, 0,
                           f"Failed:{type(exc).__name__}", wall)
        return RunOutput(record, np.array([]))
    wall = time.perf_counter() - start

    xi_u, xi_e = penalty_weights(scenario, fbr)
    if csi == "robust":
        cert = trace.certificate
        per_user = np.maximum(np.asarray(cert.per_user), 0.0)
        design = {
            "W": state.W, "theta": state.theta,
            "l_hat": channels.l_hat, "L_ar": channels.L_ar,
            "corr": channels.corr, "omega": channels.omega,
            "sigma": channels.sigma,
            "user_pos": channels.user_pos, "eve_pos": channels.eve_pos,
            "xi_user": xi_u, "xi_eve": xi_e,
            "certified_min": cert.value_min, "certified_sum": cert.value_sum,
            "objective": objective,
        }
    else:
        from .metrics import secrecy_report
        report = secrecy_report(state, channels.sigma, xi_u, xi_e)
        per_user = report.secrecy_fbr
        design = None

    per_user_bits = tuple(float(v) * NATS_TO_BITS for v in per_user)
    min_bits = min(per_user_bits)
    sum_bits = sum(per_user_bits)
    fair = jain_index(np.asarray(per_user_bits)) \
        if sum_bits > 0.0 else math.nan
    record = RunRecord(sh, seed, algorithm, axis, float(axis_value),
                       min_bits, per_user_bits, sum_bits, fair,
                       trace.iterations, trace.status, wall)
    return RunOutput(record, trace.metric_series() * NATS_TO_BITS, design)


def run_experiment(spec: ExperimentSpec,
                   solver: str = "builtin") -> list[RunOutput]:
    """Run the full sweep: axis values x seeds x algorithms.

    Channels are shared by every algorithm at the same (axis value,
    seed) so comparisons are paired; each run gets its own
    counter-based substream, so the set of records is a pure function
    of the spec.
    """
    outputs: list[RunOutput] = []
    master = spec.base.seed
    for ai, value in enumerate(spec.axis_values):
        scenario = apply_axis(spec.base, spec.axis, value)
        for si in range(spec.seeds):
            rng_ch = np.random.Generator(np.random.Philox(
                np.random.SeedSequence([master, ai, si, 0])))
            channels = generate_channels(scenario, rng_ch)
            for gi, algorithm in enumerate(spec.algorithms):
                rng_init = np.random.Generator(np.random.Philox(
                    np.random.SeedSequence([master, ai, si, 1, gi])))
                out = run_one(scenario, algorithm, spec.csi, channels,
                              rng_init, spec.axis, float(value), si, solver)
                outputs.append(out)
    return outputs


def _sort_key(record: RunRecord):
    return (record.axis_value, record.algorithm, record.seed)


def emit_csv(records: list[RunRecord], path) -> None:
    """Write the record table; schema is CSV_HEADER, sorted, %.12g."""
    if not records:
        raise ValueError("no records to emit")
    lines = [CSV_HEADER]
    for rec in sorted(records, key=_sort_key):
        lines.append(rec.csv_line())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_csv(path) -> list[RunRecord]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"{path}: unrecognized header")
    records = []
    for line in text[1:]:
        (sh, seed, algo, axis, axis_value, min_sr, per_user, ssr, fair,
         iters, status) = line.split(",")
        users = tuple(float(v) for v in per_user.split(";")) \
            if per_user else ()
        records.append(RunRecord(sh, int(seed), algo, axis,
                                 float(axis_value), float(min_sr), users,
                                 float(ssr), float(fair), int(iters),
                                 status))
    return records


def emit_traces(outputs: list[RunOutput], path) -> None:
    """Per-iteration metric table backing the convergence figure."""
    lines = ["scenario_hash,seed,algorithm,axis,axis_value,iteration,"
             "metric_bps"]
    for out in sorted(outputs, key=lambda o: _sort_key(o.record)):
        rec = out.record
        for it, val in enumerate(out.metric_series_bps, 1):
            lines.append(",".join([
                rec.scenario_hash, str(rec.seed), rec.algorithm, rec.axis,
                _fmt(rec.axis_value), str(it), _fmt(val)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_outputs(spec: ExperimentSpec, outputs: list[RunOutput]) -> Path:
    """Persist a finished sweep under the spec's output directory.

    records.csv and traces.csv are the artifacts of record; wall times
    go to a JSON sidecar so the CSVs stay deterministic; robust
    designs are stored as one npz per run for later revalidation.
    """
    if spec.out_dir is None:
        raise ValueError("the experiment spec has no output directory")
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv([o.record for o in outputs], out / "records.csv")
    emit_traces(outputs, out / "traces.csv")
    meta = {
        "wall_times": {
            f"{r.scenario_hash}/{r.axis_value:g}/{r.algorithm}/{r.seed}":
                r.wall_time
            for r in (o.record for o in outputs)},
        "csi": spec.csi,
        "axis": spec.axis,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True),
                                   encoding="utf-8")
    for o in outputs:
        if o.design is not None:
            rec = o.record
            name = (f"robust_{rec.scenario_hash}_{rec.axis_value:g}_"
                    f"{rec.algorithm}_{rec.seed}.npz")
            np.savez(out / name, **o.design)
    return out


def validate_robustness(design_path, n_samples: int = 1000,
                        rng: np.random.Generator | None = None):
    """Replay a stored robust design against sampled in-ball errors.

    Draws n_samples error vectors per node, recomputes the true
    finite-blocklength secrecy for each draw, and checks the worst
    sample against the stored certificate minus a 1e-4 slack.  Returns
    (passed, worst_margin, message); the margin is worst sampled value
    minus certified value (nonnegative when sound).
    """
    from .robust import sample_worst_secrecy

    data = np.load(design_path, allow_pickle=False)
    channels = ChannelSet(
        L_ar=data["L_ar"], l_hat=data["l_hat"], corr=data["corr"],
        omega=data["omega"], sigma=data["sigma"],
        user_pos=data["user_pos"], eve_pos=data["eve_pos"])
    rng = rng if rng is not None else np.random.default_rng(0)
    sampled = sample_worst_secrecy(
        channels, data["W"], data["theta"], float(data["xi_user"]),
        float(data["xi_eve"]), rng, n_samples=n_samples)
    objective = str(data["objective"])
    if objective == "maxmin":
        certified = float(data["certified_min"])
        worst = float(sampled.min())
    else:
        certified = float(data["certified_sum"])
        worst = float(sampled.sum(axis=1).min())
    margin = worst - certified
    passed = margin >= -1.0e-4
    if passed:
        message = (f"ok: worst sampled {worst:.6f} vs certified "
                   f"{certified:.6f} (margin {margin:+.2e})")
    else:
        bad = int(np.argmin(sampled.min(axis=1) if objective == "maxmin"
                            else sampled.sum(axis=1)))
        message = (f"FAIL: sample {bad} gives {worst:.6f} below certified "
                   f"{certified:.6f} by {-margin:.2e}")
    return passed, margin, message


# -- figures -------------------------------------------------------------

FIGURES = ("convergence", "sr-dist", "jain-vs-delta", "minsr-vs-delta",
           "minsr-vs-K", "minsr-vs-tt")


def _median_series(records, value_of):
    """Per-algorithm medians across seeds, keyed by axis value."""
    series: dict = {}
    for rec in records:
        series.setdefault(rec.algorithm, {}) \
            .setdefault(rec.axis_value, []).append(value_of(rec))
    out = {}
    for algo, by_value in sorted(series.items()):
        xs = sorted(by_value)
        ys = [float(np.nanmedian(by_value[x])) for x in xs]
        out[algo] = (xs, ys)
    return out


def emit_plot(records_path, figure: str, out_path) -> None:
    """Render one figure family from a CSV produced by this module.

    The convergence figure reads the traces table; every other figure
    reads the records table.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))

    if figure == "convergence":
        rows = Path(records_path).read_text(encoding="utf-8") \
            .strip().splitlines()
        if rows[0].split(",")[5] != "iteration":
            raise ValueError("convergence needs the traces table "
                             "(traces.csv), not records.csv")
        series: dict = {}
        for line in rows[1:]:
            _, seed, algo, _, _, it, val = line.split(",")
            series.setdefault((algo, int(seed)), []) \
                .append((int(it), float(val)))
        for (algo, seed), pts in sorted(series.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    label=f"{algo} seed {seed}", alpha=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("driver metric (bits/s/Hz)")
    else:
        records = parse_csv(records_path)
        if not records:
            raise ValueError("no records to plot")
        if figure == "sr-dist":
            first_value = sorted({r.axis_value for r in records})[0]
            subset = [r for r in records if r.axis_value == first_value]
            algos = sorted({r.algorithm for r in subset})
            n_users = max(len(r.per_user_srs_bps) for r in subset)
            width = 0.8 / max(len(algos), 1)
            for j, algo in enumerate(algos):
                rows = [r.per_user_srs_bps for r in subset
                        if r.algorithm == algo]
                mean = np.nanmean(np.asarray(rows, dtype=float), axis=0)
                pos = np.arange(n_users) + (j - (len(algos) - 1) / 2) * width
                ax.bar(pos, mean, width=width, label=algo)
            ax.set_xticks(np.arange(n_users))
            ax.set_xticklabels([f"user {k + 1}" for k in range(n_users)])
            ax.set_ylabel("secrecy rate (bits/s/Hz)")
        else:
            value_of = (lambda r: r.jain) if figure == "jain-vs-delta" \
                else (lambda r: r.min_sr_bps)
            for algo, (xs, ys) in _median_series(records, value_of).items():
                ax.plot(xs, ys, marker="o", label=algo)
            ax.set_xlabel(records[0].axis)
            ax.set_ylabel("Jain index" if figure == "jain-vs-delta"
                          else "worst-user secrecy rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
