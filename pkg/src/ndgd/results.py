"""Result persistence: trace CSVs, trajectories and JSON sidecars."""

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from ndgd.config import ExperimentConfig
from ndgd.engine import escape_iteration
from ndgd.experiments import ExperimentResult, Problem
from ndgd.models import RunTrace, TraceRecord, TRACE_FIELDS
from ndgd.topology import write_edge_list, write_mixing_csv


def format_float(value: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(value), ".17g")


def trace_header(m: int) -> list[str]:
    return [*TRACE_FIELDS, *(f"dist_agent_{i}" for i in range(m))]


def trace_filename(trace: RunTrace, repeat: int, suffix: str = "trace") -> str:
    return f"{trace.algorithm.value}_r{repeat:02d}_{suffix}.csv"


def write_trace_csv(trace: RunTrace, path: str | Path, m: int) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        has_distances = bool(trace.records and trace.records[0].distances)
        writer.writerow(trace_header(m) if has_distances else list(TRACE_FIELDS))
        for record in trace.records:
            row = [str(record.k)] + [format_float(getattr(record, f)) for f in TRACE_FIELDS[1:]]
            row += [format_float(d) for d in record.distances]
            writer.writerow(row)
    return path


def read_trace_csv(path: str | Path) -> list[TraceRecord]:
    """Parse a trace CSV back into records."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_fields = len(TRACE_FIELDS)
        records = []
        for row in reader:
            values = dict(zip(header[:n_fields], row[:n_fields]))
            records.append(
                TraceRecord(
                    k=int(values["k"]),
                    consensus_error=float(values["consensus_error"]),
                    grad_q_norm=float(values["grad_q_norm"]),
                    q_value=float(values["q_value"]),
                    grad_sum_norm=float(values["grad_sum_norm"]),
                    lmin_hess_sum=float(values["lmin_hess_sum"]),
                    distances=tuple(float(v) for v in row[n_fields:]),
                )
            )
    return records


def write_trajectory_csv(trace: RunTrace, path: str | Path) -> Path:
    """Agent positions at every recorded iteration, one row per agent."""
    path = Path(path)
    n = trace.positions[0].shape[1] if trace.positions else 0
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "agent", *(f"x_{j}" for j in range(n))])
        for record, blocks in zip(trace.records, trace.positions):
            for agent, row in enumerate(blocks):
                writer.writerow([record.k, agent, *(format_float(v) for v in row)])
    return path


def escape_from_csv(path: str | Path, fraction: float) -> int | None:
    """Escape iteration recomputed from the distance columns of a trace CSV."""
    records = read_trace_csv(path)
    if not records or not records[0].distances:
        return None
    ks = np.array([r.k for r in records])
    dist = np.array([r.distances for r in records])
    hits = np.flatnonzero((dist < fraction * dist[0]).all(axis=1))
    return int(ks[hits[0]]) if hits.size else None


def _run_entry(trace: RunTrace, repeat: int) -> dict[str, Any]:
    return {
        "algorithm": trace.algorithm.value,
        "repeat": repeat,
        "stream": list(trace.stream),
        "alpha": trace.alpha,
        "sigma": trace.sigma,
        "iterations": trace.iterations,
        "stopped_early": trace.stopped_early,
        "q_stationary_hit": trace.q_stationary_hit,
        "escape_half": escape_iteration(trace, 0.5),
        "escape_tenth": escape_iteration(trace, 0.1),
        "trace_digest": trace.digest(),
        "rng_digest": trace.rng_digest,
    }


def build_metadata(config: ExperimentConfig, problem: Problem, result: ExperimentResult | None = None) -> dict[str, Any]:
    """Everything needed to reproduce and audit a run, and nothing time-dependent."""
    minimizers = problem.obj.minimizers
    constants = problem.constants
    data: dict[str, Any] = {
        "config": config.echo(),
        "seed": config.experiment.seed,
        "rng": "numpy Philox, SeedSequence([seed, algorithm index, repeat])",
        "graph": {"m": problem.graph.m, "edges": [list(e) for e in problem.graph.sorted_edges()]},
        "mixing": {"lambda_min": problem.w.lambda_min, "lambda_2": problem.w.lambda_2},
        "objective": problem.obj.describe(),
        "constants": {
            "grad_lipschitz": constants.grad_lipschitz,
            "hess_lipschitz": constants.hess_lipschitz,
            "disagreement": constants.disagreement,
            "f_star_sum": constants.f_star_sum,
            "box": [list(constants.domain_box.lower), list(constants.domain_box.upper)],
        },
        "minimizers": minimizers.tolist() if minimizers is not None else None,
        "step": {"alpha": problem.params.alpha, "sigma": problem.params.sigma},
        "schedule": problem.schedule.as_dict() if problem.schedule is not None else None,
        "runs": [],
    }
    if result is not None:
        for traces in result.traces.values():
            data["runs"].extend(_run_entry(t, r) for r, t in enumerate(traces))
    return data


def write_json(data: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def save_experiment(
    config: ExperimentConfig,
    result: ExperimentResult,
    elapsed: float | None = None,
) -> list[Path]:
    """Write traces, trajectories, network files and sidecars to the output directory."""
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    problem = result.problem
    written = []
    for traces in result.traces.values():
        for repeat, trace in enumerate(traces):
            written.append(write_trace_csv(trace, out / trace_filename(trace, repeat), problem.m))
            written.append(write_trajectory_csv(trace, out / trace_filename(trace, repeat, "trajectory")))

    write_edge_list(problem.graph, out / "graph.txt")
    write_mixing_csv(problem.w, out / "mixing.csv")
    written += [out / "graph.txt", out / "mixing.csv"]
    written.append(write_json(build_metadata(config, problem, result), out / "metadata.json"))
    if elapsed is not None:
        written.append(write_json({"wall_seconds": elapsed}, out / "timing.json"))
    return written


def save_partial_trace(config: ExperimentConfig, trace: RunTrace, m: int) -> Path:
    """Persist the finite prefix of a diverged run."""
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return write_trace_csv(trace, out / f"{trace.algorithm.value}_diverged_trace.csv", m)


def load_metadata(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def column(records: list[TraceRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)
