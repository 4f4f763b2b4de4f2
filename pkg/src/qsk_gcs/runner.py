"""Disorder-ensemble experiments: configuration, task fan-out, persistence, aggregation.

An experiment expands into independent tasks, one per (N, h, realization) for
the QSK modes (the whole g-sweep runs inside one task) and one per (N, draw)
for the matrix-ensemble modes. Each task writes ``tasks/<id>.json``; the
aggregate CSVs are a pure function of those files, reduced in task order, so
they do not depend on worker count or completion order.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .analysis import (
    ENERGY_ERROR_FIELDS,
    ENTROPY_FIT_FIELDS,
    bootstrap_profile_coefficient,
    energy_error_density,
    ensemble_statistics,
    error_density_ratio,
    fit_entropy_profile,
    spin_glass_susceptibility,
    transverse_magnetization,
    write_csv,
)
from .ansatz import site_expectations, zz_correlations
from .disorder import make_rng, mean_level_spacing_ratio, sample_qsk_instance, sample_symmetric_gaussian
from .entropy import ENTROPY_CSV_FIELDS, renyi2_estimate, wgs_sample
from .exact import ED_CAP, exact_site_expectations, exact_zz_correlations, lanczos_ground_state, spectrum_extent
from .optimizer import OptimizerConfig, adiabatic_sweep

__all__ = [
    "MODES",
    "ExperimentConfig",
    "EntropyConfig",
    "RunManifest",
    "ConfigError",
    "validate_config",
    "load_config",
    "plan_tasks",
    "run_experiment",
    "write_reports",
    "load_task_results",
]

log = logging.getLogger(__name__)

MODES = ("energy-benchmark", "sweep", "susceptibility", "entropy-profile", "wgs-ensemble", "level-ratio")
_QSK_MODES = ("energy-benchmark", "sweep", "susceptibility", "entropy-profile")
_SUSCEPTIBILITY_FIELDS = ("N", "g", "h", "method", "chi_mean", "chi_stderr", "count")
_MAGNETIZATION_FIELDS = ("N", "g", "h", "method", "mx_mean", "mx_stderr", "count")
_ENERGY_FIELDS = ("N", "g", "h", "method", "energy_mean", "energy_stderr", "count")
_PHASE_RATIO_FIELDS = ("N", "g", "h", "r_mean", "r_stderr", "count")
_LEVEL_RATIO_FIELDS = ("N", "r_mean", "r_stderr", "count")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class EntropyConfig:
    samples: int = 10_000
    subsystem_sizes: tuple | None = None  # default: 1 .. N // 2
    method: str = "auto"
    bootstrap: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see :func:`validate_config` for the schema."""

    mode: str
    n_list: tuple
    g_values: tuple = ()
    h_list: tuple = (0.0,)
    n_realizations: int = 1
    j_scale: float = 1.0
    ansatze: tuple = ("cs", "gcs")
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    seed: int = 0
    output_dir: str | None = None
    workers: int | None = None
    ed_cap: int = ED_CAP
    store_params: bool = False

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["n_list"] = list(self.n_list)
        doc["g_values"] = list(self.g_values)
        doc["h_list"] = list(self.h_list)
        doc["ansatze"] = list(self.ansatze)
        if self.entropy.subsystem_sizes is not None:
            doc["entropy"]["subsystem_sizes"] = list(self.entropy.subsystem_sizes)
        return doc

    def fingerprint(self) -> str:
        """Hash of everything that affects results (not paths or worker count)."""
        doc = self.to_dict()
        doc.pop("output_dir")
        doc.pop("workers")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def subsystem_sizes(self, n: int) -> list:
        if self.entropy.subsystem_sizes is None:
            return list(range(1, n // 2 + 1))
        return [int(L) for L in self.entropy.subsystem_sizes if 1 <= L <= n - 1]


_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_ENTROPY_KEYS = {f.name for f in dataclasses.fields(EntropyConfig)}


def _fail(msg):
    raise ConfigError(msg)


def _int_list(doc, key):
    vals = doc.get(key)
    if vals is None:
        return None
    if isinstance(vals, (int, float)):
        vals = [vals]
    if not isinstance(vals, list):
        _fail(f"{key} must be a list")
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
        _fail(f"{key} entries must be integers")
    return tuple(vals)


def _float_list(doc, key):
    vals = doc.get(key)
    if vals is None:
        return None
    if isinstance(vals, (int, float)):
        vals = [vals]
    if not isinstance(vals, list):
        _fail(f"{key} must be a list")
    try:
        out = tuple(float(v) for v in vals)
    except (TypeError, ValueError):
        _fail(f"{key} entries must be numbers")
    if not all(np.isfinite(out)):
        _fail(f"{key} entries must be finite")
    return out


def validate_config(raw) -> ExperimentConfig:
    """Parse a JSON document (text or dict), apply defaults and check consistency.

    Required keys: ``mode`` and ``n_list``; ``g_values`` is required for the
    QSK modes. Unknown keys are rejected.
    """
    if isinstance(raw, (str, bytes)):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            _fail(f"config is not valid JSON: {exc}")
    else:
        doc = dict(raw)
    if not isinstance(doc, dict):
        _fail("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        _fail(f"unknown config keys: {sorted(unknown)}; allowed: {sorted(_TOP_KEYS)}")
    mode = doc.get("mode")
    if mode not in MODES:
        _fail(f"mode must be one of {list(MODES)}, got {mode!r}")
    n_list = _int_list(doc, "n_list")
    if not n_list:
        _fail("n_list must be a nonempty list of integers")
    g_values = _float_list(doc, "g_values") or ()
    h_list = _float_list(doc, "h_list")
    if h_list is None:
        h_list = (0.0,)
    if not h_list:
        _fail("h_list must not be empty")
    if any(h < 0 for h in h_list):
        _fail("h_list entries must be >= 0")
    n_real = doc.get("n_realizations", 1)
    if not isinstance(n_real, int) or isinstance(n_real, bool) or n_real < 1:
        _fail(f"n_realizations must be an integer >= 1, got {n_real!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        _fail("seed must be an unsigned 64-bit integer")
    ed_cap = doc.get("ed_cap", ED_CAP)
    if not isinstance(ed_cap, int) or ed_cap < 1:
        _fail("ed_cap must be a positive integer")
    workers = doc.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        _fail("workers must be a positive integer")
    ansatze = tuple(doc.get("ansatze", ("cs", "gcs")))
    if not ansatze or any(a not in ("cs", "gcs") for a in ansatze) or len(set(ansatze)) != len(ansatze):
        _fail("ansatze must be a nonempty subset of ['cs', 'gcs']")
    try:
        opt = OptimizerConfig.from_dict(doc.get("optimizer", {}))
    except (TypeError, ValueError) as exc:
        _fail(f"optimizer: {exc}")
    ent_doc = dict(doc.get("entropy", {}))
    unknown = set(ent_doc) - _ENTROPY_KEYS
    if unknown:
        _fail(f"unknown entropy keys: {sorted(unknown)}")
    if "subsystem_sizes" in ent_doc and ent_doc["subsystem_sizes"] is not None:
        ent_doc["subsystem_sizes"] = _int_list(ent_doc, "subsystem_sizes")
        if not ent_doc["subsystem_sizes"]:
            _fail("entropy.subsystem_sizes must not be empty")
    ent = EntropyConfig(**ent_doc)
    if not isinstance(ent.samples, int) or ent.samples < 1:
        _fail("entropy.samples must be an integer >= 1")
    if ent.method not in ("auto", "exact", "monte_carlo"):
        _fail("entropy.method must be 'auto', 'exact' or 'monte_carlo'")

    minimum = {"wgs-ensemble": 2, "level-ratio": 3}.get(mode, 1)
    if any(n < minimum for n in n_list):
        _fail(f"mode {mode} needs every N >= {minimum}")
    if mode in _QSK_MODES:
        if not g_values:
            _fail(f"mode {mode} needs a nonempty g_values grid")
        if any(g < 0 for g in g_values) or any(b <= a for a, b in zip(g_values, g_values[1:])):
            _fail("g_values must be nonnegative and strictly ascending")
    if mode == "energy-benchmark":
        too_big = [n for n in n_list if n > ed_cap]
        if too_big:
            _fail(f"mode energy-benchmark needs exact diagonalisation, limited to N <= {ed_cap} "
                  f"(ed_cap); got N = {too_big}")
    if mode == "energy-benchmark" and set(ansatze) != {"cs", "gcs"}:
        _fail("energy-benchmark compares both ansatze; leave 'ansatze' at its default")
    if mode == "entropy-profile" and "gcs" not in ansatze:
        _fail("entropy-profile needs the gcs ansatz")
    return ExperimentConfig(
        mode=mode, n_list=n_list, g_values=g_values, h_list=h_list, n_realizations=n_real,
        j_scale=float(doc.get("j_scale", 1.0)), ansatze=ansatze, optimizer=opt, entropy=ent,
        seed=seed, output_dir=doc.get("output_dir"), workers=workers, ed_cap=ed_cap,
        store_params=bool(doc.get("store_params", False)),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return validate_config(fh.read())


# --------------------------------------------------------------------------
# tasks


def plan_tasks(config: ExperimentConfig) -> list[dict]:
    """Deterministic task list.

    Disorder seeds depend on (master seed, N, realization) only, so the same
    couplings are reused across the h values of one experiment.
    """
    tasks = []
    hs = config.h_list if config.mode in _QSK_MODES else (None,)
    for n in config.n_list:
        for r in range(config.n_realizations):
            disorder_seed = int(make_rng(config.seed, n, r).integers(0, 2 ** 63))
            for h in hs:
                idx = len(tasks)
                tid = f"N{n}" + ("" if h is None else f"_h{h:g}") + f"_r{r:04d}"
                tasks.append({"index": idx, "id": tid, "n": n, "h": h, "realization": r,
                              "disorder_seed": disorder_seed,
                              "task_seed": int(make_rng(config.seed, 7, idx).integers(0, 2 ** 63))})
    return tasks


def _sweep_points(inst, results):
    pts = []
    for res in results:
        zz = zz_correlations(res.params)
        mx = site_expectations(res.params, "x")
        pt = {"g": res.g, "energy": res.energy, "converged": res.converged,
              "gradient_norm": res.gradient_norm, "steps": res.steps_taken,
              "chi": spin_glass_susceptibility(zz), "mx": transverse_magnetization(mx)}
        if inst.n >= 3 and np.any(res.params.m):
            pt["m_ratio"] = mean_level_spacing_ratio(res.params.m)
        pts.append(pt)
    return pts


def _run_qsk_task(task: dict, config: ExperimentConfig, checkpoint_dir: str | None) -> dict:
    inst = sample_qsk_instance(task["n"], config.j_scale, task["h"], 0.0, seed=task["disorder_seed"])
    out = {"task": task, "instance": inst.to_dict(), "sweeps": {}}
    want_exact = config.mode == "energy-benchmark" or (
        config.mode == "susceptibility" and inst.n <= config.ed_cap)
    final = {}
    for ansatz in config.ansatze:
        ckpt = None
        if checkpoint_dir:
            ckpt = os.path.join(checkpoint_dir, f"{task['id']}_{ansatz}.json")
        results = adiabatic_sweep(inst, config.g_values, config.optimizer, ansatz=ansatz,
                                  seed=task["task_seed"], checkpoint=ckpt)
        final[ansatz] = results
        pts = _sweep_points(inst, results)
        if config.store_params:
            for pt, res in zip(pts, results):
                pt["params"] = res.params.to_dict()
        out["sweeps"][ansatz] = pts
    if want_exact:
        ed = []
        for g in config.g_values:
            ig = inst.with_transverse_field(g)
            gs = lanczos_ground_state(ig, cap=config.ed_cap)
            ed.append({"g": g, "energy": gs.energy, "extent": spectrum_extent(ig, cap=config.ed_cap),
                       "converged": gs.converged,
                       "chi": spin_glass_susceptibility(exact_zz_correlations(gs.state)),
                       "mx": transverse_magnetization(exact_site_expectations(gs.state, "x"))})
        out["exact"] = ed
    if config.mode == "entropy-profile":
        prof = []
        for g, res in zip(config.g_values, final["gcs"]):
            for L in config.subsystem_sizes(inst.n):
                est = renyi2_estimate(res.params, range(L), config.entropy.samples,
                                      seed=int(make_rng(task["task_seed"], L).integers(0, 2 ** 63)),
                                      method=config.entropy.method)
                prof.append({"g": g, "L": L, "s2": est.s2, "stderr": est.s2_stderr,
                             "samples": est.samples, "reliable": est.reliable})
        out["entropy"] = prof
    return out


def _run_matrix_task(task: dict, config: ExperimentConfig) -> dict:
    out = {"task": task}
    if config.mode == "level-ratio":
        mat = sample_symmetric_gaussian(task["n"], 1.0 / task["n"], seed=task["disorder_seed"])
        out["r"] = mean_level_spacing_ratio(mat)
        return out
    params = wgs_sample(task["n"], seed=task["disorder_seed"])
    prof = []
    for L in config.subsystem_sizes(task["n"]):
        est = renyi2_estimate(params, range(L), config.entropy.samples,
                              seed=int(make_rng(task["task_seed"], L).integers(0, 2 ** 63)),
                              method=config.entropy.method)
        prof.append({"g": None, "L": L, "s2": est.s2, "stderr": est.s2_stderr,
                     "samples": est.samples, "reliable": est.reliable})
    out["entropy"] = prof
    return out


def _execute(task: dict, config_doc: dict, out_dir: str) -> tuple[int, str, str | None]:
    """Worker entry point: run one task and write its JSON file."""
    config = validate_config(config_doc)
    try:
        with threadpool_limits(1):
            if config.mode in _QSK_MODES:
                result = _run_qsk_task(task, config, os.path.join(out_dir, "checkpoints"))
            else:
                result = _run_matrix_task(task, config)
        _atomic_write(os.path.join(out_dir, "tasks", task["id"] + ".json"), json.dumps(result))
        for ansatz in config.ansatze:
            ckpt = os.path.join(out_dir, "checkpoints", f"{task['id']}_{ansatz}.json")
            if os.path.exists(ckpt):
                os.remove(ckpt)
        return task["index"], "done", None
    except Exception:  # recorded in the manifest; the run carries on
        return task["index"], "failed", traceback.format_exc(limit=5)


def _atomic_write(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# manifest and orchestration


@dataclass
class RunManifest:
    config_hash: str
    tasks: list  # dicts: id, index, status, path, error

    @property
    def failed(self) -> list:
        return [t for t in self.tasks if t["status"] == "failed"]

    @property
    def complete(self) -> bool:
        return all(t["status"] == "done" for t in self.tasks)

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "tasks": self.tasks}, indent=1)

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(doc["config_hash"], doc["tasks"])


def default_workers() -> int:
    env = os.environ.get("QSK_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, output_dir: str | None = None, workers: int | None = None,
                   progress=None) -> RunManifest:
    """Run (or resume) every pending task, then write the aggregate CSVs.

    Tasks with an existing result file are never recomputed. An output
    directory holding a different configuration is refused.
    """
    out = output_dir or config.output_dir
    if not out:
        raise ConfigError("no output directory given")
    workers = workers or config.workers or default_workers()
    os.makedirs(os.path.join(out, "tasks"), exist_ok=True)
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    cfg_path = os.path.join(out, "config.json")
    doc = config.to_dict()
    if os.path.exists(cfg_path):
        previous = load_config(cfg_path)
        if previous.fingerprint() != config.fingerprint():
            raise ConfigError(f"{out} holds results of a different configuration")
    else:
        _atomic_write(cfg_path, json.dumps(doc, indent=1, sort_keys=True))
    tasks = plan_tasks(config)
    entries = [{"id": t["id"], "index": t["index"], "status": "pending",
                "path": os.path.join("tasks", t["id"] + ".json"), "error": None} for t in tasks]
    for e in entries:
        if os.path.exists(os.path.join(out, e["path"])):
            e["status"] = "done"
    manifest = RunManifest(config.fingerprint(), entries)
    man_path = os.path.join(out, "manifest.json")
    _atomic_write(man_path, manifest.to_json())
    pending = [t for t, e in zip(tasks, entries) if e["status"] != "done"]
    log.info("%d tasks, %d pending, %d workers", len(tasks), len(pending), workers)

    def record(index, status, error):
        entries[index]["status"] = status
        entries[index]["error"] = error
        _atomic_write(man_path, manifest.to_json())
        if progress:
            progress(entries[index])

    if workers == 1 or len(pending) <= 1:
        for t in pending:
            record(*_execute(t, doc, out))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute, t, doc, out) for t in pending]
            for fut in as_completed(futures):
                record(*fut.result())
    write_reports(out, config)
    return manifest


# --------------------------------------------------------------------------
# aggregation


def load_task_results(output_dir: str, config: ExperimentConfig | None = None) -> list[dict]:
    """Finished task results in task order."""
    config = config or load_config(os.path.join(output_dir, "config.json"))
    results = []
    for t in plan_tasks(config):
        path = os.path.join(output_dir, "tasks", t["id"] + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                results.append(json.load(fh))
    return results


def _group(results, key):
    groups: dict = {}
    for res in results:
        groups.setdefault(key(res), []).append(res)
    return groups


def _stat_row(values):
    s = ensemble_statistics(values)
    return s.mean, s.stderr, s.count


def _qsk_reports(results, config, out):
    chi_rows, mx_rows, e_rows, ratio_rows, err_rows = [], [], [], [], []
    for (n, h), group in sorted(_group(results, lambda r: (r["task"]["n"], r["task"]["h"])).items()):
        methods = list(config.ansatze) + (["ed"] if "exact" in group[0] else [])
        for k, g in enumerate(config.g_values):
            for method in methods:
                pts = [(r["exact"] if method == "ed" else r["sweeps"][method])[k] for r in group]
                base = {"N": n, "g": g, "h": h, "method": method}
                m, se, c = _stat_row([p["chi"] for p in pts])
                chi_rows.append({**base, "chi_mean": m, "chi_stderr": se, "count": c})
                m, se, c = _stat_row([p["mx"] for p in pts])
                mx_rows.append({**base, "mx_mean": m, "mx_stderr": se, "count": c})
                m, se, c = _stat_row([p["energy"] for p in pts])
                e_rows.append({**base, "energy_mean": m, "energy_stderr": se, "count": c})
            if "gcs" in config.ansatze:
                ratios = [r["sweeps"]["gcs"][k]["m_ratio"] for r in group if "m_ratio" in r["sweeps"]["gcs"][k]]
                if ratios:
                    m, se, c = _stat_row(ratios)
                    ratio_rows.append({"N": n, "g": g, "h": h, "r_mean": m, "r_stderr": se, "count": c})
            if "exact" in group[0] and {"cs", "gcs"} <= set(config.ansatze):
                row = {"N": n, "g": g, "h": h}
                for method in ("cs", "gcs"):
                    errs = [energy_error_density(r["sweeps"][method][k]["energy"], r["exact"][k]["energy"],
                                                 r["exact"][k]["extent"]) for r in group]
                    eps, se = error_density_ratio([e.delta for e in errs], [e.extent for e in errs])
                    row[f"eps_{method}"] = eps
                    row[f"eps_{method}_stderr"] = se
                err_rows.append(row)
    write_csv(chi_rows, _SUSCEPTIBILITY_FIELDS, os.path.join(out, "susceptibility.csv"))
    write_csv(mx_rows, _MAGNETIZATION_FIELDS, os.path.join(out, "magnetization.csv"))
    write_csv(e_rows, _ENERGY_FIELDS, os.path.join(out, "energies.csv"))
    if ratio_rows:
        write_csv(ratio_rows, _PHASE_RATIO_FIELDS, os.path.join(out, "phase_level_ratio.csv"))
    if err_rows:
        write_csv(err_rows, ENERGY_ERROR_FIELDS, os.path.join(out, "energy_error.csv"))


def _entropy_reports(results, config, out):
    rows, fits = [], []
    for res in results:
        t = res["task"]
        for p in res["entropy"]:
            rows.append({"N": t["n"], "L": p["L"], "g": p["g"], "h": t["h"],
                         "realization_seed": t["disorder_seed"], "s2": p["s2"], "stderr": p["stderr"],
                         "samples": p["samples"]})
    key = lambda r: (r["task"]["n"], r["task"]["h"])  # noqa: E731
    for (n, h), group in sorted(_group(results, key).items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0)):
        gs = sorted({p["g"] for p in group[0]["entropy"]}, key=lambda g: -1.0 if g is None else g)
        for g in gs:
            Ls = np.array([p["L"] for p in group[0]["entropy"] if p["g"] == g])
            prof = np.array([[p["s2"] for p in r["entropy"] if p["g"] == g] for r in group])
            fit = fit_entropy_profile(Ls, prof.mean(axis=0), n)
            c_se = (bootstrap_profile_coefficient(Ls, prof, n, config.entropy.bootstrap, seed=config.seed)
                    if len(group) > 1 and config.entropy.bootstrap > 1 else float("nan"))
            fits.append({"N": n, "g": "" if g is None else g, "h": "" if h is None else h,
                         "a": fit.a, "b": fit.b, "c": fit.c, "residual": fit.residual, "c_stderr": c_se})
    for r in rows:
        r["g"] = "" if r["g"] is None else r["g"]
        r["h"] = "" if r["h"] is None else r["h"]
    write_csv(rows, ENTROPY_CSV_FIELDS, os.path.join(out, "entropy_profile.csv"))
    write_csv(fits, ENTROPY_FIT_FIELDS, os.path.join(out, "entropy_fit.csv"))


def write_reports(output_dir: str, config: ExperimentConfig | None = None) -> list[str]:
    """Regenerate the aggregate CSVs from the task files; returns the files written."""
    config = config or load_config(os.path.join(output_dir, "config.json"))
    results = load_task_results(output_dir, config)
    if not results:
        return []
    if config.mode in _QSK_MODES:
        _qsk_reports(results, config, output_dir)
    if config.mode in ("entropy-profile", "wgs-ensemble"):
        _entropy_reports(results, config, output_dir)
    if config.mode == "level-ratio":
        rows = []
        for n, group in sorted(_group(results, lambda r: r["task"]["n"]).items()):
            m, se, c = _stat_row([r["r"] for r in group])
            rows.append({"N": n, "r_mean": m, "r_stderr": se, "count": c})
        write_csv(rows, _LEVEL_RATIO_FIELDS, os.path.join(output_dir, "level_ratio.csv"))
    return sorted(f for f in os.listdir(output_dir) if f.endswith(".csv"))
