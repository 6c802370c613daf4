"""Preference-vector sweeps.

A :class:`SweepPlan` expands into preference vectors and per-run seeds. Each
run is an independent job; jobs execute in a bounded process pool and their
results enter the archive in plan order, so the archive does not depend on
scheduling. A JSON manifest records every run and lets an interrupted sweep
resume without repeating finished runs.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DomainError
from ..moo import ParetoArchive, ScalarizationConfig, check_preference

log = logging.getLogger(__name__)

K0_GRID = (0.0, 1e-1, 1e-2, 1e-3, 1e-4)
# solver-accuracy threshold below which an analytic coordinate counts as zero
ZERO_TOL = 1e-6


def simplex_samples(m, n, include_boundary=False):
    """``n`` evenly spread points of the ``m``-simplex.

    For ``m = 2`` these are ``(j / (n + 1), 1 - j / (n + 1))`` for
    ``j = 1..n`` (or ``n`` points from ``0`` to ``1`` with the boundary). For
    larger ``m`` a simplex lattice with the smallest resolution holding at
    least ``n`` admissible points is thinned evenly by index.
    """
    if m < 1 or n < 1:
        raise DomainError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        k1 = np.linspace(0.0, 1.0, n) if include_boundary else np.arange(1, n + 1) / (n + 1)
        if include_boundary and n == 1:
            k1 = np.array([0.5])
        return np.column_stack([k1, 1.0 - k1])
    for h in itertools.count(m if not include_boundary else 1):
        pts = [c for c in itertools.product(range(h + 1), repeat=m - 1) if sum(c) <= h]
        lattice = np.array([[*c, h - sum(c)] for c in pts], dtype=np.float64) / h
        if not include_boundary:
            lattice = lattice[np.all(lattice > 0, axis=1)]
        if lattice.shape[0] >= n:
            idx = np.round(np.linspace(0, lattice.shape[0] - 1, n)).astype(int)
            return lattice[idx]


@dataclass(frozen=True)
class SweepPlan:
    """Preference vectors of a sweep.

    With a nonempty ``k0_grid`` every vector is ``(k0, (1 - k0) * s)`` where
    ``s`` runs over ``per_k0`` simplex samples for the ``n_tasks`` task
    objectives. With an empty grid the vectors are simplex samples over
    ``n_tasks`` objectives directly (boundary included).
    """

    k0_grid: tuple = K0_GRID
    per_k0: int = 18
    n_tasks: int = 2
    reference: tuple | None = None
    epsilon_disturbance: float = 1e-4
    archive_epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "k0_grid", tuple(float(v) for v in self.k0_grid))
        if self.reference is not None:
            object.__setattr__(self, "reference", tuple(float(v) for v in self.reference))
        if self.per_k0 < 1 or self.n_tasks < 1:
            raise DomainError("per_k0 and n_tasks must be >= 1")
        if any(not 0 <= v < 1 for v in self.k0_grid):
            raise DomainError(f"k0 values must lie in [0, 1), got {self.k0_grid}")
        if self.archive_epsilon < 0:
            raise DomainError("archive_epsilon must be >= 0")

    @property
    def n_objectives(self):
        return self.n_tasks + (1 if self.k0_grid else 0)

    def preferences(self):
        if not self.k0_grid:
            K = simplex_samples(self.n_tasks, self.per_k0, include_boundary=True)
        else:
            rest = simplex_samples(self.n_tasks, self.per_k0)
            K = np.vstack([np.column_stack([np.full(rest.shape[0], k0), (1 - k0) * rest])
                           for k0 in self.k0_grid])
        # absorb rounding in the last component so k0 keeps its exact grid value
        K[:, -1] = 1.0 - K[:, :-1].sum(axis=1)
        for k in K:
            check_preference(k)
        return K

    def seeds(self):
        """One independent 32-bit seed per preference vector."""
        n = self.preferences().shape[0]
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [int(c.generate_state(1)[0]) for c in children]

    def scalarization(self, k):
        ref = np.zeros(len(k)) if self.reference is None else np.asarray(self.reference)
        return ScalarizationConfig(preference=np.asarray(k), reference=ref,
                                   epsilon_disturbance=self.epsilon_disturbance)

    def to_json(self):
        d = asdict(self)
        d["k0_grid"] = list(self.k0_grid)
        d["reference"] = None if self.reference is None else list(self.reference)
        return d

    @classmethod
    def from_json(cls, data):
        return cls(**data)


@dataclass
class JobResult:
    objectives: list
    metrics: dict = field(default_factory=dict)
    checkpoint: str | None = None


@dataclass
class RunRecord:
    index: int
    preference: list
    seed: int
    status: str
    objectives: list | None = None
    metrics: dict = field(default_factory=dict)
    checkpoint: str | None = None
    error: str | None = None

    def to_json(self):
        return asdict(self)


@dataclass
class SweepResult:
    plan: SweepPlan
    archive: ParetoArchive
    records: list

    @property
    def failures(self):
        return [r for r in self.records if r.status != "ok"]


def _run_one(job, index, k, seed):
    try:
        res = job(np.asarray(k), seed)
        objectives = [float(v) for v in res.objectives]
        if not np.all(np.isfinite(objectives)):
            raise ArithmeticError("non-finite objective vector")
        return RunRecord(index, list(map(float, k)), seed, "ok", objectives, res.metrics,
                         res.checkpoint)
    except Exception as exc:  # a failed run is recorded and the sweep goes on
        return RunRecord(index, list(map(float, k)), seed, "failed", error=f"{type(exc).__name__}: {exc}")


def _load_manifest(path, plan, context=None):
    if path is None or not os.path.exists(path):
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if data.get("plan") != plan.to_json() or (data.get("extra") or {}) != (context or {}):
        raise DomainError(f"manifest {path} belongs to a different sweep; use a fresh output directory")
    return {r["index"]: RunRecord(**r) for r in data.get("runs", []) if r["status"] == "ok"}


def write_manifest(path, plan, records, extra=None):
    data = {"plan": plan.to_json(), "runs": [r.to_json() for r in records], "extra": extra or {}}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def resolve_jobs(jobs=None):
    """Worker count: explicit value, else ``PARETO_FORGE_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get("PARETO_FORGE_JOBS")
        if env:
            try:
                jobs = int(env)
            except ValueError as exc:
                raise DomainError(f"PARETO_FORGE_JOBS must be an integer, got {env!r}") from exc
        else:
            jobs = 1
    if jobs < 1:
        raise DomainError(f"jobs must be >= 1, got {jobs}")
    return jobs


def sweep(plan: SweepPlan, job, jobs=None, manifest=None, context=None):
    """Run ``job(k, seed)`` for every preference vector of ``plan``.

    Args:
        plan: the sweep plan.
        job: picklable callable returning a :class:`JobResult`.
        jobs: worker processes (see :func:`resolve_jobs`).
        manifest: optional manifest path; finished runs found there are
            reused, and the file is rewritten after every completed run.
        context: JSON-serializable description of the job settings stored in
            the manifest; resuming with a different context is refused.

    Returns:
        A :class:`SweepResult`; its archive holds the ε-nondominated subset
        of the successful runs.
    """
    jobs = resolve_jobs(jobs)
    K = plan.preferences()
    seeds = plan.seeds()
    context = json.loads(json.dumps(context or {}))
    done = _load_manifest(manifest, plan, context)
    todo = [i for i in range(len(K)) if i not in done]
    records = dict(done)
    if jobs == 1 or len(todo) <= 1:
        for i in todo:
            records[i] = _run_one(job, i, K[i], seeds[i])
            if manifest:
                write_manifest(manifest, plan, [records[j] for j in sorted(records)], context)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(i, pool.submit(_run_one, job, i, K[i], seeds[i])) for i in todo]
            for i, fut in futures:
                records[i] = fut.result()
                if manifest:
                    write_manifest(manifest, plan, [records[j] for j in sorted(records)], context)
    ordered = [records[i] for i in range(len(K))]
    for r in ordered:
        if r.status != "ok":
            log.warning("run %d (k=%s) failed: %s", r.index, r.preference, r.error)
    archive = ParetoArchive(epsilon=plan.archive_epsilon)
    for r in ordered:
        if r.status == "ok":
            archive.add(r.preference, r.objectives, r.metrics, r.checkpoint)
    if manifest:
        write_manifest(manifest, plan, ordered, context)
    return SweepResult(plan, archive, ordered)


# -------------------------------------------------------------------- jobs


@dataclass(frozen=True)
class AnalyticJob:
    """Solve one scalarization of a catalogued analytic problem."""

    problem: str
    method: str = "chebyshev"
    budget: int | None = None
    reference: tuple | None = None
    epsilon_disturbance: float = 1e-4
    problem_kwargs: tuple = ()
    solver_kwargs: tuple = ()

    def __call__(self, k, seed):
        from .problems import get_problem
        from .solvers import solve_chebyshev, solve_weighted_sum

        prob = get_problem(self.problem, **dict(self.problem_kwargs))
        if self.method == "chebyshev":
            res = solve_chebyshev(prob, k, self.reference, eps=self.epsilon_disturbance, seed=seed,
                                  **dict(self.solver_kwargs))
            metrics = {"converged": bool(res.converged), "max_H": float(np.max(res.H)),
                       "outer_iterations": res.outer_iterations}
        elif self.method == "weighted_sum":
            res = solve_weighted_sum(prob, k, self.budget or 1, seed=seed)
            metrics = {"inner_solves": res.inner_solves}
        else:
            raise DomainError(f"unknown method {self.method!r}")
        if hasattr(prob, "theta"):
            # sparsity rate of an OWL-regularized solution: its share of zero coordinates
            metrics["sr"] = float(np.mean(np.abs(res.x) <= ZERO_TOL * max(1.0, np.max(np.abs(res.x)))))
        f = prob.true_objectives(res.x) if hasattr(prob, "true_objectives") else res.objectives
        return JobResult(objectives=list(map(float, f)), metrics=metrics)


@dataclass(frozen=True)
class ModelJob:
    """Train one sparse multi-task model for a preference vector.

    Writes ``run_<seed>.ckpt`` and ``run_<seed>.log.csv`` into ``out_dir``
    when it is set; the archive objectives are the test-set objective vector
    ``(L0, L1, ..., Lm)``.
    """

    dataset: object
    spec: object
    train: object
    out_dir: str | None = None

    def __call__(self, k, seed):
        from dataclasses import replace

        from ..checkpoint import save_checkpoint
        from ..net import MultiTaskNet
        from ..trainer import train
        from .dataset import make_dataset

        data = make_dataset(self.dataset)
        net = MultiTaskNet(self.spec)
        scal = ScalarizationConfig(preference=np.asarray(k), reference=np.zeros(len(k)))
        result = train(net, data, replace(self.train, seed=int(seed)), scal)
        metrics = result.metrics.to_json()
        path = None
        if self.out_dir:
            path = os.path.join(self.out_dir, f"run_{seed}.ckpt")
            save_checkpoint(path, self.spec, result.params, metrics,
                            {"preference": list(map(float, k)), "seed": int(seed)})
            result.log.write(os.path.join(self.out_dir, f"run_{seed}.log.csv"))
        return JobResult(objectives=list(map(float, result.objectives)), metrics=metrics,
                         checkpoint=path)
