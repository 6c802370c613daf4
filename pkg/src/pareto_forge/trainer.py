"""Two-phase sparse multi-task training.

Phase 1 minimizes the augmented Lagrangian of the modified Chebyshev problem
with Adam and applies the GrOWL prox plus row thresholding after every epoch.
The best checkpoint that is sparse enough is kept. Rows of every regularized
layer of that checkpoint are then clustered. Phase 2 retrains the surviving
rows from the checkpoint, tying each cluster to its mean after every epoch.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import cluster, growl
from .errors import DomainError, NumericError
from .moo import (
    ALState,
    MultiplierSchedule,
    ScalarizationConfig,
    al_update,
    check_reference,
    wc_constraints,
    wc_weighted_deviations,
)
from .net import Adam, MultiTaskNet, ParamStore, accuracies, make_optimizer, scalarized_objective, task_losses

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of both training phases.

    Attributes:
        M1, M2: outer iterations of phase 1 and phase 2.
        s: epochs per outer iteration.
        lr1, lr1_factor: phase-1 learning rate and its per-iteration factor.
        lr2, lr2_factor: the same for phase 2.
        mu0, mu_factor: initial penalty coefficient and its per-iteration factor.
        eta1: minimal model sparsity for a phase-1 checkpoint.
        eta2: maximal zero-row fraction of any regularized layer.
        tau: row-norm threshold.
        beta1, beta2: GrOWL spike pattern parameters.
        prox_step: prox step size; ``None`` uses the current learning rate.
        cluster_preference: affinity propagation preference.
        batch_size: minibatch size.
        optimizer: ``"adam"`` or ``"sgd"``.
        momentum: SGD momentum.
        literal_al: use the literal multiplier form of the Lagrangian.
        seed: seed for initialization and minibatch order.
    """

    M1: int = 3
    M2: int = 5
    s: int = 10
    lr1: float = 2.5e-3
    lr1_factor: float = 0.8
    lr2: float = 2.5e-3
    lr2_factor: float = 0.5
    mu0: float = 2.5e-5
    mu_factor: float = 0.5
    eta1: float = 0.3
    eta2: float = 0.8
    tau: float = 1e-3
    beta1: float = 4.0
    beta2: float = 4.0
    prox_step: float | None = None
    cluster_preference: float = 0.7
    batch_size: int = 64
    optimizer: str = "adam"
    momentum: float = 0.9
    literal_al: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.M1, self.M2, self.s) < 1:
            raise DomainError(f"M1, M2 and s must be >= 1, got {self.M1}, {self.M2}, {self.s}")
        growl.SparsityBudget(self.tau, self.eta1, self.eta2)
        if not (self.lr1 > 0 and self.lr2 > 0):
            raise DomainError("learning rates must be > 0")
        if not (self.lr1_factor > 0 and self.lr2_factor > 0):
            raise DomainError("learning-rate factors must be > 0")
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise DomainError("beta1 and beta2 must be > 0")
        if self.prox_step is not None and not self.prox_step > 0:
            raise DomainError(f"prox_step must be > 0, got {self.prox_step}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")
        MultiplierSchedule(self.mu_factor)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown training keys: {sorted(unknown)}")
        return cls(**data)


# Published settings for the two image benchmarks, kept for reference runs,
# and the desk-scale setting (the TrainConfig defaults) tuned for the
# synthetic two-task data.
PROFILES = {
    "multimnist": dict(M1=3, M2=10, s=3, lr1=2.5e-3, lr1_factor=0.5, lr2=2.5e-3, lr2_factor=0.5,
                       mu0=2.5e-5, mu_factor=0.5, eta1=0.2, eta2=0.8, cluster_preference=0.7),
    "cifar10mnist": dict(M1=3, M2=10, s=3, lr1=1e-4, lr1_factor=0.98, lr2=1e-4, lr2_factor=0.98,
                         mu0=1e-4, mu_factor=0.5, eta1=0.1, eta2=0.3, cluster_preference=0.8),
    "desk": {},
}


def profile(name, **overrides):
    if name not in PROFILES:
        raise DomainError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return TrainConfig(**{**PROFILES[name], **overrides})


# ------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class MetricsRecord:
    """Compression metrics and accuracies of one model."""

    sr: float
    cr: float
    ps: float
    task_accuracy: tuple = ()
    avg_accuracy: float = float("nan")
    n_total: int = 0
    n_zero: int = 0
    n_unique: int = 0

    def to_json(self):
        d = asdict(self)
        d["task_accuracy"] = list(self.task_accuracy)
        # JSON has no inf/nan: an all-zero model reports CR as null
        for key in ("cr", "avg_accuracy"):
            if not np.isfinite(d[key]):
                d[key] = None
        return d


def count_parameters(params: ParamStore):
    """``(total, zero, unique)`` parameter counts.

    A nonzero weight is unique unless an identical row appears earlier in the
    same weight matrix (tied rows are stored once). Biases and fusion weights
    are never tied; their nonzero entries are all unique.
    """
    total = len(params)
    zero = int(np.count_nonzero(params.flat == 0))
    unique = 0
    for p in params.infos:
        arr = params[p.name]
        if arr.ndim == 2:
            rows = np.unique(arr.view(np.uint64) if arr.flags.c_contiguous else arr.copy().view(np.uint64),
                             axis=0)
            unique += int(np.count_nonzero(rows.view(np.float64)))
        else:
            unique += int(np.count_nonzero(arr))
    return total, zero, unique


def metrics_from_counts(total, zero, unique, task_accuracy=()):
    """SR, CR and PS from raw counts.

    A model with no nonzero parameter has no unique values; it reports
    ``PS = 1`` and ``CR = inf`` rather than dividing by zero.
    """
    if total < 1 or not 0 <= zero <= total or not 0 <= unique <= total - zero:
        raise DomainError(f"inconsistent counts total={total} zero={zero} unique={unique}")
    nonzero = total - zero
    sr = zero / total
    if unique == 0:
        ps, cr = 1.0, float("inf")
    else:
        ps = nonzero / unique
        cr = total / unique
    acc = tuple(float(a) for a in task_accuracy)
    avg = float(np.mean(acc)) if acc else float("nan")
    return MetricsRecord(sr, cr, ps, acc, avg, int(total), int(zero), int(unique))


def compute_metrics(params: ParamStore, task_accuracy=()):
    return metrics_from_counts(*count_parameters(params), task_accuracy=task_accuracy)


def evaluate(net: MultiTaskNet, params: ParamStore, split, batch_size=1024):
    """Per-task accuracy and per-task mean loss on a labeled split."""
    if len(split) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    correct = np.zeros(net.spec.n_tasks)
    loss = np.zeros(net.spec.n_tasks)
    for X, labels in split.batches(batch_size):
        logits = net.forward(params, X)
        correct += accuracies(logits, labels) * X.shape[0]
        loss += task_losses(logits, labels) * X.shape[0]
    return correct / len(split), loss / len(split)


# ------------------------------------------------------------------ training


def cap_zero_rows(before, after, eta2, name="layer"):
    """Undo the zeroing of rows in ``after`` that pushes sparsity above ``eta2``.

    Rows that were nonzero in ``before`` but are zero in ``after`` are
    restored to their ``before`` values, largest norm first, until at most
    ``floor(eta2 * rows)`` rows are zero. Rows already zero in ``before`` stay
    zero.
    """
    n = after.shape[0]
    allowed = int(np.floor(eta2 * n + 1e-9))
    zero_after = ~np.any(after != 0, axis=1)
    if zero_after.all() and allowed >= n:
        raise DomainError(f"layer {name}: every row pruned; eta2={eta2} allows an empty layer")
    excess = int(zero_after.sum()) - allowed
    if excess <= 0:
        return after
    norms = growl.row_norms(before)
    candidates = np.flatnonzero(zero_after & (norms > 0))
    if candidates.size < excess:
        raise DomainError(f"layer {name}: more than eta2={eta2} of the rows were already zero")
    keep = candidates[np.argsort(-norms[candidates], kind="stable")[:excess]]
    out = after.copy()
    out[keep] = before[keep]
    return out


LOG_FIELDS = ("phase", "iteration", "epoch")


@dataclass
class RunLog:
    """Per-epoch training record, written as CSV."""

    n_objectives: int
    n_tasks: int
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        return (list(LOG_FIELDS) + [f"L{i}" for i in range(self.n_objectives)]
                + ["t", "max_H", "mu", "SR"] + [f"val_acc{i + 1}" for i in range(self.n_tasks)])

    def append(self, phase, iteration, epoch, L, t, max_H, mu, sr, val_acc):
        self.rows.append([phase, iteration, epoch, *map(float, L), float(t), float(max_H),
                          float(mu), float(sr), *map(float, val_acc)])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([v if isinstance(v, (int, str)) else repr(v) for v in row])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())


@dataclass
class Phase1Result:
    params: ParamStore
    clusters: dict
    saved: bool
    best_val_accuracy: float
    state: ALState


@dataclass
class TrainResult:
    params: ParamStore
    metrics: MetricsRecord
    objectives: np.ndarray
    clusters: dict
    phase1_saved: bool
    log: RunLog


class Trainer:
    """Runs both phases for one preference vector.

    Args:
        net: the architecture.
        data: a dataset with ``train``/``val``/``test`` splits.
        cfg: training hyperparameters.
        scal: preference vector ``(k0, k1, ..., km)`` and reference point;
            objective 0 is the GrOWL penalty.
    """

    def __init__(self, net: MultiTaskNet, data, cfg: TrainConfig, scal: ScalarizationConfig):
        if scal.n_objectives != net.spec.n_tasks + 1:
            raise DomainError(
                f"preference has {scal.n_objectives} entries; expected {net.spec.n_tasks + 1} "
                "(GrOWL plus one per task)"
            )
        self.net = net
        self.data = data
        self.cfg = cfg
        self.scal = scal
        self.rng = np.random.default_rng(cfg.seed)
        self.k0 = float(scal.preference[0])
        self.log = RunLog(scal.n_objectives, net.spec.n_tasks)

    # -- helpers ---------------------------------------------------------------

    def thetas(self, params):
        return {name: growl.growl_spike(self.cfg.beta1, self.cfg.beta2, params[name].shape[0])
                for name in params.growl_names()}

    def objectives(self, params, thetas, split=None):
        """Objective vector ``(L0, L1, ..., Lm)`` on a split (training by default)."""
        split = self.data.train if split is None else split
        _, losses = evaluate(self.net, params, split)
        L0 = growl.growl_total([(params[n], th) for n, th in thetas.items()])
        L = np.concatenate([[L0], losses])
        if not np.all(np.isfinite(L)):
            raise NumericError(f"objective vector diverged: {L.tolist()}")
        return L

    def _start_iteration(self, params, thetas, state):
        L = self.objectives(params, thetas)
        check_reference(L, self.scal.reference)
        t = float(np.max(wc_weighted_deviations(L, self.scal)))
        return replace(state, t=t), L

    def _epoch(self, params, z, thetas, state, opt, mask=None):
        """One pass of optimizer steps.

        Returns the mean weight of ``L0`` in the loss gradient and, per
        regularized layer, the prox step accumulated over the epoch.
        """
        t_slot = z[-1:]
        weights = []
        steps = dict.fromkeys(thetas, 0.0)
        for X, labels in self.data.train.batches(self.cfg.batch_size, self.rng):
            st = replace(state, t=float(t_slot[0]))
            T = scalarized_objective(self.net, params, st.t, X, labels, self.scal, st, thetas,
                                     growl_grad=False, literal=self.cfg.literal_al)
            g = np.concatenate([T.grad.flat, [T.grad_t]])
            if mask is not None:
                g[:-1][mask] = 0.0
            opt.step(z, g)
            if mask is not None:
                z[:-1][mask] = 0.0
            weights.append(T.dL[0])
            for name in steps:
                steps[name] += self._effective_step(params, name, opt)
        return (float(np.mean(weights)) if weights else 0.0), steps

    def _effective_step(self, params, name, opt):
        """Step size the last optimizer update applied to one layer.

        Adam moves a coordinate by ``lr / (sqrt(v_hat) + eps)`` per unit of
        (averaged) gradient; the layer mean of that factor is the step the
        prox uses, so the nonsmooth part of the penalty advances at the same
        rate as the rest of the loss. SGD uses its learning rate directly.
        """
        lr = self.cfg.prox_step if self.cfg.prox_step is not None else opt.lr
        if not isinstance(opt, Adam) or opt.v is None:
            return lr
        v_hat = opt.v[params.slice_of(name)] / (1 - opt.beta2 ** opt.steps)
        return lr / float(np.mean(np.sqrt(v_hat) + opt.eps))

    def _growl_step(self, params, thetas, weight, steps):
        """Prox and row threshold on every regularized layer, honouring eta2.

        When a layer would end up with more than ``eta2`` of its rows at zero,
        the rows with the largest norms before this step are restored
        unchanged until the cap holds again.
        """
        for name, theta in thetas.items():
            W = params[name]
            proposal = W
            if weight > 0 and steps[name] > 0:
                proposal = growl.prox_growl(W, weight * theta, steps[name])
            proposal, _ = growl.threshold_rows(proposal, self.cfg.tau)
            params[name] = cap_zero_rows(W, proposal, self.cfg.eta2, name)

    def _record(self, phase, it, epoch, params, thetas, state, t):
        acc, _ = evaluate(self.net, params, self.data.val)
        L = self.objectives(params, thetas)
        H = wc_constraints(L, t, self.scal)
        sr = compute_metrics(params).sr
        self.log.append(phase, it, epoch, L, t, np.max(H), state.mu, sr, acc)
        return acc, sr

    # -- phases ----------------------------------------------------------------

    def init_params(self):
        probe = self.data.train.X[:min(len(self.data.train), 512)]
        return self.net.lsuv_init(probe, seed=self.cfg.seed)

    def phase1(self, params=None):
        cfg = self.cfg
        params = self.init_params() if params is None else params
        z = np.concatenate([params.flat, [0.0]])
        params = ParamStore(params.infos, z[:-1])
        thetas = self.thetas(params)
        state = ALState.initial(self.scal.n_objectives, cfg.mu0)
        schedule = MultiplierSchedule(cfg.mu_factor)
        opt = make_optimizer(cfg.optimizer, cfg.lr1, cfg.momentum)
        best_acc, best = -np.inf, None
        for it in range(cfg.M1):
            opt.lr = cfg.lr1 * cfg.lr1_factor ** it
            state, _ = self._start_iteration(params, thetas, state)
            z[-1] = state.t
            for epoch in range(cfg.s):
                weight, steps = self._epoch(params, z, thetas, state, opt)
                if self.k0 > 0:
                    self._growl_step(params, thetas, weight, steps)
                acc, sr = self._record(1, it, epoch, params, thetas, state, z[-1])
                avg = float(np.mean(acc))
                if avg > best_acc and (sr >= cfg.eta1 or self.k0 == 0):
                    best_acc, best = avg, params.copy()
            L = self.objectives(params, thetas)
            state = al_update(wc_constraints(L, z[-1], self.scal), replace(state, t=float(z[-1])),
                              schedule)
        saved = best is not None
        if not saved:
            log.info("no phase-1 checkpoint met the save criterion; using the last model")
            best = params.copy()
        clusters = {}
        if self.k0 > 0:
            for name in thetas:
                if np.any(best[name]):
                    clusters[name] = cluster.cluster_layer(best[name], cfg.cluster_preference)
        else:
            clusters = {name: cluster.ClusterAssignment.singletons(best[name]) for name in thetas}
        return Phase1Result(best, clusters, saved, best_acc, state)

    def phase2(self, p1: Phase1Result):
        cfg = self.cfg
        z = np.concatenate([p1.params.flat, [0.0]])
        params = ParamStore(p1.params.infos, z[:-1])
        thetas = self.thetas(params)
        mask = np.zeros(len(params), dtype=bool)
        for name in thetas:
            pruned = growl.zero_rows(params[name])
            if pruned.size:
                sl = params.slice_of(name)
                block = mask[sl].reshape(params[name].shape)
                block[pruned] = True
        for name, assignment in p1.clusters.items():
            if assignment.labels.shape != (params[name].shape[0],):
                raise DomainError(f"cluster labels do not match the rows of layer {name}")
        state = ALState.initial(self.scal.n_objectives, cfg.mu0)
        schedule = MultiplierSchedule(cfg.mu_factor)
        opt = make_optimizer(cfg.optimizer, cfg.lr2, cfg.momentum)
        for it in range(cfg.M2):
            opt.lr = cfg.lr2 * cfg.lr2_factor ** it
            state, _ = self._start_iteration(params, thetas, state)
            z[-1] = state.t
            for epoch in range(cfg.s):
                self._epoch(params, z, thetas, state, opt, mask=mask)
                for name, assignment in p1.clusters.items():
                    params[name] = cluster.tie_clusters(params[name], assignment)
                self._record(2, it, epoch, params, thetas, state, z[-1])
            L = self.objectives(params, thetas)
            state = al_update(wc_constraints(L, z[-1], self.scal), replace(state, t=float(z[-1])),
                              schedule)
        return params

    def run(self):
        p1 = self.phase1()
        params = self.phase2(p1).copy()
        acc, _ = evaluate(self.net, params, self.data.test)
        objectives = self.objectives(params, self.thetas(params), self.data.test)
        return TrainResult(params, compute_metrics(params, acc), objectives, p1.clusters,
                           p1.saved, self.log)


def train(net, data, cfg: TrainConfig, scal: ScalarizationConfig):
    """Run both phases and return a :class:`TrainResult`."""
    return Trainer(net, data, cfg, scal).run()


def train_phase1(net, data, cfg, scal):
    return Trainer(net, data, cfg, scal).phase1()


def train_phase2(net, data, cfg, scal, phase1_result):
    return Trainer(net, data, cfg, scal).phase2(phase1_result)
