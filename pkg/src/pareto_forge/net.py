"""Dense multi-task networks with hand-written backpropagation.

Two architectures share one parameter layout scheme:

* ``hps``: a shared trunk followed by one output network per task.
* ``mdmtn``: the same plus a small monitor network per task; the input of
  output network ``i`` is ``alpha1_i * S(u) + alpha2_i * M_i(u)``.

Weights are stored ``(fan_in, fan_out)`` so a layer's rows are the neurons of
the previous layer, which is the grouping GrOWL regularizes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import growl
from .errors import DomainError, NumericError
from .moo import ALState, ScalarizationConfig, al_loss, al_loss_grad_H, wc_constraints, wc_jacobian

ROLES = ("input", "shared", "monitor", "output", "fusion")


@dataclass(frozen=True)
class MTLSpec:
    """Architecture description.

    Attributes:
        kind: ``"mdmtn"`` or ``"hps"``.
        n_inputs: input feature count.
        n_classes: class count per task.
        shared: hidden widths of the shared trunk.
        monitors: hidden widths of each task monitor (at most two layers;
            the last width must equal the trunk output width). Ignored for
            ``hps``.
        heads: hidden widths of each task output network before its final
            classification layer.
    """

    kind: str = "mdmtn"
    n_inputs: int = 20
    n_classes: tuple = (4, 4)
    shared: tuple = (64, 32)
    monitors: tuple = (32, 32)
    heads: tuple = (16,)

    def __post_init__(self):
        object.__setattr__(self, "n_classes", tuple(int(c) for c in self.n_classes))
        object.__setattr__(self, "shared", tuple(int(w) for w in self.shared))
        object.__setattr__(self, "monitors", tuple(int(w) for w in self.monitors))
        object.__setattr__(self, "heads", tuple(int(w) for w in self.heads))
        if self.kind not in ("mdmtn", "hps"):
            raise DomainError(f"unknown architecture kind {self.kind!r}")
        if self.n_inputs < 1 or not self.shared or len(self.n_classes) < 1:
            raise DomainError("need n_inputs >= 1, a nonempty shared trunk and at least one task")
        if any(c < 2 for c in self.n_classes):
            raise DomainError(f"every task needs at least 2 classes, got {self.n_classes}")
        if self.kind == "mdmtn":
            if not 1 <= len(self.monitors) <= 2:
                raise DomainError(f"monitors can have 1 or 2 layers, got {len(self.monitors)}")
            if self.monitors[-1] != self.shared[-1]:
                raise DomainError(
                    f"monitor output width {self.monitors[-1]} must equal shared output width "
                    f"{self.shared[-1]}"
                )

    @property
    def n_tasks(self):
        return len(self.n_classes)

    def to_json(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, data):
        return cls(**data)

    def as_hps(self):
        return MTLSpec("hps", self.n_inputs, self.n_classes, self.shared, self.monitors, self.heads)


@dataclass(frozen=True)
class ParamInfo:
    name: str
    shape: tuple
    offset: int
    role: str
    task: int | None
    growl: bool

    @property
    def size(self):
        return int(np.prod(self.shape))

    def to_json(self):
        return {"name": self.name, "shape": list(self.shape), "offset": self.offset,
                "role": self.role, "task": self.task, "growl": self.growl}

    @classmethod
    def from_json(cls, d):
        return cls(d["name"], tuple(d["shape"]), int(d["offset"]), d["role"], d["task"], bool(d["growl"]))


@dataclass(frozen=True)
class Dense:
    """One affine layer: weight and bias parameter names plus activation."""

    weight: str
    bias: str
    relu: bool


def build_layout(spec: MTLSpec):
    """Deterministic parameter table and the layer stacks of the network.

    Returns ``(infos, stacks)`` where ``stacks`` maps ``"shared"``,
    ``("monitor", i)`` and ``("head", i)`` to lists of :class:`Dense`.
    """
    infos = []
    offset = 0

    def add(name, shape, role, task, flag):
        nonlocal offset
        info = ParamInfo(name, tuple(shape), offset, role, task, flag)
        infos.append(info)
        offset += info.size

    def stack(prefix, fan_in, widths, first_role, role, task, last_relu, last_growl=True):
        layers = []
        for j, width in enumerate(widths):
            last = j == len(widths) - 1
            r = first_role if j == 0 else role
            flag = r != "input" and (last_growl or not last)
            add(f"{prefix}.{j}.W", (fan_in, width), r, task, flag)
            add(f"{prefix}.{j}.b", (width,), r, task, False)
            layers.append(Dense(f"{prefix}.{j}.W", f"{prefix}.{j}.b", relu=last_relu or not last))
            fan_in = width
        return layers

    stacks = {"shared": stack("shared", spec.n_inputs, spec.shared, "input", "shared", None, True)}
    if spec.kind == "mdmtn":
        for i in range(spec.n_tasks):
            stacks[("monitor", i)] = stack(f"monitor{i}", spec.n_inputs, spec.monitors,
                                           "input", "monitor", i, True)
    for i in range(spec.n_tasks):
        widths = spec.heads + (spec.n_classes[i],)
        stacks[("head", i)] = stack(f"head{i}", spec.shared[-1], widths, "output", "output", i,
                                    last_relu=False, last_growl=False)
    if spec.kind == "mdmtn":
        for i in range(spec.n_tasks):
            add(f"alpha{i}", (2,), "fusion", i, False)
    return infos, stacks


class ParamStore:
    """Flat float64 parameter vector with named, shaped views."""

    def __init__(self, infos, values=None):
        self.infos = list(infos)
        self.by_name = {p.name: p for p in self.infos}
        n = sum(p.size for p in self.infos)
        if values is None:
            values = np.zeros(n)
        if values.shape != (n,) or values.dtype != np.float64:
            raise DomainError(f"flat parameter vector must be float64 of length {n}")
        self.flat = values

    def __len__(self):
        return self.flat.shape[0]

    def __getitem__(self, name):
        p = self.by_name[name]
        return self.flat[p.offset:p.offset + p.size].reshape(p.shape)

    def __setitem__(self, name, value):
        self[name][...] = value

    def copy(self):
        return ParamStore(self.infos, self.flat.copy())

    def growl_names(self):
        return [p.name for p in self.infos if p.growl]

    def slice_of(self, name):
        p = self.by_name[name]
        return slice(p.offset, p.offset + p.size)


BIAS_INIT = 0.01


def _orthonormal(rng, fan_in, fan_out):
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return q if fan_in >= fan_out else q.T


class MultiTaskNet:
    """Forward and backward passes for an :class:`MTLSpec`."""

    def __init__(self, spec: MTLSpec):
        self.spec = spec
        self.infos, self.stacks = build_layout(spec)

    def new_params(self, seed=0):
        """Orthonormal weights, biases ``BIAS_INIT``, fusion weights ``(0.5, 0.5)``.

        Biases start slightly positive rather than at zero: the bias of a unit
        that never activates receives no gradient, and an exact zero would
        then be counted as a pruned parameter.
        """
        rng = np.random.default_rng(seed)
        params = ParamStore(self.infos)
        for p in self.infos:
            if p.name.endswith(".W"):
                params[p.name] = _orthonormal(rng, *p.shape)
            elif p.name.endswith(".b"):
                params[p.name] = BIAS_INIT
            elif p.role == "fusion":
                params[p.name] = 0.5
        return params

    # ------------------------------------------------------------------ forward

    def _run_stack(self, layers, params, h, cache):
        for layer in layers:
            W, b = params[layer.weight], params[layer.bias]
            if h.shape[1] != W.shape[0]:
                raise DomainError(f"layer {layer.weight}: input width {h.shape[1]} != {W.shape[0]}")
            z = h @ W + b
            out = np.maximum(z, 0.0) if layer.relu else z
            if cache is not None:
                cache.append((layer, h, z))
            h = out
        return h

    def forward(self, params: ParamStore, u, cache=None):
        """Per-task logits for a batch ``u`` of shape ``(batch, n_inputs)``.

        When ``cache`` is a dict it is filled with what :meth:`backward` needs.
        """
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 2 or u.shape[1] != self.spec.n_inputs:
            raise DomainError(f"input must have shape (batch, {self.spec.n_inputs}), got {u.shape}")
        rec = None if cache is None else []
        shared = self._run_stack(self.stacks["shared"], params, u, rec)
        if cache is not None:
            cache["shared"] = (rec, shared)
        logits = []
        for i in range(self.spec.n_tasks):
            if self.spec.kind == "mdmtn":
                mrec = None if cache is None else []
                mon = self._run_stack(self.stacks[("monitor", i)], params, u, mrec)
                alpha = params[f"alpha{i}"]
                fused = alpha[0] * shared + alpha[1] * mon
                if cache is not None:
                    cache[("monitor", i)] = (mrec, mon)
            else:
                fused = shared
            hrec = None if cache is None else []
            logits.append(self._run_stack(self.stacks[("head", i)], params, fused, hrec))
            if cache is not None:
                cache[("head", i)] = hrec
        return logits

    # ----------------------------------------------------------------- backward

    def _back_stack(self, records, params, grad, dout):
        for layer, h, z in reversed(records):
            dz = dout * (z > 0) if layer.relu else dout
            grad[layer.weight] += h.T @ dz
            grad[layer.bias] += dz.sum(axis=0)
            dout = dz @ params[layer.weight].T
        return dout

    def backward(self, params: ParamStore, cache, dlogits):
        """Gradient of ``sum_i <dlogits[i], logits[i]>`` w.r.t. all parameters."""
        grad = ParamStore(self.infos)
        shared_rec, shared = cache["shared"]
        dshared = np.zeros_like(shared)
        for i in range(self.spec.n_tasks):
            dfused = self._back_stack(cache[("head", i)], params, grad, dlogits[i])
            if self.spec.kind == "mdmtn":
                mrec, mon = cache[("monitor", i)]
                alpha = params[f"alpha{i}"]
                galpha = grad[f"alpha{i}"]
                galpha[0] += np.sum(dfused * shared)
                galpha[1] += np.sum(dfused * mon)
                dshared += alpha[0] * dfused
                self._back_stack(mrec, params, grad, alpha[1] * dfused)
            else:
                dshared += dfused
        self._back_stack(shared_rec, params, grad, dshared)
        bad = ~np.isfinite(grad.flat)
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            owner = next(p.name for p in self.infos if p.offset <= first < p.offset + p.size)
            raise NumericError(f"non-finite gradient in {owner}")
        return grad

    # ------------------------------------------------------------------- LSUV

    def lsuv_init(self, probe, seed=0, tol=0.05, max_passes=10):
        """Layer-sequential unit-variance initialization.

        Starts from orthonormal weights, then walks the layers in forward
        order and rescales each weight matrix until the variance of its
        pre-activations on ``probe`` is within ``tol`` of 1 (or ``max_passes``
        rescalings were spent on that layer).
        """
        probe = np.asarray(probe, dtype=np.float64)
        if probe.ndim != 2 or probe.shape[0] == 0:
            raise DomainError("LSUV needs a nonempty probe batch")
        if not np.any(np.var(probe, axis=0) > 0):
            raise DomainError("LSUV probe batch has zero variance")
        params = self.new_params(seed)
        for layer in self._layers_in_order():
            for _ in range(max_passes):
                var = self._preactivation_var(params, probe, layer)
                if var <= 0 or not np.isfinite(var):
                    raise DomainError(f"layer {layer.weight}: zero pre-activation variance on probe")
                if abs(var - 1.0) < tol:
                    break
                params[layer.weight] = params[layer.weight] / np.sqrt(var)
        return params

    def _layers_in_order(self):
        order = list(self.stacks["shared"])
        for i in range(self.spec.n_tasks):
            order += self.stacks.get(("monitor", i), [])
        for i in range(self.spec.n_tasks):
            order += self.stacks[("head", i)]
        return order

    def _preactivation_var(self, params, probe, layer):
        cache = {}
        self.forward(params, probe, cache)
        for key, value in cache.items():
            records = value[0] if isinstance(value, tuple) else value
            for lay, _h, z in records:
                if lay is layer:
                    return float(np.var(z))
        raise KeyError(layer.weight)

    def growl_matrices(self, params):
        return [(name, params[name]) for name in params.growl_names()]


def forward_mdmtn(net: MultiTaskNet, params, u):
    if net.spec.kind != "mdmtn":
        raise DomainError("forward_mdmtn needs an mdmtn network")
    return net.forward(params, u)


def forward_hps(net: MultiTaskNet, params, u):
    if net.spec.kind != "hps":
        raise DomainError("forward_hps needs an hps network")
    return net.forward(params, u)


def hps_params_from_mdmtn(mdmtn: MultiTaskNet, hps: MultiTaskNet, params: ParamStore):
    """Copy trunk and output networks of an MDMTN into an HPS parameter store."""
    out = ParamStore(hps.infos)
    for p in hps.infos:
        out[p.name] = params[p.name]
    return out


# ----------------------------------------------------------------------- losses


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def task_losses(logits, labels, with_grad=False):
    """Mean cross-entropy per task.

    Returns the loss vector ``(L_1, ..., L_m)`` and, with ``with_grad``, the
    per-task gradients with respect to the logits.
    """
    losses = np.empty(len(logits))
    grads = []
    for i, (z, y) in enumerate(zip(logits, labels)):
        y = np.asarray(y)
        if y.shape != (z.shape[0],):
            raise DomainError(f"task {i}: {y.shape[0]} labels for a batch of {z.shape[0]}")
        if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
            raise DomainError(f"task {i}: label ids must lie in [0, {z.shape[1]})")
        logp = _log_softmax(z)
        n = z.shape[0]
        losses[i] = -logp[np.arange(n), y].mean()
        if with_grad:
            g = np.exp(logp)
            g[np.arange(n), y] -= 1.0
            grads.append(g / n)
    return (losses, grads) if with_grad else losses


def accuracies(logits, labels):
    return np.array([float(np.mean(np.argmax(z, axis=1) == y)) for z, y in zip(logits, labels)])


# ------------------------------------------------------------ scalarized objective


@dataclass
class ObjectiveTerms:
    """Everything one evaluation of the scalarized objective produces."""

    value: float
    L: np.ndarray
    H: np.ndarray
    grad: ParamStore | None = None
    grad_t: float = 0.0
    dL: np.ndarray | None = None


def growl_value(params: ParamStore, thetas):
    return growl.growl_total([(params[n], th) for n, th in thetas.items()])


def scalarized_objective(net: MultiTaskNet, params: ParamStore, t, batch, labels,
                         cfg: ScalarizationConfig, state: ALState, thetas,
                         with_grad=True, growl_grad=True, literal=False):
    """Augmented Lagrangian of the modified Chebyshev problem on one batch.

    ``L_0`` is the GrOWL total over the layers in ``thetas`` (name -> weight
    pattern); ``L_1..L_m`` are the task losses. With ``growl_grad=False`` the
    GrOWL term still enters ``H`` but is treated as a constant in the
    gradient, leaving it to the proximal step.
    """
    cache = {} if with_grad else None
    logits = net.forward(params, batch, cache)
    if with_grad:
        task_L, dlogits = task_losses(logits, labels, with_grad=True)
    else:
        task_L = task_losses(logits, labels)
    L = np.concatenate([[growl_value(params, thetas)], task_L])
    if not np.all(np.isfinite(L)):
        raise NumericError(f"batch objective vector diverged: {L.tolist()}")
    H = wc_constraints(L, t, cfg)
    st = ALState(t=float(t), lam=state.lam, mu=state.mu, iteration=state.iteration)
    value = al_loss(H, st, literal=literal)
    if not with_grad:
        return ObjectiveTerms(value, L, H)
    dH = al_loss_grad_H(H, st, literal=literal)
    dL = wc_jacobian(cfg).T @ dH
    grad = net.backward(params, cache, [dL[i + 1] * g for i, g in enumerate(dlogits)])
    if growl_grad and dL[0] != 0:
        for name, theta in thetas.items():
            grad[name] += dL[0] * growl.growl_penalty_grad(params[name], theta)
    grad_t = 1.0 - float(dH.sum())
    return ObjectiveTerms(value, L, H, grad, grad_t, dL)


# ------------------------------------------------------------------- optimizers


@dataclass
class Adam:
    """Adam on a flat vector (in place)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    steps: int = 0

    def step(self, x, g):
        if not self.lr > 0:
            raise DomainError(f"learning rate must be > 0, got {self.lr}")
        if x.shape != g.shape:
            raise DomainError(f"parameter and gradient shapes differ: {x.shape} vs {g.shape}")
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.steps += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1 - self.beta2) * (g * g)
        bc1 = 1 - self.beta1 ** self.steps
        bc2 = 1 - self.beta2 ** self.steps
        x -= self.lr * (self.m / bc1) / (np.sqrt(self.v / bc2) + self.eps)
        return x


@dataclass
class SGD:
    """SGD with heavy-ball momentum (``v = momentum * v + g``; ``x -= lr * v``)."""

    lr: float = 1e-2
    momentum: float = 0.0
    buf: np.ndarray | None = field(default=None, repr=False)

    def step(self, x, g):
        if not self.lr > 0:
            raise DomainError(f"learning rate must be > 0, got {self.lr}")
        if x.shape != g.shape:
            raise DomainError(f"parameter and gradient shapes differ: {x.shape} vs {g.shape}")
        if self.momentum:
            if self.buf is None:
                self.buf = np.zeros_like(x)
            self.buf *= self.momentum
            self.buf += g
            g = self.buf
        x -= self.lr * g
        return x


def make_optimizer(name, lr, momentum=0.9):
    if name == "adam":
        return Adam(lr=lr)
    if name == "sgd":
        return SGD(lr=lr, momentum=momentum)
    raise DomainError(f"unknown optimizer {name!r}")
