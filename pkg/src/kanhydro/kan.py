"""KAN networks: spline-edge activations, training losses and gradients,
pruning, symbolic locking, and closed-form extraction.

Each edge evaluates ``w_b * silu(x) + w_c * sum_i c_i B_i(x)`` until it is
locked to a symbolic candidate, after which it evaluates ``c*f(a*x + b) + d``.
The trainable-parameter flattening order is layer-major, then (out_idx,
in_idx), then ``[w_b, w_c, c_0, ...]`` for spline edges or ``[a, b, c, d]``
for locked ones.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from . import bspline
from .bspline import KnotGrid, SplineCoeffs
from .errors import (
    DimMismatchError,
    DomainViolationError,
    InvalidArgumentError,
    InvalidShapeError,
    OptimizerFailureError,
    UnlockedEdgesError,
)
from .optim import OptimOptions, bfgs_minimize
from .symbolic import (
    AffineSearchGrid,
    CandidateFunction,
    Sum,
    Unary,
    Var,
    candidate_by_name,
    fold,
    rank_candidates,
)

DEFAULT_GRID_DOMAIN = (-3.0, 3.0)
DEFAULT_ORDER = 3
COEFF_INIT_SCALE = 0.1
GRID_MARGIN = 0.1


@dataclass
class SymbolicLock:
    """Locked symbolic mode: the edge evaluates c*f(a*x + b) + d."""

    candidate: CandidateFunction
    a: float
    b: float
    c: float
    d: float
    frozen: bool = False  # pruning locks are frozen and never refined


def zero_lock() -> SymbolicLock:
    return SymbolicLock(candidate_by_name("0"), 1.0, 0.0, 0.0, 0.0, frozen=True)


@dataclass
class EdgeActivation:
    w_b: float
    w_c: float
    grid: KnotGrid
    coeffs: SplineCoeffs
    lock: SymbolicLock | None = None

    @property
    def num_params(self) -> int:
        return 4 if self.lock is not None else 2 + self.coeffs.values.size


@dataclass
class KanLayer:
    in_dim: int
    out_dim: int
    edges: list  # edges[j][i] -> EdgeActivation


@dataclass
class KanNetwork:
    layers: list
    shape: list
    rng_seed: int

    def clone(self) -> "KanNetwork":
        return copy.deepcopy(self)

    def iter_edges(self):
        """Yield (layer_idx, out_idx, in_idx, edge) in flattening order."""
        for l, layer in enumerate(self.layers):
            for j in range(layer.out_dim):
                for i in range(layer.in_dim):
                    yield l, j, i, layer.edges[j][i]

    @property
    def num_params(self) -> int:
        return sum(e.num_params for _, _, _, e in self.iter_edges())

    def get_params(self) -> np.ndarray:
        out = []
        for _, _, _, e in self.iter_edges():
            if e.lock is not None:
                out.extend([e.lock.a, e.lock.b, e.lock.c, e.lock.d])
            else:
                out.extend([e.w_b, e.w_c])
                out.extend(e.coeffs.values.tolist())
        return np.array(out)

    def set_params(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.num_params:
            raise DimMismatchError(
                f"expected {self.num_params} parameters, got {vec.size}")
        pos = 0
        for _, _, _, e in self.iter_edges():
            k = e.num_params
            block = vec[pos:pos + k]
            if e.lock is not None:
                e.lock.a, e.lock.b, e.lock.c, e.lock.d = block
            else:
                e.w_b, e.w_c = float(block[0]), float(block[1])
                e.coeffs = SplineCoeffs(block[2:].copy())
            pos += k

    def to_json(self) -> str:
        edges = []
        for l, j, i, e in self.iter_edges():
            rec = {
                "layer": l, "out": j, "in": i,
                "w_b": e.w_b, "w_c": e.w_c,
                "grid": {
                    "domain_min": e.grid.domain_min,
                    "domain_max": e.grid.domain_max,
                    "num_intervals": e.grid.num_intervals,
                    "order": e.grid.order,
                },
                "coeffs": e.coeffs.values.tolist(),
            }
            if e.lock is not None:
                rec["lock"] = {
                    "candidate": e.lock.candidate.name,
                    "a": e.lock.a, "b": e.lock.b,
                    "c": e.lock.c, "d": e.lock.d,
                    "frozen": e.lock.frozen,
                }
            edges.append(rec)
        doc = {"shape": list(self.shape), "seed": self.rng_seed, "edges": edges}
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "KanNetwork":
        doc = json.loads(text)
        net = init_network(doc["shape"], grid_intervals=1, seed=doc["seed"])
        lookup = {(r["layer"], r["out"], r["in"]): r for r in doc["edges"]}
        for l, j, i, _ in net.iter_edges():
            rec = lookup[(l, j, i)]
            g = rec["grid"]
            grid = bspline.make_grid(g["domain_min"], g["domain_max"],
                                     g["num_intervals"], g["order"])
            lock = None
            if "lock" in rec:
                lk = rec["lock"]
                lock = SymbolicLock(candidate_by_name(lk["candidate"]),
                                    lk["a"], lk["b"], lk["c"], lk["d"],
                                    frozen=lk["frozen"])
            net.layers[l].edges[j][i] = EdgeActivation(
                rec["w_b"], rec["w_c"], grid,
                SplineCoeffs(np.array(rec["coeffs"])), lock)
        return net


def init_network(shape, grid_intervals: int, seed: int = 0,
                 order: int = DEFAULT_ORDER) -> KanNetwork:
    """Fresh network with small-random spline coefficients, w_b = w_c = 1."""
    shape = [int(s) for s in shape]
    if len(shape) < 2 or any(s < 1 for s in shape):
        raise InvalidShapeError(f"unusable shape {shape}")
    if grid_intervals < 1:
        raise InvalidArgumentError("grid_intervals must be >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    for l in range(len(shape) - 1):
        in_dim, out_dim = shape[l], shape[l + 1]
        edges = []
        for _ in range(out_dim):
            row = []
            for _ in range(in_dim):
                grid = bspline.make_grid(*DEFAULT_GRID_DOMAIN,
                                         grid_intervals, order)
                coeffs = SplineCoeffs(
                    rng.normal(0.0, COEFF_INIT_SCALE, grid.num_basis))
                row.append(EdgeActivation(1.0, 1.0, grid, coeffs))
            edges.append(row)
        layers.append(KanLayer(in_dim, out_dim, edges))
    return KanNetwork(layers, shape, int(seed))


def _silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def _silu_deriv(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _edge_eval(edge: EdgeActivation, x: np.ndarray, want_grad: bool):
    """Evaluate one edge on a batch; optionally return the backward cache."""
    if edge.lock is not None:
        lk = edge.lock
        u = lk.a * x + lk.b
        ok = np.asarray(lk.candidate.domain(u))
        if not np.all(ok):
            raise DomainViolationError(
                f"locked candidate {lk.candidate.name!r} undefined at "
                f"argument {np.asarray(u)[~ok][:1]}")
        # overflow to inf is legitimate here (e.g. cosh far from the data);
        # callers guard against non-finite values
        with np.errstate(over="ignore"):
            fu = lk.candidate.fn(u)
        out = lk.c * fu + lk.d
        if not want_grad:
            return out, None
        with np.errstate(over="ignore"):
            fpu = lk.candidate.deriv(u)
        return out, ("lock", fu, fpu, x)
    if want_grad:
        basis, dbasis = bspline.basis_and_deriv_matrix(edge.grid, x)
    else:
        basis = bspline.basis_matrix(edge.grid, x)
        dbasis = None
    spl = basis @ edge.coeffs.values
    out = edge.w_b * _silu(x) + edge.w_c * spl
    if not want_grad:
        return out, None
    return out, ("spline", basis, dbasis, spl, x)


def activation_eval(edge: EdgeActivation, x: float) -> float:
    """Single-edge activation value at a scalar input."""
    out, _ = _edge_eval(edge, np.asarray([float(x)]), want_grad=False)
    return float(out[0])


def _forward(net: KanNetwork, xs: np.ndarray, want_cache: bool):
    n = xs.shape[0]
    if xs.shape[1] != net.shape[0]:
        raise DimMismatchError(
            f"input dim {xs.shape[1]} != shape[0] = {net.shape[0]}")
    acts = [xs]
    edge_outs = []  # per-edge batch outputs, flattening order
    caches = []
    for layer in net.layers:
        out = np.zeros((n, layer.out_dim))
        for j in range(layer.out_dim):
            for i in range(layer.in_dim):
                o, cache = _edge_eval(layer.edges[j][i], acts[-1][:, i],
                                      want_cache)
                out[:, j] += o
                edge_outs.append(o)
                caches.append(cache)
        acts.append(out)
    return acts, edge_outs, caches


def forward(net: KanNetwork, x) -> np.ndarray:
    """Evaluate the network at one input vector."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    acts, _, _ = _forward(net, x, want_cache=False)
    return acts[-1][0]

def forward_batch(net: KanNetwork, xs) -> np.ndarray:
    """Evaluate on a batch (n, in_dim); returns (n, out_dim)."""
    xs = np.asarray(xs, dtype=float)
    acts, _, _ = _forward(net, xs, want_cache=False)
    return acts[-1]


def _check_batch(net, xs, ys):
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    ys = np.asarray(ys, dtype=float)
    if xs.shape[0] != ys.shape[0] or ys.ndim != 1 or xs.shape[0] < 1:
        raise DimMismatchError("xs rows and ys length must match and be >= 1")
    if net.shape[-1] != 1:
        raise DimMismatchError("loss functions require a single output head")
    return xs, ys


def batch_rmse_loss(net: KanNetwork, xs, ys) -> float:
    xs, ys = _check_batch(net, xs, ys)
    out = forward_batch(net, xs)[:, 0]
    # overflow to inf is fine; line searches treat non-finite loss as a wall
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.mean((out - ys) ** 2)))


def _penalty_terms(edge_outs, net):
    """Per-edge mean |output|, their sum, and the magnitude entropy."""
    mags = np.array([float(np.mean(np.abs(o))) for o in edge_outs])
    total = float(mags.sum())
    if total <= 0.0:
        return mags, 0.0, 0.0
    p = mags / total
    nz = p > 0.0
    entropy = float(-np.sum(p[nz] * np.log(p[nz])))
    return mags, total, entropy


def regularized_loss(net: KanNetwork, xs, ys, lam: float) -> float:
    """RMSE + lambda * (sum of edge L1 magnitudes + magnitude entropy)."""
    if lam < 0:
        raise InvalidArgumentError("lambda must be >= 0")
    xs, ys = _check_batch(net, xs, ys)
    if lam == 0.0:
        return batch_rmse_loss(net, xs, ys)
    acts, edge_outs, _ = _forward(net, xs, want_cache=False)
    out = acts[-1][:, 0]
    rmse = float(np.sqrt(np.mean((out - ys) ** 2)))
    _, l1, entropy = _penalty_terms(edge_outs, net)
    return rmse + lam * (l1 + entropy)


def loss_and_gradient(net: KanNetwork, xs, ys, lam: float):
    """Regularized loss and its analytic gradient (reverse accumulation)."""
    if lam < 0:
        raise InvalidArgumentError("lambda must be >= 0")
    xs, ys = _check_batch(net, xs, ys)
    n = xs.shape[0]
    acts, edge_outs, caches = _forward(net, xs, want_cache=True)
    out = acts[-1][:, 0]
    resid = out - ys
    mse = float(np.mean(resid ** 2))
    rmse = float(np.sqrt(mse))

    loss = rmse
    edge_weights = None
    if lam > 0.0:
        mags, l1, entropy = _penalty_terms(edge_outs, net)
        loss += lam * (l1 + entropy)
        total = mags.sum()
        edge_weights = np.zeros_like(mags)
        if total > 0.0:
            p = mags / total
            s = float(np.sum(np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)))
            for k, pk in enumerate(p):
                if pk > 0.0:
                    edge_weights[k] = 1.0 + (-np.log(pk) + s) / total
                else:
                    edge_weights[k] = 0.0

    # upstream gradient on the output node
    if rmse > 0.0:
        node_grad = (resid / (n * rmse)).reshape(-1, 1)
    else:
        node_grad = np.zeros((n, 1))

    grads = [None] * len(caches)
    edge_idx = len(caches)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        first = edge_idx - layer.out_dim * layer.in_dim
        down_grad = np.zeros((n, layer.in_dim))
        k = first
        for j in range(layer.out_dim):
            for i in range(layer.in_dim):
                edge = layer.edges[j][i]
                go = node_grad[:, j].copy()
                if edge_weights is not None and edge_weights[k] != 0.0:
                    go += lam * edge_weights[k] * np.sign(edge_outs[k]) / n
                cache = caches[k]
                if cache[0] == "lock":
                    _, fu, fpu, x = cache
                    lk = edge.lock
                    grads[k] = np.array([
                        float(go @ (lk.c * fpu * x)),
                        float(go @ (lk.c * fpu)),
                        float(go @ fu),
                        float(go.sum()),
                    ])
                    down_grad[:, i] += go * (lk.c * fpu * lk.a)
                else:
                    _, basis, dbasis, spl, x = cache
                    g_wb = float(go @ _silu(x))
                    g_wc = float(go @ spl)
                    g_c = edge.w_c * (basis.T @ go)
                    grads[k] = np.concatenate(([g_wb, g_wc], g_c))
                    dpsi_dx = (edge.w_b * _silu_deriv(x)
                               + edge.w_c * (dbasis @ edge.coeffs.values))
                    down_grad[:, i] += go * dpsi_dx
                k += 1
        node_grad = down_grad
        edge_idx = first
    return loss, np.concatenate(grads)


def gradient(net: KanNetwork, xs, ys, lam: float) -> np.ndarray:
    """Flat analytic gradient of regularized_loss over all parameters."""
    return loss_and_gradient(net, xs, ys, lam)[1]


def adapt_grids(net: KanNetwork, xs) -> KanNetwork:
    """Rescale each edge's grid to its observed inputs with a 10% margin.

    Layers are processed in order so later layers see activations computed
    with already-rescaled grids. Coefficients are refit so the spline keeps
    its current shape over the new domain.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    net = net.clone()
    acts = xs
    for layer in net.layers:
        out = np.zeros((xs.shape[0], layer.out_dim))
        for j in range(layer.out_dim):
            for i in range(layer.in_dim):
                edge = layer.edges[j][i]
                x = acts[:, i]
                if edge.lock is None:
                    lo, hi = float(x.min()), float(x.max())
                    span = hi - lo
                    if span < 1e-9:
                        span = 1.0
                    lo -= GRID_MARGIN * span
                    hi += GRID_MARGIN * span
                    new_grid = bspline.make_grid(lo, hi,
                                                 edge.grid.num_intervals,
                                                 edge.grid.order)
                    dense = np.linspace(lo, hi, max(200, 20 * new_grid.num_basis))
                    vals = bspline.spline_eval(edge.grid, edge.coeffs, dense)
                    edge.grid = new_grid
                    edge.coeffs = bspline.fit_coeffs_least_squares(
                        new_grid, dense, vals)
                o, _ = _edge_eval(edge, x, want_grad=False)
                out[:, j] += o
        acts = out
    return net


def train(net: KanNetwork, xs, ys, lam: float,
          opts: OptimOptions | None = None) -> KanNetwork:
    """Full-batch BFGS minimization of the regularized loss."""
    net = net.clone()
    xs, ys = _check_batch(net, xs, ys)

    # the line search evaluates loss and gradient at the same point; one
    # shared forward/backward pass serves both callbacks
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def loss_grad(p):
        key = p.tobytes()
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            net.set_params(p)
            cache[key] = loss_and_gradient(net, xs, ys, lam)
        return cache[key]

    res = bfgs_minimize(lambda p: loss_grad(p)[0], lambda p: loss_grad(p)[1],
                        net.get_params(), opts)
    net.set_params(res.x_star)
    return net


def edge_importances(net: KanNetwork, xs) -> np.ndarray:
    """Mean |activation output| per edge over the batch, flattening order."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    _, edge_outs, _ = _forward(net, xs, want_cache=False)
    return np.array([float(np.mean(np.abs(o))) for o in edge_outs])


def prune(net: KanNetwork, threshold: float, xs) -> KanNetwork:
    """Zero-lock weak edges and dead hidden nodes; shape is preserved."""
    if threshold < 0:
        raise InvalidArgumentError("threshold must be >= 0")
    imps = edge_importances(net, xs)
    net = net.clone()
    imp = {}
    for k, (l, j, i, _) in enumerate(net.iter_edges()):
        imp[(l, j, i)] = imps[k]

    kill = {key for key, v in imp.items() if v < threshold}
    # a hidden node dies when its best incoming or best outgoing edge is weak
    for l in range(1, len(net.shape) - 1):
        for node in range(net.shape[l]):
            max_in = max(imp[(l - 1, node, i)]
                         for i in range(net.shape[l - 1]))
            max_out = max(imp[(l, j, node)]
                          for j in range(net.shape[l + 1]))
            if max_in < threshold or max_out < threshold:
                for i in range(net.shape[l - 1]):
                    kill.add((l - 1, node, i))
                for j in range(net.shape[l + 1]):
                    kill.add((l, j, node))
    for l, j, i, edge in net.iter_edges():
        if (l, j, i) in kill:
            net.layers[l].edges[j][i] = EdgeActivation(
                edge.w_b, edge.w_c, edge.grid, edge.coeffs, zero_lock())
    return net


def snap_edge(net: KanNetwork, layer: int, out_idx: int, in_idx: int,
              library: list | None = None, xs=None,
              search: AffineSearchGrid | None = None):
    """Lock one edge to its best-fitting symbolic candidate.

    Returns (new network, SnapResult). The fit uses the edge's empirical
    (input, output) pairs under forward passes of xs.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    edge = net.layers[layer].edges[out_idx][in_idx]
    if edge.lock is not None:
        raise InvalidArgumentError(
            f"edge ({layer},{out_idx},{in_idx}) is already locked")
    acts, _, _ = _forward(net, xs, want_cache=False)
    x_edge = acts[layer][:, in_idx]
    y_edge, _ = _edge_eval(edge, x_edge, want_grad=False)
    result = rank_candidates(x_edge, y_edge, library, search)
    name, a, b, c, d, _ = result.best
    net = net.clone()
    net.layers[layer].edges[out_idx][in_idx].lock = SymbolicLock(
        candidate_by_name(name), a, b, c, d)
    return net, result


def refine_affine(net: KanNetwork, xs, ys,
                  opts: OptimOptions | None = None) -> KanNetwork:
    """BFGS re-optimization of non-frozen lock parameters against RMSE."""
    xs, ys = _check_batch(net, xs, ys)
    locked = [idx for idx, (_, _, _, e) in enumerate(net.iter_edges())
              if e.lock is not None]
    if not locked:
        raise InvalidArgumentError("refine_affine requires a locked edge")
    net = net.clone()

    # flat indices of the refinable (a, b, c, d) slots
    slots = []
    pos = 0
    for _, _, _, e in net.iter_edges():
        if e.lock is not None and not e.lock.frozen:
            slots.extend(range(pos, pos + 4))
        pos += e.num_params
    if not slots:
        return net
    slots = np.array(slots)
    base = net.get_params()

    def objective(sub):
        p = base.copy()
        p[slots] = sub
        net.set_params(p)
        try:
            return batch_rmse_loss(net, xs, ys)
        except DomainViolationError:
            return np.inf

    def grad(sub):
        p = base.copy()
        p[slots] = sub
        net.set_params(p)
        return loss_and_gradient(net, xs, ys, 0.0)[1][slots]

    x0 = base[slots]
    f0 = objective(x0)
    try:
        res = bfgs_minimize(objective, grad, x0,
                            opts or OptimOptions(max_iters=200))
        best = res.x_star if res.f_star <= f0 else x0
    except Exception as exc:  # surface best-so-far, never lose the iterate
        raise OptimizerFailureError(str(exc), best=x0) from exc
    p = base.copy()
    p[slots] = best
    net.set_params(p)
    return net


def extract_formula(net: KanNetwork):
    """Fold the locked network into a symbolic expression tree."""
    unlocked = [(l, j, i) for l, j, i, e in net.iter_edges() if e.lock is None]
    if unlocked:
        raise UnlockedEdgesError(
            f"{len(unlocked)} edge(s) still unlocked: {unlocked}",
            edges=unlocked)
    if net.shape[-1] != 1:
        raise InvalidArgumentError("formula extraction needs one output head")
    exprs = [Var(i) for i in range(net.shape[0])]
    for layer in net.layers:
        nxt = []
        for j in range(layer.out_dim):
            terms = []
            for i in range(layer.in_dim):
                lk = layer.edges[j][i].lock
                terms.append(Unary(lk.candidate.name, lk.a, lk.b,
                                   lk.c, lk.d, exprs[i]))
            nxt.append(fold(Sum(tuple(terms))))
        exprs = nxt
    return exprs[0]
